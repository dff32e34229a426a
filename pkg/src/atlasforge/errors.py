"""Typed exceptions shared across the package.

Every error raised by the library belongs to the :class:`AtlasforgeError`
tree so callers (CLI, HTTP service, tests) can map failures to exit codes
and status codes without string matching.
"""

from __future__ import annotations


class AtlasforgeError(Exception):
    """Base class for every library-defined error."""


# --- volume container and file format -------------------------------------

class VolumeFormatError(AtlasforgeError):
    """Base for malformed or unsupported volume streams."""


class TruncatedHeader(VolumeFormatError):
    """Stream ends before the fixed-size header is complete."""


class BadMagic(VolumeFormatError):
    """Stream is not a little-endian single-file volume of the supported kind."""


class UnsupportedRank(VolumeFormatError):
    """Header declares a rank other than 3."""


class UnsupportedDtype(VolumeFormatError):
    """Header declares a sample type outside the supported subset."""


class BadHeaderField(VolumeFormatError):
    """A header field holds a value outside its documented range."""


class DataShorterThanDims(VolumeFormatError):
    """Stream ends before dims * itemsize bytes of voxel data."""


class IndexOutOfRange(AtlasforgeError):
    """Slice index lies outside the grid along the requested axis."""


# --- label space ------------------------------------------------------------

class UnknownClass(AtlasforgeError):
    """Class id is not in the registry (or not in the campaign's class set)."""


class DimMismatch(AtlasforgeError):
    """Two grids that must share dims (and spacing where relevant) do not."""


class MaskConflict(AtlasforgeError):
    """Binary masks being merged claim the same voxel for different classes."""


# --- ranking ----------------------------------------------------------------

class EmptyInput(AtlasforgeError):
    """An operation that needs at least one record received none."""


class BadFraction(AtlasforgeError):
    """Selection fraction outside (0, 1]."""


# --- campaign ---------------------------------------------------------------

class CampaignError(AtlasforgeError):
    """Base for campaign state-machine violations."""


class EmptyManifest(CampaignError):
    """Campaign creation with zero volumes or zero classes."""


class BadConfig(CampaignError):
    """Campaign or loop configuration value outside its documented range."""


class MissingPredictions(CampaignError):
    """Ensemble predictions do not cover the candidate pool."""


class IterationAlreadyOpen(CampaignError):
    """open_iteration while an iteration is open."""


class NoOpenIteration(CampaignError):
    """An iteration-scoped command arrived with no iteration open."""


class NotSelected(CampaignError):
    """Revision for a pair that is not selected in the open iteration."""


class DuplicateRevision(CampaignError):
    """Second revision for the same (volume, class) within one iteration."""


class IterationIncomplete(CampaignError):
    """Advance/export while selected pairs are still unresolved."""


class ManifestNotExported(CampaignError):
    """Advance before the open iteration's fine-tune manifest was exported."""


class CampaignNotStopped(CampaignError):
    """Final sign-off on a campaign whose stop condition has not been recorded."""


class CampaignStopped(CampaignError):
    """Mutation on a stopped campaign that only a reopen can resume."""


class InvalidRevision(CampaignError):
    """Revision payload violates its contract (verdict/mask pairing, iteration)."""


class UnknownCampaign(CampaignError):
    """Campaign id not present in the store."""


# --- metrics ----------------------------------------------------------------

class NonBinaryInput(AtlasforgeError):
    """A mask argument contains values other than 0 and 1."""


class MissingVolume(AtlasforgeError):
    """Prediction/truth sets do not cover the same volume ids."""


class EmptyClassSet(AtlasforgeError):
    """Evaluation requested over zero classes."""


class EmptyLeaderboard(AtlasforgeError):
    """Leaderboard build with zero entries."""


# --- simulation -------------------------------------------------------------

class ShapeOutOfBounds(AtlasforgeError):
    """Phantom shape extends outside the volume bounds."""


class TooFewArchitectures(AtlasforgeError):
    """Ensemble needs at least two architectures."""


# --- service ----------------------------------------------------------------

class BadRequest(AtlasforgeError):
    """Request parameter outside its documented form (HTTP 422 family)."""
