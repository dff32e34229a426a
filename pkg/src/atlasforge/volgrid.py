"""Dense voxel grids and the single-file volume format.

Centralizes all volume container handling: the in-memory :class:`VoxelGrid`,
a strict reader/writer for the little-endian single-file NIfTI-1 subset used
throughout the package, axis-aligned slice extraction, and the sidecar JSON
manifest that maps logical volume ids to files on disk.

Format subset (read and write):

=========  ======  =====================================================
offset     type    field
=========  ======  =====================================================
0          int32   sizeof_hdr, must be 348
40         8h      dim; dim[0] must be 3, dim[1:4] positive voxel counts
70         int16   datatype; 2 = uint8, 16 = float32
72         int16   bitpix; must match datatype (8 or 32)
76         8f      pixdim; pixdim[1:4] strictly positive spacing in mm
108        float32 vox_offset; byte offset of voxel data, >= 352
344        4s      magic, must be b"n+1\\0" (single-file)
=========  ======  =====================================================

All other header fields are ignored on read and zero-filled on write (the
writer fixes xyzt_units = 2, millimetres, and vox_offset = 352). Streams are
little-endian only. Voxel data is stored x-fastest: the sample for voxel
(x, y, z) sits at flat index ``x + nx * (y + ny * z)``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadHeaderField,
    BadMagic,
    DataShorterThanDims,
    DimMismatch,
    IndexOutOfRange,
    TruncatedHeader,
    UnsupportedDtype,
    UnsupportedRank,
)

HEADER_SIZE = 348
DATA_OFFSET = 352  # header + 4-byte extender
MAGIC = b"n+1\x00"

# datatype code <-> numpy dtype (little-endian), plus bitpix for each
_DTYPE_BY_CODE = {2: np.dtype("<u1"), 16: np.dtype("<f4")}
_CODE_BY_KIND = {np.dtype(np.uint8): 2, np.dtype(np.float32): 16}
_BITPIX_BY_CODE = {2: 8, 16: 32}

Triple = tuple[float, float, float]


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """A dense 3D scalar field with per-axis spacing in millimetres.

    ``values`` is indexed ``values[x, y, z]`` and must be uint8 or float32;
    the array is frozen on construction. Spacing components are strictly
    positive floats.
    """

    values: np.ndarray
    spacing: Triple = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        arr = self.values
        if not isinstance(arr, np.ndarray) or arr.ndim != 3:
            raise ValueError("values must be a 3D numpy array")
        if arr.dtype not in (np.dtype(np.uint8), np.dtype(np.float32)):
            raise ValueError(f"unsupported dtype {arr.dtype}; use uint8 or float32")
        if min(arr.shape) < 1:
            raise ValueError("all dims must be positive")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise ValueError("spacing must be three positive floats")
        object.__setattr__(self, "spacing", spacing)
        arr.setflags(write=False)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape  # type: ignore[return-value]

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    @property
    def flat(self) -> np.ndarray:
        """Canonical 1D view: voxel (x, y, z) at index x + nx*(y + ny*z)."""
        return self.values.ravel(order="F")

    def at(self, x: int, y: int, z: int) -> float:
        return self.values[x, y, z]

    def with_values(self, values: np.ndarray) -> "VoxelGrid":
        """Same geometry, new samples."""
        return VoxelGrid(values, self.spacing)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and self.dtype == other.dtype
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None  # type: ignore[assignment]


def _parse_header(buf: bytes) -> tuple[tuple[int, int, int], Triple, np.dtype, int]:
    """Validate the fixed header and return (dims, spacing, dtype, data offset)."""
    if len(buf) < HEADER_SIZE:
        raise TruncatedHeader(f"need {HEADER_SIZE} header bytes, got {len(buf)}")
    if buf[344:348] != MAGIC:
        raise BadMagic(f"magic {buf[344:348]!r} != {MAGIC!r}")
    (sizeof_hdr,) = struct.unpack_from("<i", buf, 0)
    if sizeof_hdr != HEADER_SIZE:
        # wrong size field means a big-endian or foreign stream, not this format
        raise BadMagic(f"sizeof_hdr {sizeof_hdr} != {HEADER_SIZE} (little-endian)")
    dim = struct.unpack_from("<8h", buf, 40)
    if dim[0] != 3:
        raise UnsupportedRank(f"rank {dim[0]} not supported; volumes are 3D")
    datatype, bitpix = struct.unpack_from("<2h", buf, 70)
    if datatype not in _DTYPE_BY_CODE:
        raise UnsupportedDtype(f"datatype code {datatype}; supported: 2 (uint8), 16 (float32)")
    if bitpix != _BITPIX_BY_CODE[datatype]:
        raise BadHeaderField(f"bitpix {bitpix} does not match datatype {datatype}")
    nx, ny, nz = dim[1], dim[2], dim[3]
    if min(nx, ny, nz) <= 0:
        raise BadHeaderField(f"non-positive dims {(nx, ny, nz)}")
    pixdim = struct.unpack_from("<8f", buf, 76)
    spacing = (float(pixdim[1]), float(pixdim[2]), float(pixdim[3]))
    if any(not np.isfinite(s) or s <= 0 for s in spacing):
        raise BadHeaderField(f"non-positive spacing {spacing}")
    (vox_offset,) = struct.unpack_from("<f", buf, 108)
    if not np.isfinite(vox_offset) or vox_offset != int(vox_offset) or vox_offset < DATA_OFFSET:
        raise BadHeaderField(f"vox_offset {vox_offset} invalid; must be an integer >= {DATA_OFFSET}")
    return (nx, ny, nz), spacing, _DTYPE_BY_CODE[datatype], int(vox_offset)


def read_volume(buf: bytes) -> VoxelGrid:
    """Parse one volume from bytes.

    Raises TruncatedHeader, BadMagic, UnsupportedRank, UnsupportedDtype,
    BadHeaderField or DataShorterThanDims; never returns a partial grid.
    """
    dims, spacing, dtype, offset = _parse_header(buf)
    nx, ny, nz = dims
    nbytes = nx * ny * nz * dtype.itemsize  # python ints: no overflow
    if len(buf) < offset + nbytes:
        raise DataShorterThanDims(
            f"need {offset + nbytes} bytes for dims {dims}, got {len(buf)}"
        )
    flat = np.frombuffer(buf, dtype=dtype, count=nx * ny * nz, offset=offset)
    values = flat.reshape(dims, order="F").copy(order="F")
    return VoxelGrid(values, spacing)


def write_volume(grid: VoxelGrid) -> bytes:
    """Serialize a grid to canonical bytes.

    The output is deterministic for identical grids: unused header fields are
    zero-filled and the data offset is always 352.
    """
    code = _CODE_BY_KIND[grid.dtype]
    header = bytearray(HEADER_SIZE)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    nx, ny, nz = grid.dims
    struct.pack_into("<8h", header, 40, 3, nx, ny, nz, 0, 0, 0, 0)
    struct.pack_into("<2h", header, 70, code, _BITPIX_BY_CODE[code])
    sx, sy, sz = grid.spacing
    struct.pack_into("<8f", header, 76, 0.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", header, 108, float(DATA_OFFSET))
    header[123] = 2  # xyzt_units: millimetres
    header[344:348] = MAGIC
    data = np.ascontiguousarray(grid.flat.astype(grid.values.dtype.newbyteorder("<"), copy=False))
    return bytes(header) + b"\x00\x00\x00\x00" + data.tobytes()


def read_file(path: str | Path) -> VoxelGrid:
    return read_volume(Path(path).read_bytes())


def write_file(path: str | Path, grid: VoxelGrid) -> None:
    Path(path).write_bytes(write_volume(grid))


def extract_slice(grid: VoxelGrid, axis: int, index: int) -> np.ndarray:
    """Plane orthogonal to ``axis`` at ``index``.

    The returned 2D array keeps the two remaining axes in ascending order
    (axis=2 gives ``plane[x, y]``) and is C-contiguous.
    """
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
    size = grid.dims[axis]
    if not 0 <= index < size:
        raise IndexOutOfRange(f"index {index} outside [0, {size}) along axis {axis}")
    plane = np.take(grid.values, index, axis=axis)
    return np.ascontiguousarray(plane)


# --- sidecar manifest --------------------------------------------------------

MANIFEST_VERSION = 1


@dataclass
class VolumeManifest:
    """Maps logical volume ids to files by role.

    Roles: ``image`` and ``label`` are single paths; ``predictions`` nests
    architecture tag -> class id -> path; ``attention`` maps class id -> path.
    Paths are stored relative and resolved against ``root``.
    """

    root: Path
    volumes: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "VolumeManifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        if doc.get("version") != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest version {doc.get('version')!r}")
        return cls(root=path.parent, volumes=doc.get("volumes", {}))

    def save(self, path: str | Path) -> None:
        doc = {"version": MANIFEST_VERSION, "volumes": self.volumes}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def volume_ids(self) -> list[str]:
        return sorted(self.volumes)

    def _entry(self, volume_id: str) -> dict:
        try:
            return self.volumes[volume_id]
        except KeyError:
            raise KeyError(f"volume {volume_id!r} not in manifest") from None

    def _resolve(self, rel: str) -> Path:
        return self.root / rel

    def image_path(self, volume_id: str) -> Path | None:
        rel = self._entry(volume_id).get("image")
        return self._resolve(rel) if rel else None

    def label_path(self, volume_id: str) -> Path | None:
        rel = self._entry(volume_id).get("label")
        return self._resolve(rel) if rel else None

    def prediction_paths(self, volume_id: str) -> dict[str, dict[int, Path]]:
        preds = self._entry(volume_id).get("predictions", {})
        return {
            arch: {int(cls): self._resolve(rel) for cls, rel in by_class.items()}
            for arch, by_class in preds.items()
        }

    def attention_path(self, volume_id: str, class_id: int) -> Path | None:
        rel = self._entry(volume_id).get("attention", {}).get(str(class_id))
        return self._resolve(rel) if rel else None

    def set_image(self, volume_id: str, rel: str) -> None:
        self.volumes.setdefault(volume_id, {})["image"] = rel

    def set_label(self, volume_id: str, rel: str) -> None:
        self.volumes.setdefault(volume_id, {})["label"] = rel

    def set_prediction(self, volume_id: str, arch: str, class_id: int, rel: str) -> None:
        entry = self.volumes.setdefault(volume_id, {})
        entry.setdefault("predictions", {}).setdefault(arch, {})[str(class_id)] = rel

    def set_attention(self, volume_id: str, class_id: int, rel: str) -> None:
        entry = self.volumes.setdefault(volume_id, {})
        entry.setdefault("attention", {})[str(class_id)] = rel


def require_same_geometry(a: VoxelGrid, b: VoxelGrid, what: str = "grids") -> None:
    """Raise DimMismatch unless the two grids share dims and spacing."""
    if a.dims != b.dims or a.spacing != b.spacing:
        raise DimMismatch(
            f"{what}: dims/spacing {a.dims}/{a.spacing} vs {b.dims}/{b.spacing}"
        )
