/**
 * Wire types mirroring the /v1 service responses, plus the shared attention
 * ceiling used as the default heatmap window upper bound.
 */

/** Upper bound of per-voxel attention: max std + max entropy + overlap flag. */
export const ATTENTION_CEIL = 0.5 + Math.exp(-1) + 1;

export interface ClassDef {
  id: number;
  name: string;
  group: string;
}

export interface RegistryDoc {
  count: number;
  sha256: string;
  classes: ClassDef[];
}

export interface VolumeInfo {
  volume: string;
  dims: number[];
  spacing: number[];
  has_label: boolean;
  attention_classes: number[];
}

export interface VolumesDoc {
  volumes: VolumeInfo[];
}

export interface LayerPayload {
  dtype: "uint8" | "float32";
  data_b64: string;
  window: [number, number];
}

export interface SlicePayload {
  volume: string;
  axis: number;
  index: number;
  dims: number[];
  spacing: number[];
  height: number;
  width: number;
  class: number | null;
  layers: Record<string, LayerPayload>;
}

/** One row of a per-class priority list; order is the server's, never ours. */
export interface QueueEntry {
  volume: string;
  class: number;
  size: number;
  rank: number;
  selected: boolean;
  status: string;
  resolved: boolean;
}

export interface PriorityDoc {
  campaign: string;
  iteration: number;
  iteration_open: boolean;
  classes: Record<string, QueueEntry[]>;
}

export interface CampaignsDoc {
  campaigns: string[];
}

/** The fields of the campaign state snapshot the UI actually reads. */
export interface CampaignSnapshot {
  campaign_id: string;
  iteration: number;
  iteration_open: boolean;
  stopped: boolean;
  class_ids: number[];
  volumes: string[];
}

export interface RevisionBody {
  volume: string;
  class: number;
  verdict: "revised" | "no-change";
  mask_b64?: string;
  annotator?: string;
}

export interface RevisionReply {
  campaign: string;
  iteration: number;
  volume: string;
  class: number;
  verdict: string;
  annotator: string;
  mask_ref: string | null;
  mask_sha256: string | null;
  replayed: boolean;
}

export interface ErrorEnvelope {
  error: { type: string; detail: string };
}
