/**
 * Viewer state and fetch planning. State transitions are pure; the cache
 * decides what actually needs a request, so toggling a layer back on, or
 * bumping the slice index past the volume extent, issues no fetch at all.
 */

import { ATTENTION_CEIL } from "./types.js";
import type { LayerPayload } from "./types.js";

export type LayerName = "image" | "label" | "attention";

export interface ViewerState {
  volume: string;
  classId: number | null;
  axis: 0 | 1 | 2;
  index: number;
  toggles: Record<LayerName, boolean>;
  /** Attention colormap window; defaults to the attention upper bound. */
  window: [number, number];
}

export function initialViewer(volume: string, classId: number | null): ViewerState {
  return {
    volume,
    classId,
    axis: 2,
    index: 0,
    toggles: { image: true, label: true, attention: true },
    window: [0, ATTENTION_CEIL],
  };
}

export function clampIndex(index: number, dims: number[], axis: number): number {
  const extent = dims[axis] ?? 1;
  return Math.min(Math.max(index, 0), extent - 1);
}

/** Move along the current axis; the result is always inside the extent. */
export function navigate(state: ViewerState, dims: number[], delta: number): ViewerState {
  return { ...state, index: clampIndex(state.index + delta, dims, state.axis) };
}

export function setAxis(state: ViewerState, dims: number[], axis: 0 | 1 | 2): ViewerState {
  return { ...state, axis, index: clampIndex(state.index, dims, axis) };
}

/** Attention cannot render without a class; other layers toggle freely. */
export function toggleLayer(state: ViewerState, layer: LayerName): ViewerState {
  if (layer === "attention" && state.classId === null && !state.toggles.attention) {
    return state;
  }
  return { ...state, toggles: { ...state.toggles, [layer]: !state.toggles[layer] } };
}

export function setWindow(state: ViewerState, lo: number, hi: number): ViewerState {
  if (!(hi > lo)) {
    return state;
  }
  return { ...state, window: [lo, hi] };
}

export function enabledLayers(state: ViewerState): LayerName[] {
  const names: LayerName[] = ["image", "label", "attention"];
  return names.filter((name) => state.toggles[name]);
}

/**
 * Per-layer cache of decoded slice payloads. Keys carry the class id because
 * label and attention planes are class-specific.
 */
export class SliceCache {
  private readonly planes = new Map<string, LayerPayload>();

  private key(state: ViewerState, layer: LayerName): string {
    const cls = layer === "image" ? "" : `c${state.classId}`;
    return `${state.volume}/${state.axis}/${state.index}/${layer}/${cls}`;
  }

  get(state: ViewerState, layer: LayerName): LayerPayload | undefined {
    return this.planes.get(this.key(state, layer));
  }

  put(state: ViewerState, layer: LayerName, payload: LayerPayload): void {
    this.planes.set(this.key(state, layer), payload);
  }

  /** Enabled layers that are not cached yet: exactly what one fetch should ask for. */
  missing(state: ViewerState): LayerName[] {
    return enabledLayers(state).filter((layer) => !this.planes.has(this.key(state, layer)));
  }
}

/**
 * Decide the single request (if any) for the current state. Null means
 * everything enabled is already cached and no request may be issued.
 */
export function fetchPlan(state: ViewerState, cache: SliceCache): { layers: LayerName[] } | null {
  const layers = cache.missing(state);
  return layers.length ? { layers } : null;
}
