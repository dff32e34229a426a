/**
 * DOM wiring for the review UI. All decisions live in the pure modules
 * (queue/viewer/verdict/composite); this file only moves values between
 * them and the page. Nothing here is authoritative: the queue, statuses and
 * slices are refetched from the service, and the current view coordinates
 * ride in the URL hash, so a hard refresh reconstructs the exact view.
 */

import { ApiClient, ApiError } from "./api.js";
import { composeSlice, errorTile, type Rgba } from "./composite.js";
import { decodeLayer } from "./decode.js";
import { loadQueue, rowBadge, statusForVerdict, withRowStatus, type QueueModel } from "./queue.js";
import type { CampaignSnapshot, QueueEntry, SlicePayload } from "./types.js";
import {
  enabledLayers,
  fetchPlan,
  initialViewer,
  navigate,
  setAxis,
  setWindow,
  SliceCache,
  toggleLayer,
  type LayerName,
  type ViewerState,
} from "./viewer.js";
import { SubmitGate, submitVerdict, ValidationError, type VerdictDraft } from "./verdict.js";

interface AppState {
  api: ApiClient;
  campaignId: string;
  classId: number;
  queue: QueueModel | null;
  viewer: ViewerState | null;
  dims: number[];
  cache: SliceCache;
  gate: SubmitGate;
}

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
};

function banner(kind: "error" | "info" | "", text = ""): void {
  const el = $("banner");
  el.className = kind;
  el.textContent = text;
  el.hidden = !text;
}

function readHash(): { volume?: string; axis?: number; index?: number; classId?: number } {
  const params = new URLSearchParams(location.hash.slice(1));
  return {
    volume: params.get("v") ?? undefined,
    axis: params.has("a") ? Number(params.get("a")) : undefined,
    index: params.has("i") ? Number(params.get("i")) : undefined,
    classId: params.has("c") ? Number(params.get("c")) : undefined,
  };
}

function writeHash(state: AppState): void {
  if (!state.viewer) {
    return;
  }
  const params = new URLSearchParams();
  params.set("v", state.viewer.volume);
  params.set("a", String(state.viewer.axis));
  params.set("i", String(state.viewer.index));
  params.set("c", String(state.classId));
  history.replaceState(null, "", `#${params}`);
}

function paint(rgba: Rgba): void {
  const canvas = $("slice-canvas") as unknown as HTMLCanvasElement;
  canvas.width = rgba.width;
  canvas.height = rgba.height;
  const ctx = canvas.getContext("2d");
  if (ctx) {
    // fresh copy pins the buffer type ImageData expects
    const data = new Uint8ClampedArray(rgba.data);
    ctx.putImageData(new ImageData(data, rgba.width, rgba.height), 0, 0);
  }
}

function renderQueue(state: AppState): void {
  const tbody = $("queue-body");
  tbody.replaceChildren();
  const model = state.queue;
  if (!model) {
    return;
  }
  $("queue-title").textContent =
    `${model.campaign} - iteration ${model.iteration} - class ${model.classId}` +
    (model.iterationOpen ? "" : " (iteration closed)");
  if (!model.rows.length) {
    const row = document.createElement("tr");
    const cell = document.createElement("td");
    cell.colSpan = 4;
    cell.textContent = "queue is empty for this class";
    row.appendChild(cell);
    tbody.appendChild(row);
    return;
  }
  for (const entry of model.rows) {
    const row = document.createElement("tr");
    row.dataset.volume = entry.volume;
    if (state.viewer?.volume === entry.volume) {
      row.classList.add("active");
    }
    for (const text of [
      String(entry.rank),
      entry.volume,
      entry.size.toFixed(2),
      rowBadge(entry),
    ]) {
      const cell = document.createElement("td");
      cell.textContent = text;
      row.appendChild(cell);
    }
    row.addEventListener("click", () => {
      void selectVolume(state, entry.volume);
    });
    tbody.appendChild(row);
  }
  const submit = $("verdict-submit") as unknown as HTMLButtonElement;
  submit.disabled = !model.iterationOpen;
}

async function renderSlice(state: AppState): Promise<void> {
  const viewer = state.viewer;
  if (!viewer) {
    return;
  }
  const plan = fetchPlan(viewer, state.cache);
  if (plan) {
    let payload: SlicePayload;
    try {
      payload = await state.api.slice(
        viewer.volume,
        viewer.axis,
        viewer.index,
        plan.layers,
        viewer.classId,
      );
    } catch (err) {
      banner("error", err instanceof ApiError ? err.message : String(err));
      return;
    }
    state.dims = payload.dims;
    for (const name of plan.layers) {
      const layer = payload.layers[name];
      if (layer) {
        state.cache.put(viewer, name, layer);
      }
    }
  }
  const image = state.cache.get(viewer, "image");
  const label = state.cache.get(viewer, "label");
  const attention = state.cache.get(viewer, "attention");
  const remaining = [0, 1, 2].filter((axis) => axis !== viewer.axis);
  const height = state.dims[remaining[0]] ?? 1;
  const width = state.dims[remaining[1]] ?? 1;
  const on = new Set(enabledLayers(viewer));
  try {
    paint(
      composeSlice({
        width,
        height,
        image:
          image && on.has("image")
            ? { values: decodeLayer(image, width, height), window: image.window }
            : undefined,
        label:
          label && on.has("label") ? { values: decodeLayer(label, width, height) } : undefined,
        attention:
          attention && on.has("attention")
            ? { values: decodeLayer(attention, width, height), window: viewer.window }
            : undefined,
      }),
    );
  } catch {
    // a corrupt payload still leaves the viewer navigable
    paint(errorTile(width || 64, height || 64));
  }
  $("slice-label").textContent = `${viewer.volume} axis ${viewer.axis} slice ${viewer.index}`;
  writeHash(state);
}

async function selectVolume(state: AppState, volume: string): Promise<void> {
  const hash = readHash();
  const viewer = initialViewer(volume, state.classId);
  state.viewer =
    hash.volume === volume
      ? {
          ...viewer,
          axis: (hash.axis as 0 | 1 | 2 | undefined) ?? viewer.axis,
          index: hash.index ?? viewer.index,
        }
      : viewer;
  renderQueue(state);
  await renderSlice(state);
}

async function refreshQueue(state: AppState): Promise<void> {
  try {
    state.queue = await loadQueue(state.api, state.campaignId, state.classId);
    banner("");
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      banner("error", `iteration closed: ${err.detail}`);
      state.queue = state.queue ? { ...state.queue, iterationOpen: false } : null;
    } else {
      banner("error", err instanceof ApiError ? err.message : String(err));
    }
  }
  renderQueue(state);
}

async function handleSubmit(state: AppState): Promise<void> {
  const model = state.queue;
  const viewer = state.viewer;
  if (!model || !viewer) {
    banner("error", "pick a volume from the queue first");
    return;
  }
  const verdict = ($("verdict-kind") as unknown as HTMLSelectElement).value as
    | "revised"
    | "no-change";
  const fileInput = $("mask-file") as unknown as HTMLInputElement;
  const file = fileInput.files?.[0];
  const draft: VerdictDraft = {
    volume: viewer.volume,
    classId: state.classId,
    verdict,
    maskBytes: file ? new Uint8Array(await file.arrayBuffer()) : undefined,
  };
  const row = model.rows.find((entry: QueueEntry) => entry.volume === viewer.volume);

  // optimistic flip, rolled back if the server rejects the revision
  const rollback = model.rows;
  state.queue = {
    ...model,
    rows: withRowStatus(model.rows, viewer.volume, statusForVerdict(verdict)),
  };
  renderQueue(state);
  try {
    const reply = await submitVerdict(state.api, state.gate, state.campaignId, draft, row);
    banner(
      "info",
      `recorded ${reply.verdict} for ${reply.volume}${reply.replayed ? " (replayed)" : ""}`,
    );
    fileInput.value = "";
  } catch (err) {
    state.queue = { ...state.queue, rows: rollback };
    if (err instanceof ValidationError) {
      banner("error", err.reasons.join("; "));
    } else if (err instanceof ApiError) {
      banner("error", `${err.status}: ${err.detail}`); // the server's reason, verbatim
    } else {
      banner("error", String(err));
    }
  }
  renderQueue(state);
}

async function start(): Promise<void> {
  const origin = location.origin && location.origin !== "null" ? location.origin : "";
  const base = origin || "http://127.0.0.1:8414";
  const api = new ApiClient(base, sessionStorage.getItem("atlasforge-token"));

  const loginForm = $("login-form") as unknown as HTMLFormElement;
  loginForm.addEventListener("submit", (event) => {
    event.preventDefault();
    const value = ($("token-input") as unknown as HTMLInputElement).value.trim();
    sessionStorage.setItem("atlasforge-token", value);
    api.setToken(value || null);
    banner("info", value ? "token set" : "token cleared");
  });

  const campaignId = (await api.campaigns()).campaigns[0];
  const snapshot: CampaignSnapshot = await api.campaignState(campaignId);
  const registry = await api.registry();
  const classId = readHash().classId ?? snapshot.class_ids[0];

  const state: AppState = {
    api,
    campaignId,
    classId,
    queue: null,
    viewer: null,
    dims: [1, 1, 1],
    cache: new SliceCache(),
    gate: new SubmitGate(),
  };

  const classSelect = $("class-select") as unknown as HTMLSelectElement;
  for (const cid of snapshot.class_ids) {
    const option = document.createElement("option");
    option.value = String(cid);
    const def = registry.classes.find((c) => c.id === cid);
    option.textContent = def ? `${cid} ${def.name}` : String(cid);
    option.selected = cid === classId;
    classSelect.appendChild(option);
  }
  classSelect.addEventListener("change", () => {
    state.classId = Number(classSelect.value);
    state.viewer = null;
    void refreshQueue(state);
  });

  $("refresh-button").addEventListener("click", () => void refreshQueue(state));
  $("prev-slice").addEventListener("click", () => {
    if (state.viewer) {
      state.viewer = navigate(state.viewer, state.dims, -1);
      void renderSlice(state); // clamped at the extent: cached -> no request
    }
  });
  $("next-slice").addEventListener("click", () => {
    if (state.viewer) {
      state.viewer = navigate(state.viewer, state.dims, +1);
      void renderSlice(state);
    }
  });
  ($("axis-select") as unknown as HTMLSelectElement).addEventListener("change", (event) => {
    if (state.viewer) {
      const axis = Number((event.target as HTMLSelectElement).value) as 0 | 1 | 2;
      state.viewer = setAxis(state.viewer, state.dims, axis);
      void renderSlice(state);
    }
  });
  for (const layer of ["image", "label", "attention"] as LayerName[]) {
    $(`toggle-${layer}`).addEventListener("change", () => {
      if (state.viewer) {
        state.viewer = toggleLayer(state.viewer, layer);
        void renderSlice(state); // cached layers repaint without a fetch
      }
    });
  }
  const applyWindow = (): void => {
    if (state.viewer) {
      const lo = Number(($("window-lo") as unknown as HTMLInputElement).value);
      const hi = Number(($("window-hi") as unknown as HTMLInputElement).value);
      state.viewer = setWindow(state.viewer, lo, hi);
      void renderSlice(state);
    }
  };
  $("window-lo").addEventListener("change", applyWindow);
  $("window-hi").addEventListener("change", applyWindow);
  ($("verdict-form") as unknown as HTMLFormElement).addEventListener("submit", (event) => {
    event.preventDefault();
    void handleSubmit(state);
  });

  await refreshQueue(state);
  const wanted = readHash().volume ?? state.queue?.rows[0]?.volume;
  if (wanted) {
    await selectVolume(state, wanted);
  }
}

window.addEventListener("DOMContentLoaded", () => {
  start().catch((err) => banner("error", String(err)));
});
