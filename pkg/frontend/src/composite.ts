/**
 * Pure RGBA compositing of a slice: grayscale image beneath a label tint
 * beneath the attention heatmap. No canvas types here, just buffers, so the
 * exact pixel output is snapshot-testable anywhere.
 *
 * Heatmap alpha is proportional to the attention value inside the chosen
 * window: a value at or below the window floor contributes nothing, so an
 * all-zero attention layer leaves the composite untouched (fully
 * transparent by construction).
 */

export interface Rgba {
  width: number;
  height: number;
  data: Uint8ClampedArray; // RGBA, 4 bytes per pixel
}

export interface WindowedLayer {
  values: Float32Array; // row-major height x width
  window: [number, number];
}

export interface CompositeInput {
  width: number;
  height: number;
  image?: WindowedLayer;
  label?: { values: Float32Array }; // binary mask for the chosen class
  attention?: WindowedLayer;
}

const LABEL_TINT = { r: 80, g: 220, b: 120, alpha: 0.35 };
const HEAT = { r: 255, gMax: 180, b: 0 };

/** Position of v inside [lo, hi], clamped to [0, 1]; degenerate window -> 0. */
export function windowT(v: number, lo: number, hi: number): number {
  if (!(hi > lo)) {
    return 0;
  }
  const t = (v - lo) / (hi - lo);
  return t < 0 ? 0 : t > 1 ? 1 : t;
}

export function composeSlice(input: CompositeInput): Rgba {
  const { width, height, image, label, attention } = input;
  const pixels = width * height;
  for (const layer of [image?.values, label?.values, attention?.values]) {
    if (layer && layer.length !== pixels) {
      throw new Error(`layer holds ${layer.length} values, expected ${pixels}`);
    }
  }
  const data = new Uint8ClampedArray(pixels * 4);
  for (let i = 0; i < pixels; i++) {
    const o = i * 4;
    let r = 0;
    let g = 0;
    let b = 0;
    if (image) {
      const gray = Math.round(windowT(image.values[i], image.window[0], image.window[1]) * 255);
      r = g = b = gray;
    }
    if (label && label.values[i] > 0) {
      r = Math.round((1 - LABEL_TINT.alpha) * r + LABEL_TINT.alpha * LABEL_TINT.r);
      g = Math.round((1 - LABEL_TINT.alpha) * g + LABEL_TINT.alpha * LABEL_TINT.g);
      b = Math.round((1 - LABEL_TINT.alpha) * b + LABEL_TINT.alpha * LABEL_TINT.b);
    }
    if (attention) {
      const t = windowT(attention.values[i], attention.window[0], attention.window[1]);
      if (t > 0) {
        r = Math.round((1 - t) * r + t * HEAT.r);
        g = Math.round((1 - t) * g + t * Math.round(HEAT.gMax * t));
        b = Math.round((1 - t) * b + t * HEAT.b);
      }
    }
    data[o] = r;
    data[o + 1] = g;
    data[o + 2] = b;
    data[o + 3] = 255;
  }
  return { width, height, data };
}

/** A diagonally hatched tile shown when a slice payload fails to decode. */
export function errorTile(width: number, height: number): Rgba {
  const data = new Uint8ClampedArray(width * height * 4);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const o = (y * width + x) * 4;
      const hatch = (x + y) % 8 < 4;
      data[o] = hatch ? 120 : 40;
      data[o + 1] = 16;
      data[o + 2] = 24;
      data[o + 3] = 255;
    }
  }
  return { width, height, data };
}
