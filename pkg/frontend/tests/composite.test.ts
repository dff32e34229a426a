import { describe, expect, it } from "vitest";

import { composeSlice, errorTile, windowT } from "../src/composite.js";
import { ATTENTION_CEIL } from "../src/types.js";

const W = 4;
const H = 3;

function gradientImage(): { values: Float32Array; window: [number, number] } {
  const values = new Float32Array(W * H);
  for (let i = 0; i < values.length; i++) {
    values[i] = i / (values.length - 1);
  }
  return { values, window: [0, 1] };
}

describe("windowT", () => {
  it("maps the window to [0, 1] and clamps outside it", () => {
    expect(windowT(0, 0, 2)).toBe(0);
    expect(windowT(1, 0, 2)).toBe(0.5);
    expect(windowT(2, 0, 2)).toBe(1);
    expect(windowT(-5, 0, 2)).toBe(0);
    expect(windowT(99, 0, 2)).toBe(1);
  });

  it("treats a degenerate window as zero contribution", () => {
    expect(windowT(1, 1, 1)).toBe(0);
    expect(windowT(1, 2, 1)).toBe(0);
  });
});

describe("composeSlice", () => {
  it("composites an all-zero attention layer as fully transparent", () => {
    const image = gradientImage();
    const label = { values: new Float32Array(W * H).fill(0) };
    label.values[5] = 1;
    const without = composeSlice({ width: W, height: H, image, label });
    const withZero = composeSlice({
      width: W,
      height: H,
      image,
      label,
      attention: { values: new Float32Array(W * H), window: [0, ATTENTION_CEIL] },
    });
    expect(withZero.data).toEqual(without.data);
  });

  it("omitting the attention layer equals the image+label composite", () => {
    const image = gradientImage();
    const base = composeSlice({ width: W, height: H, image });
    const toggledOff = composeSlice({ width: W, height: H, image, attention: undefined });
    expect(toggledOff.data).toEqual(base.data);
  });

  it("heatmap alpha grows with the attention value inside the window", () => {
    const attention = { values: new Float32Array(W * H), window: [0, 2] as [number, number] };
    attention.values[0] = 0; // t = 0: untouched
    attention.values[1] = 1; // t = 0.5
    attention.values[2] = 2; // t = 1: pure heat color
    const out = composeSlice({ width: W, height: H, attention });
    expect(Array.from(out.data.slice(0, 4))).toEqual([0, 0, 0, 255]);
    expect(Array.from(out.data.slice(4, 8))).toEqual([128, 45, 0, 255]); // 0.5 blend onto black
    expect(Array.from(out.data.slice(8, 12))).toEqual([255, 180, 0, 255]);
  });

  it("values below the window floor contribute nothing", () => {
    const image = gradientImage();
    const base = composeSlice({ width: W, height: H, image });
    const attention = { values: new Float32Array(W * H).fill(0.4), window: [0.5, 1] as [number, number] };
    const out = composeSlice({ width: W, height: H, image, attention });
    expect(out.data).toEqual(base.data);
  });

  it("tints only labeled pixels", () => {
    const label = { values: new Float32Array(W * H) };
    label.values[3] = 1;
    const out = composeSlice({ width: W, height: H, label });
    expect(Array.from(out.data.slice(0, 4))).toEqual([0, 0, 0, 255]);
    const tinted = Array.from(out.data.slice(12, 16));
    expect(tinted[0]).toBeGreaterThan(0);
    expect(tinted[1]).toBeGreaterThan(tinted[0]); // green-dominant tint
  });

  it("rejects layers whose size disagrees with the plane", () => {
    expect(() =>
      composeSlice({ width: W, height: H, label: { values: new Float32Array(5) } }),
    ).toThrow(/expected/);
  });
});

describe("errorTile", () => {
  it("fills the requested extent with opaque pixels", () => {
    const tile = errorTile(8, 5);
    expect(tile.data.length).toBe(8 * 5 * 4);
    for (let i = 3; i < tile.data.length; i += 4) {
      expect(tile.data[i]).toBe(255);
    }
  });
});
