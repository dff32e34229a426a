import { describe, expect, it } from "vitest";

import { base64ToBytes, bytesToBase64, decodeLayer, DecodeError } from "../src/decode.js";
import type { LayerPayload } from "../src/types.js";

function layer(bytes: Uint8Array, dtype: "uint8" | "float32"): LayerPayload {
  return { dtype, data_b64: bytesToBase64(bytes), window: [0, 1] };
}

describe("base64", () => {
  it("round-trips arbitrary bytes, including chunked large buffers", () => {
    const big = new Uint8Array(200_000);
    for (let i = 0; i < big.length; i++) {
      big[i] = (i * 31) & 0xff;
    }
    expect(base64ToBytes(bytesToBase64(big))).toEqual(big);
  });

  it("rejects text that is not base64", () => {
    expect(() => base64ToBytes("@@not-base64@@")).toThrow(DecodeError);
  });
});

describe("decodeLayer", () => {
  it("decodes uint8 planes to numbers", () => {
    const plane = decodeLayer(layer(new Uint8Array([0, 1, 255, 7]), "uint8"), 2, 2);
    expect(Array.from(plane)).toEqual([0, 1, 255, 7]);
  });

  it("decodes float32 planes little-endian regardless of host order", () => {
    const buffer = new ArrayBuffer(8);
    const view = new DataView(buffer);
    view.setFloat32(0, 1.5, true);
    view.setFloat32(4, -2.25, true);
    const plane = decodeLayer(layer(new Uint8Array(buffer), "float32"), 2, 1);
    expect(Array.from(plane)).toEqual([1.5, -2.25]);
  });

  it("rejects length mismatches instead of rendering garbage", () => {
    expect(() => decodeLayer(layer(new Uint8Array(3), "uint8"), 2, 2)).toThrow(DecodeError);
    expect(() => decodeLayer(layer(new Uint8Array(9), "float32"), 2, 1)).toThrow(DecodeError);
  });
});
