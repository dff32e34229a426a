/**
 * Base64 and raw-voxel decoding for slice payloads.
 *
 * The service ships each slice layer as base64 over the plane's raw bytes in
 * C order: uint8 for label masks, little-endian float32 for images and
 * attention. Decoding goes through DataView so the result is correct on any
 * host endianness.
 */

import type { LayerPayload } from "./types.js";

export class DecodeError extends Error {}

const B64_CHUNK = 0x8000;

/** Binary-safe base64 encode; chunked to stay under argument-count limits. */
export function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  for (let i = 0; i < bytes.length; i += B64_CHUNK) {
    binary += String.fromCharCode(...bytes.subarray(i, i + B64_CHUNK));
  }
  return btoa(binary);
}

export function base64ToBytes(b64: string): Uint8Array {
  let binary: string;
  try {
    binary = atob(b64);
  } catch {
    throw new DecodeError("payload is not valid base64");
  }
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) {
    bytes[i] = binary.charCodeAt(i);
  }
  return bytes;
}

/**
 * Decode one layer into float values, row-major height x width.
 * Length mismatches raise DecodeError rather than rendering garbage.
 */
export function decodeLayer(layer: LayerPayload, width: number, height: number): Float32Array {
  const bytes = base64ToBytes(layer.data_b64);
  const pixels = width * height;
  const out = new Float32Array(pixels);
  if (layer.dtype === "uint8") {
    if (bytes.length !== pixels) {
      throw new DecodeError(`uint8 layer holds ${bytes.length} bytes, expected ${pixels}`);
    }
    for (let i = 0; i < pixels; i++) {
      out[i] = bytes[i];
    }
    return out;
  }
  if (bytes.length !== pixels * 4) {
    throw new DecodeError(`float32 layer holds ${bytes.length} bytes, expected ${pixels * 4}`);
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  for (let i = 0; i < pixels; i++) {
    out[i] = view.getFloat32(i * 4, true);
  }
  return out;
}
