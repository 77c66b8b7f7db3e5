/** Reader for the unsigned-byte IDX files the recovery package emits. */
import fs from "node:fs";

export class FormatError extends Error {}

export interface ImageSet {
  count: number;
  side: number;
  /** count * side * side values in [0, 1], image-major. */
  pixels: Float64Array;
}

export function parseIdxImages(data: Buffer): ImageSet {
  if (data.length < 4) throw new FormatError("header truncated");
  if (data[0] !== 0 || data[1] !== 0) throw new FormatError("bad magic");
  if (data[2] !== 0x08) throw new FormatError("only unsigned-byte payloads are supported");
  if (data[3] !== 3) throw new FormatError(`expected a rank-3 image file, got rank ${data[3]}`);
  if (data.length < 16) throw new FormatError("dimension block truncated");
  const count = data.readUInt32BE(4);
  const rows = data.readUInt32BE(8);
  const cols = data.readUInt32BE(12);
  if (rows !== cols) throw new FormatError(`images are ${rows}x${cols}, need square`);
  const total = count * rows * cols;
  const payload = data.subarray(16);
  if (payload.length < total) {
    throw new FormatError(`payload holds ${payload.length} bytes, needs ${total}`);
  }
  const pixels = new Float64Array(total);
  for (let i = 0; i < total; i++) pixels[i] = payload[i] / 255;
  return { count, side: rows, pixels };
}

export function parseIdxLabels(data: Buffer): Int32Array {
  if (data.length < 4) throw new FormatError("header truncated");
  if (data[0] !== 0 || data[1] !== 0) throw new FormatError("bad magic");
  if (data[2] !== 0x08) throw new FormatError("only unsigned-byte payloads are supported");
  if (data[3] !== 1) throw new FormatError(`expected a rank-1 label file, got rank ${data[3]}`);
  if (data.length < 8) throw new FormatError("dimension block truncated");
  const count = data.readUInt32BE(4);
  const payload = data.subarray(8);
  if (payload.length < count) {
    throw new FormatError(`payload holds ${payload.length} bytes, needs ${count}`);
  }
  const labels = new Int32Array(count);
  for (let i = 0; i < count; i++) labels[i] = payload[i];
  return labels;
}

export function readIdxImages(path: string): ImageSet {
  return parseIdxImages(fs.readFileSync(path));
}

/** Write [0,1] pixels back out as unsigned bytes (clip, ties round up). */
export function writeIdxImages(set: ImageSet, path: string): void {
  const head = Buffer.alloc(16);
  head.writeUInt32BE(0x803, 0);
  head.writeUInt32BE(set.count, 4);
  head.writeUInt32BE(set.side, 8);
  head.writeUInt32BE(set.side, 12);
  const body = Buffer.alloc(set.pixels.length);
  for (let i = 0; i < set.pixels.length; i++) {
    const v = Math.min(1, Math.max(0, set.pixels[i]));
    body[i] = Math.floor(v * 255 + 0.5);
  }
  fs.writeFileSync(path, Buffer.concat([head, body]));
}

export function readIdxLabels(path: string): Int32Array {
  return parseIdxLabels(fs.readFileSync(path));
}
