/** Score network assembly plus the SCORENET1 container read/write. */

import {
  ActLayer,
  ConvLayer,
  Layer,
  convBackward,
  convForward,
  convLayer,
  eluBackward,
  eluForward,
  softplusForward,
} from "./nn.js";
import { Rng } from "./rng.js";
import { FormatError } from "./idx.js";

export interface ScoreNet {
  side: number;
  sigmaDsm: number;
  layers: Layer[];
}

const MAGIC = "SCORENET1";
const KIND_CODE: Record<string, number> = { conv: 0, dense: 1, elu: 2, softplus: 3 };

/** Four 3x3 convolutions (1-32-32-32-1 channels) with ELUs between them. */
export function referenceNet(side: number, sigmaDsm: number, rng: Rng): ScoreNet {
  const elu: ActLayer = { kind: "elu" };
  return {
    side,
    sigmaDsm,
    layers: [
      convLayer(1, 32, 3, rng),
      elu,
      convLayer(32, 32, 3, rng),
      elu,
      convLayer(32, 32, 3, rng),
      elu,
      convLayer(32, 1, 3, rng),
    ],
  };
}

export function convLayers(net: ScoreNet): ConvLayer[] {
  return net.layers.filter((l): l is ConvLayer => l.kind === "conv");
}

export function parameterCount(net: ScoreNet): number {
  let n = 0;
  for (const l of convLayers(net)) n += l.w.length + l.b.length;
  return n;
}

export function forward(net: ScoreNet, x: Float64Array): Float64Array {
  let cur = x;
  for (const layer of net.layers) {
    if (layer.kind === "conv") cur = convForward(layer, cur, net.side);
    else if (layer.kind === "elu") cur = eluForward(cur);
    else cur = softplusForward(cur);
  }
  return cur;
}

/** Forward pass keeping every layer input so backward() can reuse them. */
export function forwardTrace(net: ScoreNet, x: Float64Array): Float64Array[] {
  const acts: Float64Array[] = [x];
  let cur = x;
  for (const layer of net.layers) {
    if (layer.kind === "conv") cur = convForward(layer, cur, net.side);
    else if (layer.kind === "elu") cur = eluForward(cur);
    else cur = softplusForward(cur);
    acts.push(cur);
  }
  return acts;
}

/** Accumulates parameter gradients for a trace produced by forwardTrace. */
export function backward(net: ScoreNet, acts: Float64Array[], gOut: Float64Array): void {
  let g = gOut;
  for (let i = net.layers.length - 1; i >= 0; i--) {
    const layer = net.layers[i];
    if (layer.kind === "conv") g = convBackward(layer, acts[i], g, net.side);
    else if (layer.kind === "elu") g = eluBackward(acts[i], g);
    else throw new Error("softplus backward is not wired into training");
  }
}

export function zeroGrads(net: ScoreNet): void {
  for (const l of convLayers(net)) {
    l.gw.fill(0);
    l.gb.fill(0);
  }
}

function quantized(net: ScoreNet): ScoreNet {
  const layers: Layer[] = net.layers.map((l) => {
    if (l.kind !== "conv") return l;
    const copy = convLayer(l.inCh, l.outCh, l.k);
    for (let i = 0; i < l.w.length; i++) copy.w[i] = Math.fround(l.w[i]);
    for (let i = 0; i < l.b.length; i++) copy.b[i] = Math.fround(l.b[i]);
    return copy;
  });
  return { side: net.side, sigmaDsm: net.sigmaDsm, layers };
}

/** Serializes the network with a self-check pair computed from the stored
 *  float32 weights, so any reader can verify its forward pass bit-for-bit
 *  against what was saved.
 */
export function exportScorenet(net: ScoreNet, testInput: Float64Array): Buffer {
  const hw = net.side * net.side;
  if (testInput.length !== hw) throw new Error("test input does not match the grid");
  const stored = new Float64Array(hw);
  for (let i = 0; i < hw; i++) stored[i] = Math.fround(testInput[i]);
  const q = quantized(net);
  const raw = forward(q, stored);
  const expected = new Float64Array(hw);
  for (let i = 0; i < hw; i++) expected[i] = Math.fround(raw[i]);

  const chunks: Buffer[] = [];
  chunks.push(Buffer.from(MAGIC, "ascii"));
  const head = Buffer.alloc(4 + 4 + 4 + 4);
  head.writeUInt32LE(1, 0);
  head.writeUInt32LE(net.side, 4);
  head.writeFloatLE(net.sigmaDsm, 8);
  head.writeUInt32LE(net.layers.length, 12);
  chunks.push(head);
  for (const layer of q.layers) {
    const kind = Buffer.alloc(1);
    kind.writeUInt8(KIND_CODE[layer.kind], 0);
    chunks.push(kind);
    if (layer.kind !== "conv") continue;
    const dims = Buffer.alloc(12);
    dims.writeUInt32LE(layer.inCh, 0);
    dims.writeUInt32LE(layer.outCh, 4);
    dims.writeUInt32LE(layer.k, 8);
    chunks.push(dims);
    chunks.push(floats(layer.w));
    chunks.push(floats(layer.b));
  }
  chunks.push(floats(stored));
  chunks.push(floats(expected));
  return Buffer.concat(chunks);
}

function floats(values: Float64Array): Buffer {
  const buf = Buffer.alloc(4 * values.length);
  for (let i = 0; i < values.length; i++) buf.writeFloatLE(values[i], 4 * i);
  return buf;
}

export interface LoadedScorenet {
  net: ScoreNet;
  testInput: Float64Array;
  testOutput: Float64Array;
}

export function importScorenet(data: Buffer): LoadedScorenet {
  let off = 0;
  const need = (n: number) => {
    if (off + n > data.length) throw new FormatError("container truncated");
  };
  need(MAGIC.length);
  if (data.toString("ascii", 0, MAGIC.length) !== MAGIC) throw new FormatError("bad magic");
  off = MAGIC.length;
  need(16);
  const version = data.readUInt32LE(off);
  if (version !== 1) throw new FormatError(`unsupported version ${version}`);
  const side = data.readUInt32LE(off + 4);
  const sigmaDsm = data.readFloatLE(off + 8);
  const layerCount = data.readUInt32LE(off + 12);
  off += 16;

  const layers: Layer[] = [];
  for (let i = 0; i < layerCount; i++) {
    need(1);
    const kind = data.readUInt8(off);
    off += 1;
    if (kind === 2) {
      layers.push({ kind: "elu" });
    } else if (kind === 3) {
      layers.push({ kind: "softplus" });
    } else if (kind === 0) {
      need(12);
      const inCh = data.readUInt32LE(off);
      const outCh = data.readUInt32LE(off + 4);
      const k = data.readUInt32LE(off + 8);
      off += 12;
      const layer = convLayer(inCh, outCh, k);
      need(4 * (layer.w.length + layer.b.length));
      for (let j = 0; j < layer.w.length; j++, off += 4) layer.w[j] = data.readFloatLE(off);
      for (let j = 0; j < layer.b.length; j++, off += 4) layer.b[j] = data.readFloatLE(off);
      layers.push(layer);
    } else if (kind === 1) {
      throw new FormatError("dense layers are not produced by this trainer");
    } else {
      throw new FormatError(`unknown layer kind ${kind}`);
    }
  }

  const hw = side * side;
  need(8 * hw);
  const testInput = new Float64Array(hw);
  const testOutput = new Float64Array(hw);
  for (let j = 0; j < hw; j++, off += 4) testInput[j] = data.readFloatLE(off);
  for (let j = 0; j < hw; j++, off += 4) testOutput[j] = data.readFloatLE(off);
  return { net: { side, sigmaDsm, layers }, testInput, testOutput };
}
