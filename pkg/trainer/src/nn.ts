/** Convolution and activation primitives on flat Float64Array feature maps.
 *
 * A feature map with c channels on a side*side grid is stored channel-major:
 * value (ch, y, x) lives at ch*side*side + y*side + x.  Convolutions are
 * cross-correlations with zero padding k>>1 so the grid size never changes.
 */

import { Rng } from "./rng.js";

export interface ConvLayer {
  kind: "conv";
  inCh: number;
  outCh: number;
  k: number;
  /** Weights, shape (outCh, inCh, k, k) row-major. */
  w: Float64Array;
  /** Bias, one per output channel. */
  b: Float64Array;
  gw: Float64Array;
  gb: Float64Array;
}

export interface ActLayer {
  kind: "elu" | "softplus";
}

export type Layer = ConvLayer | ActLayer;

export function convLayer(inCh: number, outCh: number, k: number, rng?: Rng): ConvLayer {
  const w = new Float64Array(outCh * inCh * k * k);
  if (rng) {
    const scale = Math.sqrt(2 / (inCh * k * k));
    for (let i = 0; i < w.length; i++) w[i] = rng.gaussian() * scale;
  }
  return {
    kind: "conv",
    inCh,
    outCh,
    k,
    w,
    b: new Float64Array(outCh),
    gw: new Float64Array(w.length),
    gb: new Float64Array(outCh),
  };
}

export function convForward(layer: ConvLayer, x: Float64Array, side: number): Float64Array {
  const { inCh, outCh, k, w, b } = layer;
  const p = k >> 1;
  const hw = side * side;
  const out = new Float64Array(outCh * hw);
  for (let oc = 0; oc < outCh; oc++) {
    const outBase = oc * hw;
    const bias = b[oc];
    for (let i = 0; i < hw; i++) out[outBase + i] = bias;
    for (let ic = 0; ic < inCh; ic++) {
      const xBase = ic * hw;
      const wBase = (oc * inCh + ic) * k * k;
      for (let iy = 0; iy < side; iy++) {
        const ky0 = Math.max(0, p - iy);
        const ky1 = Math.min(k, side + p - iy);
        const rowBase = outBase + iy * side;
        for (let ix = 0; ix < side; ix++) {
          const kx0 = Math.max(0, p - ix);
          const kx1 = Math.min(k, side + p - ix);
          let acc = 0;
          for (let ky = ky0; ky < ky1; ky++) {
            const srcRow = xBase + (iy + ky - p) * side + ix - p;
            const wRow = wBase + ky * k;
            for (let kx = kx0; kx < kx1; kx++) {
              acc += w[wRow + kx] * x[srcRow + kx];
            }
          }
          out[rowBase + ix] += acc;
        }
      }
    }
  }
  return out;
}

/** Accumulates gw/gb for the layer and returns the gradient wrt its input. */
export function convBackward(
  layer: ConvLayer,
  x: Float64Array,
  gOut: Float64Array,
  side: number,
): Float64Array {
  const { inCh, outCh, k, w, gw, gb } = layer;
  const p = k >> 1;
  const hw = side * side;
  const dx = new Float64Array(inCh * hw);
  for (let oc = 0; oc < outCh; oc++) {
    const outBase = oc * hw;
    let bSum = 0;
    for (let i = 0; i < hw; i++) bSum += gOut[outBase + i];
    gb[oc] += bSum;
    for (let ic = 0; ic < inCh; ic++) {
      const xBase = ic * hw;
      const wBase = (oc * inCh + ic) * k * k;
      for (let iy = 0; iy < side; iy++) {
        const ky0 = Math.max(0, p - iy);
        const ky1 = Math.min(k, side + p - iy);
        const rowBase = outBase + iy * side;
        for (let ix = 0; ix < side; ix++) {
          const g = gOut[rowBase + ix];
          if (g === 0) continue;
          const kx0 = Math.max(0, p - ix);
          const kx1 = Math.min(k, side + p - ix);
          for (let ky = ky0; ky < ky1; ky++) {
            const srcRow = xBase + (iy + ky - p) * side + ix - p;
            const wRow = wBase + ky * k;
            for (let kx = kx0; kx < kx1; kx++) {
              gw[wRow + kx] += g * x[srcRow + kx];
              dx[srcRow + kx] += g * w[wRow + kx];
            }
          }
        }
      }
    }
  }
  return dx;
}

export function eluForward(x: Float64Array): Float64Array {
  const out = new Float64Array(x.length);
  for (let i = 0; i < x.length; i++) {
    const v = x[i];
    out[i] = v > 0 ? v : Math.expm1(v);
  }
  return out;
}

/** Backward pass given the pre-activation input. */
export function eluBackward(x: Float64Array, gOut: Float64Array): Float64Array {
  const dx = new Float64Array(x.length);
  for (let i = 0; i < x.length; i++) {
    dx[i] = x[i] > 0 ? gOut[i] : gOut[i] * Math.exp(x[i]);
  }
  return dx;
}

export function softplusForward(x: Float64Array): Float64Array {
  const out = new Float64Array(x.length);
  for (let i = 0; i < x.length; i++) {
    const v = x[i];
    out[i] = v > 30 ? v : Math.log1p(Math.exp(v));
  }
  return out;
}

export function softplusBackward(x: Float64Array, gOut: Float64Array): Float64Array {
  const dx = new Float64Array(x.length);
  for (let i = 0; i < x.length; i++) {
    dx[i] = gOut[i] / (1 + Math.exp(-x[i]));
  }
  return dx;
}
