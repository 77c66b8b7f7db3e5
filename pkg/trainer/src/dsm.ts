/** Denoising score matching: batch objective and the Adam update. */

import { ImageSet } from "./idx.js";
import { ConvLayer } from "./nn.js";
import { Rng } from "./rng.js";
import { ScoreNet, backward, convLayers, forwardTrace, zeroGrads } from "./scorenet.js";

export class Adam {
  private layers: ConvLayer[];
  private mW: Float64Array[];
  private vW: Float64Array[];
  private mB: Float64Array[];
  private vB: Float64Array[];
  private t = 0;

  constructor(
    net: ScoreNet,
    private lr: number,
    private beta1 = 0.9,
    private beta2 = 0.999,
    private eps = 1e-8,
  ) {
    this.layers = convLayers(net);
    this.mW = this.layers.map((l) => new Float64Array(l.w.length));
    this.vW = this.layers.map((l) => new Float64Array(l.w.length));
    this.mB = this.layers.map((l) => new Float64Array(l.b.length));
    this.vB = this.layers.map((l) => new Float64Array(l.b.length));
  }

  /** Applies accumulated gradients and clears them. */
  step(): void {
    this.t += 1;
    const c1 = 1 - Math.pow(this.beta1, this.t);
    const c2 = 1 - Math.pow(this.beta2, this.t);
    for (let li = 0; li < this.layers.length; li++) {
      const l = this.layers[li];
      this.apply(l.w, l.gw, this.mW[li], this.vW[li], c1, c2);
      this.apply(l.b, l.gb, this.mB[li], this.vB[li], c1, c2);
      l.gw.fill(0);
      l.gb.fill(0);
    }
  }

  private apply(
    p: Float64Array,
    g: Float64Array,
    m: Float64Array,
    v: Float64Array,
    c1: number,
    c2: number,
  ): void {
    for (let i = 0; i < p.length; i++) {
      m[i] = this.beta1 * m[i] + (1 - this.beta1) * g[i];
      v[i] = this.beta2 * v[i] + (1 - this.beta2) * g[i] * g[i];
      p[i] -= (this.lr * (m[i] / c1)) / (Math.sqrt(v[i] / c2) + this.eps);
    }
  }
}

/** One batch of the denoising objective.
 *
 * Each image is perturbed as x~ = x + sigma * eps; the network sees x~ and
 * regresses onto (x - x~) / sigma^2, whose conditional mean is the score of
 * the sigma-smoothed data density.  Returns the mean squared residual per
 * pixel and leaves the parameter gradients accumulated on the layers.
 */
export function dsmBatch(net: ScoreNet, set: ImageSet, batch: number[], rng: Rng): number {
  const hw = net.side * net.side;
  const sigma = net.sigmaDsm;
  const noisy = new Float64Array(hw);
  const scale = 2 / (hw * batch.length);
  let loss = 0;
  zeroGrads(net);
  for (const idx of batch) {
    const base = idx * hw;
    const target = new Float64Array(hw);
    for (let i = 0; i < hw; i++) {
      const eps = rng.gaussian();
      noisy[i] = set.pixels[base + i] + sigma * eps;
      target[i] = -eps / sigma;
    }
    const acts = forwardTrace(net, noisy);
    const score = acts[acts.length - 1];
    const gOut = new Float64Array(hw);
    for (let i = 0; i < hw; i++) {
      const r = score[i] - target[i];
      loss += r * r;
      gOut[i] = r * scale;
    }
    backward(net, acts, gOut);
  }
  return loss / (hw * batch.length);
}
