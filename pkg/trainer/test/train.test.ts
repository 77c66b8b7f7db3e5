import fs from "node:fs";
import os from "node:os";
import path from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import { gaussianSet } from "../src/gaussian.js";
import { ImageSet } from "../src/idx.js";
import { Rng } from "../src/rng.js";
import { forward } from "../src/scorenet.js";
import { TrainConfig, train } from "../src/train.js";

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "train-"));
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));

function baseConfig(over: Partial<TrainConfig>): TrainConfig {
  return {
    dataPath: "(memory)",
    exclude: [],
    side: 6,
    sigmaDsm: 0.1,
    epochs: 2,
    batch: 8,
    lr: 1e-3,
    seed: 5,
    outPath: path.join(tmp, "net.snet1"),
    ...over,
  };
}

function smallSet(count: number, side: number, seed: number): ImageSet {
  const mean = new Float64Array(side * side).fill(0.5);
  return gaussianSet(count, mean, 0.15, new Rng(seed));
}

describe("training loop", () => {
  it("never lets excluded images reach a batch", () => {
    const side = 6;
    const set = smallSet(24, side, 1);
    const excluded = [0, 7, 23];
    const hw = side * side;
    for (const id of excluded) set.pixels.fill(Number.NaN, id * hw, (id + 1) * hw);
    const lines: string[] = [];
    const { epochLosses } = train(
      baseConfig({ exclude: excluded, outPath: path.join(tmp, "excl.snet1") }),
      set,
      (l) => lines.push(l),
    );
    for (const loss of epochLosses) expect(Number.isFinite(loss)).toBe(true);
    expect(lines.some((l) => l.includes("exclusion honored: 3 held-out ids"))).toBe(true);
  });

  it("aborts with diagnostics when the loss turns non-finite", () => {
    const set = smallSet(16, 6, 2);
    set.pixels[3 * 36 + 10] = Number.POSITIVE_INFINITY;
    expect(() => train(baseConfig({ epochs: 1 }), set, () => {})).toThrow(/non-finite loss/);
    expect(fs.existsSync(baseConfig({}).outPath)).toBe(false);
  });

  it("rejects out-of-range exclusions and empty pools", () => {
    const set = smallSet(4, 6, 3);
    expect(() => train(baseConfig({ exclude: [4] }), set, () => {})).toThrow(/outside/);
    expect(() => train(baseConfig({ exclude: [0, 1, 2, 3] }), set, () => {})).toThrow(
      /every training image/,
    );
  });

  it("loss decreases over epochs on well-posed data", () => {
    const set = smallSet(128, 6, 4);
    const { epochLosses } = train(
      baseConfig({ epochs: 4, batch: 16, outPath: path.join(tmp, "dec.snet1") }),
      set,
      () => {},
    );
    expect(epochLosses[epochLosses.length - 1]).toBeLessThan(epochLosses[0]);
  });

  it("is deterministic under a fixed seed", () => {
    const a = path.join(tmp, "rep-a.snet1");
    const b = path.join(tmp, "rep-b.snet1");
    const c = path.join(tmp, "rep-c.snet1");
    train(baseConfig({ outPath: a, seed: 9 }), smallSet(16, 6, 5), () => {});
    train(baseConfig({ outPath: b, seed: 9 }), smallSet(16, 6, 5), () => {});
    train(baseConfig({ outPath: c, seed: 10 }), smallSet(16, 6, 5), () => {});
    expect(fs.readFileSync(a).equals(fs.readFileSync(b))).toBe(true);
    expect(fs.readFileSync(a).equals(fs.readFileSync(c))).toBe(false);
  });
});

describe("denoising objective", () => {
  it(
    "learns the analytic score of a known smoothed Gaussian",
    { timeout: 120_000 },
    () => {
      const side = 6;
      const hw = side * side;
      const std = 0.15;
      const sigma = 0.1;
      const mean = new Float64Array(hw).fill(0.5);
      const set = gaussianSet(512, mean, std, new Rng(11));
      const { net } = train(
        baseConfig({
          epochs: 12,
          batch: 16,
          lr: 2e-3,
          seed: 2,
          sigmaDsm: sigma,
          outPath: path.join(tmp, "gauss.snet1"),
        }),
        set,
        () => {},
      );
      const vtot = std * std + sigma * sigma;
      const ev = new Rng(99);
      let dot = 0;
      let nn = 0;
      let no = 0;
      for (let n = 0; n < 64; n++) {
        const noisy = new Float64Array(hw);
        for (let i = 0; i < hw; i++) noisy[i] = mean[i] + Math.sqrt(vtot) * ev.gaussian();
        const s = forward(net, noisy);
        for (let i = 0; i < hw; i++) {
          const oracle = -(noisy[i] - mean[i]) / vtot;
          dot += s[i] * oracle;
          nn += s[i] * s[i];
          no += oracle * oracle;
        }
      }
      const cosine = dot / Math.sqrt(nn * no);
      expect(cosine).toBeGreaterThan(0.95);
    },
  );
});
