/** Training loop: epochs of shuffled denoising batches, then atomic export. */

import fs from "node:fs";
import path from "node:path";

import { Adam, dsmBatch } from "./dsm.js";
import { ImageSet, readIdxImages } from "./idx.js";
import { Rng } from "./rng.js";
import { ScoreNet, exportScorenet, referenceNet } from "./scorenet.js";

export interface TrainConfig {
  dataPath: string;
  /** Image indices in the dataset file that must never be trained on. */
  exclude: number[];
  side: number;
  sigmaDsm: number;
  epochs: number;
  batch: number;
  lr: number;
  seed: number;
  outPath: string;
}

export interface TrainResult {
  net: ScoreNet;
  epochLosses: number[];
}

export type Logger = (line: string) => void;

export function train(cfg: TrainConfig, set?: ImageSet, log: Logger = console.log): TrainResult {
  if (cfg.epochs < 1 || cfg.batch < 1) throw new Error("epochs and batch size must be positive");
  const data = set ?? readIdxImages(cfg.dataPath);
  if (data.side !== cfg.side) {
    throw new Error(`dataset images are ${data.side}x${data.side}, config says ${cfg.side}`);
  }
  const excluded = new Set(cfg.exclude);
  for (const id of excluded) {
    if (!Number.isInteger(id) || id < 0 || id >= data.count) {
      throw new Error(`excluded id ${id} is outside the dataset (${data.count} images)`);
    }
  }
  const pool: number[] = [];
  for (let i = 0; i < data.count; i++) if (!excluded.has(i)) pool.push(i);
  if (pool.length === 0) throw new Error("exclusion list removes every training image");

  const rng = new Rng(cfg.seed);
  const net = referenceNet(cfg.side, cfg.sigmaDsm, rng);
  const adam = new Adam(net, cfg.lr);
  log(`training on ${pool.length} of ${data.count} images ` +
    `(side ${cfg.side}, sigma ${cfg.sigmaDsm}, ${cfg.epochs} epochs, ` +
    `batch ${cfg.batch}, lr ${cfg.lr}, seed ${cfg.seed})`);

  const epochLosses: number[] = [];
  let batchCount = 0;
  for (let epoch = 0; epoch < cfg.epochs; epoch++) {
    rng.shuffle(pool);
    let sum = 0;
    for (let at = 0; at < pool.length; at += cfg.batch) {
      const batch = pool.slice(at, at + cfg.batch);
      for (const id of batch) {
        if (excluded.has(id)) throw new Error(`excluded id ${id} reached a batch`);
      }
      batchCount += 1;
      const loss = dsmBatch(net, data, batch, rng);
      if (!Number.isFinite(loss)) {
        throw new Error(
          `non-finite loss at epoch ${epoch}, batch ${batchCount} ` +
          `(batch size ${batch.length}, lr ${cfg.lr}); aborting before export`,
        );
      }
      sum += loss * batch.length;
      adam.step();
    }
    const epochLoss = sum / pool.length;
    epochLosses.push(epochLoss);
    log(`epoch ${epoch + 1}/${cfg.epochs}  loss ${epochLoss.toExponential(4)}`);
  }
  log(`exclusion honored: ${excluded.size} held-out ids appeared in none of ${batchCount} batches`);

  const testInput = new Float64Array(cfg.side * cfg.side);
  for (let i = 0; i < testInput.length; i++) testInput[i] = rng.next();
  writeAtomic(cfg.outPath, exportScorenet(net, testInput));
  log(`wrote ${cfg.outPath}`);
  return { net, epochLosses };
}

function writeAtomic(outPath: string, bytes: Buffer): void {
  const dir = path.dirname(outPath);
  if (dir) fs.mkdirSync(dir, { recursive: true });
  const tmp = `${outPath}.tmp-${process.pid}`;
  fs.writeFileSync(tmp, bytes);
  fs.renameSync(tmp, outPath);
}
