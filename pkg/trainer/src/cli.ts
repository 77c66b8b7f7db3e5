/** Command line entry: train a score network from an IDX image file.
 *
 * Exit codes: 0 success, 2 bad flags or config, 3 non-finite loss,
 * 4 I/O or file-format error.
 */

import { FormatError } from "./idx.js";
import { TrainConfig, train } from "./train.js";

const USAGE = `usage: score-train --data FILE --out FILE --side N [options]

options:
  --data FILE       rank-3 unsigned-byte IDX image file (required)
  --out FILE        SCORENET1 output path (required)
  --side N          image side; must match the dataset (required)
  --sigma-dsm F     smoothing level of the denoising objective [0.1]
  --epochs N        passes over the training pool [6]
  --batch N         images per update [16]
  --lr F            Adam learning rate [0.001]
  --seed N          PRNG seed for init, noise and shuffling [0]
  --exclude LIST    comma-separated image ids withheld from training []
`;

export function parseArgs(argv: string[]): TrainConfig {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--")) throw new Error(`unexpected argument ${key}`);
    if (i + 1 >= argv.length) throw new Error(`flag ${key} needs a value`);
    flags.set(key.slice(2), argv[i + 1]);
  }
  const take = (name: string, fallback?: string): string => {
    const v = flags.get(name) ?? fallback;
    if (v === undefined) throw new Error(`missing required flag --${name}`);
    flags.delete(name);
    return v;
  };
  const num = (name: string, fallback?: string): number => {
    const v = Number(take(name, fallback));
    if (!Number.isFinite(v)) throw new Error(`flag --${name} is not a number`);
    return v;
  };
  const cfg: TrainConfig = {
    dataPath: take("data"),
    outPath: take("out"),
    side: num("side"),
    sigmaDsm: num("sigma-dsm", "0.1"),
    epochs: num("epochs", "6"),
    batch: num("batch", "16"),
    lr: num("lr", "0.001"),
    seed: num("seed", "0"),
    exclude: take("exclude", "")
      .split(",")
      .filter((s) => s.length > 0)
      .map((s) => {
        const id = Number(s);
        if (!Number.isInteger(id)) throw new Error(`--exclude entry ${s} is not an integer`);
        return id;
      }),
  };
  if (flags.size > 0) throw new Error(`unknown flag --${[...flags.keys()][0]}`);
  return cfg;
}

export function main(argv: string[]): number {
  let cfg: TrainConfig;
  try {
    cfg = parseArgs(argv);
  } catch (e) {
    console.error(`error: ${(e as Error).message}\n`);
    console.error(USAGE);
    return 2;
  }
  try {
    train(cfg);
  } catch (e) {
    const msg = (e as Error).message;
    console.error(`error: ${msg}`);
    if (e instanceof FormatError) return 4;
    if ((e as NodeJS.ErrnoException).code !== undefined) return 4;
    if (msg.includes("non-finite loss")) return 3;
    return 2;
  }
  return 0;
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
