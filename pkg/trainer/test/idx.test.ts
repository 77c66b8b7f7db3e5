import fs from "node:fs";
import os from "node:os";
import path from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import {
  FormatError,
  parseIdxImages,
  parseIdxLabels,
  readIdxImages,
  writeIdxImages,
} from "../src/idx.js";
import { Rng } from "../src/rng.js";

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "idx-"));
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));

function imageBuffer(count: number, side: number, fill: (i: number) => number): Buffer {
  const head = Buffer.alloc(16);
  head.writeUInt32BE(0x803, 0);
  head.writeUInt32BE(count, 4);
  head.writeUInt32BE(side, 8);
  head.writeUInt32BE(side, 12);
  const body = Buffer.alloc(count * side * side);
  for (let i = 0; i < body.length; i++) body[i] = fill(i);
  return Buffer.concat([head, body]);
}

describe("idx parsing", () => {
  it("decodes a rank-3 image file into [0,1] pixels", () => {
    const buf = imageBuffer(2, 3, (i) => i * 10);
    const set = parseIdxImages(buf);
    expect(set.count).toBe(2);
    expect(set.side).toBe(3);
    expect(set.pixels[0]).toBe(0);
    expect(set.pixels[17]).toBeCloseTo(170 / 255, 12);
  });

  it("decodes a rank-1 label file", () => {
    const buf = Buffer.concat([
      Buffer.from([0, 0, 8, 1, 0, 0, 0, 4]),
      Buffer.from([3, 1, 4, 1]),
    ]);
    expect([...parseIdxLabels(buf)]).toEqual([3, 1, 4, 1]);
  });

  it("rejects wrong dtype, wrong rank, truncation and non-square images", () => {
    const good = imageBuffer(1, 4, () => 7);
    const wrongDtype = Buffer.from(good);
    wrongDtype[2] = 0x0d;
    expect(() => parseIdxImages(wrongDtype)).toThrow(FormatError);

    const wrongRank = Buffer.from(good);
    wrongRank[3] = 2;
    expect(() => parseIdxImages(wrongRank)).toThrow(FormatError);

    expect(() => parseIdxImages(good.subarray(0, good.length - 1))).toThrow(/payload/);

    const rect = Buffer.from(good);
    rect.writeUInt32BE(2, 8);
    rect.writeUInt32BE(8, 12);
    expect(() => parseIdxImages(rect)).toThrow(/square/);

    expect(() => parseIdxLabels(good)).toThrow(/rank-1/);
  });

  it("round-trips pixels through write and read within quantization", () => {
    const rng = new Rng(3);
    const side = 5;
    const pixels = new Float64Array(4 * side * side);
    for (let i = 0; i < pixels.length; i++) pixels[i] = rng.next();
    const file = path.join(tmp, "round.idx");
    writeIdxImages({ count: 4, side, pixels }, file);
    const back = readIdxImages(file);
    expect(back.count).toBe(4);
    expect(back.side).toBe(side);
    let worst = 0;
    for (let i = 0; i < pixels.length; i++) {
      worst = Math.max(worst, Math.abs(back.pixels[i] - pixels[i]));
    }
    expect(worst).toBeLessThanOrEqual(0.5 / 255 + 1e-12);
  });
});
