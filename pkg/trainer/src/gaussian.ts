/** Synthetic isotropic-Gaussian image data for trainer sanity checks. */

import { ImageSet } from "./idx.js";
import { Rng } from "./rng.js";

/** count draws from N(mean, std^2 I), one image per draw. */
export function gaussianSet(count: number, mean: Float64Array, std: number, rng: Rng): ImageSet {
  const hw = mean.length;
  const side = Math.round(Math.sqrt(hw));
  const pixels = new Float64Array(count * hw);
  for (let n = 0; n < count; n++) {
    for (let i = 0; i < hw; i++) {
      pixels[n * hw + i] = mean[i] + std * rng.gaussian();
    }
  }
  return { count, side, pixels };
}
