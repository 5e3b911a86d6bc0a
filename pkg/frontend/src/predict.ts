/** Inference: class probabilities plus an argmax label slice. Ties are broken
 * toward the lowest label id (class ids are sorted label ids, and argmax
 * keeps the first maximum). */

import { Sample } from "./data.js";
import { Tensor, tensorFrom } from "./tensor.js";
import { UNet2d } from "./unet.js";

export interface Prediction {
  /** [H, W, K] class probabilities. */
  probs: Tensor;
  /** H*W predicted label ids. */
  labels: Int32Array;
}

export function predictSlice(model: UNet2d, sample: Sample, labelIds: number[]): Prediction {
  const { height: h, width: w } = sample;
  const x = tensorFrom(sample.image, [1, h, w, 1]);
  const probs = model.forward(x, false);
  const k = labelIds.length;
  const labels = new Int32Array(h * w);
  const p = probs.data;
  for (let i = 0; i < h * w; i++) {
    let best = -Infinity;
    let arg = 0;
    for (let j = 0; j < k; j++) {
      const v = p[i * k + j];
      if (v > best) {
        best = v;
        arg = j;
      }
    }
    labels[i] = labelIds[arg];
  }
  return { probs: { data: probs.data, shape: [h, w, k] }, labels };
}
