/** Soft Dice loss (squared-denominator variant) over class probabilities.
 *
 * Per class k, with sums over every voxel of the batch:
 *   dice_k = (2 * sum(p*t) + eps) / (sum(p^2) + sum(t^2) + eps)
 * and the loss is 1 - mean_k dice_k. The same formula drives the training
 * gradient and the scalar metric, matching the generator side's evaluation
 * convention (eps = 1e-6).
 */

import { Tensor, zeros } from "./tensor.js";

export const DICE_EPS = 1e-6;

export interface DiceLoss {
  value: number;
  /** d(loss)/d(probs), same shape as the probabilities. */
  grad: Tensor;
}

export function softDiceLoss(probs: Tensor, targetOneHot: Tensor): DiceLoss {
  const shape = probs.shape;
  const k = shape[shape.length - 1];
  if (targetOneHot.shape[targetOneHot.shape.length - 1] !== k) {
    throw new Error(
      `channel mismatch: ${k} prediction channels vs ` +
      `${targetOneHot.shape[targetOneHot.shape.length - 1]} target channels`,
    );
  }
  const p = probs.data;
  const t = targetOneHot.data;
  if (p.length !== t.length) throw new Error("probs/target size mismatch");
  const n = p.length / k;

  const inter = new Float64Array(k);
  const psq = new Float64Array(k);
  const tsq = new Float64Array(k);
  for (let i = 0; i < n; i++) {
    const base = i * k;
    for (let j = 0; j < k; j++) {
      const pv = p[base + j];
      const tv = t[base + j];
      inter[j] += pv * tv;
      psq[j] += pv * pv;
      tsq[j] += tv * tv;
    }
  }
  const dice = new Float64Array(k);
  const denom = new Float64Array(k);
  let mean = 0;
  for (let j = 0; j < k; j++) {
    denom[j] = psq[j] + tsq[j] + DICE_EPS;
    dice[j] = (2 * inter[j] + DICE_EPS) / denom[j];
    mean += dice[j];
  }
  mean /= k;

  // d(dice_k)/d(p_jk) = (2 t - 2 dice_k p) / denom_k
  const grad = zeros(shape);
  const g = grad.data;
  for (let i = 0; i < n; i++) {
    const base = i * k;
    for (let j = 0; j < k; j++) {
      g[base + j] = (-2 / k) * (t[base + j] - dice[j] * p[base + j]) / denom[j];
    }
  }
  return { value: 1 - mean, grad };
}

/** Float64 reference of loss(logits) = softDice(softmax(logits), target);
 * used by the finite-difference gradient check. */
export function softDiceFromLogitsRef(
  logits: Float64Array, targetOneHot: Float64Array, k: number,
): number {
  const n = logits.length / k;
  const inter = new Float64Array(k);
  const psq = new Float64Array(k);
  const tsq = new Float64Array(k);
  for (let i = 0; i < n; i++) {
    const base = i * k;
    let top = -Infinity;
    for (let j = 0; j < k; j++) top = Math.max(top, logits[base + j]);
    let sum = 0;
    const e = new Float64Array(k);
    for (let j = 0; j < k; j++) {
      e[j] = Math.exp(logits[base + j] - top);
      sum += e[j];
    }
    for (let j = 0; j < k; j++) {
      const pv = e[j] / sum;
      const tv = targetOneHot[base + j];
      inter[j] += pv * tv;
      psq[j] += pv * pv;
      tsq[j] += tv * tv;
    }
  }
  let mean = 0;
  for (let j = 0; j < k; j++) {
    mean += (2 * inter[j] + DICE_EPS) / (psq[j] + tsq[j] + DICE_EPS);
  }
  return 1 - mean / k;
}

/** Hard Dice between two label slices for one label id; 1 when absent in both. */
export function hardDice(a: Int32Array, b: Int32Array, label: number): number {
  let na = 0;
  let nb = 0;
  let both = 0;
  for (let i = 0; i < a.length; i++) {
    const ina = a[i] === label;
    const inb = b[i] === label;
    if (ina) na++;
    if (inb) nb++;
    if (ina && inb) both++;
  }
  if (na + nb === 0) return 1;
  return (2 * both) / (na + nb);
}
