import { describe, expect, it } from "vitest";

import { Softmax } from "../src/layers.js";
import { DICE_EPS, hardDice, softDiceFromLogitsRef, softDiceLoss } from "../src/loss.js";
import { Rng, tensorFrom, zeros } from "../src/tensor.js";

function oneHotTarget(classes: Int32Array, k: number, shape: number[]) {
  const t = zeros([...shape, k]);
  for (let i = 0; i < classes.length; i++) t.data[i * k + classes[i]] = 1;
  return t;
}

describe("soft dice values", () => {
  it("is ~zero for an exact one-hot prediction", () => {
    const rng = new Rng(0);
    const classes = Int32Array.from({ length: 64 }, () => rng.int(3));
    const target = oneHotTarget(classes, 3, [1, 8, 8]);
    const { value } = softDiceLoss(target, target);
    expect(value).toBeLessThan(1e-6);
  });

  it("matches the closed form for a uniform prediction on a single-label target", () => {
    // K = 2, all voxels labeled class 1, prediction 0.5 everywhere:
    // present class: (2 * J/2 + eps) / (J/4 + J + eps) = 0.8
    // absent class:  eps / (J/4 + eps) ~= 0
    const j = 64;
    const classes = new Int32Array(j).fill(1);
    const target = oneHotTarget(classes, 2, [1, 8, 8]);
    const pred = zeros([1, 8, 8, 2]);
    pred.data.fill(0.5);
    const { value } = softDiceLoss(pred, target);
    const present = (2 * (j / 2) + DICE_EPS) / (j / 4 + j + DICE_EPS);
    const absent = DICE_EPS / (j / 4 + DICE_EPS);
    expect(value).toBeCloseTo(1 - (present + absent) / 2, 10);
    expect(value).toBeCloseTo(0.6, 4);
  });

  it("reduces to hard Dice on a binarized prediction", () => {
    const rng = new Rng(5);
    const truth = Int32Array.from({ length: 256 }, () => rng.int(4));
    const noisy = truth.map((v) => (rng.next() < 0.2 ? rng.int(4) : v));
    const k = 4;
    const target = oneHotTarget(truth, k, [1, 16, 16]);
    const pred = oneHotTarget(Int32Array.from(noisy), k, [1, 16, 16]);
    const { value } = softDiceLoss(pred, target);
    let mean = 0;
    for (let c = 0; c < k; c++) mean += hardDice(Int32Array.from(noisy), truth, c);
    expect(value).toBeCloseTo(1 - mean / k, 6);
  });

  it("lies in [0, 1] and rejects channel mismatches", () => {
    const rng = new Rng(2);
    const classes = Int32Array.from({ length: 64 }, () => rng.int(3));
    const target = oneHotTarget(classes, 3, [1, 8, 8]);
    const raw = zeros([1, 8, 8, 3]);
    for (let i = 0; i < 64; i++) {
      let sum = 0;
      const vals = [rng.next(), rng.next(), rng.next()];
      for (const v of vals) sum += v;
      for (let c = 0; c < 3; c++) raw.data[i * 3 + c] = vals[c] / sum;
    }
    const { value } = softDiceLoss(raw, target);
    expect(value).toBeGreaterThanOrEqual(0);
    expect(value).toBeLessThanOrEqual(1);
    const bad = zeros([1, 8, 8, 2]);
    expect(() => softDiceLoss(bad, target)).toThrow(/channel mismatch/);
  });
});

describe("gradient of soft dice through softmax", () => {
  it("matches float64 central differences within 1e-3 relative error", () => {
    const h = 4;
    const w = 4;
    const k = 3;
    const n = h * w;
    const rng = new Rng(11);
    const logits = zeros([1, h, w, k]);
    for (let i = 0; i < logits.data.length; i++) logits.data[i] = rng.normal() * 0.8;
    const classes = Int32Array.from({ length: n }, () => rng.int(k));
    const target = oneHotTarget(classes, k, [1, h, w]);

    // Analytic: loss grad wrt probabilities, then back through softmax.
    const softmax = new Softmax();
    const probs = softmax.forward(logits);
    const { grad } = softDiceLoss(probs, target);
    const analytic = softmax.backward(grad);

    // Reference: float64 finite differences of the float64 loss.
    const base = Float64Array.from(logits.data);
    const t64 = Float64Array.from(target.data);
    const step = 1e-5;
    let maxAbs = 0;
    for (const v of analytic.data) maxAbs = Math.max(maxAbs, Math.abs(v));
    let worst = 0;
    for (let i = 0; i < base.length; i++) {
      const keep = base[i];
      base[i] = keep + step;
      const up = softDiceFromLogitsRef(base, t64, k);
      base[i] = keep - step;
      const down = softDiceFromLogitsRef(base, t64, k);
      base[i] = keep;
      const fd = (up - down) / (2 * step);
      worst = Math.max(worst, Math.abs(fd - analytic.data[i]));
    }
    expect(worst / maxAbs).toBeLessThan(1e-3);
  });

  it("points downhill: a small step against the gradient lowers the loss", () => {
    const k = 3;
    const rng = new Rng(21);
    const logits = zeros([1, 6, 6, k]);
    for (let i = 0; i < logits.data.length; i++) logits.data[i] = rng.normal();
    const classes = Int32Array.from({ length: 36 }, () => rng.int(k));
    const target = oneHotTarget(classes, k, [1, 6, 6]);

    const softmax = new Softmax();
    const before = softDiceLoss(softmax.forward(logits), target);
    const dLogits = softmax.backward(before.grad);
    const stepped = tensorFrom(logits.data, logits.shape);
    for (let i = 0; i < stepped.data.length; i++) stepped.data[i] -= 0.1 * dLogits.data[i];
    const after = softDiceLoss(new Softmax().forward(stepped), target);
    expect(after.value).toBeLessThan(before.value);
  });
});
