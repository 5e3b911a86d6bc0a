import { describe, expect, it } from "vitest";

import { TrainerConfig, validateConfig } from "../src/config.js";
import { Rng, zeros } from "../src/tensor.js";
import { UNet2d } from "../src/unet.js";

function cfg(overrides: Partial<TrainerConfig> = {}): TrainerConfig {
  return {
    levels: 3,
    baseFeatures: 24,
    sliceSize: 32,
    numClasses: 4,
    batchSize: 2,
    learningRate: 1e-3,
    steps: 1,
    evalEvery: 10,
    seed: 0,
    ...overrides,
  };
}

function randomInput(b: number, s: number, seed = 1) {
  const x = zeros([b, s, s, 1]);
  const rng = new Rng(seed);
  for (let i = 0; i < x.data.length; i++) x.data[i] = rng.normal();
  return x;
}

describe("architecture", () => {
  it("doubles encoder features per level from the base width", () => {
    const model = new UNet2d(cfg({ baseFeatures: 24, levels: 3 }));
    expect(model.encoderWidths).toEqual([24, 48, 96]);
  });

  it("preserves spatial shape and emits one channel per class", () => {
    const model = new UNet2d(cfg());
    const out = model.forward(randomInput(1, 32), false);
    expect(out.shape).toEqual([1, 32, 32, 4]);
  });

  it("softmax output sums to one at every pixel", () => {
    const model = new UNet2d(cfg({ numClasses: 5 }));
    const out = model.forward(randomInput(2, 32), true);
    for (let i = 0; i < 2 * 32 * 32; i++) {
      let sum = 0;
      for (let j = 0; j < 5; j++) sum += out.data[i * 5 + j];
      expect(Math.abs(sum - 1)).toBeLessThan(1e-5);
    }
  });

  it("forward pass is finite for random input", () => {
    const model = new UNet2d(cfg());
    const out = model.forward(randomInput(1, 32, 9), true);
    for (const v of out.data) expect(Number.isFinite(v)).toBe(true);
  });

  it("starts as an exactly uniform softmax (zero-initialized head)", () => {
    const model = new UNet2d(cfg({ numClasses: 4 }));
    const out = model.forward(randomInput(1, 32, 2), false);
    for (const v of out.data) expect(v).toBeCloseTo(0.25, 6);
  });

  it("is deterministic in the seed", () => {
    const a = new UNet2d(cfg({ seed: 7 }));
    const b = new UNet2d(cfg({ seed: 7 }));
    const pa = a.params();
    const pb = b.params();
    for (let i = 0; i < pa.length; i++) {
      expect(pa[i].value.data).toEqual(pb[i].value.data);
    }
    const x = randomInput(1, 32, 3);
    expect(a.forward(x, false).data).toEqual(b.forward(x, false).data);
  });
});

describe("config validation", () => {
  it("rejects too few levels", () => {
    expect(() => validateConfig(cfg({ levels: 1 }))).toThrow(/levels/);
  });

  it("rejects too few features", () => {
    expect(() => validateConfig(cfg({ baseFeatures: 2 }))).toThrow(/baseFeatures/);
  });

  it("rejects an unknown class count", () => {
    expect(() => validateConfig(cfg({ numClasses: 0 }))).toThrow(/numClasses/);
  });

  it("rejects a slice size the pooling cannot divide", () => {
    expect(() => validateConfig(cfg({ sliceSize: 36, levels: 4 }))).toThrow(/divisible/);
  });
});
