/** Trainer configuration and defaults (toy-scale 2-D slice mode). */

export interface TrainerConfig {
  /** U-Net depth; the full-scale reference uses 5, toy scale uses 3. */
  levels: number;
  /** Feature maps in the first level; doubled after each pooling. */
  baseFeatures: number;
  /** Square slice edge length (input spatial dims). */
  sliceSize: number;
  /** Number of segmentation classes, background included. */
  numClasses: number;
  batchSize: number;
  learningRate: number;
  steps: number;
  /** SVP1 record file (training source). */
  streamPath?: string;
  /** Directory of generated image/label NIfTI pairs (alternative source). */
  pairDir?: string;
  /** SVP1 record file for held-out validation pairs. */
  validationPath?: string;
  /** Validate (and log) every this many steps. */
  evalEvery: number;
  seed: number;
}

export const DEFAULTS: Omit<TrainerConfig, "numClasses"> = {
  levels: 3,
  baseFeatures: 24,
  sliceSize: 32,
  batchSize: 8,
  learningRate: 1e-3,
  steps: 400,
  evalEvery: 50,
  seed: 0,
};

export function validateConfig(cfg: TrainerConfig): void {
  if (cfg.levels < 2) throw new Error(`levels must be >= 2, got ${cfg.levels}`);
  if (cfg.baseFeatures < 4) {
    throw new Error(`baseFeatures must be >= 4, got ${cfg.baseFeatures}`);
  }
  if (!Number.isInteger(cfg.numClasses) || cfg.numClasses < 2) {
    throw new Error(
      `numClasses must be known (>= 2) before building the model, got ${cfg.numClasses}`,
    );
  }
  const down = 1 << (cfg.levels - 1);
  if (cfg.sliceSize % down !== 0) {
    throw new Error(`sliceSize ${cfg.sliceSize} not divisible by 2^(levels-1) = ${down}`);
  }
}
