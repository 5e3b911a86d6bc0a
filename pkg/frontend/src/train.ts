/** Training loop: soft-Dice loss over streamed pair slices, periodic
 * validation Dice on held-out contrasts, CSV metrics log, JSON checkpoints. */

import { readFileSync, writeFileSync } from "node:fs";

import { Adam } from "./adam.js";
import { TrainerConfig } from "./config.js";
import {
  EpochSampler,
  Sample,
  contrastSeparation,
  labelUniverse,
  makeBatch,
  samplesFromPairDir,
  samplesFromRecord,
} from "./data.js";
import { hardDice, softDiceLoss } from "./loss.js";
import { predictSlice } from "./predict.js";
import { readRecordFile } from "./stream.js";
import { UNet2d } from "./unet.js";

export interface MetricsRow {
  step: number;
  loss: number;
  valDice?: number;
}

export interface TrainResult {
  model: UNet2d;
  labelIds: number[];
  log: MetricsRow[];
  finalLoss: number;
  finalValDice?: number;
}

export async function loadStreamSamples(
  path: string,
  opts: { minSeparation?: number; maxSamples?: number } = {},
): Promise<Sample[]> {
  const out: Sample[] = [];
  for await (const rec of readRecordFile(path)) {
    if (opts.minSeparation !== undefined && contrastSeparation(rec.params) < opts.minSeparation) {
      continue;
    }
    out.push(...samplesFromRecord(rec));
    if (opts.maxSamples !== undefined && out.length >= opts.maxSamples) break;
  }
  return out;
}

export async function loadTrainingSamples(cfg: TrainerConfig): Promise<Sample[]> {
  if (cfg.streamPath) return loadStreamSamples(cfg.streamPath);
  if (cfg.pairDir) return samplesFromPairDir(cfg.pairDir);
  throw new Error("config needs streamPath or pairDir");
}

/** Mean over samples of the mean non-background per-label Dice. */
export function validationDice(model: UNet2d, samples: Sample[], labelIds: number[]): number {
  let total = 0;
  for (const s of samples) {
    const pred = predictSlice(model, s, labelIds);
    const present = new Set<number>();
    for (const v of s.labels) present.add(v);
    for (const v of pred.labels) present.add(v);
    present.delete(0);
    const scores = [...present].map((k) => hardDice(pred.labels, s.labels, k));
    total += scores.length > 0 ? scores.reduce((a, b) => a + b, 0) / scores.length : 1;
  }
  return total / samples.length;
}

export interface TrainOptions {
  validationSamples?: Sample[];
  onStep?: (row: MetricsRow) => void;
}

export function trainOnSamples(
  cfg: TrainerConfig, samples: Sample[], opts: TrainOptions = {},
): TrainResult {
  if (samples.length === 0) {
    throw new Error("cannot infer the class count: no training samples before the first batch");
  }
  const labelIds = labelUniverse(samples);
  if (cfg.numClasses !== labelIds.length) {
    throw new Error(
      `config says ${cfg.numClasses} classes but the data carries ${labelIds.length}`,
    );
  }
  const model = new UNet2d(cfg);
  const optimizer = new Adam(cfg.learningRate);
  const sampler = new EpochSampler(samples.length, cfg.seed + 0xba7c);
  const log: MetricsRow[] = [];
  let lastLoss = NaN;
  let lastVal: number | undefined;

  for (let step = 1; step <= cfg.steps; step++) {
    const batch = sampler.nextBatch(Math.min(cfg.batchSize, samples.length));
    const { xs, ys } = makeBatch(samples, batch, labelIds);
    const probs = model.forward(xs, true);
    const { value, grad } = softDiceLoss(probs, ys);
    model.backward(grad);
    optimizer.step(model.params());
    model.zeroGrads();
    lastLoss = value;

    const row: MetricsRow = { step, loss: value };
    if (
      opts.validationSamples &&
      (step % cfg.evalEvery === 0 || step === cfg.steps)
    ) {
      lastVal = validationDice(model, opts.validationSamples, labelIds);
      row.valDice = lastVal;
    }
    log.push(row);
    opts.onStep?.(row);
  }
  return { model, labelIds, log, finalLoss: lastLoss, finalValDice: lastVal };
}

export async function train(cfg: TrainerConfig, opts: TrainOptions = {}): Promise<TrainResult> {
  const samples = await loadTrainingSamples(cfg);
  let validationSamples = opts.validationSamples;
  if (!validationSamples && cfg.validationPath) {
    validationSamples = await loadStreamSamples(cfg.validationPath);
  }
  return trainOnSamples(cfg, samples, { ...opts, validationSamples });
}

export function writeMetricsCsv(log: MetricsRow[], path: string): void {
  const lines = ["step,loss,val_dice"];
  for (const row of log) {
    lines.push(`${row.step},${row.loss.toFixed(6)},${row.valDice?.toFixed(6) ?? ""}`);
  }
  writeFileSync(path, lines.join("\n") + "\n");
}

export function saveCheckpoint(result: TrainResult, path: string): void {
  const tensors = result.model.params().map((p) => ({
    name: p.name,
    shape: p.value.shape,
    data: Buffer.from(
      p.value.data.buffer, p.value.data.byteOffset, p.value.data.byteLength,
    ).toString("base64"),
  }));
  const bn = result.model.batchNorms().map((b) => ({
    mean: [...b.runningMean],
    variance: [...b.runningVar],
  }));
  writeFileSync(path, JSON.stringify({
    config: result.model.cfg,
    labelIds: result.labelIds,
    tensors,
    batchNorms: bn,
  }));
}

export function loadCheckpoint(path: string): { model: UNet2d; labelIds: number[] } {
  const raw = JSON.parse(readFileSync(path, "utf-8"));
  const model = new UNet2d(raw.config);
  const params = model.params();
  if (params.length !== raw.tensors.length) {
    throw new Error("checkpoint does not match the model architecture");
  }
  for (let i = 0; i < params.length; i++) {
    const t = raw.tensors[i];
    if (params[i].name !== t.name) throw new Error(`parameter order mismatch at ${t.name}`);
    const buf = Buffer.from(t.data, "base64");
    params[i].value.data.set(new Float32Array(buf.buffer, buf.byteOffset, buf.byteLength / 4));
  }
  model.batchNorms().forEach((b, i) => {
    b.runningMean.set(raw.batchNorms[i].mean);
    b.runningVar.set(raw.batchNorms[i].variance);
  });
  return { model, labelIds: raw.labelIds };
}
