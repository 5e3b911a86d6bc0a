/** CLI entry: train on a stream (or pair directory) and write artifacts.
 *
 *   node dist/run_train.js --stream train.svp --val val.svp --steps 400 \
 *        --classes 5 --out out/
 *
 * The optimizer (Adam) and learning rate are this demo's own choices; the
 * architecture rules (two ELU convolutions per level, batch-norm before each
 * resolution change, feature doubling/halving, softmax head, soft-Dice loss)
 * are fixed.
 */

import { mkdirSync } from "node:fs";
import { join } from "node:path";

import { DEFAULTS, TrainerConfig } from "./config.js";
import { saveCheckpoint, train, writeMetricsCsv } from "./train.js";

function parseArgs(argv: string[]): Record<string, string> {
  const out: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--")) throw new Error(`unexpected argument ${argv[i]}`);
    out[argv[i].slice(2)] = argv[i + 1];
  }
  return out;
}

async function main() {
  const args = parseArgs(process.argv.slice(2));
  const cfg: TrainerConfig = {
    ...DEFAULTS,
    numClasses: Number(args["classes"] ?? 0),
    streamPath: args["stream"],
    pairDir: args["pairs"],
    validationPath: args["val"],
    steps: Number(args["steps"] ?? DEFAULTS.steps),
    batchSize: Number(args["batch"] ?? DEFAULTS.batchSize),
    baseFeatures: Number(args["base"] ?? DEFAULTS.baseFeatures),
    levels: Number(args["levels"] ?? DEFAULTS.levels),
    learningRate: Number(args["lr"] ?? DEFAULTS.learningRate),
    seed: Number(args["seed"] ?? DEFAULTS.seed),
  };
  const outDir = args["out"] ?? "train_out";
  mkdirSync(outDir, { recursive: true });

  const result = await train(cfg, {
    onStep: (row) => {
      if (row.step % 10 === 0 || row.valDice !== undefined) {
        const val = row.valDice !== undefined ? `  val Dice ${row.valDice.toFixed(4)}` : "";
        console.log(`step ${row.step}  loss ${row.loss.toFixed(4)}${val}`);
      }
    },
  });
  writeMetricsCsv(result.log, join(outDir, "metrics.csv"));
  saveCheckpoint(result, join(outDir, "checkpoint.json"));
  console.log(`done: final loss ${result.finalLoss.toFixed(4)}` +
    (result.finalValDice !== undefined ? `, val Dice ${result.finalValDice.toFixed(4)}` : ""));
}

main().catch((e) => {
  console.error(`train: ${e.message}`);
  process.exit(1);
});
