/** Test fixtures produced through the generator CLI: phantom label maps and
 * binary pair streams. Everything is seeded, so fixtures are stable across
 * runs; generation happens once per vitest invocation (globalSetup). */

import { execFileSync } from "node:child_process";
import { existsSync, mkdirSync, readdirSync, rmSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

export const FIXTURE_DIR = fileURLToPath(new URL("./.fixtures", import.meta.url));
export const MAPS_DIR = join(FIXTURE_DIR, "maps");
export const TRAIN_STREAM = join(FIXTURE_DIR, "train.svp");
export const VAL_STREAM = join(FIXTURE_DIR, "val.svp");
export const TINY_STREAM = join(FIXTURE_DIR, "tiny.svp");
export const SINGLE_STREAM = join(FIXTURE_DIR, "single.svp");
export const PAIR_DIR = join(FIXTURE_DIR, "pairs");

const PYTHON = process.env.SYNTHMRI_PYTHON ?? "python3";
const REPO_ROOT = fileURLToPath(new URL("../..", import.meta.url));

function cli(args: string[], stdoutFile?: string): void {
  const out = execFileSync(PYTHON, ["-m", "synthmri.cli", ...args], {
    maxBuffer: 1 << 30,
  });
  if (stdoutFile) writeFileSync(stdoutFile, out);
}

export function trainMapFiles(): string[] {
  return readdirSync(MAPS_DIR)
    .filter((f) => f.endsWith(".nii.gz"))
    .sort()
    .slice(0, 10)
    .map((f) => join(MAPS_DIR, f));
}

export function heldOutMapFiles(): string[] {
  return readdirSync(MAPS_DIR)
    .filter((f) => f.endsWith(".nii.gz"))
    .sort()
    .slice(10)
    .map((f) => join(MAPS_DIR, f));
}

export function generateFixtures(): void {
  if (existsSync(join(FIXTURE_DIR, ".complete"))) return;
  rmSync(FIXTURE_DIR, { recursive: true, force: true });
  mkdirSync(FIXTURE_DIR, { recursive: true });

  // 12 phantom maps; the first 10 train, the last 2 are held out.
  execFileSync(PYTHON, [
    join(REPO_ROOT, "scripts", "make_demo_maps.py"),
    "--out", MAPS_DIR, "--count", "12", "--size", "32", "--labels", "5",
  ], { stdio: "inherit" });

  const valCfg = join(FIXTURE_DIR, "val_cfg.json");
  writeFileSync(valCfg, JSON.stringify({ a_sigma: 5.0, b_sigma: 10.0 }));

  cli(["stream", "--maps", ...trainMapFiles(), "--count", "80", "--seed", "100",
       "--stdout"], TRAIN_STREAM);
  cli(["stream", "--maps", ...heldOutMapFiles(), "--config", valCfg, "--count", "60",
       "--seed", "999", "--stdout"], VAL_STREAM);
  cli(["stream", "--maps", trainMapFiles()[0], "--count", "3", "--seed", "7",
       "--stdout"], TINY_STREAM);
  cli(["stream", "--maps", trainMapFiles()[0], "--count", "1", "--seed", "11",
       "--stdout"], SINGLE_STREAM);
  cli(["generate", "--maps", trainMapFiles()[0], "--count", "3", "--seed", "7",
       "--out", PAIR_DIR]);

  writeFileSync(join(FIXTURE_DIR, ".complete"), "ok\n");
}
