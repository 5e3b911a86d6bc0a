/** Turn streamed volumes into 2-D training samples: axial slices, label
 * remapping to dense class indices, one-hot targets, batch assembly. */

import { readdirSync } from "node:fs";
import { join } from "node:path";

import { readNifti } from "./nifti.js";
import { PairRecord } from "./stream.js";
import { Rng, Tensor, zeros } from "./tensor.js";

export interface Sample {
  /** H*W intensities in [0, 1]; H = nx, W = ny of the source volume. */
  image: Float32Array;
  /** H*W original label ids. */
  labels: Int32Array;
  height: number;
  width: number;
}

/** Relative axial positions sampled from each volume. */
export const SLICE_FRACTIONS = [0.35, 0.5, 0.65];

export function axialSlice(
  dims: [number, number, number], volume: ArrayLike<number>, z: number,
): Float32Array {
  const [nx, ny] = dims;
  const out = new Float32Array(nx * ny);
  const planeBase = nx * ny * z;
  for (let i = 0; i < nx * ny; i++) out[i] = volume[planeBase + i];
  return out;
}

/** Standardize a slice in place to zero mean, unit variance. Volumes arrive
 * min-max normalized as wholes; per-slice standardization gives the network
 * a consistent input scale regardless of which part of the range a slice
 * happens to span. */
export function standardize(x: Float32Array): Float32Array {
  let mean = 0;
  for (const v of x) mean += v;
  mean /= x.length;
  let varAcc = 0;
  for (const v of x) varAcc += (v - mean) * (v - mean);
  const inv = 1 / Math.sqrt(varAcc / x.length + 1e-8);
  for (let i = 0; i < x.length; i++) x[i] = (x[i] - mean) * inv;
  return x;
}

export function samplesFromRecord(
  rec: { dims: [number, number, number]; image: ArrayLike<number>; target: ArrayLike<number> },
  fractions: number[] = SLICE_FRACTIONS,
): Sample[] {
  const [nx, ny, nz] = rec.dims;
  return fractions.map((f) => {
    const z = Math.min(nz - 1, Math.round(f * (nz - 1)));
    return {
      image: standardize(axialSlice(rec.dims, rec.image, z)),
      labels: Int32Array.from(axialSlice(rec.dims, rec.target, z)),
      height: nx,
      width: ny,
    };
  });
}

export function samplesFromPairDir(dir: string, fractions: number[] = SLICE_FRACTIONS): Sample[] {
  const images = readdirSync(dir).filter((f) => /_image\.nii(\.gz)?$/.test(f)).sort();
  if (images.length === 0) throw new Error(`no pair images found in ${dir}`);
  const out: Sample[] = [];
  for (const img of images) {
    const lab = img.replace("_image.nii", "_labels.nii");
    const image = readNifti(join(dir, img));
    const labels = readNifti(join(dir, lab));
    out.push(...samplesFromRecord(
      { dims: image.dims, image: image.data, target: labels.data }, fractions,
    ));
  }
  return out;
}

/** Sorted label ids present anywhere in the samples (class ordering). */
export function labelUniverse(samples: Sample[]): number[] {
  const seen = new Set<number>();
  for (const s of samples) for (const v of s.labels) seen.add(v);
  return [...seen].sort((a, b) => a - b);
}

/** xs [B,H,W,1], one-hot ys [B,H,W,K], class-index targets per sample. */
export function makeBatch(
  samples: Sample[], indices: number[], labelIds: number[],
): { xs: Tensor; ys: Tensor; classIdx: Int32Array[] } {
  const b = indices.length;
  const { height: h, width: w } = samples[indices[0]];
  const k = labelIds.length;
  const classOf = new Map(labelIds.map((id, i) => [id, i]));
  const xs = zeros([b, h, w, 1]);
  const ys = zeros([b, h, w, k]);
  const classIdx: Int32Array[] = [];
  for (let bi = 0; bi < b; bi++) {
    const s = samples[indices[bi]];
    xs.data.set(s.image, bi * h * w);
    const ci = new Int32Array(h * w);
    for (let i = 0; i < h * w; i++) {
      const cls = classOf.get(s.labels[i]);
      if (cls === undefined) {
        throw new Error(`label ${s.labels[i]} not in the training universe`);
      }
      ci[i] = cls;
      ys.data[(bi * h * w + i) * k + cls] = 1;
    }
    classIdx.push(ci);
  }
  return { xs, ys, classIdx };
}

/** Endless deterministic index sampler: reshuffles each epoch. */
export class EpochSampler {
  private order: number[] = [];
  private pos = 0;
  private rng: Rng;

  constructor(private n: number, seed: number) {
    this.rng = new Rng(seed);
  }

  nextBatch(size: number): number[] {
    const out: number[] = [];
    while (out.length < size) {
      if (this.pos >= this.order.length) {
        this.order = this.rng.shuffle(Array.from({ length: this.n }, (_, i) => i));
        this.pos = 0;
      }
      out.push(this.order[this.pos++]);
    }
    return out;
  }
}

/** Minimum pairwise gap of the drawn class means vs 3 sigma-max style rules;
 * used to pick well-separated validation contrasts from a stream. */
export function contrastSeparation(params: Record<string, unknown>): number {
  const gmm = params["gmm"] as Record<string, [number, number]> | undefined;
  if (!gmm) return 0;
  const entries = Object.values(gmm);
  const means = entries.map((e) => e[0]).sort((a, b) => a - b);
  const maxStd = Math.max(...entries.map((e) => e[1]));
  let minGap = Infinity;
  for (let i = 1; i < means.length; i++) minGap = Math.min(minGap, means[i] - means[i - 1]);
  return minGap / Math.max(maxStd, 1e-9);
}
