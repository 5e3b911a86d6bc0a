/** Flat float32 tensors with explicit shapes, plus a seeded PRNG. */

export interface Tensor {
  data: Float32Array;
  shape: number[];
}

export function numel(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function zeros(shape: number[]): Tensor {
  return { data: new Float32Array(numel(shape)), shape: [...shape] };
}

export function tensorFrom(data: ArrayLike<number>, shape: number[]): Tensor {
  if (data.length !== numel(shape)) {
    throw new Error(`data length ${data.length} does not match shape ${shape}`);
  }
  return { data: Float32Array.from(data), shape: [...shape] };
}

export function clone(t: Tensor): Tensor {
  return { data: t.data.slice(), shape: [...t.shape] };
}

export function assertShape(t: Tensor, shape: number[], what: string): void {
  if (t.shape.length !== shape.length || t.shape.some((s, i) => s !== shape[i])) {
    throw new Error(`${what}: expected shape ${shape}, got ${t.shape}`);
  }
}

/** mulberry32: small, fast, deterministic PRNG for init and shuffling. */
export class Rng {
  private state: number;

  constructor(seed: number) {
    this.state = seed >>> 0;
  }

  next(): number {
    this.state = (this.state + 0x6d2b79f5) >>> 0;
    let t = this.state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  }

  /** Standard normal via Box-Muller. */
  normal(): number {
    let u = 0;
    while (u === 0) u = this.next();
    const v = this.next();
    return Math.sqrt(-2.0 * Math.log(u)) * Math.cos(2.0 * Math.PI * v);
  }

  int(n: number): number {
    return Math.floor(this.next() * n);
  }

  shuffle<T>(arr: T[]): T[] {
    for (let i = arr.length - 1; i > 0; i--) {
      const j = this.int(i + 1);
      [arr[i], arr[j]] = [arr[j], arr[i]];
    }
    return arr;
  }
}

/** He-normal initialization for a conv kernel [kh, kw, cin, cout]. */
export function heNormal(shape: number[], rng: Rng): Tensor {
  const t = zeros(shape);
  const fanIn = shape.length === 4 ? shape[0] * shape[1] * shape[2] : shape[0];
  const std = Math.sqrt(2.0 / fanIn);
  for (let i = 0; i < t.data.length; i++) t.data[i] = rng.normal() * std;
  return t;
}
