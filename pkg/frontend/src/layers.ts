/** NHWC layers with explicit forward/backward, written for clarity and
 * typed-array speed. Every layer caches what its backward pass needs, so a
 * model is run as forward calls in order and backward calls in exact
 * reverse order. */

import { Rng, Tensor, heNormal, numel, zeros } from "./tensor.js";

export interface Param {
  name: string;
  value: Tensor;
  grad: Tensor;
}

function makeParam(name: string, value: Tensor): Param {
  return { name, value, grad: zeros(value.shape) };
}

/** out[n,c] = sum_p cols[n,p] * w[p,c]; k-unrolled, contiguous inner loop. */
function matmulNPC(
  cols: Float32Array, w: Float32Array, out: Float32Array,
  n: number, p: number, c: number,
): void {
  out.fill(0);
  for (let i = 0; i < n; i++) {
    const colBase = i * p;
    const outBase = i * c;
    let k = 0;
    for (; k + 3 < p; k += 4) {
      const v0 = cols[colBase + k];
      const v1 = cols[colBase + k + 1];
      const v2 = cols[colBase + k + 2];
      const v3 = cols[colBase + k + 3];
      const w0 = k * c;
      const w1 = w0 + c;
      const w2 = w1 + c;
      const w3 = w2 + c;
      for (let j = 0; j < c; j++) {
        out[outBase + j] += v0 * w[w0 + j] + v1 * w[w1 + j] + v2 * w[w2 + j] + v3 * w[w3 + j];
      }
    }
    for (; k < p; k++) {
      const v = cols[colBase + k];
      const wBase = k * c;
      for (let j = 0; j < c; j++) out[outBase + j] += v * w[wBase + j];
    }
  }
}

export class Conv2d {
  w: Param;
  b: Param;
  readonly cin: number;
  readonly cout: number;
  readonly k: number;
  private cols: Float32Array | null = null;
  private inShape: number[] = [];

  constructor(name: string, cin: number, cout: number, k: number, rng: Rng, zeroInit = false) {
    this.cin = cin;
    this.cout = cout;
    this.k = k;
    const kernel = zeroInit ? zeros([k, k, cin, cout]) : heNormal([k, k, cin, cout], rng);
    this.w = makeParam(`${name}.w`, kernel);
    this.b = makeParam(`${name}.b`, zeros([cout]));
  }

  params(): Param[] {
    return [this.w, this.b];
  }

  /** Same-padding, stride-1 convolution via im2col. x: [B,H,W,cin]. */
  forward(x: Tensor): Tensor {
    const [bs, h, w, cin] = x.shape;
    if (cin !== this.cin) throw new Error(`conv expects ${this.cin} channels, got ${cin}`);
    const k = this.k;
    const pad = (k - 1) >> 1;
    const n = bs * h * w;
    const p = k * k * cin;
    if (!this.cols || this.cols.length !== n * p) {
      this.cols = new Float32Array(n * p);
    } else {
      this.cols.fill(0);
    }
    const cols = this.cols;
    const xd = x.data;
    let idx = 0;
    for (let b = 0; b < bs; b++) {
      const bBase = b * h * w * cin;
      for (let y = 0; y < h; y++) {
        for (let xc = 0; xc < w; xc++) {
          for (let ky = 0; ky < k; ky++) {
            const sy = y + ky - pad;
            if (sy < 0 || sy >= h) { idx += k * cin; continue; }
            const rowBase = bBase + sy * w * cin;
            for (let kx = 0; kx < k; kx++) {
              const sx = xc + kx - pad;
              if (sx < 0 || sx >= w) { idx += cin; continue; }
              const src = rowBase + sx * cin;
              for (let c = 0; c < cin; c++) cols[idx++] = xd[src + c];
            }
          }
        }
      }
    }
    this.inShape = [...x.shape];
    const out = zeros([bs, h, w, this.cout]);
    matmulNPC(cols, this.w.value.data, out.data, n, p, this.cout);
    const od = out.data;
    const bd = this.b.value.data;
    for (let i = 0; i < n; i++) {
      const base = i * this.cout;
      for (let c = 0; c < this.cout; c++) od[base + c] += bd[c];
    }
    return out;
  }

  backward(gradOut: Tensor): Tensor {
    const [bs, h, w] = this.inShape;
    const cin = this.cin;
    const cout = this.cout;
    const k = this.k;
    const pad = (k - 1) >> 1;
    const n = bs * h * w;
    const p = k * k * cin;
    const cols = this.cols!;
    const gy = gradOut.data;

    // dW[p,c] += sum_n cols[n,p] * gy[n,c]; db[c] += sum_n gy[n,c]
    const dw = this.w.grad.data;
    const db = this.b.grad.data;
    for (let i = 0; i < n; i++) {
      const colBase = i * p;
      const gyBase = i * cout;
      for (let c = 0; c < cout; c++) db[c] += gy[gyBase + c];
      let kp = 0;
      for (; kp + 3 < p; kp += 4) {
        const v0 = cols[colBase + kp];
        const v1 = cols[colBase + kp + 1];
        const v2 = cols[colBase + kp + 2];
        const v3 = cols[colBase + kp + 3];
        const d0 = kp * cout;
        const d1 = d0 + cout;
        const d2 = d1 + cout;
        const d3 = d2 + cout;
        for (let c = 0; c < cout; c++) {
          const g = gy[gyBase + c];
          dw[d0 + c] += v0 * g;
          dw[d1 + c] += v1 * g;
          dw[d2 + c] += v2 * g;
          dw[d3 + c] += v3 * g;
        }
      }
      for (; kp < p; kp++) {
        const v = cols[colBase + kp];
        const dwBase = kp * cout;
        for (let c = 0; c < cout; c++) dw[dwBase + c] += v * gy[gyBase + c];
      }
    }

    // dCols[n,p] = sum_c gy[n,c] * w[p,c], then scatter back (col2im).
    const wd = this.w.value.data;
    const dx = zeros(this.inShape);
    const dxd = dx.data;
    const dcolRow = new Float32Array(p);
    let rowIdx = 0;
    for (let b = 0; b < bs; b++) {
      const bBase = b * h * w * cin;
      for (let y = 0; y < h; y++) {
        for (let xc = 0; xc < w; xc++) {
          const gyBase = rowIdx * cout;
          let kp = 0;
          for (; kp + 1 < p; kp += 2) {
            const w0 = kp * cout;
            const w1 = w0 + cout;
            let acc0 = 0;
            let acc1 = 0;
            for (let c = 0; c < cout; c++) {
              const g = gy[gyBase + c];
              acc0 += g * wd[w0 + c];
              acc1 += g * wd[w1 + c];
            }
            dcolRow[kp] = acc0;
            dcolRow[kp + 1] = acc1;
          }
          for (; kp < p; kp++) {
            const wBase = kp * cout;
            let acc = 0;
            for (let c = 0; c < cout; c++) acc += gy[gyBase + c] * wd[wBase + c];
            dcolRow[kp] = acc;
          }
          let cidx = 0;
          for (let ky = 0; ky < k; ky++) {
            const sy = y + ky - pad;
            if (sy < 0 || sy >= h) { cidx += k * cin; continue; }
            const rowBase = bBase + sy * w * cin;
            for (let kx = 0; kx < k; kx++) {
              const sx = xc + kx - pad;
              if (sx < 0 || sx >= w) { cidx += cin; continue; }
              const dst = rowBase + sx * cin;
              for (let c = 0; c < cin; c++) dxd[dst + c] += dcolRow[cidx++];
            }
          }
          rowIdx++;
        }
      }
    }
    return dx;
  }
}

export class Elu {
  private out: Float32Array | null = null;

  forward(x: Tensor): Tensor {
    const out = zeros(x.shape);
    const xd = x.data;
    const od = out.data;
    for (let i = 0; i < xd.length; i++) {
      const v = xd[i];
      od[i] = v > 0 ? v : Math.expm1(v);
    }
    this.out = od;
    return out;
  }

  backward(gradOut: Tensor): Tensor {
    const od = this.out!;
    const dx = zeros(gradOut.shape);
    const gd = gradOut.data;
    const dd = dx.data;
    for (let i = 0; i < gd.length; i++) {
      const y = od[i];
      dd[i] = gd[i] * (y > 0 ? 1 : y + 1);
    }
    return dx;
  }
}

export class BatchNorm2d {
  gamma: Param;
  beta: Param;
  runningMean: Float32Array;
  runningVar: Float32Array;
  momentum = 0.9;
  eps = 1e-5;
  private xhat: Float32Array | null = null;
  private invStd: Float32Array | null = null;
  private shape: number[] = [];

  constructor(name: string, channels: number) {
    const g = zeros([channels]);
    g.data.fill(1);
    this.gamma = makeParam(`${name}.gamma`, g);
    this.beta = makeParam(`${name}.beta`, zeros([channels]));
    this.runningMean = new Float32Array(channels);
    this.runningVar = new Float32Array(channels).fill(1);
  }

  params(): Param[] {
    return [this.gamma, this.beta];
  }

  forward(x: Tensor, training: boolean): Tensor {
    const [bs, h, w, c] = x.shape;
    const n = bs * h * w;
    const xd = x.data;
    const mean = new Float32Array(c);
    const variance = new Float32Array(c);
    if (training) {
      for (let i = 0; i < n; i++) {
        const base = i * c;
        for (let j = 0; j < c; j++) mean[j] += xd[base + j];
      }
      for (let j = 0; j < c; j++) mean[j] /= n;
      for (let i = 0; i < n; i++) {
        const base = i * c;
        for (let j = 0; j < c; j++) {
          const d = xd[base + j] - mean[j];
          variance[j] += d * d;
        }
      }
      for (let j = 0; j < c; j++) {
        variance[j] /= n;
        this.runningMean[j] = this.momentum * this.runningMean[j] + (1 - this.momentum) * mean[j];
        this.runningVar[j] = this.momentum * this.runningVar[j] + (1 - this.momentum) * variance[j];
      }
    } else {
      mean.set(this.runningMean);
      variance.set(this.runningVar);
    }
    const invStd = new Float32Array(c);
    for (let j = 0; j < c; j++) invStd[j] = 1 / Math.sqrt(variance[j] + this.eps);

    const out = zeros(x.shape);
    const od = out.data;
    const xhat = new Float32Array(xd.length);
    const g = this.gamma.value.data;
    const b = this.beta.value.data;
    for (let i = 0; i < n; i++) {
      const base = i * c;
      for (let j = 0; j < c; j++) {
        const xh = (xd[base + j] - mean[j]) * invStd[j];
        xhat[base + j] = xh;
        od[base + j] = g[j] * xh + b[j];
      }
    }
    this.xhat = xhat;
    this.invStd = invStd;
    this.shape = [...x.shape];
    return out;
  }

  backward(gradOut: Tensor): Tensor {
    const [bs, h, w, c] = this.shape;
    const n = bs * h * w;
    const gy = gradOut.data;
    const xhat = this.xhat!;
    const invStd = this.invStd!;
    const g = this.gamma.value.data;
    const dg = this.gamma.grad.data;
    const db = this.beta.grad.data;

    const sumDy = new Float32Array(c);
    const sumDyXhat = new Float32Array(c);
    for (let i = 0; i < n; i++) {
      const base = i * c;
      for (let j = 0; j < c; j++) {
        sumDy[j] += gy[base + j];
        sumDyXhat[j] += gy[base + j] * xhat[base + j];
      }
    }
    for (let j = 0; j < c; j++) {
      dg[j] += sumDyXhat[j];
      db[j] += sumDy[j];
    }
    const dx = zeros(this.shape);
    const dd = dx.data;
    for (let i = 0; i < n; i++) {
      const base = i * c;
      for (let j = 0; j < c; j++) {
        dd[base + j] =
          (g[j] * invStd[j] / n) *
          (n * gy[base + j] - sumDy[j] - xhat[base + j] * sumDyXhat[j]);
      }
    }
    this.xhat = null;
    this.invStd = null;
    return dx;
  }
}

export class MaxPool2x2 {
  private argmax: Int32Array | null = null;
  private inShape: number[] = [];

  forward(x: Tensor): Tensor {
    const [bs, h, w, c] = x.shape;
    if (h % 2 !== 0 || w % 2 !== 0) throw new Error(`pooling needs even dims, got ${h}x${w}`);
    const oh = h >> 1;
    const ow = w >> 1;
    const out = zeros([bs, oh, ow, c]);
    const arg = new Int32Array(numel(out.shape));
    const xd = x.data;
    const od = out.data;
    let oi = 0;
    for (let b = 0; b < bs; b++) {
      for (let y = 0; y < oh; y++) {
        for (let xc = 0; xc < ow; xc++) {
          for (let j = 0; j < c; j++) {
            let best = -Infinity;
            let bestIdx = -1;
            for (let dy = 0; dy < 2; dy++) {
              for (let dx = 0; dx < 2; dx++) {
                const src = ((b * h + 2 * y + dy) * w + 2 * xc + dx) * c + j;
                if (xd[src] > best) { best = xd[src]; bestIdx = src; }
              }
            }
            od[oi] = best;
            arg[oi] = bestIdx;
            oi++;
          }
        }
      }
    }
    this.argmax = arg;
    this.inShape = [...x.shape];
    return out;
  }

  backward(gradOut: Tensor): Tensor {
    const dx = zeros(this.inShape);
    const arg = this.argmax!;
    const gy = gradOut.data;
    for (let i = 0; i < gy.length; i++) dx.data[arg[i]] += gy[i];
    this.argmax = null;
    return dx;
  }
}

export class Upsample2x {
  private inShape: number[] = [];

  forward(x: Tensor): Tensor {
    const [bs, h, w, c] = x.shape;
    const out = zeros([bs, 2 * h, 2 * w, c]);
    const xd = x.data;
    const od = out.data;
    for (let b = 0; b < bs; b++) {
      for (let y = 0; y < 2 * h; y++) {
        const sy = y >> 1;
        for (let xc = 0; xc < 2 * w; xc++) {
          const src = ((b * h + sy) * w + (xc >> 1)) * c;
          const dst = ((b * 2 * h + y) * 2 * w + xc) * c;
          for (let j = 0; j < c; j++) od[dst + j] = xd[src + j];
        }
      }
    }
    this.inShape = [...x.shape];
    return out;
  }

  backward(gradOut: Tensor): Tensor {
    const [bs, h, w, c] = this.inShape;
    const dx = zeros(this.inShape);
    const gy = gradOut.data;
    const dd = dx.data;
    for (let b = 0; b < bs; b++) {
      for (let y = 0; y < 2 * h; y++) {
        const sy = y >> 1;
        for (let xc = 0; xc < 2 * w; xc++) {
          const dst = ((b * h + sy) * w + (xc >> 1)) * c;
          const src = ((b * 2 * h + y) * 2 * w + xc) * c;
          for (let j = 0; j < c; j++) dd[dst + j] += gy[src + j];
        }
      }
    }
    return dx;
  }
}

/** Channel concatenation of two NHWC tensors with equal spatial dims. */
export class Concat {
  private c1 = 0;
  private c2 = 0;

  forward(a: Tensor, b: Tensor): Tensor {
    const [bs, h, w, c1] = a.shape;
    const c2 = b.shape[3];
    const out = zeros([bs, h, w, c1 + c2]);
    const od = out.data;
    const n = bs * h * w;
    for (let i = 0; i < n; i++) {
      od.set(a.data.subarray(i * c1, (i + 1) * c1), i * (c1 + c2));
      od.set(b.data.subarray(i * c2, (i + 1) * c2), i * (c1 + c2) + c1);
    }
    this.c1 = c1;
    this.c2 = c2;
    return out;
  }

  backward(gradOut: Tensor): [Tensor, Tensor] {
    const [bs, h, w] = gradOut.shape;
    const { c1, c2 } = this;
    const da = zeros([bs, h, w, c1]);
    const db = zeros([bs, h, w, c2]);
    const gy = gradOut.data;
    const n = bs * h * w;
    for (let i = 0; i < n; i++) {
      da.data.set(gy.subarray(i * (c1 + c2), i * (c1 + c2) + c1), i * c1);
      db.data.set(gy.subarray(i * (c1 + c2) + c1, (i + 1) * (c1 + c2)), i * c2);
    }
    return [da, db];
  }
}

/** Per-pixel softmax over the channel axis. */
export class Softmax {
  private probs: Float32Array | null = null;
  private channels = 0;

  forward(x: Tensor): Tensor {
    const c = x.shape[x.shape.length - 1];
    const n = numel(x.shape) / c;
    const out = zeros(x.shape);
    const xd = x.data;
    const od = out.data;
    for (let i = 0; i < n; i++) {
      const base = i * c;
      let top = -Infinity;
      for (let j = 0; j < c; j++) top = Math.max(top, xd[base + j]);
      let sum = 0;
      for (let j = 0; j < c; j++) {
        const e = Math.exp(xd[base + j] - top);
        od[base + j] = e;
        sum += e;
      }
      for (let j = 0; j < c; j++) od[base + j] /= sum;
    }
    this.probs = od;
    this.channels = c;
    return out;
  }

  backward(gradOut: Tensor): Tensor {
    const c = this.channels;
    const p = this.probs!;
    const gy = gradOut.data;
    const dx = zeros(gradOut.shape);
    const dd = dx.data;
    const n = gy.length / c;
    for (let i = 0; i < n; i++) {
      const base = i * c;
      let dot = 0;
      for (let j = 0; j < c; j++) dot += gy[base + j] * p[base + j];
      for (let j = 0; j < c; j++) dd[base + j] = p[base + j] * (gy[base + j] - dot);
    }
    this.probs = null;
    return dx;
  }
}
