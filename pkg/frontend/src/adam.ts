/** Adam with bias correction; one slot pair per parameter. */

import { Param } from "./layers.js";

export class Adam {
  lr: number;
  beta1 = 0.9;
  beta2 = 0.999;
  eps = 1e-8;
  private t = 0;
  private m = new Map<object, Float32Array>();
  private v = new Map<object, Float32Array>();

  constructor(lr: number) {
    this.lr = lr;
  }

  step(params: Param[]): void {
    this.t++;
    const c1 = 1 - Math.pow(this.beta1, this.t);
    const c2 = 1 - Math.pow(this.beta2, this.t);
    for (const p of params) {
      let m = this.m.get(p);
      let v = this.v.get(p);
      if (!m) {
        m = new Float32Array(p.value.data.length);
        v = new Float32Array(p.value.data.length);
        this.m.set(p, m);
        this.v.set(p, v!);
      }
      const g = p.grad.data;
      const w = p.value.data;
      for (let i = 0; i < w.length; i++) {
        m[i] = this.beta1 * m[i] + (1 - this.beta1) * g[i];
        v![i] = this.beta2 * v![i] + (1 - this.beta2) * g[i] * g[i];
        w[i] -= (this.lr * (m[i] / c1)) / (Math.sqrt(v![i] / c2) + this.eps);
      }
    }
  }
}
