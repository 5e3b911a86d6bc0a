/** 2-D U-Net: two ELU convolutions per level, batch-norm before each pooling
 * and upsampling, feature count doubled after pooling and halved after
 * upsampling, skip concatenations, softmax head. */

import { TrainerConfig, validateConfig } from "./config.js";
import {
  BatchNorm2d,
  Concat,
  Conv2d,
  Elu,
  MaxPool2x2,
  Param,
  Softmax,
  Upsample2x,
} from "./layers.js";
import { Rng, Tensor } from "./tensor.js";

class ConvBlock {
  conv1: Conv2d;
  conv2: Conv2d;
  act1 = new Elu();
  act2 = new Elu();

  constructor(name: string, cin: number, width: number, rng: Rng) {
    this.conv1 = new Conv2d(`${name}.conv1`, cin, width, 3, rng);
    this.conv2 = new Conv2d(`${name}.conv2`, width, width, 3, rng);
  }

  forward(x: Tensor): Tensor {
    return this.act2.forward(this.conv2.forward(this.act1.forward(this.conv1.forward(x))));
  }

  backward(gy: Tensor): Tensor {
    return this.conv1.backward(this.act1.backward(this.conv2.backward(this.act2.backward(gy))));
  }

  params(): Param[] {
    return [...this.conv1.params(), ...this.conv2.params()];
  }
}

export class UNet2d {
  readonly cfg: TrainerConfig;
  readonly encoderWidths: number[];
  private enc: ConvBlock[] = [];
  private bnDown: BatchNorm2d[] = [];
  private pool: MaxPool2x2[] = [];
  private bnUp: BatchNorm2d[] = [];
  private up: Upsample2x[] = [];
  private cat: Concat[] = [];
  private dec: ConvBlock[] = [];
  private head: Conv2d;
  private softmax = new Softmax();

  constructor(cfg: TrainerConfig) {
    validateConfig(cfg);
    this.cfg = cfg;
    const rng = new Rng(cfg.seed + 0x5eed);
    const L = cfg.levels;
    this.encoderWidths = Array.from({ length: L }, (_, l) => cfg.baseFeatures << l);

    let cin = 1;
    for (let l = 0; l < L; l++) {
      const width = this.encoderWidths[l];
      this.enc.push(new ConvBlock(`enc${l}`, cin, width, rng));
      cin = width;
      if (l < L - 1) {
        this.bnDown.push(new BatchNorm2d(`bn_down${l}`, width));
        this.pool.push(new MaxPool2x2());
      }
    }
    for (let l = L - 2; l >= 0; l--) {
      const width = this.encoderWidths[l];
      const inWidth = this.encoderWidths[l + 1];
      this.bnUp.push(new BatchNorm2d(`bn_up${l}`, inWidth));
      this.up.push(new Upsample2x());
      this.cat.push(new Concat());
      this.dec.push(new ConvBlock(`dec${l}`, inWidth + width, width, rng));
    }
    // Zero-initialized head: the network starts as an exactly uniform softmax.
    this.head = new Conv2d("head", cfg.baseFeatures, cfg.numClasses, 1, rng, true);
  }

  params(): Param[] {
    const out: Param[] = [];
    for (const b of this.enc) out.push(...b.params());
    for (const bn of this.bnDown) out.push(...bn.params());
    for (const bn of this.bnUp) out.push(...bn.params());
    for (const b of this.dec) out.push(...b.params());
    out.push(...this.head.params());
    return out;
  }

  batchNorms(): BatchNorm2d[] {
    return [...this.bnDown, ...this.bnUp];
  }

  /** x: [B, H, W, 1] -> class probabilities [B, H, W, K]. */
  forward(x: Tensor, training: boolean): Tensor {
    const L = this.cfg.levels;
    const skips: Tensor[] = [];
    let t = x;
    for (let l = 0; l < L; l++) {
      t = this.enc[l].forward(t);
      if (l < L - 1) {
        skips.push(t);
        t = this.pool[l].forward(this.bnDown[l].forward(t, training));
      }
    }
    for (let i = 0; i < L - 1; i++) {
      const skip = skips[L - 2 - i];
      t = this.up[i].forward(this.bnUp[i].forward(t, training));
      t = this.cat[i].forward(t, skip);
      t = this.dec[i].forward(t);
    }
    return this.softmax.forward(this.head.forward(t));
  }

  /** Backpropagate d(loss)/d(probs); accumulates parameter gradients. */
  backward(gradProbs: Tensor): void {
    const L = this.cfg.levels;
    let g = this.head.backward(this.softmax.backward(gradProbs));
    const skipGrads: Tensor[] = new Array(L - 1);
    for (let i = L - 2; i >= 0; i--) {
      g = this.dec[i].backward(g);
      const [gUp, gSkip] = this.cat[i].backward(g);
      skipGrads[L - 2 - i] = gSkip;
      g = this.bnUp[i].backward(this.up[i].backward(gUp));
    }
    for (let l = L - 1; l >= 0; l--) {
      if (l < L - 1) {
        g = this.bnDown[l].backward(this.pool[l].backward(g));
        const sg = skipGrads[l];
        for (let i = 0; i < g.data.length; i++) g.data[i] += sg.data[i];
      }
      g = this.enc[l].backward(g);
    }
  }

  zeroGrads(): void {
    for (const p of this.params()) p.grad.data.fill(0);
  }
}
