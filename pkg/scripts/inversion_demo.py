#!/usr/bin/env python3
"""End-to-end demo: synthesize a pair, segment it back with EM, report Dice.

The segmenter only sees the image and a smoothed atlas built from the
target, so the Dice table shows how well the classical inversion recovers
anatomy across freshly randomized contrasts.
"""

import argparse

import numpy as np

from synthmri import GenConfig
from synthmri.bayes import build_atlas, em_segment
from synthmri.generator import generate_pair
from synthmri.metrics import dice_report
from synthmri.phantoms import make_phantom_labels


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--pairs", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--atlas-sigma", type=float, default=1.5)
    ap.add_argument("--bias", action="store_true", help="enable bias estimation")
    args = ap.parse_args()

    maps = [make_phantom_labels((args.size,) * 3, n_labels=5, seed=s) for s in range(3)]
    cfg = GenConfig(seed=args.seed, a_sigma=5.0, b_sigma=10.0)

    scores = []
    for n in range(args.pairs):
        pair = generate_pair(maps, cfg, n)
        atlas = build_atlas([pair.target], smoothing_sigma=args.atlas_sigma)
        res = em_segment(pair.image, atlas, max_iter=35, bias=args.bias)
        rep = dice_report(res.map_labels, pair.target)
        scores.append(rep.mean)
        mus = ", ".join(f"{k}:{v:.0f}" for k, v in sorted(pair.record.gmm.means.items()))
        print(f"pair {n}: mean Dice {rep.mean:.4f}  (drawn means {mus})")
    print(f"\nmean over {args.pairs} contrasts: {np.mean(scores):.4f}")


if __name__ == "__main__":
    main()
