#!/usr/bin/env python3
"""Measure pair-generation throughput: single-thread latency and worker scaling."""

import argparse
import os
import time

from synthmri import GenConfig
from synthmri.generator import generate_pair, generate_stream
from synthmri.phantoms import make_phantom_labels


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--pairs", type=int, default=8)
    ap.add_argument("--workers", type=int, default=min(8, os.cpu_count() or 1))
    args = ap.parse_args()

    maps = [make_phantom_labels((args.size,) * 3, n_labels=6, seed=s) for s in range(3)]
    cfg = GenConfig(seed=0)
    generate_pair(maps, cfg, 0)  # warm up

    t0 = time.time()
    for n in range(args.pairs):
        generate_pair(maps, cfg, n)
    serial = time.time() - t0
    print(f"single-threaded: {serial / args.pairs:.3f} s/pair "
          f"({args.pairs} pairs, {args.size}^3)")

    if args.workers > 1:
        t0 = time.time()
        list(generate_stream(maps, cfg, count=args.pairs, workers=args.workers))
        parallel = time.time() - t0
        speedup = serial / parallel
        print(f"{args.workers} workers: {parallel / args.pairs:.3f} s/pair, "
              f"speedup {speedup:.2f}x, efficiency {speedup / args.workers:.2f}")


if __name__ == "__main__":
    main()
