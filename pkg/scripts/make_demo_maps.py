#!/usr/bin/env python3
"""Write a few synthetic head-phantom label maps to seed the CLI demos."""

import argparse
from pathlib import Path

from synthmri.nifti import write_volume
from synthmri.phantoms import make_phantom_labels


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_maps", help="output directory")
    ap.add_argument("--count", type=int, default=3)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--labels", type=int, default=6)
    ap.add_argument("--no-shell", action="store_true",
                    help="skip the thin extracerebral shell (fat structures only)")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for s in range(args.count):
        m = make_phantom_labels(
            (args.size,) * 3, n_labels=args.labels, seed=s, shell=not args.no_shell
        )
        path = out / f"phantom_{s:02d}.nii.gz"
        write_volume(m, path)
        print(f"wrote {path}  labels={m.label_set}")


if __name__ == "__main__":
    main()
