#!/usr/bin/env python
"""Generate the two-class dumbbell benchmark used by the toy experiment.

Writes .off meshes, .seg label files, and manifest.json under --out.
"""
import argparse

from meshseg.synth import make_toy_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="dataset directory")
    ap.add_argument("--n-meshes", type=int, default=10)
    ap.add_argument("--subdivisions", type=int, default=2,
                    help="icosphere refinement level (2 -> 320 faces each)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    manifest = make_toy_dataset(args.out, n_meshes=args.n_meshes,
                                subdivisions=args.subdivisions, seed=args.seed)
    print(f"wrote {manifest}")


if __name__ == "__main__":
    main()
