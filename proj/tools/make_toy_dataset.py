#!/usr/bin/env python3
"""Write a two-class synthetic image set in the dataset layout `cxr` expects.

<out>/NORMAL/imgNN.png are dark (mean 0.3), <out>/PNEUMONIA/imgNN.png bright
(mean 0.7), both with Gaussian noise of sigma 0.08. Linearly separable.
"""
import argparse
import pathlib

import numpy as np
from PIL import Image


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, type=pathlib.Path)
    ap.add_argument("--per-class", type=int, default=20)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    for cls, mean in (("NORMAL", 0.3), ("PNEUMONIA", 0.7)):
        d = args.out / cls
        d.mkdir(parents=True, exist_ok=True)
        for i in range(args.per_class):
            px = np.clip(mean + 0.08 * rng.standard_normal((args.size, args.size)), 0.0, 1.0)
            Image.fromarray((px * 255).round().astype(np.uint8), mode="L").save(d / f"img{i:02d}.png")
    print(f"{2 * args.per_class} images -> {args.out}")


if __name__ == "__main__":
    main()
