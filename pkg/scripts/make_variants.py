#!/usr/bin/env python3
"""Write four consecutive stain-augmented variants of one image.

Fits a profile on the input directory if none is given, then applies the
colour-matrix augmentation four times off a single seeded stream, saving
<stem>_v0.png ... <stem>_v3.png next to the chosen output directory.
"""

import argparse
from pathlib import Path

import numpy as np

from stainkit.imaging import load_png, save_png
from stainkit.profile import extract_image_stats, fit_profile, load_profile
from stainkit.augment import sca_augment


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--image", required=True, type=Path)
    ap.add_argument("--output", required=True, type=Path)
    ap.add_argument("--profile", type=Path, help="fitted profile JSON; fit on the image itself if omitted")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--count", type=int, default=4)
    args = ap.parse_args()

    img = load_png(args.image)
    if args.profile is not None:
        profile = load_profile(args.profile)
    else:
        profile = fit_profile([extract_image_stats(img)])

    args.output.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    for k in range(args.count):
        out = sca_augment(img, profile, rng)
        dest = args.output / f"{args.image.stem}_v{k}.png"
        save_png(out, dest)
        print(dest)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
