#!/usr/bin/env python3
"""Writes synthetic stand-ins for the UCI wine quality files.

Same layout as the originals (semicolon separated, quoted header, 11
features then `quality`), same row counts, but the values are drawn from a
seeded generator and carry no relation to real wine.
"""

import argparse
import pathlib

import numpy as np

COLUMNS = [
    "fixed acidity", "volatile acidity", "citric acid", "residual sugar",
    "chlorides", "free sulfur dioxide", "total sulfur dioxide", "density",
    "pH", "sulphates", "alcohol",
]

# per-column (mean, std, decimals) roughly in the range of the real files
RED = [(8.3, 1.7, 1), (0.53, 0.18, 3), (0.27, 0.19, 2), (2.5, 1.4, 1),
       (0.087, 0.047, 3), (15.9, 10.5, 0), (46.5, 32.9, 0), (0.9967, 0.0019, 4),
       (3.31, 0.15, 2), (0.66, 0.17, 2), (10.4, 1.07, 1)]
WHITE = [(6.85, 0.84, 1), (0.28, 0.10, 2), (0.33, 0.12, 2), (6.4, 5.1, 1),
         (0.046, 0.022, 3), (35.3, 17.0, 0), (138.4, 42.5, 0), (0.994, 0.003, 4),
         (3.19, 0.15, 2), (0.49, 0.11, 2), (10.5, 1.23, 1)]


def generate(rows, params, seed):
    rng = np.random.default_rng(seed)
    d = len(params)
    mix = rng.normal(size=(d, d)) * 0.4 + np.eye(d)
    z = rng.normal(size=(rows, d)) @ mix.T
    z /= z.std(axis=0)
    weights = rng.normal(size=d) * 0.35
    score = z @ weights + rng.normal(scale=0.7, size=rows)
    quality = np.clip(np.rint(5.7 + 0.8 * score / score.std()), 3, 9).astype(int)
    feats = np.empty((rows, d))
    for j, (mu, sd, dec) in enumerate(params):
        col = mu + sd * z[:, j]
        col = np.maximum(col, 10.0 ** (-dec))
        feats[:, j] = np.round(col, dec)
    return feats, quality, [p[2] for p in params]


def write(path, feats, quality, decimals):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(";".join(f'"{c}"' for c in COLUMNS + ["quality"]) + "\n")
        for row, q in zip(feats, quality):
            cells = [f"{v:.{max(dec, 1)}f}" for v, dec in zip(row, decimals)]
            fh.write(";".join(cells + [str(q)]) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--seed", type=int, default=20240601)
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, rows, params, offset in (("red", 1599, RED, 0), ("white", 4898, WHITE, 1)):
        feats, quality, dec = generate(rows, params, args.seed + offset)
        write(out / f"winequality-{name}.synthetic.csv", feats, quality, dec)


if __name__ == "__main__":
    main()
