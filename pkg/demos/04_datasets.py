"""Synthetic domain shifts, the IDX reader and paired batching."""

import sys
import tempfile
from pathlib import Path

import numpy as np

from cda.data import batches, colorize_shift, gen_blobs, gen_two_moons, load_idx, write_csv, write_idx_images, write_idx_labels

out = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="cda_demo_"))
out.mkdir(parents=True, exist_ok=True)

# Source moons and a target rotated by 30 degrees.
src = gen_two_moons(1000, noise_sd=0.1, seed=1000)
tgt = gen_two_moons(1000, noise_sd=0.1, rotation_deg=30, seed=2000).unlabeled()
print("source", src.X.shape, "classes", np.bincount(src.Y), " target", tgt.X.shape)
print("rows written:", write_csv(out / "source.csv", src), write_csv(out / "target.csv", tgt))

# Three blobs, every point translated by (1.5, 0).
blobs = gen_blobs(300, [((0, 0), 0.5), ((3, 0), 0.5), ((1.5, 2.5), 0.5)], shift_vector=(1.5, 0), seed=3)
print("blob class means:\n", np.array([blobs.X[blobs.Y == c].mean(0) for c in range(3)]).round(2))

# IDX files: write a tiny image set, read it back, then tint it.
imgs = np.zeros((4, 3, 3), np.uint8)
imgs[:, 1, :] = 255
write_idx_images(out / "imgs.idx", imgs)
write_idx_labels(out / "labels.idx", [0, 1, 0, 1])
digits = load_idx(out / "imgs.idx", out / "labels.idx", num_classes=2)
print("IDX features:", digits.X[0])
rgb = colorize_shift(digits, seed=0)
print("colorized in_dim", rgb.in_dim, "range", rgb.X.min().round(3), rgb.X.max())

# One epoch of paired batches; the shorter domain bounds the epoch.
bs = batches(src, tgt, 128, seed=0, epoch=1)
print(len(bs), "batches of", bs[0].x_s.shape, "+", bs[0].x_t.shape)
print("outputs in", out)
