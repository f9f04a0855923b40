"""Project learned embeddings to 2-D with PCA and draw them as SVG.

Colour is the class; marker shape is the domain (circle source, triangle target).
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from cda.config import build_datasets, load_config
from cda.metrics import pca_project, render_scatter
from cda.nn import forward_embed
from cda.trainer import train

out = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="cda_demo_"))
out.mkdir(parents=True, exist_ok=True)

for name, ov in [("dann", ["contrastive_enabled=false"]), ("cda", [])]:
    cfg = load_config("twomoons_cda.cfg", ov)
    src, tgt = build_datasets(cfg)
    model, _ = train(cfg.train, src, tgt)
    Z = np.vstack([forward_embed(model, src.X).data, forward_embed(model, tgt.X).data])
    coords = pca_project(Z, 2)
    labels = np.concatenate([src.Y, tgt.hidden_Y])
    domains = ["source"] * len(src) + ["target"] * len(tgt)
    path = render_scatter(coords, labels, domains, out / f"{name}_scatter.svg", title=name.upper())
    # Distance between class centroids of the two domains, in embedding space.
    gap = [np.linalg.norm(Z[: len(src)][src.Y == c].mean(0) - Z[len(src):][tgt.hidden_Y == c].mean(0)) for c in (0, 1)]
    print(f"{name}: wrote {path}  source/target centroid gaps {np.round(gap, 3)}")
