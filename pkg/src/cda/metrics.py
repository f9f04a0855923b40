"""History CSV, embedding dumps, PCA projection and SVG scatter plots."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

HISTORY_HEADER = (
    "epoch",
    "stage",
    "lambda",
    "beta",
    "l_ce",
    "l_supcl",
    "l_adv",
    "l_crosscl",
    "src_acc",
    "tgt_acc",
    "pseudo_acc",
    "lr",
)

# Tableau-10; classes beyond ten cycle.
PALETTE = (
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def history_row(rec) -> List[str]:
    return [
        _fmt(rec.epoch),
        str(rec.stage),
        _fmt(float(rec.lam)),
        _fmt(float(rec.beta)),
        _fmt(float(rec.l_ce)),
        _fmt(float(rec.l_supcl)),
        _fmt(float(rec.l_adv)),
        _fmt(float(rec.l_crosscl)),
        _fmt(float(rec.src_acc)),
        _fmt(float(rec.tgt_acc)),
        _fmt(float(rec.pseudo_acc)),
        _fmt(float(rec.lr)),
    ]


def export_history(history: Sequence, path) -> Path:
    """Write one row per epoch under the fixed ``HISTORY_HEADER``."""
    if not history:
        raise ValueError("export_history: empty history")
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for rec in history:
            w.writerow(history_row(rec))
    return path


class HistoryWriter:
    """Appends and flushes one row per epoch so partial runs stay readable."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", newline="") as f:
            csv.writer(f, lineterminator="\n").writerow(HISTORY_HEADER)

    def append(self, rec) -> None:
        with open(self.path, "a", newline="") as f:
            csv.writer(f, lineterminator="\n").writerow(history_row(rec))


def read_history(path) -> List[dict]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != HISTORY_HEADER:
            raise ValueError(f"{path}: unexpected history header {reader.fieldnames}")
        rows = []
        for r in reader:
            row = {k: (v if k == "stage" else float(v)) for k, v in r.items()}
            row["epoch"] = int(row["epoch"])
            rows.append(row)
    return rows


# ------------------------------------------------------------------ embeddings


@dataclass
class EmbeddingDump:
    domains: List[str]
    labels: np.ndarray
    embeddings: np.ndarray
    epoch: int = 0
    config_hash: str = ""

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        if self.embeddings.ndim != 2:
            raise ValueError("EmbeddingDump: embeddings must be 2-D")
        n = self.embeddings.shape[0]
        if len(self.domains) != n or self.labels.shape != (n,):
            raise ValueError("EmbeddingDump: row counts disagree")
        if n and self.labels.min() < -1:
            raise ValueError("EmbeddingDump: labels must be >= -1")


def write_embeddings(dump: EmbeddingDump, path) -> Path:
    """CSV ``domain,label,e0,...,e{d-1}`` preceded by ``# epoch=..`` metadata."""
    path = Path(path)
    d = dump.embeddings.shape[1]
    with open(path, "w", newline="") as f:
        f.write(f"# epoch={dump.epoch} config_hash={dump.config_hash}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["domain", "label"] + [f"e{i}" for i in range(d)])
        for dom, lab, row in zip(dump.domains, dump.labels, dump.embeddings):
            w.writerow([dom, int(lab)] + [repr(float(v)) for v in row])
    return path


def read_embeddings(path) -> EmbeddingDump:
    with open(path, newline="") as f:
        meta = f.readline().lstrip("# ").split()
        info = dict(kv.split("=", 1) for kv in meta)
        reader = csv.reader(f)
        header = next(reader)
        rows = list(reader)
    d = len(header) - 2
    emb = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(len(rows), d)
    return EmbeddingDump(
        [r[0] for r in rows],
        np.array([int(r[1]) for r in rows], dtype=np.int64),
        emb,
        int(info.get("epoch", 0)),
        info.get("config_hash", ""),
    )


# ------------------------------------------------------------------------ PCA


def pca_project(embeddings, k: int = 2) -> np.ndarray:
    """Project centred rows onto the top-``k`` covariance eigenvectors.

    Each eigenvector's sign is fixed so its first nonzero entry is positive.
    """
    X = np.asarray(embeddings, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("pca_project: expected a 2-D array")
    n, d = X.shape
    if n <= k or d < k:
        raise ValueError(f"pca_project: need n > k and d >= k (n={n}, d={d}, k={k})")
    Xc = X - X.mean(axis=0)
    if np.allclose(Xc, 0.0, atol=1e-12):
        raise ValueError("pca_project: degenerate input (all rows equal)")
    cov = Xc.T @ Xc / (n - 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:k]
    V = vecs[:, order]
    for j in range(k):
        nz = np.flatnonzero(np.abs(V[:, j]) > 1e-12)
        if nz.size and V[nz[0], j] < 0:
            V[:, j] = -V[:, j]
    P = Xc @ V
    return P - P.mean(axis=0)


# ------------------------------------------------------------------------ SVG

_MARKERS = ("circle", "triangle", "square", "diamond")


def _marker(shape: str, x: float, y: float, r: float, color: str) -> str:
    if shape == "circle":
        return f'<circle class="pt" cx="{x:.2f}" cy="{y:.2f}" r="{r:.1f}" fill="{color}"/>'
    if shape == "square":
        return (
            f'<rect class="pt" x="{x - r:.2f}" y="{y - r:.2f}" width="{2 * r:.1f}" '
            f'height="{2 * r:.1f}" fill="{color}"/>'
        )
    if shape == "triangle":
        pts = f"{x:.2f},{y - r:.2f} {x - r:.2f},{y + r:.2f} {x + r:.2f},{y + r:.2f}"
    else:
        pts = f"{x:.2f},{y - r:.2f} {x + r:.2f},{y:.2f} {x:.2f},{y + r:.2f} {x - r:.2f},{y:.2f}"
    return f'<polygon class="pt" points="{pts}" fill="{color}"/>'


def _legend_marker(shape: str, x: float, y: float, r: float) -> str:
    return _marker(shape, x, y, r, "#555555").replace('class="pt"', 'class="legend"')


def render_scatter(
    coords,
    labels: Sequence[int],
    domain_tags: Sequence[str],
    path,
    title: str = "",
    width: int = 640,
    height: int = 480,
) -> Path:
    """Standalone SVG: colour by class, marker shape by domain."""
    P = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(P)):
        raise ValueError("render_scatter: non-finite coordinates")
    labels = [int(v) for v in labels]
    domain_tags = [str(t) for t in domain_tags]
    if not len(labels) == len(domain_tags) == P.shape[0]:
        raise ValueError("render_scatter: coords, labels and domains differ in length")

    legend_w = 130
    pad = 20
    plot_w = width - legend_w - 2 * pad
    plot_h = height - 2 * pad - (20 if title else 0)
    top = pad + (20 if title else 0)

    if P.shape[0]:
        lo, hi = P.min(axis=0), P.max(axis=0)
        span = np.where(hi - lo > 0, hi - lo, 1.0)
    else:
        lo, span = np.zeros(2), np.ones(2)

    domains = sorted(set(domain_tags))
    shape_of = {d: _MARKERS[i % len(_MARKERS)] for i, d in enumerate(domains)}
    classes = sorted(set(labels))

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{pad}" y="{pad + 8}" font-size="14" font-family="sans-serif">{escape(title)}</text>')
    out.append(
        f'<rect x="{pad}" y="{top}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#cccccc"/>'
    )
    out.append('<g id="points">')
    for (px, py), lab, dom in zip(P, labels, domain_tags):
        x = pad + 5 + (px - lo[0]) / span[0] * (plot_w - 10)
        y = top + plot_h - 5 - (py - lo[1]) / span[1] * (plot_h - 10)
        color = "#888888" if lab < 0 else PALETTE[lab % len(PALETTE)]
        out.append(_marker(shape_of[dom], x, y, 3.0, color))
    out.append("</g>")

    lx = width - legend_w
    ly = top + 10
    out.append('<g id="legend" font-size="12" font-family="sans-serif">')
    for c in classes:
        color = "#888888" if c < 0 else PALETTE[c % len(PALETTE)]
        name = "unlabeled" if c < 0 else f"class {c}"
        out.append(f'<rect x="{lx}" y="{ly - 5}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{lx + 16}" y="{ly + 4}">{name}</text>')
        ly += 18
    for d in domains:
        out.append(_legend_marker(shape_of[d], lx + 5, ly, 5.0))
        out.append(f'<text x="{lx + 16}" y="{ly + 4}">{escape(d)}</text>')
        ly += 18
    out.append("</g>")
    out.append("</svg>")

    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path


def scatter_from_dump(dump: EmbeddingDump, path, title: str = "") -> Path:
    coords = pca_project(dump.embeddings, 2)
    return render_scatter(coords, dump.labels, dump.domains, path, title)


def accuracy(pred: Iterable[int], labels: Iterable[int]) -> float:
    pred = np.asarray(list(pred) if not isinstance(pred, np.ndarray) else pred)
    labels = np.asarray(list(labels) if not isinstance(labels, np.ndarray) else labels)
    if pred.shape != labels.shape or pred.size == 0:
        raise ValueError("accuracy: prediction/label shapes differ or are empty")
    return float(np.mean(pred == labels))
