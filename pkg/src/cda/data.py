"""Source/target datasets: synthetic shifts, IDX loading and paired batching."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
COLORIZE_OPACITY = 0.5


@dataclass(frozen=True)
class LabeledDataset:
    X: np.ndarray
    Y: np.ndarray
    N: int
    domain_tag: str = "source"

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        Y = np.asarray(self.Y, dtype=np.int64)
        if X.ndim != 2 or Y.shape != (X.shape[0],):
            raise ValueError(f"LabeledDataset: X {X.shape} and Y {Y.shape} disagree")
        if not np.all(np.isfinite(X)):
            raise ValueError("LabeledDataset: non-finite features")
        if Y.size and (Y.min() < 0 or Y.max() >= self.N):
            raise ValueError(f"LabeledDataset: labels outside [0, {self.N})")
        missing = np.setdiff1d(np.arange(self.N), Y)
        if missing.size:
            raise ValueError(f"LabeledDataset: classes {missing.tolist()} have no samples")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def in_dim(self) -> int:
        return self.X.shape[1]

    def unlabeled(self, domain_tag: str = "target") -> "UnlabeledDataset":
        """Drop labels from the training view, keeping them for evaluation."""
        return UnlabeledDataset(self.X, self.Y, domain_tag)


@dataclass(frozen=True)
class UnlabeledDataset:
    X: np.ndarray
    hidden_Y: Optional[np.ndarray] = field(default=None, repr=False)
    domain_tag: str = "target"

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        if X.ndim != 2 or not np.all(np.isfinite(X)):
            raise ValueError("UnlabeledDataset: X must be a finite 2-D array")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        if self.hidden_Y is not None:
            y = np.asarray(self.hidden_Y, dtype=np.int64)
            if y.shape != (X.shape[0],):
                raise ValueError("UnlabeledDataset: hidden_Y length mismatch")
            y.setflags(write=False)
            object.__setattr__(self, "hidden_Y", y)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def in_dim(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class PairedBatch:
    """One iteration's inputs. ``t_index`` locates target rows for evaluation only."""

    x_s: np.ndarray
    y_s: np.ndarray
    x_t: np.ndarray
    t_index: np.ndarray


# ----------------------------------------------------------------- generators


def _rotate(X: np.ndarray, degrees: float) -> np.ndarray:
    th = np.deg2rad(degrees)
    c, s = np.cos(th), np.sin(th)
    return X @ np.array([[c, s], [-s, c]])


def gen_two_moons(
    n: int,
    noise_sd: float = 0.1,
    rotation_deg: float = 0.0,
    translate: Sequence[float] = (0.0, 0.0),
    seed: int = 0,
    domain_tag: str = "source",
) -> LabeledDataset:
    """Two interleaved half circles, rotated about the origin then translated.

    Class 0 is the upper arc of the unit circle, class 1 the lower arc
    centred at (1, 0.5). Arc positions are drawn uniformly.
    """
    if n < 2:
        raise ValueError(f"gen_two_moons: n must be >= 2, got {n}")
    if noise_sd < 0:
        raise ValueError("gen_two_moons: noise_sd must be >= 0")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    t0 = rng.uniform(0.0, np.pi, n0)
    t1 = rng.uniform(0.0, np.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    X = np.vstack([upper, lower])
    Y = np.concatenate([np.zeros(n0, np.int64), np.ones(n1, np.int64)])
    X = X + rng.normal(0.0, noise_sd, X.shape) if noise_sd > 0 else X
    X = _rotate(X, rotation_deg) + np.asarray(translate, dtype=np.float64)
    perm = rng.permutation(n)
    return LabeledDataset(X[perm], Y[perm], 2, domain_tag)


def gen_blobs(
    n: int,
    centers: Sequence[Tuple[Sequence[float], float]],
    shift_vector: Optional[Sequence[float]] = None,
    seed: int = 0,
    domain_tag: str = "source",
) -> LabeledDataset:
    """Isotropic Gaussian clusters, one class per ``(mean, sd)`` center.

    Samples are split as evenly as possible across classes.
    """
    if len(centers) < 2:
        raise ValueError("gen_blobs: need at least 2 centers")
    k = len(centers)
    if n < k:
        raise ValueError(f"gen_blobs: n={n} is smaller than the number of centers")
    rng = np.random.default_rng(seed)
    dim = len(centers[0][0])
    shift = np.zeros(dim) if shift_vector is None else np.asarray(shift_vector, np.float64)
    counts = [n // k + (1 if i < n % k else 0) for i in range(k)]
    Xs, Ys = [], []
    for i, ((mean, sd), m) in enumerate(zip(centers, counts)):
        mean = np.asarray(mean, np.float64)
        Xs.append(mean + sd * rng.standard_normal((m, dim)))
        Ys.append(np.full(m, i, np.int64))
    X = np.vstack(Xs) + shift
    Y = np.concatenate(Ys)
    perm = rng.permutation(n)
    return LabeledDataset(X[perm], Y[perm], k, domain_tag)


def colorize_shift(ds: LabeledDataset, seed: int = 0, opacity: float = COLORIZE_OPACITY) -> LabeledDataset:
    """Grayscale -> RGB with a random per-image background tint.

    Each pixel becomes ``p * 1 + (1 - p) * (opacity * tint)`` blended per
    channel, so ink stays white-ish and the background takes the tint. The
    output layout is channel-major (all R, then G, then B).
    """
    X = ds.X
    if X.size and (X.min() < 0 or X.max() > 1):
        raise ValueError("colorize_shift: expected grayscale features in [0, 1]")
    side = int(round(np.sqrt(ds.in_dim)))
    if side * side != ds.in_dim:
        raise ValueError(f"colorize_shift: in_dim {ds.in_dim} is not a square grayscale image")
    rng = np.random.default_rng(seed)
    tint = rng.uniform(0.0, 1.0, (len(ds), 3))
    bg = opacity * tint[:, :, None]  # [n, 3, 1]
    p = X[:, None, :]
    out = p + (1.0 - p) * bg
    out = np.clip(out, 0.0, 1.0).reshape(len(ds), -1)
    return LabeledDataset(out, ds.Y, ds.N, ds.domain_tag + "-rgb")


# ------------------------------------------------------------------------ IDX


def _read_idx(path, expected_magic: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise ValueError(f"{path}: not an IDX file (too short)")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise ValueError(f"{path}: not an IDX file (magic {magic:#010x})")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise ValueError(f"{path}: truncated IDX header")
    dims = struct.unpack(">" + "I" * ndim, raw[4:head])
    size = int(np.prod(dims))
    if len(raw) - head < size:
        raise ValueError(f"{path}: truncated IDX payload ({len(raw) - head} of {size} bytes)")
    if len(raw) - head > size:
        raise ValueError(f"{path}: IDX payload longer than its header declares")
    return np.frombuffer(raw, np.uint8, size, head).reshape(dims)


def load_idx(
    images_path, labels_path=None, limit: Optional[int] = None, num_classes: int = 10
) -> Union[LabeledDataset, UnlabeledDataset]:
    """Load ubyte IDX images (and optionally labels), flattened and scaled to [0, 1]."""
    images = _read_idx(images_path, IDX_IMAGES)
    labels = None
    if labels_path is not None:
        labels = _read_idx(labels_path, IDX_LABELS)
        if labels.shape[0] != images.shape[0]:
            raise ValueError(
                f"image/label count mismatch: {images.shape[0]} images, {labels.shape[0]} labels"
            )
    n = images.shape[0] if limit is None else min(int(limit), images.shape[0])
    if n <= 0:
        raise ValueError("empty dataset")
    X = images[:n].reshape(n, -1).astype(np.float64) / 255.0
    if labels is None:
        return UnlabeledDataset(X)
    return LabeledDataset(X, labels[:n].astype(np.int64), num_classes, "idx")


def write_idx_images(path, images: np.ndarray) -> None:
    """Write a uint8 ``[n, rows, cols]`` array as an IDX image file."""
    images = np.asarray(images)
    if images.ndim != 3:
        raise ValueError("write_idx_images: expected [n, rows, cols]")
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES, *images.shape))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


# ------------------------------------------------------------------------ CSV


def write_csv(path, ds: Union[LabeledDataset, UnlabeledDataset], hide_labels: bool = False) -> int:
    """Export as ``f0,...,fk,label``; unlabeled rows carry label -1."""
    X = ds.X
    if isinstance(ds, LabeledDataset) and not hide_labels:
        y = ds.Y
    else:
        y = np.full(len(ds), -1, np.int64)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(X.shape[1])] + ["label"])
        for row, label in zip(X, y):
            w.writerow([repr(float(v)) for v in row] + [int(label)])
    return len(ds)


def read_csv(path, num_classes: Optional[int] = None) -> Union[LabeledDataset, UnlabeledDataset]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    if not header or header[-1] != "label":
        raise ValueError(f"{path}: expected header f0,...,fk,label")
    arr = np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(
        len(body), len(header)
    )
    X, y = arr[:, :-1], arr[:, -1].astype(np.int64)
    if np.all(y == -1):
        return UnlabeledDataset(X)
    n = num_classes if num_classes is not None else int(y.max()) + 1
    return LabeledDataset(X, y, n, Path(path).stem)


# -------------------------------------------------------------------- batching


def epoch_rng(seed: int, epoch: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) % 2**63, int(epoch), int(stream)])


def num_batches(n_s: int, n_t: int, batch_size: int) -> int:
    return min(n_s, n_t) // batch_size


def batches(
    source: LabeledDataset,
    target: UnlabeledDataset,
    batch_size: int,
    seed: int,
    epoch: int,
) -> List[PairedBatch]:
    """Independently shuffle both domains and pair ``min(n_s, n_t) // batch_size`` batches."""
    if batch_size < 2:
        raise ValueError(f"batch_size must be >= 2, got {batch_size}")
    if batch_size > min(len(source), len(target)):
        raise ValueError(
            f"batch_size {batch_size} exceeds dataset size (n_s={len(source)}, n_t={len(target)})"
        )
    ps = epoch_rng(seed, epoch, 0).permutation(len(source))
    pt = epoch_rng(seed, epoch, 1).permutation(len(target))
    out = []
    for k in range(num_batches(len(source), len(target), batch_size)):
        si = ps[k * batch_size : (k + 1) * batch_size]
        ti = pt[k * batch_size : (k + 1) * batch_size]
        out.append(PairedBatch(source.X[si], source.Y[si], target.X[ti], ti))
    return out


def iter_rows(X: np.ndarray, size: int) -> Iterator[np.ndarray]:
    for i in range(0, X.shape[0], size):
        yield X[i : i + size]
