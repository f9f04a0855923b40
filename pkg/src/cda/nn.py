"""Dense building blocks and the generator / classifier / discriminator model."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_MAGIC = b"CDACKPT1"
CHECKPOINT_VERSION = 1


@dataclass
class DenseLayer:
    weight: Tensor
    bias: Tensor
    activation: str = "relu"
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.activation not in ("relu", "none"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate <= 0.5:
            raise ValueError(f"dropout_rate must be in [0, 0.5], got {self.dropout_rate}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError(
                f"inconsistent layer shapes: weight {self.weight.shape}, bias {self.bias.shape}"
            )

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ad.ShapeError("dense", x.shape, self.weight.shape)
        h = ad.add(ad.matmul(x, self.weight), self.bias)
        if self.activation == "relu":
            h = ad.relu(h)
        if rng is not None and self.dropout_rate > 0:
            keep = 1.0 - self.dropout_rate
            mask = rng.random(h.shape) < keep
            h = ad.apply_mask(h, mask, 1.0 / keep)
        return h


def init_dense(
    in_dim: int,
    out_dim: int,
    rng: np.random.Generator,
    activation: str = "relu",
    dropout_rate: float = 0.0,
) -> DenseLayer:
    """Uniform fan-in init: bound sqrt(6/fan_in) for relu, sqrt(3/fan_in) for linear."""
    if in_dim <= 0 or out_dim <= 0:
        raise ValueError(f"layer dims must be positive, got {in_dim}x{out_dim}")
    gain = 6.0 if activation == "relu" else 3.0
    bound = np.sqrt(gain / in_dim)
    w = rng.uniform(-bound, bound, size=(in_dim, out_dim))
    return DenseLayer(ad.parameter(w), ad.parameter(np.zeros(out_dim)), activation, dropout_rate)


def _stack(
    dims: Sequence[int], rng: np.random.Generator, dropout_rate: float = 0.0, dropout_at: int = -1
) -> List[DenseLayer]:
    layers = []
    n = len(dims) - 1
    at = n + dropout_at if dropout_at < 0 else dropout_at  # out of range means no dropout
    for i in range(n):
        act = "none" if i == n - 1 else "relu"
        rate = dropout_rate if i == at else 0.0
        layers.append(init_dense(dims[i], dims[i + 1], rng, act, rate))
    return layers


def _run(layers: Sequence[DenseLayer], x: Tensor, rng) -> Tensor:
    for layer in layers:
        x = layer(x, rng)
    return x


@dataclass
class CdaModel:
    """Feature generator G, classifier C and domain discriminator D."""

    generator: List[DenseLayer]
    classifier: List[DenseLayer]
    discriminator: List[DenseLayer]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.embed_dim
        if self.classifier[0].in_dim != d or self.discriminator[0].in_dim != d:
            raise ValueError("classifier and discriminator inputs must equal the embedding dim")
        if self.discriminator[-1].out_dim != 1:
            raise ValueError("discriminator must have a single output")
        for stack in (self.generator, self.classifier, self.discriminator):
            for a, b in zip(stack, stack[1:]):
                if a.out_dim != b.in_dim:
                    raise ValueError(f"layer chain mismatch: {a.out_dim} -> {b.in_dim}")

    @property
    def in_dim(self) -> int:
        return self.generator[0].in_dim

    @property
    def embed_dim(self) -> int:
        return self.generator[-1].out_dim

    @property
    def num_classes(self) -> int:
        return self.classifier[-1].out_dim

    def networks(self) -> dict:
        return {"G": self.generator, "C": self.classifier, "D": self.discriminator}

    def named_parameters(self) -> Iterator[tuple]:
        for net, layers in self.networks().items():
            for i, layer in enumerate(layers):
                yield f"{net}.{i}.weight", layer.weight
                yield f"{net}.{i}.bias", layer.bias

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def init_model(
    layer_dims: Sequence[int],
    embed_dim: int,
    num_classes: int,
    seed: int,
    head_dims: Sequence[int] = (64, 32),
    dropout_rate: float = 0.3,
) -> CdaModel:
    """Build a model deterministically from ``seed``.

    ``layer_dims`` is the generator's input and hidden widths; the generator
    ends in a linear ``embed_dim`` layer. Both heads are ``embed_dim ->
    head_dims -> out`` with dropout on the second to last layer.
    """
    dims = list(layer_dims) + [embed_dim] + list(head_dims) + [num_classes]
    if len(layer_dims) < 1 or any(int(d) <= 0 for d in dims):
        raise ValueError(f"all dims must be positive, got {dims}")
    rng = np.random.default_rng(np.uint64(seed % 2**64))
    generator = _stack(list(layer_dims) + [embed_dim], rng)
    head = [embed_dim] + list(head_dims)
    classifier = _stack(head + [num_classes], rng, dropout_rate, dropout_at=-2)
    discriminator = _stack(head + [1], rng, dropout_rate, dropout_at=-2)
    meta = {
        "layer_dims": [int(d) for d in layer_dims],
        "embed_dim": int(embed_dim),
        "num_classes": int(num_classes),
        "head_dims": [int(d) for d in head_dims],
        "dropout_rate": float(dropout_rate),
        "seed": int(seed),
    }
    return CdaModel(generator, classifier, discriminator, meta)


def _check_input(x: Tensor, dim: int, what: str) -> Tensor:
    x = x if isinstance(x, Tensor) else ad.constant(x)
    if x.ndim != 2 or x.shape[1] != dim:
        raise ad.ShapeError(what, x.shape, ("B", dim))
    return x


def forward_embed(model: CdaModel, x, train_mode: bool = False, rng=None) -> Tensor:
    """Raw generator embedding ``G(x)``. ``rng`` drives dropout when training."""
    x = _check_input(x, model.in_dim, "forward_embed")
    return _run(model.generator, x, rng if train_mode else None)


def l2_normalize(z: Tensor, min_norm: float = 1e-12) -> Tensor:
    norms = np.sqrt(np.sum(z.data**2, axis=1))
    bad = np.flatnonzero(norms <= min_norm)
    if bad.size:
        raise ValueError(f"l2_normalize: row {int(bad[0])} has near-zero norm")
    norm = ad.sqrt(ad.sum(ad.mul(z, z), axis=1, keepdims=True))
    return ad.div(z, norm)


def forward_classify(model: CdaModel, z, train_mode: bool = False, rng=None) -> Tensor:
    z = _check_input(z, model.embed_dim, "forward_classify")
    return _run(model.classifier, z, rng if train_mode else None)


def forward_discriminate(model: CdaModel, z, train_mode: bool = False, rng=None) -> Tensor:
    z = _check_input(z, model.embed_dim, "forward_discriminate")
    return _run(model.discriminator, z, rng if train_mode else None)


def predict_logits(model: CdaModel, x) -> np.ndarray:
    """Eval-mode ``C(G(x))`` as a plain array."""
    return forward_classify(model, forward_embed(model, x)).data


# ------------------------------------------------------------------ checkpoints


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(model: CdaModel, path, config: Optional[dict] = None) -> Path:
    """Write shapes, activations and raw little-endian float64 arrays.

    The format is ``MAGIC | u32 header length | JSON header | array bytes``;
    no timestamps are stored so identical models give identical files.
    """
    path = Path(path)
    layers = []
    blobs = []
    for net, stack in model.networks().items():
        for layer in stack:
            layers.append(
                {
                    "net": net,
                    "in": layer.in_dim,
                    "out": layer.out_dim,
                    "activation": layer.activation,
                    "dropout": layer.dropout_rate,
                }
            )
            blobs.append(layer.weight.data.astype("<f8").tobytes())
            blobs.append(layer.bias.data.astype("<f8").tobytes())
    header = {
        "version": CHECKPOINT_VERSION,
        "meta": model.meta,
        "config_hash": config_hash(config) if config is not None else None,
        "layers": layers,
    }
    hdr = json.dumps(header, sort_keys=True).encode()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(hdr)))
        f.write(hdr)
        for b in blobs:
            f.write(b)
    return path


def load_checkpoint(path) -> CdaModel:
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a CDA checkpoint")
    off = len(CHECKPOINT_MAGIC)
    (n,) = struct.unpack_from("<I", raw, off)
    off += 4
    header = json.loads(raw[off : off + n])
    off += n
    if header["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header['version']}")
    nets = {"G": [], "C": [], "D": []}
    for entry in header["layers"]:
        i, o = entry["in"], entry["out"]
        w = np.frombuffer(raw, "<f8", i * o, off).reshape(i, o).astype(np.float64)
        off += 8 * i * o
        b = np.frombuffer(raw, "<f8", o, off).astype(np.float64)
        off += 8 * o
        nets[entry["net"]].append(
            DenseLayer(ad.parameter(w), ad.parameter(b), entry["activation"], entry["dropout"])
        )
    if off != len(raw):
        raise ValueError(f"{path}: trailing or missing bytes in checkpoint")
    return CdaModel(nets["G"], nets["C"], nets["D"], header["meta"])
