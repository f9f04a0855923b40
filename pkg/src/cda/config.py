"""Run configuration files: flat ``key = value`` INI sections with ``#`` comments.

Sections are ``[experiment]``, ``[data]``, ``[model]``, ``[schedule]``,
``[train]`` and ``[output]``. Overrides use ``key=value`` or
``section.key=value``; a bare key must be unambiguous across sections.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data import LabeledDataset, UnlabeledDataset, colorize_shift, gen_blobs, gen_two_moons, load_idx
from .schedule import ScheduleConfig
from .trainer import ModelConfig, TrainConfig

SECTIONS = ("experiment", "data", "model", "schedule", "train", "output")

DEFAULTS: Dict[str, Dict[str, str]] = {
    "experiment": {"name": "cda"},
    "data": {
        "generator": "two-moons",
        "n_source": "1000",
        "n_target": "1000",
        "noise": "0.1",
        "source_rotation": "0",
        "target_rotation": "30",
        "source_translate": "0,0",
        "target_translate": "0,0",
        "source_seed": "1000",
        "target_seed": "2000",
        "centers": "",
        "blob_sd": "0.5",
        "target_shift": "0,0",
        "source_images": "",
        "source_labels": "",
        "target_images": "",
        "target_labels": "",
        "limit": "",
        "num_classes": "10",
        "colorize_target": "true",
    },
    "model": {"gen_hidden": "64,64", "embed_dim": "32", "head_dims": "64,32", "dropout": "0.3"},
    "schedule": {"E": "60", "E_prime": "15", "E_double_prime": "25", "gamma": "10", "alpha": "1"},
    "train": {
        "lr0": "5e-4",
        "batch_size": "128",
        "tau": "0.5",
        "lr_decay": "0.8",
        "lr_period": "20",
        "weight_decay": "0.01",
        "adam_beta1": "0.9",
        "adam_beta2": "0.999",
        "adam_eps": "1e-8",
        "seed": "0",
        "contrastive_enabled": "true",
        "adversarial_enabled": "true",
        "checkpoint_every": "10",
    },
    "output": {"dir": ""},
}

GENERATORS = ("two-moons", "blobs", "idx")


class ConfigError(ValueError):
    """Raised with every violated invariant listed in ``problems``."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid config:\n  " + "\n  ".join(self.problems))


@dataclass
class RunConfig:
    name: str
    data: Dict[str, str]
    model: ModelConfig
    train: TrainConfig
    output_dir: Path
    raw: Dict[str, Dict[str, str]] = field(default_factory=dict)

    def config_hash(self) -> str:
        blob = repr(sorted((s, sorted(v.items())) for s, v in self.raw.items())).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package, e.g. ``twomoons_cda.cfg``."""
    return Path(str(resources.files("cda") / "configs" / name))


def _resolve(path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    b = bundled_config(p.name)
    if b.exists():
        return b
    raise ConfigError([f"config file not found: {path}"])


def read_raw(path, overrides: Sequence[str] = ()) -> Dict[str, Dict[str, str]]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str  # keep E_prime / E vs e distinct
    parser.read_dict(DEFAULTS)
    path = _resolve(path)
    with open(path) as f:
        parser.read_file(f)
    problems = [f"unknown section [{s}]" for s in parser.sections() if s not in SECTIONS]
    for s in SECTIONS:
        for k in parser[s]:
            if k not in DEFAULTS[s]:
                problems.append(f"unknown key {s}.{k}")
    for item in overrides:
        if "=" not in item:
            problems.append(f"override {item!r} is not key=value")
            continue
        key, value = (t.strip() for t in item.split("=", 1))
        if "." in key:
            sec, k = key.split(".", 1)
            if sec not in SECTIONS or k not in DEFAULTS[sec]:
                problems.append(f"unknown override key {key}")
                continue
        else:
            owners = [s for s in SECTIONS if key in DEFAULTS[s]]
            if len(owners) != 1:
                problems.append(f"override key {key!r} is {'ambiguous' if owners else 'unknown'}")
                continue
            sec, k = owners[0], key
        parser[sec][k] = value
    if problems:
        raise ConfigError(problems)
    return {s: dict(parser[s]) for s in SECTIONS}


def _ints(s: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _floats(s: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def load_config(path, overrides: Sequence[str] = (), out_dir: Optional[str] = None) -> RunConfig:
    """Parse, apply overrides and validate; raises ``ConfigError`` listing all problems."""
    raw = read_raw(path, overrides)
    problems: List[str] = []

    def get(sec, key, conv):
        try:
            return conv(raw[sec][key])
        except (ValueError, TypeError) as exc:
            problems.append(f"{sec}.{key}: {exc}")
            return None

    model = ModelConfig(
        get("model", "gen_hidden", _ints),
        get("model", "embed_dim", int),
        get("model", "head_dims", _ints),
        get("model", "dropout", float),
    )
    sched = ScheduleConfig(
        get("schedule", "E", int),
        get("schedule", "E_prime", int),
        get("schedule", "E_double_prime", int),
        get("schedule", "gamma", float),
        get("schedule", "alpha", float),
    )
    conv = {
        "lr0": float, "batch_size": int, "tau": float, "lr_decay": float, "lr_period": int,
        "weight_decay": float, "adam_beta1": float, "adam_beta2": float, "adam_eps": float,
        "seed": int, "contrastive_enabled": _bool, "adversarial_enabled": _bool,
        "checkpoint_every": int,
    }
    tvals = {k: get("train", k, c) for k, c in conv.items()}
    if problems:
        raise ConfigError(problems)

    if sched.E_double_prime < sched.E_prime:
        # Named explicitly; the ordering of stage boundaries is the common mistake.
        problems.append(
            f"schedule: E_double_prime >= E_prime violated "
            f"(E_double_prime={sched.E_double_prime} < E_prime={sched.E_prime})"
        )
    train_cfg = TrainConfig(schedule=sched, model=model, **tvals)
    problems += [p for p in train_cfg.violations() if "E_double_prime >= E_prime" not in p]
    if any(d <= 0 for d in (*model.gen_hidden, model.embed_dim, *model.head_dims)):
        problems.append("model: all layer dims must be positive")
    problems += _data_problems(raw["data"])
    if problems:
        raise ConfigError(problems)

    name = raw["experiment"]["name"]
    if out_dir:
        out = Path(out_dir)
    elif raw["output"]["dir"]:
        out = Path(raw["output"]["dir"])
    else:
        out = Path(os.environ.get("CDA_OUT_DIR", "runs")) / name
    return RunConfig(name, raw["data"], model, train_cfg, out, raw)


def _data_problems(d: Dict[str, str]) -> List[str]:
    out = []
    gen = d["generator"]
    if gen not in GENERATORS:
        return [f"data.generator must be one of {', '.join(GENERATORS)} (got {gen!r})"]
    if gen == "idx":
        for key in ("source_images", "source_labels", "target_images"):
            if not d[key]:
                out.append(f"data.{key} is required for the idx generator")
            elif not Path(d[key]).exists():
                out.append(f"data.{key}: path does not exist: {d[key]}")
        if d["target_labels"] and not Path(d["target_labels"]).exists():
            out.append(f"data.target_labels: path does not exist: {d['target_labels']}")
        return out
    try:
        if int(d["n_source"]) < 2 or int(d["n_target"]) < 2:
            out.append("data: n_source and n_target must be >= 2")
        if float(d["noise"]) < 0:
            out.append("data.noise must be >= 0")
        if gen == "blobs" and len(_centers(d)) < 2:
            out.append("data.centers must list at least 2 centers")
    except ValueError as exc:
        out.append(f"data: {exc}")
    return out


def _centers(d: Dict[str, str]):
    sd = float(d["blob_sd"])
    pts = [p for p in d["centers"].split(";") if p.strip()]
    return [(_floats(p), sd) for p in pts]


def build_datasets(cfg: RunConfig) -> Tuple[LabeledDataset, UnlabeledDataset]:
    """Source (labeled) and target (labels hidden) datasets for a run config."""
    d = cfg.data
    gen = d["generator"]
    if gen == "two-moons":
        noise = float(d["noise"])
        src = gen_two_moons(
            int(d["n_source"]), noise, float(d["source_rotation"]), _floats(d["source_translate"]),
            int(d["source_seed"]), "source",
        )
        tgt = gen_two_moons(
            int(d["n_target"]), noise, float(d["target_rotation"]), _floats(d["target_translate"]),
            int(d["target_seed"]), "target",
        )
        return src, tgt.unlabeled("target")
    if gen == "blobs":
        centers = _centers(d)
        src = gen_blobs(int(d["n_source"]), centers, None, int(d["source_seed"]), "source")
        tgt = gen_blobs(
            int(d["n_target"]), centers, _floats(d["target_shift"]), int(d["target_seed"]), "target"
        )
        return src, tgt.unlabeled("target")
    limit = int(d["limit"]) if d["limit"] else None
    n_cls = int(d["num_classes"])
    src = load_idx(d["source_images"], d["source_labels"], limit, n_cls)
    tgt_labels = d["target_labels"] or None
    tgt = load_idx(d["target_images"], tgt_labels, limit, n_cls)
    if isinstance(tgt, LabeledDataset):
        if _bool(d["colorize_target"]):
            tgt = colorize_shift(tgt, int(d["target_seed"]))
            src = colorize_shift(src, int(d["source_seed"]), opacity=0.0)
        return src, tgt.unlabeled("target")
    return src, tgt


def dataset_checksum(ds) -> str:
    h = hashlib.sha256(np.ascontiguousarray(ds.X).tobytes())
    y = getattr(ds, "Y", None)
    if y is not None:
        h.update(np.ascontiguousarray(y).tobytes())
    return h.hexdigest()
