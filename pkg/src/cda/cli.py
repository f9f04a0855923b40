"""``cda`` command line: gen, train, eval, ablate, plot.

Exit codes: 0 success, 2 configuration or usage error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import data as data_mod
from .config import ConfigError, RunConfig, build_datasets, dataset_checksum, load_config
from .metrics import EmbeddingDump, export_history, render_scatter, pca_project, write_embeddings
from .nn import forward_embed, load_checkpoint
from .trainer import DivergenceError, evaluate, pseudo_labels, train

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 2, 3

log = logging.getLogger("cda")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="run config file (or bundled config name)")
    p.add_argument(
        "--override", action="append", default=[], metavar="KEY=VALUE",
        help="override a config value; repeatable",
    )
    p.add_argument("--out", default=None, help="output directory (default: config, then $CDA_OUT_DIR)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cda", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset as CSV")
    g.add_argument("generator", help="two-moons or blobs")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--rotation", type=float, default=0.0)
    g.add_argument("--translate", default="0,0")
    g.add_argument("--centers", default="0,0;3,0", help="blobs: 'x,y;x,y;...'")
    g.add_argument("--sd", type=float, default=0.5, help="blobs: cluster sd")
    g.add_argument("--shift", default="0,0", help="blobs: shift vector")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--unlabeled", action="store_true", help="write label -1 for every row")
    g.add_argument("--out", default=None, help="output CSV (default: <generator>.csv)")

    t = sub.add_parser("train", help="train one model from a config")
    _add_config_args(t)

    e = sub.add_parser("eval", help="evaluate a checkpoint on the config's datasets")
    _add_config_args(e)
    e.add_argument("--checkpoint", required=True)

    a = sub.add_parser("ablate", help="CDA vs adversarial-only run on identical data")
    _add_config_args(a)

    pl = sub.add_parser("plot", help="embedding dump + PCA scatter for a checkpoint")
    _add_config_args(pl)
    pl.add_argument("--checkpoint", required=True)
    pl.add_argument("--svg", default=None)
    return parser


def _floats(s: str) -> List[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def cmd_gen(args) -> int:
    if args.generator == "two-moons":
        ds = data_mod.gen_two_moons(args.n, args.noise, args.rotation, _floats(args.translate), args.seed)
    elif args.generator == "blobs":
        centers = [(_floats(c), args.sd) for c in args.centers.split(";") if c.strip()]
        ds = data_mod.gen_blobs(args.n, centers, _floats(args.shift), args.seed)
    else:
        print(f"cda gen: unknown generator {args.generator!r} (choose two-moons or blobs)", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out or f"{args.generator}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    n = data_mod.write_csv(out, ds, hide_labels=args.unlabeled)
    print(f"wrote {n} rows to {out}")
    return EXIT_OK


def _load(args) -> RunConfig:
    return load_config(args.config, args.override, args.out)


def _run(cfg: RunConfig, out_dir: Path, train_cfg=None):
    src, tgt = build_datasets(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    return src, tgt, train(train_cfg or cfg.train, src, tgt, out_dir)


def cmd_train(args) -> int:
    cfg = _load(args)
    _, _, (model, history) = _run(cfg, cfg.output_dir)
    last = history[-1]
    print(f"history={cfg.output_dir / 'history.csv'}")
    print(f"final_source_acc={last.src_acc:.6g}")
    print(f"final_target_acc={last.tgt_acc:.6g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load(args)
    src, tgt = build_datasets(cfg)
    model = load_checkpoint(args.checkpoint)
    print(f"source_acc={evaluate(model, src):.6g}")
    if tgt.hidden_Y is not None:
        print(f"target_acc={evaluate(model, tgt):.6g}")
    return EXIT_OK


def embedding_dump(model, src, tgt, epoch: int = 0, config_hash: str = "") -> EmbeddingDump:
    """Source rows carry true labels, target rows carry pseudo-labels."""
    zs = forward_embed(model, src.X).data
    zt = forward_embed(model, tgt.X).data
    labels = np.concatenate([src.Y, pseudo_labels(model, tgt.X)])
    domains = ["source"] * len(src) + ["target"] * len(tgt)
    return EmbeddingDump(domains, labels, np.vstack([zs, zt]), epoch, config_hash)


def _scatter(model, src, tgt, out_dir: Path, stem: str, title: str, epoch: int, chash: str) -> Path:
    dump = embedding_dump(model, src, tgt, epoch, chash)
    write_embeddings(dump, out_dir / f"{stem}_embeddings.csv")
    # Colour target points by their true class when known, as in the usual figure.
    labels = dump.labels.copy()
    if tgt.hidden_Y is not None:
        labels[len(src):] = tgt.hidden_Y
    coords = pca_project(dump.embeddings, 2)
    return render_scatter(coords, labels, dump.domains, out_dir / f"{stem}_scatter.svg", title)


def cmd_plot(args) -> int:
    cfg = _load(args)
    src, tgt = build_datasets(cfg)
    model = load_checkpoint(args.checkpoint)
    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    svg = _scatter(model, src, tgt, out_dir, Path(args.checkpoint).stem, cfg.name, 0, cfg.config_hash())
    if args.svg:
        Path(args.svg).write_bytes(svg.read_bytes())
        svg = Path(args.svg)
    print(f"svg={svg}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _load(args)
    root = cfg.output_dir
    cda_cfg = replace(cfg.train, contrastive_enabled=True)
    dann_cfg = replace(cfg.train, contrastive_enabled=False)
    src_a, tgt_a, (cda_model, cda_hist) = _run(cfg, root / "cda", cda_cfg)
    src_b, tgt_b, (dann_model, dann_hist) = _run(cfg, root / "dann", dann_cfg)

    with open(root / "ablation.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "cda_tgt_acc", "dann_tgt_acc"])
        for a, b in zip(cda_hist, dann_hist):
            w.writerow([a.epoch, f"{a.tgt_acc:.6g}", f"{b.tgt_acc:.6g}"])
    chash = cfg.config_hash()
    E = cfg.train.schedule.E
    _scatter(cda_model, src_a, tgt_a, root, "cda", "CDA", E, chash)
    _scatter(dann_model, src_b, tgt_b, root, "dann", "DANN", E, chash)
    sums = {
        "source_checksum_cda": dataset_checksum(src_a),
        "source_checksum_dann": dataset_checksum(src_b),
        "target_checksum_cda": dataset_checksum(tgt_a),
        "target_checksum_dann": dataset_checksum(tgt_b),
        "final_cda_tgt_acc": f"{cda_hist[-1].tgt_acc:.6g}",
        "final_dann_tgt_acc": f"{dann_hist[-1].tgt_acc:.6g}",
    }
    (root / "ablation_summary.txt").write_text("".join(f"{k}={v}\n" for k, v in sums.items()))
    for k, v in sums.items():
        print(f"{k}={v}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate, "plot": cmd_plot}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"cda {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"cda {args.command}: diverged: {exc}", file=sys.stderr)
        if exc.checkpoint is not None:
            print(f"checkpoint={exc.checkpoint}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValueError, OSError) as exc:
        print(f"cda {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
