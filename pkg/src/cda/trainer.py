"""Staged training loop: source-only warm-up, adversarial alignment, cross-domain contrast."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import autodiff as ad
from . import losses
from .data import LabeledDataset, UnlabeledDataset, batches, epoch_rng
from .metrics import HistoryWriter, accuracy
from .nn import (
    CdaModel,
    forward_classify,
    forward_discriminate,
    forward_embed,
    init_model,
    l2_normalize,
    predict_logits,
    save_checkpoint,
)
from .schedule import ScheduleConfig, Stage, StepWeights, weights_at

logger = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    def __init__(self, message: str, checkpoint: Optional[Path] = None):
        super().__init__(message if checkpoint is None else f"{message} (last good checkpoint: {checkpoint})")
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class ModelConfig:
    gen_hidden: Tuple[int, ...] = (64, 64)
    embed_dim: int = 32
    head_dims: Tuple[int, ...] = (64, 32)
    dropout: float = 0.3


@dataclass(frozen=True)
class TrainConfig:
    schedule: ScheduleConfig
    lr0: float = 5e-4
    batch_size: int = 128
    tau: float = 0.5
    lr_decay: float = 0.8
    lr_period: int = 20
    weight_decay: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    contrastive_enabled: bool = True
    adversarial_enabled: bool = True
    checkpoint_every: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)

    def violations(self) -> List[str]:
        out = list(self.schedule.violations())
        if not self.lr0 > 0:
            out.append(f"lr0 > 0 (got {self.lr0})")
        if not 0 < self.lr_decay <= 1:
            out.append(f"0 < lr_decay <= 1 (got {self.lr_decay})")
        if self.lr_period < 1:
            out.append(f"lr_period >= 1 (got {self.lr_period})")
        if self.batch_size < 2:
            out.append(f"batch_size >= 2 (got {self.batch_size})")
        if not self.tau > 0:
            out.append(f"tau > 0 (got {self.tau})")
        if self.weight_decay < 0:
            out.append(f"weight_decay >= 0 (got {self.weight_decay})")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            out.append("adam betas in [0, 1)")
        if not self.adam_eps > 0:
            out.append(f"adam_eps > 0 (got {self.adam_eps})")
        if self.checkpoint_every < 0:
            out.append(f"checkpoint_every >= 0 (got {self.checkpoint_every})")
        if not 0 <= self.model.dropout <= 0.5:
            out.append(f"dropout in [0, 0.5] (got {self.model.dropout})")
        return out

    def effective(self) -> "TrainConfig":
        """Adversarial-only (DANN) runs start adaptation immediately."""
        if self.contrastive_enabled:
            return self
        return replace(self, schedule=replace(self.schedule, E_prime=0, E_double_prime=0))

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class OptimizerState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "OptimizerState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params])


@dataclass
class EpochRecord:
    epoch: int
    stage: Stage
    lam: float
    beta: float
    l_ce: float
    l_supcl: float
    l_adv: float
    l_crosscl: float
    src_acc: float
    tgt_acc: float
    pseudo_acc: float
    lr: float
    crosscl_skipped: int = 0


# ------------------------------------------------------------------ pieces


def pseudo_labels(model: CdaModel, x_t) -> np.ndarray:
    """Eval-mode argmax of C(G(x)); ``np.argmax`` keeps the lowest index on ties."""
    return np.argmax(predict_logits(model, x_t), axis=1)


def evaluate(model: CdaModel, ds) -> float:
    y = ds.Y if isinstance(ds, LabeledDataset) else getattr(ds, "hidden_Y", None)
    if y is None:
        raise ValueError("evaluate: dataset has no labels")
    return accuracy(pseudo_labels(model, ds.X), y)


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    return cfg.lr0 * cfg.lr_decay ** (epoch // cfg.lr_period)


def adamw_step(params, grads, state: OptimizerState, lr: float, cfg: TrainConfig) -> None:
    """In-place AdamW update; weight decay scales the parameters directly."""
    if lr <= 0:
        raise ValueError(f"adamw_step: lr must be > 0, got {lr}")
    for i, g in enumerate(grads):
        if g.shape != params[i].data.shape:
            raise ad.ShapeError("adamw_step", params[i].data.shape, g.shape)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(
                f"adamw_step: non-finite gradient in parameter {i} (shape {g.shape})"
            )
    state.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for i, (p, g, m, v) in enumerate(zip(params, grads, state.m, state.v)):
        with np.errstate(over="ignore", invalid="ignore"):
            if cfg.weight_decay:
                p.data *= 1.0 - lr * cfg.weight_decay
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
        if not np.all(np.isfinite(p.data)):
            raise FloatingPointError(f"adamw_step: parameter {i} became non-finite at step {state.step}")


def step_weights(e: int, cfg: TrainConfig) -> StepWeights:
    w = weights_at(e, cfg.schedule)
    lam = w.lam if cfg.adversarial_enabled else 0.0
    beta = w.beta if cfg.contrastive_enabled else 0.0
    return StepWeights(lam, beta, w.stage)


@dataclass
class StepLosses:
    """Unweighted loss values of one iteration; zero when the term is inactive."""

    ce: float = 0.0
    supcl: float = 0.0
    adv: float = 0.0
    crosscl: float = 0.0
    crosscl_skipped: bool = False
    pseudo: Optional[np.ndarray] = None


def training_objective(
    model: CdaModel,
    x_s: np.ndarray,
    y_s: np.ndarray,
    x_t: np.ndarray,
    w: StepWeights,
    cfg: TrainConfig,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[ad.Tensor, StepLosses]:
    """Build the step graph and return the scalar to descend on.

    The domain term is the discriminator's cross-entropy (the negated
    adversarial loss) evaluated on ``gradient_reversal(z, lam)``: descending
    it trains D to separate domains while G receives ``lam``-scaled gradients
    that minimize the adversarial loss.
    """
    rec = StepLosses()
    need_target = w.lam > 0 or w.beta > 0
    z_s = forward_embed(model, x_s, train_mode=True, rng=rng)
    logits = forward_classify(model, z_s, train_mode=True, rng=rng)
    ce = losses.cross_entropy(logits, y_s)
    rec.ce = ce.item()
    objective = ce.value

    if cfg.contrastive_enabled and w.stage is not Stage.CROSS_DOMAIN:
        try:
            sup = losses.sup_contrastive(l2_normalize(z_s), y_s, cfg.tau)
        except losses.DegenerateBatchError:
            sup = None
        if sup is not None:
            rec.supcl = sup.item()
            objective = ad.add(objective, sup.value)

    z_t = forward_embed(model, x_t, train_mode=True, rng=rng) if need_target else None

    if w.lam > 0:
        z = ad.gradient_reversal(ad.concat([z_s, z_t], axis=0), w.lam)
        d_logit = forward_discriminate(model, z, train_mode=True, rng=rng)
        n_s = x_s.shape[0]
        adv = losses.adversarial_loss_from_logits(
            _rows(d_logit, 0, n_s), _rows(d_logit, n_s, d_logit.shape[0])
        )
        rec.adv = adv.item()
        objective = ad.sub(objective, adv.value)

    if w.beta > 0:
        rec.pseudo = pseudo_labels(model, x_t)
        try:
            cross = losses.cross_domain_contrastive(
                l2_normalize(z_s), y_s, l2_normalize(z_t), rec.pseudo, cfg.tau, model.num_classes
            )
        except losses.DegenerateBatchError:
            cross = None
            rec.crosscl_skipped = True
        if cross is not None:
            rec.crosscl = cross.item()
            objective = ad.add(objective, ad.mul(cross.value, w.beta))
    return objective, rec


def _rows(x: ad.Tensor, start: int, stop: int) -> ad.Tensor:
    sel = np.zeros((stop - start, x.shape[0]))
    sel[np.arange(stop - start), np.arange(start, stop)] = 1.0
    return ad.matmul(sel, x)


def _finite_or_raise(values: Dict[str, float], epoch: int, ckpt: Optional[Path]) -> None:
    bad = [k for k, v in values.items() if not math.isfinite(v)]
    if bad:
        raise DivergenceError(f"epoch {epoch}: non-finite {', '.join(bad)}", ckpt)


# ------------------------------------------------------------------- training


def train(
    config: TrainConfig,
    source: LabeledDataset,
    target: UnlabeledDataset,
    out_dir=None,
    model: Optional[CdaModel] = None,
) -> Tuple[CdaModel, List[EpochRecord]]:
    """Run epochs ``1..E`` and return the final model and per-epoch history.

    With ``out_dir`` set, ``history.csv`` is appended after every epoch,
    checkpoints go to ``checkpoints/epoch_XXXX.ckpt`` and the final model
    to ``final.ckpt``.
    """
    bad = config.violations()
    if bad:
        raise ValueError("invalid TrainConfig: " + "; ".join(bad))
    if source.in_dim != target.in_dim:
        raise ValueError(f"source in_dim {source.in_dim} != target in_dim {target.in_dim}")
    cfg = config.effective()
    sched = cfg.schedule
    if model is None:
        mc = cfg.model
        model = init_model(
            [source.in_dim, *mc.gen_hidden], mc.embed_dim, source.N, cfg.seed, mc.head_dims, mc.dropout
        )
    # One optimizer state per network so D's moments and decay start with its first update.
    groups = {
        net: [p for layer in layers for p in (layer.weight, layer.bias)]
        for net, layers in model.networks().items()
    }
    states = {net: OptimizerState.zeros_like(ps) for net, ps in groups.items()}
    hidden = target.hidden_Y

    out = Path(out_dir) if out_dir is not None else None
    writer = HistoryWriter(out / "history.csv") if out is not None else None
    last_ckpt: Optional[Path] = None
    history: List[EpochRecord] = []

    for e in range(1, sched.E + 1):
        w = step_weights(e, cfg)
        lr = lr_at(e - 1, cfg)
        rng = epoch_rng(cfg.seed, e, 2)
        sums = np.zeros(4)
        n_iter = 0
        skipped = 0
        pseudo_hits = pseudo_total = 0
        for batch in batches(source, target, cfg.batch_size, cfg.seed, e):
            model.zero_grad()
            pl = None
            try:
                if hidden is not None and w.beta == 0:
                    pl = pseudo_labels(model, batch.x_t)
                obj, rec = training_objective(model, batch.x_s, batch.y_s, batch.x_t, w, cfg, rng)
                ad.backward(obj)
                for net, ps in groups.items():
                    if net == "D" and w.lam == 0:
                        continue  # D is off the graph; do not decay it either
                    adamw_step(ps, [p.grad for p in ps], states[net], lr, cfg)
            except FloatingPointError as exc:
                raise DivergenceError(f"epoch {e}: {exc}", last_ckpt) from exc
            sums += (rec.ce, rec.supcl, rec.adv, rec.crosscl)
            n_iter += 1
            skipped += rec.crosscl_skipped
            if hidden is not None:
                pl = rec.pseudo if rec.pseudo is not None else pl
                pseudo_hits += int(np.sum(pl == hidden[batch.t_index]))
                pseudo_total += pl.shape[0]

        means = sums / max(n_iter, 1)
        try:
            src_acc = evaluate(model, source)
            tgt_acc = evaluate(model, target) if hidden is not None else float("nan")
        except FloatingPointError as exc:
            raise DivergenceError(f"epoch {e}: {exc}", last_ckpt) from exc
        record = EpochRecord(
            epoch=e,
            stage=w.stage,
            lam=w.lam,
            beta=w.beta,
            l_ce=means[0],
            l_supcl=means[1],
            l_adv=means[2],
            l_crosscl=means[3],
            src_acc=src_acc,
            tgt_acc=tgt_acc,
            pseudo_acc=pseudo_hits / pseudo_total if pseudo_total else float("nan"),
            lr=lr,
            crosscl_skipped=skipped,
        )
        _finite_or_raise(
            {"l_ce": record.l_ce, "l_supcl": record.l_supcl, "l_adv": record.l_adv, "l_crosscl": record.l_crosscl},
            e,
            last_ckpt,
        )
        history.append(record)
        logger.debug("epoch %d %s ce=%.4f tgt=%.3f", e, w.stage, record.l_ce, record.tgt_acc)
        if writer is not None:
            writer.append(record)
        if out is not None and cfg.checkpoint_every and e % cfg.checkpoint_every == 0:
            last_ckpt = save_checkpoint(model, out / "checkpoints" / f"epoch_{e:04d}.ckpt", cfg.as_dict())

    if out is not None:
        save_checkpoint(model, out / "final.ckpt", cfg.as_dict())
    return model, history
