"""Training stages and the ramped loss weights lambda (adversarial) and beta (cross-domain)."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Union

from .autodiff import Tensor


class Stage(str, enum.Enum):
    SOURCE_ONLY = "source_only"
    ADVERSARIAL = "adversarial"
    CROSS_DOMAIN = "cross_domain"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ScheduleConfig:
    """Epoch boundaries and ramp shapes.

    ``E_prime`` ends source-only training, ``E_double_prime`` switches the
    supervised contrastive term for the cross-domain one, ``E`` is the total.
    """

    E: int
    E_prime: int
    E_double_prime: int
    gamma: float = 10.0
    alpha: float = 1.0

    def violations(self) -> list:
        out = []
        if not 0 <= self.E_prime:
            out.append(f"E_prime >= 0 (got {self.E_prime})")
        if self.E_double_prime < self.E_prime:
            out.append(
                f"E_double_prime >= E_prime (got E_double_prime={self.E_double_prime}, "
                f"E_prime={self.E_prime})"
            )
        if self.E_double_prime > self.E:
            out.append(f"E_double_prime <= E (got {self.E_double_prime} > {self.E})")
        if self.E < 1:
            out.append(f"E >= 1 (got {self.E})")
        if not self.gamma > 0:
            out.append(f"gamma > 0 (got {self.gamma})")
        if not self.alpha > 0:
            out.append(f"alpha > 0 (got {self.alpha})")
        return out

    def validate(self) -> "ScheduleConfig":
        bad = self.violations()
        if bad:
            raise ValueError("invalid schedule: " + "; ".join(bad))
        return self


@dataclass(frozen=True)
class StepWeights:
    lam: float
    beta: float
    stage: Stage


def _check_epoch(e: int, cfg: ScheduleConfig) -> None:
    if e < 0 or e > cfg.E:
        raise ValueError(f"epoch {e} outside [0, {cfg.E}]")


def progress(e: int, cfg: ScheduleConfig) -> float:
    """Fraction of the post-stage-I budget consumed at epoch ``e``, in [0, 1]."""
    span = cfg.E - cfg.E_prime
    if span <= 0:
        return 0.0
    return min(1.0, max(0.0, (e - cfg.E_prime) / span))


def lambda_at(e: int, cfg: ScheduleConfig) -> float:
    _check_epoch(e, cfg)
    if e < cfg.E_prime:
        return 0.0
    p = progress(e, cfg)
    return 2.0 / (1.0 + math.exp(-cfg.gamma * p)) - 1.0


def beta_at(e: int, cfg: ScheduleConfig) -> float:
    _check_epoch(e, cfg)
    if e <= cfg.E_double_prime or stage_of(e, cfg) is not Stage.CROSS_DOMAIN:
        return 0.0
    # E'' = 0 (adversarial-only runs) would divide by zero; the ramp is then immediate.
    if cfg.E_double_prime == 0:
        return 1.0
    return min(1.0, cfg.alpha * (e - cfg.E_double_prime) / cfg.E_double_prime)


def stage_of(e: int, cfg: ScheduleConfig) -> Stage:
    if e < cfg.E_prime:
        return Stage.SOURCE_ONLY
    if e < cfg.E_double_prime:
        return Stage.ADVERSARIAL
    return Stage.CROSS_DOMAIN


def weights_at(e: int, cfg: ScheduleConfig) -> StepWeights:
    return StepWeights(lambda_at(e, cfg), beta_at(e, cfg), stage_of(e, cfg))


Number = Union[float, Tensor]

_REQUIRED = {
    Stage.SOURCE_ONLY: ("SupCL", "CE"),
    Stage.ADVERSARIAL: ("SupCL", "CE", "Adv"),
    Stage.CROSS_DOMAIN: ("CE", "Adv", "CrossCL"),
}


def total_loss(parts: Mapping[str, Optional[Number]], w: StepWeights) -> Number:
    """Weighted sum of the stage's loss parts.

    SOURCE_ONLY: SupCL + CE; ADVERSARIAL: SupCL + CE + lam*Adv;
    CROSS_DOMAIN: CE + lam*Adv + beta*CrossCL. ``parts`` values may be floats
    or graph tensors; a part whose weight is zero may be given as ``None``.
    """
    weights = {"SupCL": 1.0, "CE": 1.0, "Adv": w.lam, "CrossCL": w.beta}
    total = 0.0
    for name in _REQUIRED[w.stage]:
        if name not in parts:
            raise KeyError(f"total_loss: missing required part {name!r} for stage {w.stage}")
        value = parts[name]
        if value is None:
            if weights[name] != 0.0:
                raise KeyError(f"total_loss: part {name!r} is None but its weight is nonzero")
            continue
        value = getattr(value, "value", value)
        total = total + (value if weights[name] == 1.0 else value * weights[name])
    return total
