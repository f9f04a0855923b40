import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cda.autodiff import parameter
from cda import autodiff as ad
from cda.schedule import (
    ScheduleConfig,
    Stage,
    StepWeights,
    beta_at,
    lambda_at,
    stage_of,
    total_loss,
    weights_at,
)

OFFICE = ScheduleConfig(E=90, E_prime=25, E_double_prime=35)
DIGITS = ScheduleConfig(E=200, E_prime=40, E_double_prime=60)


def test_lambda_zero_before_and_at_switch_on():
    assert lambda_at(OFFICE.E_prime - 1, OFFICE) == 0.0
    assert lambda_at(OFFICE.E_prime, OFFICE) == 0.0


def test_lambda_known_point():
    # p = (e - E') / (E - E') = 0.21972 with E'=0, E=100000 -> e = 21972
    cfg = ScheduleConfig(E=100000, E_prime=0, E_double_prime=0, gamma=10)
    assert lambda_at(21972, cfg) == pytest.approx(0.8, abs=1e-5)


def test_lambda_rejects_epoch_beyond_E():
    with pytest.raises(ValueError):
        lambda_at(91, OFFICE)
    with pytest.raises(ValueError):
        beta_at(91, OFFICE)


def test_beta_zero_at_switch():
    assert beta_at(OFFICE.E_double_prime, OFFICE) == 0.0


def test_beta_endpoint():
    cfg = ScheduleConfig(E=70, E_prime=25, E_double_prime=35, alpha=1)
    assert beta_at(70, cfg) == 1.0


def test_beta_midpoint():
    cfg = ScheduleConfig(E=100, E_prime=20, E_double_prime=40, alpha=2)
    assert beta_at(50, cfg) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("e,stage", [(10, Stage.SOURCE_ONLY), (30, Stage.ADVERSARIAL), (80, Stage.CROSS_DOMAIN)])
def test_stage_of_office_values(e, stage):
    assert stage_of(e, OFFICE) is stage


def test_total_loss_source_only():
    w = StepWeights(0.0, 0.0, Stage.SOURCE_ONLY)
    assert total_loss({"SupCL": 0.5, "CE": 1.0}, w) == 1.5


def test_total_loss_adversarial_with_zero_lambda_equals_source_only():
    w0 = StepWeights(0.0, 0.0, Stage.SOURCE_ONLY)
    w1 = StepWeights(0.0, 0.0, Stage.ADVERSARIAL)
    parts = {"SupCL": 0.5, "CE": 1.0, "Adv": -1.2}
    assert total_loss(parts, w1) == total_loss(parts, w0)


def test_total_loss_cross_domain_arithmetic():
    w = StepWeights(1.0, 0.5, Stage.CROSS_DOMAIN)
    v = total_loss({"CE": 1.0, "Adv": -1.386, "CrossCL": 0.4}, w)
    assert v == pytest.approx(-0.186, abs=1e-12)


def test_total_loss_ignores_supcl_in_cross_domain():
    w = StepWeights(1.0, 0.5, Stage.CROSS_DOMAIN)
    parts = {"CE": 1.0, "Adv": -1.386, "CrossCL": 0.4, "SupCL": 99.0}
    assert total_loss(parts, w) == pytest.approx(-0.186, abs=1e-12)


def test_total_loss_missing_part_named():
    with pytest.raises(KeyError, match="Adv"):
        total_loss({"CE": 1.0, "SupCL": 0.2}, StepWeights(0.3, 0.0, Stage.ADVERSARIAL))


def test_total_loss_on_tensors_is_differentiable():
    ce, adv = parameter(1.0), parameter(-1.0)
    t = total_loss({"CE": ce, "Adv": adv, "CrossCL": None}, StepWeights(0.25, 0.0, Stage.CROSS_DOMAIN))
    ad.backward(t)
    assert ce.grad == 1.0 and adv.grad == 0.25


def test_invalid_schedule_rejected():
    bad = ScheduleConfig(E=60, E_prime=30, E_double_prime=20)
    with pytest.raises(ValueError, match="E_double_prime >= E_prime"):
        bad.validate()


configs = st.builds(
    lambda E, a, b, g, al: ScheduleConfig(E, min(a, b) % (E + 1), max(a, b) % (E + 1) if max(a, b) <= E else E, g, al),
    st.integers(1, 300),
    st.integers(0, 300),
    st.integers(0, 300),
    st.floats(0.1, 50),
    st.floats(0.1, 5),
).filter(lambda c: not c.violations())


@given(configs)
def test_weights_monotone_bounded_and_gated(cfg):
    prev = weights_at(0, cfg)
    order = list(Stage)
    for e in range(0, cfg.E + 1):
        w = weights_at(e, cfg)
        assert 0.0 <= w.lam <= 1.0  # exp(-gamma) underflows relative to 1 for large gamma
        assert 0.0 <= w.beta <= 1.0
        assert w.lam >= prev.lam and w.beta >= prev.beta
        assert order.index(w.stage) >= order.index(prev.stage)
        if w.stage is Stage.SOURCE_ONLY:
            assert w.lam == 0.0 and w.beta == 0.0
        if w.stage is not Stage.CROSS_DOMAIN:
            assert w.beta == 0.0
        prev = w


@given(configs)
def test_lambda_continuous_at_switch_on(cfg):
    if cfg.E_prime <= cfg.E:
        assert lambda_at(cfg.E_prime, cfg) == 0.0


def test_beta_reaches_one_exactly():
    cfg = ScheduleConfig(E=100, E_prime=10, E_double_prime=20, alpha=1)
    assert beta_at(40, cfg) == 1.0
    assert beta_at(39, cfg) < 1.0
    assert math.isclose(beta_at(30, cfg), 0.5)
