import pytest
from hypothesis import given
from hypothesis import strategies as st

from tactile_esc.objective import (DISC_DETAINER_EARLY_DEPTH, LAMBDA_STRAIN, LOCK_DEPTHS,
                                   SUCCESS_EPSILON, ObjectiveConfig, check_success,
                                   insertion_loss, total_loss)

PIN = ObjectiveConfig(depth_d=0.018)


def test_published_constants():
    assert LAMBDA_STRAIN == 0.0005
    assert SUCCESS_EPSILON == 0.0005
    assert LOCK_DEPTHS == {"PinTumbler": 0.018, "Dimpled": 0.019, "Tubular": 0.007,
                           "DiscDetainer": 0.014}
    assert DISC_DETAINER_EARLY_DEPTH == 0.019


def test_insertion_loss_examples():
    cfg = PIN.with_y0(0.002)
    assert insertion_loss(0.002 - 0.018, cfg) == 0.0
    assert insertion_loss(0.002, cfg) == pytest.approx(0.018)
    assert insertion_loss(0.002 - 0.018 - 0.001, cfg) == pytest.approx(0.001)


def test_total_loss_examples():
    assert total_loss(0.018, 0.0, PIN) == 0.018
    assert total_loss(0.018, 10.0, PIN) == pytest.approx(0.023)
    assert total_loss(0.0, 0.0, PIN) == 0.0


@pytest.mark.parametrize("ins, ok", [(0.0004, True), (0.0005, False), (0.018, False)])
def test_success_is_strict(ins, ok):
    assert check_success(ins, PIN) is ok


@pytest.mark.parametrize("kwargs", [
    dict(depth_d=0.0), dict(depth_d=0.018, lam=-1.0), dict(depth_d=0.018, success_epsilon=0.0),
    dict(depth_d=0.018, strain_abort=0.0), dict(depth_d=0.007, lam=0.01),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ObjectiveConfig(**kwargs)


def test_default_lambda_is_commensurate_with_every_depth():
    for d in LOCK_DEPTHS.values():
        cfg = ObjectiveConfig(depth_d=d)
        assert cfg.lam * cfg.strain_abort <= 10 * d


finite = st.floats(0.0, 1.0)
strains = st.floats(0.0, 1e3)


@given(finite, strains, st.floats(1e-6, 1e-3))
def test_strictly_increasing_in_each_argument(ins, s, bump):
    assert total_loss(ins + bump, s, PIN) > total_loss(ins, s, PIN)
    assert total_loss(ins, s + bump * 1e3, PIN) > total_loss(ins, s, PIN)


@given(finite, strains)
def test_non_negative_and_zero_only_at_goal(ins, s):
    v = total_loss(ins, s, PIN)
    assert v >= 0.0
    assert (v == 0.0) == (ins == 0.0 and s == 0.0)
