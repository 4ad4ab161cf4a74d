import math

import pytest
from hypothesis import given, strategies as st

from mas_emergence.rewards import (RewardMode, RewardModel, base_weights, coin_gradient_cost, reward_model,
                                   two_rooms_contortion_cost)


def test_base_weights():
    assert base_weights() == (-1.0, 50.0)
    assert RewardModel().reward((3, 7), 1) == 49.0


@pytest.mark.parametrize("y, expected", [(1, -0.60), (5, -0.80), (9, -1.00)])
def test_coin_gradient_values(y, expected):
    assert coin_gradient_cost(4, y) == pytest.approx(expected, abs=1e-12)


def test_contortion_values():
    for y in range(1, 10):
        assert two_rooms_contortion_cost(4, y) == pytest.approx(-1.0, abs=1e-12)
    assert two_rooms_contortion_cost(12, 5) == pytest.approx(2 ** (1 / 3) - 1, abs=1e-12)
    # real cube root on the negative branch
    assert two_rooms_contortion_cost(1, 5) == pytest.approx(-(0.75 ** (1 / 3)) - 1, abs=1e-12)


def test_domain_errors():
    with pytest.raises(ValueError):
        coin_gradient_cost(1, 0)
    with pytest.raises(ValueError):
        two_rooms_contortion_cost(0, 1)
    with pytest.raises(ValueError):
        reward_model("nope")


@given(st.integers(1, 30), st.integers(1, 30))
def test_gradient_monotone_in_rows(x, y):
    assert coin_gradient_cost(x, y + 1) < coin_gradient_cost(x, y)


@given(st.integers(1, 30), st.integers(1, 30), st.booleans())
def test_step_cost_non_negative(x, y, clamp):
    m = RewardModel(RewardMode.TWO_ROOMS_CONTORTION)
    c = m.step_cost((x, y), clamp)
    assert c >= 0
    w = m.cost_weight((x, y))
    assert c == (0.0 if (w > 0 and clamp) else abs(w))
    assert math.isfinite(c)
