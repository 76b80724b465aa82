import json
import math

import numpy as np
import pytest

from quasirbf.asymptotics import power_expansion, tps_expansion
from quasirbf.lagrange import minimal_stencil
from quasirbf.mellin import eval_ft_closed_form_d1
from quasirbf.rbf_model import RbfSpec
from quasirbf.sobolev import (
    LimitDivergenceError,
    estimate_c_beta,
    ladder_check,
    phi_hat_bound,
    symbol_limit,
)

TPS21 = RbfSpec.tps(2, 1.0, 1)
ST21 = minimal_stencil(tps_expansion(TPS21), 2)
IMQ4 = RbfSpec.power(4, 1.0, -2, -0.5)
ST4 = minimal_stencil(power_expansion(IMQ4), 4)

BETA = (2 * math.pi, 0.0)


def test_symbol_limit_is_inverse_leading_coefficient():
    lim = symbol_limit(ST21, 4).value
    assert lim == pytest.approx(1 / (16 * math.pi), rel=1e-8)


def test_limit_stable_under_halving():
    a = symbol_limit(ST21, 4, t0=0.05).value
    b = symbol_limit(ST21, 4, t0=0.025).value
    assert abs(a - b) <= 1e-6 * abs(a)


def test_c_beta_matches_bessel_form():
    # |P(xi)| ~ |xi|^4 / (16 pi), phi_hat(s) = 8 pi K_2(s) / s^2 for (2, 1)
    ref = eval_ft_closed_form_d1(TPS21, 2 * math.pi) / (16 * math.pi)
    assert estimate_c_beta(ST21, TPS21, BETA, 4) == pytest.approx(ref, rel=1e-6)
    assert ref == pytest.approx(1.5588e-5, rel=1e-4)


def test_c_beta_case_table():
    assert estimate_c_beta(ST21, TPS21, BETA, 3) == 0.0
    with pytest.raises(LimitDivergenceError):
        estimate_c_beta(ST21, TPS21, BETA, 5)


@pytest.mark.parametrize("beta", [(1.0, 0.0), (0.0, 0.0), (2 * math.pi,)])
def test_beta_validation(beta):
    with pytest.raises(ValueError):
        estimate_c_beta(ST21, TPS21, beta, 4)


def test_phi_hat_bound_far_out():
    val, exact = phi_hat_bound(TPS21, 2 * math.pi * 20)
    assert val >= 0 and val < 1e-30
    v, e = phi_hat_bound(TPS21, 2 * math.pi)
    assert e


def test_ladder_tps_small_radius():
    lc = ladder_check(ST21, TPS21, 4, 0.0, radius=4)
    assert all(math.isfinite(c) and c >= 0 for c in lc.c_beta_table.values())
    assert len(lc.c_beta_table) == 9**2 - 1
    assert all(b >= a for a, b in zip(lc.partial_sums, lc.partial_sums[1:]))
    assert lc.converged


def test_ladder_below_order_is_zero():
    lc = ladder_check(ST21, TPS21, 3, 0.0, radius=3)
    assert all(c == 0.0 for c in lc.c_beta_table.values())
    assert lc.converged and lc.partial_sum == 0.0


def test_ladder_input_validation():
    with pytest.raises(ValueError):
        ladder_check(ST21, TPS21, 4, 4.0)
    with pytest.raises(ValueError):
        ladder_check(ST21, TPS21, 4, 0.0, radius=1)


def test_ladder_imq_algebraic():
    lc = ladder_check(ST4, IMQ4, 2, 0.5, radius=4)
    assert lc.decay == "algebraic"
    # c_beta ~ |beta|^(-n - lam beta) = |beta|^-5, shells add |beta|^(n-1): 2 (-5) + 2 s + 3
    assert lc.fitted_exponent == pytest.approx(-6.0, abs=0.3)
    assert lc.converged


def test_ladder_json_deterministic():
    lc = ladder_check(ST21, TPS21, 4, 0.0, radius=2)
    a, b = lc.to_json(), ladder_check(ST21, TPS21, 4, 0.0, radius=2).to_json()
    assert a == b
    rows = json.loads(a)["c_beta_table"]
    assert rows[0]["m"] == [-2, -2]
    assert np.isclose(rows[0]["beta_norm"], 2 * math.pi * math.sqrt(8))
