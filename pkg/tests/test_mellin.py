import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import kv

from quasirbf.asymptotics import tps_expansion
from quasirbf.mellin import (
    Method,
    MbIntegrand,
    Which,
    _log_integrand,
    enumerate_poles,
    eval_ft,
    eval_ft_closed_form_d1,
    eval_phi_hat,
    oracle_hankel,
    residue_at,
    shape_of,
)
from quasirbf.rbf_model import RbfSpec, SpecError

# frozen from oracle_hankel (damped Hankel quadrature), agreement ~1e-7 or better
ORACLE = [
    (RbfSpec.tps(2, 1.0, 2), 1.0, -1628.2392396979305),
    (RbfSpec.tps(4, 1.0, 1), 0.7, 10115.760431947227),
    (RbfSpec.power(4, 1.0, -2, -0.5), 2.0, -1.8153662830243908),
    (RbfSpec.power(2, 1.0, 2, -1.5), 1.5, 1.4019681438332827),
]


def rel(a, b):
    return abs(a - b) / abs(b)


@pytest.mark.parametrize("spec,s,ref", ORACLE)
def test_frozen_oracle_values(spec, s, ref):
    assert rel(eval_phi_hat(spec, s), ref) < 1e-6


def test_even_d_is_negative():
    assert eval_phi_hat(RbfSpec.tps(2, 1.0, 2), 0.5) < 0
    assert eval_phi_hat(RbfSpec.tps(2, 1.0, 1), 0.5) > 0


def test_hardy_multiquadric_bessel_form():
    # sqrt(c^2 + x^2) in 1-D: -2 (c/s) K_1(c s)
    for c, s in [(1.0, 1.0), (0.5, 3.0), (2.0, 0.3)]:
        v = eval_phi_hat(RbfSpec.power(1, c, 2, 0.5), s)
        assert rel(v, -2 * c / s * kv(1, c * s)) < 1e-9


def test_closed_form_examples():
    n1 = eval_ft_closed_form_d1(RbfSpec.tps(1, 1.0, 1), 1.0)
    assert rel(n1, 4 * math.sqrt(2 * math.pi) * math.sqrt(math.pi / 2) * math.exp(-1) * 2) < 1e-13
    n2 = eval_ft_closed_form_d1(RbfSpec.tps(2, 1.0, 1), 1.0)
    assert rel(n2, 8 * math.pi * kv(2, 1.0)) < 1e-13
    with pytest.raises(SpecError):
        eval_ft_closed_form_d1(RbfSpec.tps(2, 1.0, 2), 1.0)


def test_closed_form_exponential_decay():
    spec = RbfSpec.tps(2, 1.0, 1)
    a, b = eval_ft_closed_form_d1(spec, 20.0), eval_ft_closed_form_d1(spec, 21.0)
    assert 0.3 < b / a * math.e < 1.0


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([1, 2, 3, 4]), st.sampled_from([0.5, 1.0, 2.0]), st.floats(0.1, 10.0))
def test_closed_form_agreement(n, c, s):
    spec = RbfSpec.tps(n, c, 1)
    v = eval_ft(MbIntegrand(Which.TPS_SUM, spec), s).value
    assert rel(v, eval_ft_closed_form_d1(spec, s)) < 1e-8


@pytest.mark.parametrize("n,d", [(2, 1), (2, 2), (4, 1), (3, 2)])
@pytest.mark.parametrize("s", [0.3, 1.0, 2.5])
def test_sum_of_pieces(n, d, s):
    spec = RbfSpec.tps(n, 1.0, d)
    tot = eval_ft(MbIntegrand(Which.TPS_SUM, spec), s).value
    parts = eval_ft(MbIntegrand(Which.TPS_III, spec), s).value + eval_ft(MbIntegrand(Which.TPS_IV, spec), s).value
    assert rel(parts, tot) < 1e-9


@pytest.mark.parametrize(
    "spec",
    [RbfSpec.tps(2, 1.0, 1), RbfSpec.tps(3, 1.0, 2), RbfSpec.power(1, 1.0, 2, 0.5), RbfSpec.power(4, 1.0, -2, -0.5)],
)
def test_series_and_contour_overlap(spec):
    which = Which.TPS_SUM if spec.family.value == "tps" else Which.POWER
    ig = MbIntegrand(which, spec)
    p = float(shape_of(ig).p)
    series = Method.RESIDUE_LEFT if p > 0 else Method.RESIDUE_RIGHT
    for z in (0.3, 0.5, 0.8):
        s = 2 * z ** (1 / abs(p)) / spec.c
        a = eval_ft(ig, s, method=series).value
        b = eval_ft(ig, s, method=Method.CONTOUR).value
        assert rel(a, b) < 1e-7


@pytest.mark.parametrize("n,d", [(2, 1), (2, 2), (4, 1), (4, 3), (6, 2)])
def test_small_s_leading_constant(n, d):
    spec = RbfSpec.tps(n, 1.0, d)
    lead = tps_expansion(spec).leading
    s = 1e-3
    assert lead.power == -(n + 2 * d)
    assert abs(eval_phi_hat(spec, s) * s ** (n + 2 * d) / lead.coeff - 1) < 1e-3


def _circle_integral(shape, t0, s, radius=1e-2, m=256):
    th = 2 * np.pi * np.arange(m) / m
    t = t0 + radius * np.exp(1j * th)
    log_x = float(shape.p) * math.log(2 / (shape.c * s))
    f = np.exp(_log_integrand(shape, t, log_x))
    return np.mean(f * radius * np.exp(1j * th)), np.max(np.abs(f)) * radius


CANCEL_SPECS = [RbfSpec.tps(2, 1.0, 1), RbfSpec.tps(4, 1.0, 2), RbfSpec.tps(6, 2.0, 3)]


@pytest.mark.parametrize("spec", CANCEL_SPECS)
def test_cancelled_poles_carry_no_residue(spec):
    whiches = [Which.TPS_III, Which.TPS_IV] if spec.family.value == "tps" else [Which.POWER]
    seen = 0
    for w in whiches:
        ig = MbIntegrand(w, spec)
        shape = shape_of(ig)
        for side in ("left", "right"):
            for p in enumerate_poles(ig, side, 10):
                if not p.cancelled:
                    continue
                seen += 1
                val, scale = _circle_integral(shape, p.location, 0.7)
                assert abs(val) <= 1e-8 * max(scale, 1.0)
                assert residue_at(ig, p, 0.7) == 0.0
    assert seen > 0


def test_simple_pole_residue_matches_circle():
    spec = RbfSpec.power(1, 1.0, 2, 0.5)
    ig = MbIntegrand(Which.POWER, spec)
    shape = shape_of(ig)
    p = enumerate_poles(ig, "left", 1)[0]
    assert p.order == 1
    val, _ = _circle_integral(shape, p.location, 0.7)
    # residue_at includes the prefactor K s^-q
    pref = shape.sign_k * math.exp(shape.log_k) * 0.7 ** (-shape.q)
    assert rel(residue_at(ig, p, 0.7), (pref * val).real) < 1e-8


def test_oracle_consistency_mq():
    spec = RbfSpec.power(1, 1.0, 2, 0.5)
    assert rel(oracle_hankel(spec, 1.0), eval_phi_hat(spec, 1.0)) < 1e-6


def test_input_validation():
    ig = MbIntegrand(Which.TPS_SUM, RbfSpec.tps(2, 1.0, 1))
    with pytest.raises(ValueError):
        eval_ft(ig, 0.0)
    with pytest.raises(ValueError):
        eval_ft(ig, 1.0, tol=1e-14)
    with pytest.raises(SpecError):
        MbIntegrand(Which.POWER, RbfSpec.tps(2, 1.0, 1))
    with pytest.raises(ValueError):
        oracle_hankel(RbfSpec.tps(2, 1.0, 1), 1.0, eps_list=[0.1, 0.2, 0.05])
