import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasirbf.asymptotics import power_expansion, tps_expansion
from quasirbf.interp import (
    CATALOG,
    GridFunction,
    InsufficientMarginError,
    convergence_study,
    eval_psi,
    fit_rates,
    interior_points,
    lattice_moments,
    monomials,
    phases,
    quasi_interpolate,
    quasi_interpolate_compact,
    reproduction_test,
    target_rate,
    truncation_radius,
)
from quasirbf.lagrange import minimal_stencil
from quasirbf.rbf_model import RbfSpec

TPS21 = RbfSpec.tps(2, 1.0, 1)
STENCIL21 = minimal_stencil(tps_expansion(TPS21), 2)


def gauss(x):
    return np.exp(-np.sum(x * x, axis=1))


def _psi_oracle():
    # same stencil with its moment conditions restored exactly, summed at 50 digits
    mpmath.mp.dps = 50
    offs = list(STENCIL21.coeffs)
    mu = mpmath.matrix([mpmath.mpf(STENCIL21.coeffs[a]) for a in offs])
    A = mpmath.matrix([[1] * len(offs), [a[0] ** 2 for a in offs]])
    mu = mu - A.T * mpmath.inverse(A * A.T) * (A * mu)

    def psi(y):
        acc = mpmath.mpf(0)
        for a, m in zip(offs, mu):
            w = 1 + (mpmath.mpf(y[0]) - a[0]) ** 2 + (mpmath.mpf(y[1]) - a[1]) ** 2
            acc += m * w * mpmath.log(w)
        return float(acc)

    return psi


@pytest.mark.parametrize("y", [(0.3, 0.2), (2.5, 1.0), (9.5, 3.25), (15.3, 7.1), (40.0, 0.5)])
def test_psi_against_extended_precision(y):
    ref = _psi_oracle()(y)
    assert abs(eval_psi(STENCIL21, TPS21, np.array(y)) - ref) <= 1e-6 * abs(ref)


def test_psi_far_field_absolute():
    y = (120.0, 33.0)
    assert abs(eval_psi(STENCIL21, TPS21, np.array(y)) - _psi_oracle()(y)) < 1e-15


def test_psi_decay_rate():
    a = eval_psi(STENCIL21, TPS21, np.array([40.0, 0.0]))
    b = eval_psi(STENCIL21, TPS21, np.array([80.0, 0.0]))
    assert math.log2(a / b) == pytest.approx(6.0, abs=0.05)


def test_psi_symmetry():
    y = np.array([[3.3, 1.2], [-3.3, 1.2], [1.2, 3.3], [-1.2, -3.3]])
    v = eval_psi(STENCIL21, TPS21, y)
    assert np.ptp(v) <= 1e-14 * abs(v[0])


def test_degree_zero_and_one_reproduction():
    res = reproduction_test(STENCIL21, TPS21, 1, 0.25, tail_tol=1e-4)
    assert len(res) == 3
    for r in res:
        assert r.residual <= 1e-4 * r.box_sup


def test_reproduction_is_h_uniform():
    a = reproduction_test(STENCIL21, TPS21, 0, 0.25, tail_tol=1e-4)[0].residual
    b = reproduction_test(STENCIL21, TPS21, 0, 0.125, tail_tol=1e-4)[0].residual
    assert a < 1e-6 and b < 1e-6


def test_moments_of_psi():
    theta = phases(2, 1)[0]
    outer, _ = lattice_moments(STENCIL21, TPS21, theta, [(0, 0), (1, 0), (2, 0)], 40.0)
    assert outer[0] == pytest.approx(1.0, abs=1e-5)
    assert abs(outer[1]) < 1e-4
    assert abs(outer[2]) < 1e-3


def _grid(shift=(0.0, 0.0), h=0.25):
    s = np.array(shift)
    return GridFunction.from_function(lambda x: gauss(x - s), h, 2, 40.0, envelope=lambda r: math.exp(-max(r - 1, 0) ** 2))


@settings(max_examples=10, deadline=None)
@given(st.integers(-3, 3), st.integers(-3, 3))
def test_shift_invariance(j1, j2):
    h = 0.25
    x = np.array([0.13, -0.21])
    jh = h * np.array([j1, j2], dtype=float)
    a = quasi_interpolate(STENCIL21, TPS21, _grid(), x, tail_tol=1e-4)
    b = quasi_interpolate(STENCIL21, TPS21, _grid(jh), x + jh, tail_tol=1e-4)
    assert abs(a - b) < 1e-4


def test_truncation_budget_honoured():
    x = np.array([0.13, -0.21])
    g = GridFunction.from_function(lambda p: np.cos(p[:, 0]) * np.cos(p[:, 1]), 0.25, 2, 40.0, sup=1.0)
    tol = 1e-3
    a = quasi_interpolate(STENCIL21, TPS21, g, x, tail_tol=tol)
    b = quasi_interpolate(STENCIL21, TPS21, g, x, tail_tol=tol / 64)
    assert abs(a - b) < tol
    assert truncation_radius(STENCIL21, TPS21, tol / 64) > 2 * truncation_radius(STENCIL21, TPS21, tol)


def test_insufficient_margin():
    g = GridFunction.from_function(lambda p: np.ones(len(p)), 0.25, 2, 2.0)
    with pytest.raises(InsufficientMarginError):
        quasi_interpolate(STENCIL21, TPS21, g, np.zeros(2), tail_tol=1e-6)


def test_gridfunction_from_array():
    vals = np.arange(12.0).reshape(3, 4)
    g = GridFunction.from_array(0.5, (-1, 0), vals)
    assert g.hi == (1, 3)
    assert g.values([[0, 2]])[0] == vals[1, 2]
    with pytest.raises(KeyError):
        g.values([[2, 0]])


def test_compact_route_matches_psi_route_for_bounded_phi():
    spec = RbfSpec.power(3, 1.0, -1, -0.5)
    sten = minimal_stencil(power_expansion(spec), 3)
    h = 0.5
    xs = np.array([[0.1, 0.2, 0.0], [-0.3, 0.05, 0.2]])
    a = quasi_interpolate_compact(sten, spec, gauss, h, 8.0, xs)
    g = GridFunction.from_function(gauss, h, 3, 60.0, envelope=lambda r: math.exp(-r * r))
    b = [quasi_interpolate(sten, spec, g, x, tail_tol=1e-4) for x in xs]
    assert np.allclose(a, b, atol=1e-7)


def test_interior_points_deterministic():
    a, b = interior_points(3), interior_points(3)
    assert np.array_equal(a, b)
    assert np.all(np.abs(a) <= 0.5)


def test_monomials():
    assert monomials(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert len(monomials(3, 3)) == 20


def test_fit_rates_pure_power():
    h = np.array([1 / 4, 1 / 8, 1 / 16, 1 / 32])
    slope, _, resid, _, pure, logm = fit_rates(h, 3.0 * h**4, 4.0)
    assert slope == pytest.approx(4.0, abs=1e-12)
    assert resid < 1e-12 and pure < 1e-12 < logm


def test_fit_rates_log_model():
    h = np.array([1 / 4, 1 / 8, 1 / 16])
    _, corr, _, _, pure, logm = fit_rates(h, 2.0 * h**2 * np.log(1 / h), 2.0)
    assert corr == pytest.approx(2.0, abs=1e-12)
    assert logm < pure


def test_target_rate():
    assert target_rate(STENCIL21) == (4.0, True)


def test_catalog():
    assert set(CATALOG) == {"gaussian-bump", "trig-product", "runge"}
    x = np.zeros((1, 3))
    for f, env, desc in CATALOG.values():
        assert f(x)[0] == pytest.approx(1.0)
        assert desc


def test_convergence_errors_decrease():
    rep = convergence_study(STENCIL21, TPS21, gauss, [1 / 2, 1 / 4, 1 / 8], envelope=CATALOG["gaussian-bump"][1])
    e = rep.sup_errors
    assert e[0] > e[1] > e[2]
    assert rep.target_order == 4.0
    with pytest.raises(ValueError):
        convergence_study(STENCIL21, TPS21, gauss, [1 / 4, 1 / 2, 1 / 8])
