"""Generalized Fourier transforms as Mellin-Barnes integrals.

Every transform handled here has the shape

    phi_hat(s) = K s^{-q} (1 / 2 pi i) \\int_L  prod Gamma(a_i + A_i t)
                                                / prod Gamma(b_j + B_j t)  X^t dt,

with ``X = (2 / (c s))^p``.  Poles left of the contour are summed with a plus
sign, poles right of it with a minus sign.  Pole locations are kept as exact
fractions whenever the parameters are rational, so coincidences (double poles,
numerator poles cancelled by denominator poles) are decided exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special as _sc

from .rbf_model import Family, RbfSpec, SpecError, eval_rbf
from .special_fn import bessel_k, digamma_real, lgamma_real, log_bessel_k, loggamma
from .terms import ExpansionTerm

Number = Union[Fraction, float]

COLLISION_TOL = 1e-12
_MAX_DEN = 10_000


class DegeneratePoleError(ValueError):
    """A pole of order >= 3, or a pole pinched between the two pole families."""


class NoConvergenceError(RuntimeError):
    """Neither the residue series nor the contour quadrature reached the tolerance."""


class QuadratureError(RuntimeError):
    pass


class Which(str, Enum):
    TPS_III = "TpsIII"
    TPS_IV = "TpsIV"
    TPS_SUM = "TpsSum"
    POWER = "PowerFamily"


class Method(str, Enum):
    RESIDUE_LEFT = "ResidueLeft"
    RESIDUE_RIGHT = "ResidueRight"
    CONTOUR = "Contour"
    CLOSED_FORM = "ClosedForm"


def exact(x) -> Number:
    """Fraction for (nearly) rational input, float otherwise."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    f = Fraction(float(x)).limit_denominator(_MAX_DEN)
    if abs(float(f) - float(x)) <= 1e-13 * max(1.0, abs(float(x))):
        return f
    return float(x)


def _nonpos_int(z: Number) -> Optional[int]:
    """m if z == -m for an integer m >= 0, else None."""
    if isinstance(z, Fraction):
        if z.denominator == 1 and z <= 0:
            return int(-z)
        return None
    r = round(z)
    if r <= 0 and abs(z - r) <= COLLISION_TOL * max(1.0, abs(z)):
        return int(-r)
    return None


@dataclass(frozen=True)
class GammaFactor:
    """Gamma(a + A t); ``tag`` names the pole family for provenance."""

    a: Number
    A: Number
    tag: str = ""

    def at(self, t: Number) -> Number:
        return self.a + self.A * t

    def pole(self, m: int) -> Number:
        return (-m - self.a) / self.A


@dataclass(frozen=True)
class MbIntegrand:
    which: Which
    spec: RbfSpec

    def __post_init__(self):
        object.__setattr__(self, "which", Which(self.which))
        tps = self.spec.family is Family.TPS
        if (self.which is Which.POWER) == tps:
            raise SpecError(f"integrand {self.which.value} does not match family {self.spec.family.value}")


@dataclass
class PoleDatum:
    location: float
    order: int
    source: str
    cancelled: bool
    exact_location: Number = field(default=0.0, repr=False)
    side: str = field(default="left", repr=False)
    log_g0: float = field(default=0.0, repr=False)
    sign_g0: float = field(default=1.0, repr=False)
    dlog: float = field(default=0.0, repr=False)


@dataclass(frozen=True)
class FtValue:
    value: float
    series_terms_used: int
    truncation_estimate: float
    method: Method


@dataclass(frozen=True)
class _Shape:
    num: Tuple[GammaFactor, ...]
    den: Tuple[GammaFactor, ...]
    p: Number
    q: float
    log_k: float
    sign_k: float
    split: Optional[Number]
    c: float


def shape_of(integrand: MbIntegrand) -> _Shape:
    spec = integrand.spec
    n = Fraction(spec.n)
    c = spec.c
    half_n = n / 2
    log2pi = spec.n * math.log(2.0) + 0.5 * spec.n * math.log(math.pi)
    w = integrand.which
    if w is Which.POWER:
        lam, beta = exact(spec.lam), exact(spec.beta)
        num = (
            GammaFactor(Fraction(0), Fraction(-1), "A"),
            GammaFactor(-beta, Fraction(1), "B"),
            GammaFactor(half_n, lam / 2, "Dim"),
        )
        den = (GammaFactor(Fraction(0), -lam / 2, "hole"),)
        lg, sg = lgamma_real(-float(beta))
        log_k = log2pi + float(lam) * float(beta) * math.log(c) - lg
        return _Shape(num, den, lam, float(n), log_k, sg, None, c)
    return tps_shape(w, spec.n, c, spec.d)


def tps_shape(which: Which, n: int, c: float, d) -> _Shape:
    """Integrand data for the tps pieces; ``d`` may be any positive real here."""
    which = Which(which)
    d = exact(d)
    half_n = Fraction(n, 2)
    log2pi = n * math.log(2.0) + 0.5 * n * math.log(math.pi)
    p = 2 * d
    if which is Which.TPS_III:
        num = (
            GammaFactor(Fraction(1), Fraction(-1), "A"),
            GammaFactor(Fraction(0), Fraction(1), "B"),
            GammaFactor(Fraction(0), Fraction(1), "B"),
            GammaFactor(half_n + d, d, "Dim"),
        )
        den = (GammaFactor(Fraction(1), Fraction(1), "hole"), GammaFactor(-d, -d, "hole"))
        log_k = log2pi + 2 * float(d) * math.log(2.0)
        return _Shape(num, den, p, float(n + 2 * d), log_k, 1.0, Fraction(1, 2), c)
    log_k = log2pi + 2 * float(d) * math.log(c)
    if which is Which.TPS_IV:
        num = (
            GammaFactor(Fraction(1), Fraction(-1), "A"),
            GammaFactor(Fraction(0), Fraction(1), "B"),
            GammaFactor(Fraction(0), Fraction(1), "B"),
            GammaFactor(half_n, d, "Dim"),
        )
        den = (GammaFactor(Fraction(1), Fraction(1), "hole"), GammaFactor(Fraction(0), -d, "hole"))
        return _Shape(num, den, p, float(n), log_k, 1.0, Fraction(1, 2), c)
    if which is not Which.TPS_SUM:
        raise SpecError(f"{which.value} is not a tps piece")
    num = (
        GammaFactor(Fraction(0), Fraction(-1), "A"),
        GammaFactor(Fraction(-1), Fraction(1), "B"),
        GammaFactor(half_n, d, "Dim"),
    )
    den = (GammaFactor(Fraction(0), -d, "hole"),)
    return _Shape(num, den, p, float(n), log_k, 1.0, Fraction(3, 2), c)


# --------------------------------------------------------------------------
# Pole bookkeeping


def _laurent(f: GammaFactor, t0: Number, numerator: bool) -> Tuple[int, float, float, float]:
    """(exponent e, log|g(0)|, sign g(0), g'(0)/g(0)) with factor = delta^e g(delta)."""
    z0 = f.at(t0)
    A = float(f.A)
    m = _nonpos_int(z0)
    if m is not None:
        lg = math.lgamma(m + 1)
        sgn = -1.0 if m % 2 else 1.0
        psi = digamma_real(m + 1)
        if numerator:
            # Gamma(-m + A delta) ~ (-1)^m / (m! A delta) * (1 + A psi(m+1) delta)
            return -1, -lg - math.log(abs(A)), sgn * math.copysign(1.0, A), A * psi
        return 1, lg + math.log(abs(A)), sgn * math.copysign(1.0, A), -A * psi
    lg, sg = lgamma_real(float(z0))
    psi = digamma_real(float(z0))
    if numerator:
        return 0, lg, sg, A * psi
    return 0, -lg, sg, -A * psi


def _same(x: Number, y: Number) -> bool:
    if isinstance(x, Fraction) and isinstance(y, Fraction):
        return x == y
    return abs(float(x) - float(y)) <= COLLISION_TOL * max(1.0, abs(float(x)))


def _natural_side(shape: _Shape, loc: Number, factor: GammaFactor) -> str:
    if shape.split is not None:
        return "left" if loc < shape.split else "right"
    return "left" if factor.A > 0 else "right"


def _poles_in_window(shape: _Shape, lo: float, hi: float) -> List[PoleDatum]:
    """All numerator-pole locations in [lo, hi], merged and resolved."""
    raw: List[Tuple[Number, GammaFactor]] = []
    for f in shape.num:
        A = float(f.A)
        first = float(f.pole(0))
        # poles move left for A > 0 and right for A < 0 as m grows
        if A > 0:
            m_start = max(0, math.floor((-hi * A) - float(f.a)) - 1)
            m_stop = math.ceil(-lo * A - float(f.a)) + 2
        else:
            m_start = max(0, math.floor(-lo * A - float(f.a)) - 1)
            m_stop = math.ceil(-hi * A - float(f.a)) + 2
        del first
        for m in range(m_start, max(m_start, m_stop)):
            loc = f.pole(m)
            if lo <= float(loc) <= hi:
                raw.append((loc, f))
    raw.sort(key=lambda item: float(item[0]))
    groups: List[List[Tuple[Number, GammaFactor]]] = []
    for item in raw:
        if groups and _same(groups[-1][0][0], item[0]):
            groups[-1].append(item)
        else:
            groups.append([item])
    out = []
    for g in groups:
        loc = g[0][0]
        sides = {_natural_side(shape, loc, f) for _, f in g}
        if len(sides) > 1:
            raise DegeneratePoleError(
                f"pole at t={float(loc):.12g} belongs to both sides of the contour; perturb the parameters"
            )
        out.append(_resolve(shape, loc, g, sides.pop()))
    return out


def _resolve(shape: _Shape, loc: Number, group, side: str) -> PoleDatum:
    e_total = 0
    log_g = 0.0
    sign = 1.0
    dlog = 0.0
    for f in shape.num:
        e, lg, sg, dl = _laurent(f, loc, True)
        e_total += e
        log_g += lg
        sign *= sg
        dlog += dl
    for f in shape.den:
        e, lg, sg, dl = _laurent(f, loc, False)
        e_total += e
        log_g += lg
        sign *= sg
        dlog += dl
    order = -e_total
    mult = len(group)
    tags = {f.tag for _, f in group}
    if len(group) > 1 and len(tags) > 1:
        source = "Merged"
    else:
        source = {"A": "GammaNumA", "B": "GammaNumB", "Dim": "GammaDim"}[tags.pop()]
    cancelled = order <= 0
    return PoleDatum(
        location=float(loc),
        order=order if not cancelled else mult,
        source=source,
        cancelled=cancelled,
        exact_location=loc,
        side=side,
        log_g0=log_g,
        sign_g0=sign,
        dlog=dlog,
    )


def _reference(shape: _Shape, side: str) -> float:
    if shape.split is not None:
        return float(shape.split)
    # furthest pole of the family sitting on the wrong side of zero, if any
    locs = [float(f.pole(0)) for f in shape.num if _natural_side(shape, f.pole(0), f) == side]
    return max(locs) if side == "left" else min(locs)


def enumerate_poles(integrand: MbIntegrand, half_plane: str, count: int, include_cancelled: bool = True) -> List[PoleDatum]:
    """The first ``count`` live poles on one side of the contour, nearest first.

    Cancelled coincidences met on the way are included (flagged) unless
    ``include_cancelled`` is false.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    side = half_plane.lower()
    if side not in ("left", "right"):
        raise ValueError("half_plane must be 'left' or 'right'")
    shape = shape_of(integrand)
    return _enumerate(shape, side, count, include_cancelled)


def _enumerate(shape: _Shape, side: str, count: int, include_cancelled: bool = True) -> List[PoleDatum]:
    ref = _reference(shape, side)
    gap = max(1.0 / abs(float(f.A)) for f in shape.num)
    span = 4.0 + count
    # beyond this window a side with too few live poles has finitely many
    max_span = 4.0 * gap * (count + 4)
    while True:
        lo, hi = (ref - span, ref + 1e-9) if side == "left" else (ref - 1e-9, ref + span)
        poles = [p for p in _poles_in_window(shape, lo, hi) if p.side == side]
        poles.sort(key=lambda p: -p.location if side == "left" else p.location)
        live = [p for p in poles if not p.cancelled]
        for p in live:
            if p.order >= 3:
                raise DegeneratePoleError(f"pole of order {p.order} at t={p.location:.12g} is not supported")
        if len(live) >= count or span > max_span:
            break
        span *= 2
    if not live:
        return []
    last = live[min(count, len(live)) - 1].location
    keep = [p for p in poles if (p.location >= last if side == "left" else p.location <= last)]
    if not include_cancelled:
        keep = [p for p in keep if not p.cancelled]
    return keep


# --------------------------------------------------------------------------
# Residues


def pole_term(shape: _Shape, pole: PoleDatum) -> ExpansionTerm:
    """The residue contribution of one pole as a term in s."""
    if pole.cancelled:
        return ExpansionTerm(power=0.0, coeff=0.0)
    t0 = float(pole.exact_location)
    p = float(shape.p)
    sgn = 1.0 if pole.side == "left" else -1.0
    log_mag = shape.log_k + pole.log_g0 + t0 * p * math.log(2.0 / shape.c)
    val = sgn * shape.sign_k * pole.sign_g0 * math.exp(log_mag)
    power = float(exact(-exact(shape.q) - exact(shape.p) * exact(pole.exact_location)))
    if pole.order == 1:
        return ExpansionTerm(power=power, coeff=val)
    return ExpansionTerm(power=power, coeff=val * pole.dlog, has_log=True, coeff_of_log=-p * val)


def _log_term_value(shape: _Shape, pole: PoleDatum, s: float) -> Tuple[float, float]:
    """(log|contribution|, sign) at s, overflow-safe."""
    t0 = float(pole.exact_location)
    p = float(shape.p)
    sgn = 1.0 if pole.side == "left" else -1.0
    log_mag = shape.log_k + pole.log_g0 + t0 * p * math.log(2.0 / shape.c) + (-shape.q - p * t0) * math.log(s)
    sign = sgn * shape.sign_k * pole.sign_g0
    if pole.order == 2:
        factor = pole.dlog - p * math.log(shape.c * s / 2.0)
        if factor == 0:
            return -math.inf, 1.0
        log_mag += math.log(abs(factor))
        sign *= math.copysign(1.0, factor)
    return log_mag, sign


def residue_at(integrand: MbIntegrand, pole: PoleDatum, s: float) -> float:
    """Signed contribution of ``pole`` to phi_hat(s) (prefactor included)."""
    if s <= 0:
        raise ValueError("s must be positive")
    if pole.cancelled:
        return 0.0
    lm, sg = _log_term_value(shape_of(integrand), pole, s)
    return sg * math.exp(lm)


# --------------------------------------------------------------------------
# Evaluation


def _small_s_side(shape: _Shape) -> str:
    return "left" if shape.p > 0 else "right"


def _series(shape: _Shape, side: str, s: float, tol: float, max_terms: int = 600) -> FtValue:
    total = 0.0
    noise = 0.0
    small_run = 0
    used = 0
    count = 32
    seen = 0
    while True:
        poles = _enumerate(shape, side, count, include_cancelled=False)
        for pole in poles[seen:]:
            lm, sg = _log_term_value(shape, pole, s)
            if lm > 700:
                raise NoConvergenceError("residue series overflows")
            term = sg * math.exp(lm)
            total += term
            used += 1
            # exp of a log-space value carries ~|lm| ulps of relative error
            noise += abs(term) * (4.0 + abs(lm)) * 2.2e-16
            if abs(term) < 0.1 * tol * abs(total):
                small_run += 1
                if small_run >= 3:
                    est = abs(term) + noise
                    return FtValue(total, used, est, Method.RESIDUE_LEFT if side == "left" else Method.RESIDUE_RIGHT)
            else:
                small_run = 0
            if used >= max_terms:
                raise NoConvergenceError(f"residue series did not settle within {max_terms} terms")
        if len(poles) <= seen:
            # finitely many poles: the series is exact
            est = noise
            return FtValue(total, used, est, Method.RESIDUE_LEFT if side == "left" else Method.RESIDUE_RIGHT)
        seen = len(poles)
        count *= 2


def _log_integrand(shape: _Shape, t: np.ndarray, log_x: float) -> np.ndarray:
    acc = t * log_x
    for f in shape.num:
        acc = acc + loggamma(float(f.a) + float(f.A) * t)
    for f in shape.den:
        acc = acc - loggamma(float(f.a) + float(f.A) * t)
    return acc


_Y_PROBE = np.concatenate([[0.0], np.geomspace(0.05, 400.0, 90)])


def _line_peak(shape: _Shape, rs: np.ndarray, log_x: float) -> np.ndarray:
    """max_y log|I(r + iy)| for each r, probed on a fixed geometric y grid."""
    t = rs[:, None] + 1j * _Y_PROBE[None, :]
    vals = _log_integrand(shape, t.ravel(), log_x).real.reshape(t.shape)
    vals = np.where(np.isnan(vals), np.inf, vals)
    return vals.max(axis=1)


def _line_integral(shape: _Shape, r: float, s: float, tol: float, offset: float = 0.0, ref: Optional[float] = None) -> Tuple[float, float]:
    """K s^-q (1/2 pi i) int_{Re t = r} I(t) dt and an error estimate.

    ``offset`` is whatever the caller adds afterwards; the relative target
    applies to the sum.
    """
    log_x = float(shape.p) * math.log(2.0 / (shape.c * s))
    if ref is None:
        ref = float(_line_peak(shape, np.array([r]), log_x)[0])
    probe = _log_integrand(shape, r + 1j * _Y_PROBE, log_x).real
    y_peak = float(_Y_PROBE[int(np.argmax(probe))])
    cutoff = ref + math.log(tol * 1e-4)
    y_max = max(1.0, y_peak)
    while float(_log_integrand(shape, np.array([complex(r, y_max)]), log_x).real[0]) > cutoff:
        y_max *= 1.5
        if y_max > 1e4:
            raise NoConvergenceError("contour integrand does not decay")
    y_max *= 1.25
    scale = math.exp(shape.log_k + ref - shape.q * math.log(s)) * shape.sign_k / math.pi
    npts = 128
    prev = None
    while True:
        y = np.linspace(0.0, y_max, npts + 1)
        f = np.exp(_log_integrand(shape, r + 1j * y, log_x) - ref)
        h = y[1] - y[0]
        # Re I is even in y, so the trapezoid rule is spectrally accurate
        integral = h * (0.5 * f[0].real + f[1:].real.sum())
        value = scale * integral
        mass = abs(scale) * h * float(np.abs(f).sum())
        if prev is not None:
            diff = abs(scale * (integral - prev))
            if diff <= 1e-2 * tol * abs(value + offset) or diff <= 1e-14 * mass:
                break
        prev = integral
        npts *= 2
        if npts > 2**18:
            raise NoConvergenceError("contour quadrature did not converge")
    # log-gamma is good to ~1e-14 relative, pointwise
    return value, abs(scale * (integral - prev)) + 1e-14 * mass


def line_integral(integrand, s: float, r: float, tol: float = 1e-10) -> Tuple[float, float]:
    """The transform's Mellin-Barnes integral taken along Re t = r, no residues added.

    Moving the line across poles changes the value by their residues, so with
    r placed past the first few poles this is exactly the remainder of the
    corresponding truncated expansion.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    shape = integrand if isinstance(integrand, _Shape) else shape_of(integrand)
    return _line_integral(shape, float(r), s, tol)


def _contour(shape: _Shape, s: float, tol: float) -> FtValue:
    """Trapezoidal quadrature on a vertical line, residues added for crossed poles.

    The line position is chosen to minimise cancellation: the peak of |I|
    along the line and the largest crossed residue are both kept small.
    """
    log_x = float(shape.p) * math.log(2.0 / (shape.c * s))
    left = _enumerate(shape, "left", 1, include_cancelled=False)
    right = _enumerate(shape, "right", 1, include_cancelled=False)
    gap_lo = left[0].location if left else (float(shape.split) if shape.split is not None else 0.0) - 1.0
    gap_hi = right[0].location if right else gap_lo + 2.0
    if gap_hi < gap_lo:
        gap_lo, gap_hi = gap_hi, gap_lo
    spacing = max(1.0 / abs(float(f.A)) for f in shape.num)
    width = 4.0 * spacing + 4.0
    lo, hi = gap_lo - width, gap_hi + width
    poles = [p for p in _poles_in_window(shape, lo - 1.0, hi + 1.0)]
    live = [p for p in poles if not p.cancelled]
    for p in live:
        if p.order >= 3:
            raise DegeneratePoleError(f"pole of order {p.order} at t={p.location:.12g} is not supported")
    locs = np.array([p.location for p in poles]) if poles else np.zeros(0)
    rs = np.linspace(lo, hi, 401) + 1.234567e-4
    if len(locs):
        dist = np.min(np.abs(rs[:, None] - locs[None, :]), axis=1)
        rs = rs[dist > min(0.1, 0.25 * spacing)]
    contrib = [(p, _log_term_value(shape, p, s)) for p in live]

    def crossed(r):
        return [(p, v) for p, v in contrib if (p.side == "left" and p.location > r) or (p.side == "right" and p.location < r)]

    peak = _line_peak(shape, rs, log_x)
    cost = peak.copy()
    for i, r in enumerate(rs):
        cr = crossed(r)
        if cr:
            cost[i] = max(cost[i], max(v[0] for _, v in cr))
    if not np.isfinite(cost).any():
        raise NoConvergenceError("no usable contour position")
    i = int(np.argmin(cost))
    r = float(rs[i])
    ref = float(peak[i])
    corrections = crossed(r)

    corr = 0.0
    largest = 0.0
    for _, (lm, sg) in corrections:
        corr += sg * math.exp(lm)
        largest = max(largest, math.exp(lm))
    line, line_err = _line_integral(shape, r, s, tol, offset=corr, ref=ref)
    value = line + corr
    est = line_err + 1e-15 * largest * max(1, len(corrections))
    return FtValue(value, len(corrections), est, Method.CONTOUR)


def eval_ft(integrand: MbIntegrand, s: float, tol: float = 1e-10, method: Optional[Method] = None) -> FtValue:
    """phi_hat piece at s > 0.

    Residue series on the small-s side when ``(cs/2)^|p| < 0.9``; saddle-point
    contour quadrature otherwise or when the series loses accuracy.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    if tol < 1e-12:
        raise ValueError("tol must be >= 1e-12")
    shape = shape_of(integrand)
    side = _small_s_side(shape)
    if method is not None:
        method = Method(method)
        if method is Method.CONTOUR:
            return _contour(shape, s, tol)
        if method is Method.CLOSED_FORM:
            return FtValue(eval_ft_closed_form_d1(integrand.spec, s), 0, 0.0, Method.CLOSED_FORM)
        want = "left" if method is Method.RESIDUE_LEFT else "right"
        return _series(shape, want, s, tol)
    z = (shape.c * s / 2.0) ** abs(float(shape.p))
    if z < 0.9:
        try:
            res = _series(shape, side, s, tol)
            if res.truncation_estimate <= tol * abs(res.value):
                return res
        except NoConvergenceError:
            pass
    res = _contour(shape, s, tol)
    if not res.truncation_estimate <= tol * max(abs(res.value), 1e-300):
        raise NoConvergenceError(
            f"contour quadrature reached only {res.truncation_estimate:.3g} (tol {tol:.3g}) at s={s}"
        )
    return res


def eval_phi_hat(spec: RbfSpec, s: float, tol: float = 1e-10) -> float:
    """The full transform at s > 0 (delta-type pieces vanish there)."""
    which = Which.TPS_SUM if spec.family is Family.TPS else Which.POWER
    return eval_ft(MbIntegrand(which, spec), s, tol).value


def eval_ft_closed_form_d1(spec: RbfSpec, s: float) -> float:
    """4 (2 pi)^{n/2} (c/s)^{n/2+1} K_{n/2+1}(c s), the d = 1 transform."""
    if spec.family is not Family.TPS or spec.d != 1:
        raise SpecError("closed form needs the tps family with d = 1")
    if not s > 0:
        raise ValueError("s must be positive")
    n, c = spec.n, spec.c
    nu = n / 2 + 1
    logv = math.log(4.0) + (n / 2) * math.log(2 * math.pi) + nu * math.log(c / s) + log_bessel_k(nu, c * s)
    return math.exp(logv)


# --------------------------------------------------------------------------
# Independent oracle


def _gauss_panels(a: float, b: float, panel: float, order: int = 48) -> Tuple[np.ndarray, np.ndarray]:
    x0, w0 = np.polynomial.legendre.leggauss(order)
    npan = max(1, int(math.ceil((b - a) / panel)))
    edges = np.linspace(a, b, npan + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    return (mid + half * x0).ravel(), (half * w0).ravel()


def _hankel_nodes(s: float, r_max: float) -> Tuple[np.ndarray, np.ndarray]:
    # geometric grading towards r = 0 resolves r^alpha behaviour of phi there
    head = min(1.0, r_max)
    edges = head * 2.0 ** -np.arange(60, -1, -1, dtype=float)
    x0, w0 = np.polynomial.legendre.leggauss(24)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    r_head, w_head = (mid + half * x0).ravel(), (half * w0).ravel()
    r_tail, w_tail = _gauss_panels(head, r_max, panel=min(1.0, 2.0 / s))
    return np.concatenate([r_head, r_tail]), np.concatenate([w_head, w_tail])


def _hankel_eps(spec: RbfSpec, s: float, eps: float) -> float:
    n = spec.n
    nu = n / 2 - 1
    r, w = _hankel_nodes(s, math.sqrt(46.0 / eps))
    phi = eval_rbf(spec, r)
    f = r ** (n / 2) * phi * _sc.jv(nu, s * r) * np.exp(-eps * r * r)
    total = float(np.dot(w, f))
    # [0, r0] analytically: phi ~ phi(r0) (r / r0)^alpha and J_nu(x) ~ (x/2)^nu / Gamma(nu+1)
    alpha = spec.lam * spec.beta if spec.family is Family.POWER and spec.lam < 0 else 0.0
    r0 = float(r[0])
    e = n - 1 + alpha
    total += float(eval_rbf(spec, r0)) * r0**n * (s / 2) ** nu / math.gamma(nu + 1) / (e + 1)
    return (2 * math.pi) ** (n / 2) * s ** (1 - n / 2) * total


def oracle_hankel(spec: RbfSpec, s: float, eps_list: Optional[Sequence[float]] = None) -> float:
    """Brute-force phi_hat(s): Gaussian-damped Hankel quadrature, Richardson eps -> 0.

    Damping by exp(-eps r^2) smooths phi_hat with a heat kernel, so the damped
    values are a power series in eps away from the origin.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    if spec.family is Family.POWER and spec.lam < 0 < spec.beta and -spec.lam * spec.beta >= spec.n:
        raise QuadratureError(
            f"phi ~ r^{spec.lam * spec.beta:g} is not locally integrable in dimension {spec.n}; no brute-force transform"
        )
    if eps_list is None:
        # leakage from the origin singularity is ~exp(-s^2 / 4 eps)
        e0 = s * s / 150.0
        eps_list = [e0 / 2**k for k in range(6)]
    eps = np.asarray(list(eps_list), dtype=float)
    if len(eps) < 3 or np.any(np.diff(eps) >= 0) or np.any(eps <= 0):
        raise ValueError("eps_list needs >= 3 decreasing positive entries")
    vals = [_hankel_eps(spec, s, e) for e in eps]
    if not all(math.isfinite(v) for v in vals):
        raise QuadratureError("damped Hankel quadrature produced non-finite values")
    # Neville extrapolation to eps = 0
    table = list(vals)
    for k in range(1, len(eps)):
        for i in range(len(eps) - 1, k - 1, -1):
            table[i] = (eps[i - k] * table[i] - eps[i] * table[i - 1]) / (eps[i - k] - eps[i])
    return float(table[-1])


def shape_poles(shape: _Shape, side: str, count: int, include_cancelled: bool = False) -> List[PoleDatum]:
    """:func:`enumerate_poles` for a prebuilt integrand shape."""
    return _enumerate(shape, side, count, include_cancelled)


def small_s_side(shape: _Shape) -> str:
    return _small_s_side(shape)
