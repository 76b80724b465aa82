"""Quasi-Lagrange function, quasi-interpolant and convergence harness.

``Psi(y) = sum_a mu_a phi(|y - a|)`` is evaluated directly near the stencil,
in extended precision when phi grows.
Far away the direct sum cancels catastrophically when phi grows while Psi
decays algebraically, so there, for ``|y| >= 3 max|a|``, each ``phi(|y - t a|)`` is expanded
in ``t`` and only orders ``>= k`` are kept: the lower orders are removed
exactly by the vanishing moments of the stencil.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from .lagrange import Stencil, stencil_decay_bound
from .rbf_model import Family, RbfSpec, eval_rbf


class InsufficientMarginError(ValueError):
    """The data box is too small for the requested tail tolerance at x."""


class SingularEvaluationError(ValueError):
    """Psi evaluated on a stencil offset where phi is singular."""


# --------------------------------------------------------------------------
# Data


@dataclass(frozen=True)
class GridFunction:
    """Samples ``f(j h)`` for integer ``j`` with ``lo <= j <= hi`` per axis.

    Samples are produced on demand by ``func`` (vectorised over rows of
    points).  ``outside_bound`` bounds |f| outside the box and ``envelope(r)``
    optionally bounds |f(x)| for |x| >= r; both only steer truncation.
    """

    h: float
    lo: Tuple[int, ...]
    hi: Tuple[int, ...]
    func: Callable[[np.ndarray], np.ndarray]
    outside_bound: Optional[float] = None
    envelope: Optional[Callable[[float], float]] = None
    sup: Optional[float] = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if len(self.lo) != len(self.hi) or not self.lo:
            raise ValueError("box bounds must have one entry per axis")
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError("empty box")

    @property
    def n(self) -> int:
        return len(self.lo)

    def contains(self, j: np.ndarray) -> np.ndarray:
        j = np.atleast_2d(j)
        return np.all((j >= np.array(self.lo)) & (j <= np.array(self.hi)), axis=1)

    def values(self, j) -> np.ndarray:
        j = np.atleast_2d(np.asarray(j))
        if not self.contains(j).all():
            raise KeyError("lattice point outside the data box")
        return np.asarray(self.func(j * self.h), dtype=float)

    def sup_norm(self) -> float:
        if self.sup is not None:
            return self.sup
        # strided scan, at most about 1e6 points
        sizes = [b - a + 1 for a, b in zip(self.lo, self.hi)]
        stride = max(1, int(math.ceil((np.prod(sizes, dtype=float) / 1e6) ** (1.0 / self.n))))
        axes = [np.arange(a, b + 1, stride) for a, b in zip(self.lo, self.hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)
        return float(np.max(np.abs(self.func(pts * self.h))))

    @classmethod
    def from_function(cls, func, h: float, n: int, half_width: float, **kw) -> "GridFunction":
        m = int(math.ceil(half_width / h))
        return cls(h, (-m,) * n, (m,) * n, func, **kw)

    @classmethod
    def from_array(cls, h: float, lo: Sequence[int], values: np.ndarray) -> "GridFunction":
        values = np.asarray(values, dtype=float)
        lo = tuple(int(v) for v in lo)
        hi = tuple(a + s - 1 for a, s in zip(lo, values.shape))
        origin = np.array(lo)

        def func(x):
            idx = np.rint(x / h).astype(int) - origin
            return values[tuple(idx.T)]

        return cls(h, lo, hi, func, sup=float(np.abs(values).max()))


# --------------------------------------------------------------------------
# Psi


def _poly_power(base: np.ndarray, d: int) -> np.ndarray:
    out = base
    for _ in range(d - 1):
        new = np.zeros(out.shape[:-1] + (out.shape[-1] + base.shape[-1] - 1,))
        for i in range(base.shape[-1]):
            new[..., i : i + out.shape[-1]] += base[..., i : i + 1] * out
        out = new
    return out


def _series_log(v: np.ndarray, J: int) -> np.ndarray:
    """Taylor coefficients of log v(t) from the (short) coefficients of v."""
    deg = v.shape[-1] - 1
    out = np.zeros(v.shape[:-1] + (J + 1,))
    out[..., 0] = np.log(v[..., 0])
    for m in range(1, J + 1):
        acc = m * v[..., m] if m <= deg else 0.0
        for j in range(max(1, m - deg), m):
            acc = acc - j * out[..., j] * v[..., m - j]
        out[..., m] = acc / (m * v[..., 0])
    return out


def _series_power(a: np.ndarray, e: float, J: int) -> np.ndarray:
    """Taylor coefficients of a(t)^e; ``a`` may be short or full length."""
    deg = a.shape[-1] - 1
    out = np.zeros(a.shape[:-1] + (J + 1,))
    out[..., 0] = a[..., 0] ** e
    for m in range(1, J + 1):
        acc = 0.0
        for j in range(1, min(deg, m) + 1):
            acc = acc + (e * j - (m - j)) * a[..., j] * out[..., m - j]
        out[..., m] = acc / (m * a[..., 0])
    return out


def _phi_series(spec: RbfSpec, w: np.ndarray, J: int) -> np.ndarray:
    """Taylor coefficients in t of phi(sqrt(w(t))), w quadratic in t."""
    if spec.family is Family.TPS:
        d = spec.d
        v = _poly_power(w, d)
        v[..., 0] += spec.c ** (2 * d)
        logv = _series_log(v, J)
        out = np.zeros_like(logv)
        for i in range(v.shape[-1]):
            out[..., i:] += v[..., i : i + 1] * logv[..., : J + 1 - i]
        return out
    b = _series_power(w, spec.lam / 2.0, J)
    b[..., 0] += spec.c**spec.lam
    return _series_power(b, spec.beta, J)


def _psi_far(stencil: Stencil, spec: RbfSpec, y: np.ndarray) -> np.ndarray:
    off = stencil.offsets()
    mu = stencil.mus()
    k = stencil.singularity_order
    amax = float(np.max(np.linalg.norm(off, axis=1)))
    rho = np.linalg.norm(y, axis=1)
    ratio = float(rho.min()) / max(amax, 1e-300)
    J = k + int(math.ceil(18 * math.log(10) / math.log(ratio / 1.5))) + 4
    out = np.empty(len(y))
    chunk = max(1, int(2_000_000 // (len(mu) * (J + 1) * (2 * (spec.d or 1) + 1))))
    for s in range(0, len(y), chunk):
        yc = y[s : s + chunk]
        w = np.empty((len(yc), len(mu), 3))
        w[..., 0] = np.sum(yc**2, axis=1)[:, None]
        w[..., 1] = -2.0 * yc @ off.T
        w[..., 2] = np.sum(off**2, axis=1)[None, :]
        coeffs = _phi_series(spec, w, J)
        out[s : s + chunk] = coeffs[..., k:].sum(axis=-1) @ mu
    return out


def _exact_moment_weights(stencil: Stencil) -> np.ndarray:
    """mu in extended precision, nudged so moments below order k vanish to ~1e-19."""
    key = "_mu_ld"
    if key in stencil.__dict__:
        return stencil.__dict__[key]
    off = stencil.offsets().astype(int)
    mu = stencil.mus().astype(np.longdouble)
    k = stencil.singularity_order
    gammas = [g for g in itertools.product(range(k), repeat=stencil.n) if sum(g) < k]
    V = np.array([[float(np.prod([int(a) ** e for a, e in zip(row, g)])) for row in off] for g in gammas])
    Vl = V.astype(np.longdouble)
    for _ in range(3):
        resid = Vl @ mu
        delta, _, _, _ = np.linalg.lstsq(V, -resid.astype(float), rcond=None)
        mu = mu + delta.astype(np.longdouble)
    stencil.__dict__[key] = mu
    return mu


def _phi_ld(spec: RbfSpec, r2: np.ndarray) -> np.ndarray:
    c = np.longdouble(spec.c)
    if spec.family is Family.TPS:
        w = c ** (2 * spec.d) + r2**spec.d
        return w * np.log(w)
    lam = np.longdouble(spec.lam)
    return (c**lam + r2 ** (lam / 2)) ** np.longdouble(spec.beta)


def _psi_direct(stencil: Stencil, spec: RbfSpec, y: np.ndarray) -> np.ndarray:
    off = stencil.offsets()
    mu = stencil.mus()
    out = np.empty(len(y))
    if _phi_grows(spec):
        # large cancelling terms: extended precision with exact-moment weights
        mul = _exact_moment_weights(stencil)
        offl = off.astype(np.longdouble)
        chunk = max(1, 1_000_000 // len(mu))
        for s in range(0, len(y), chunk):
            d = y[s : s + chunk, None, :].astype(np.longdouble) - offl[None]
            out[s : s + chunk] = (_phi_ld(spec, np.sum(d * d, axis=2)) @ mul).astype(float)
        return out
    chunk = max(1, 4_000_000 // len(mu))
    singular = spec.family is Family.POWER and spec.lam < 0 and spec.beta > 0
    for s in range(0, len(y), chunk):
        r = np.linalg.norm(y[s : s + chunk, None, :] - off[None], axis=2)
        if singular and np.any(r == 0):
            raise SingularEvaluationError("Psi evaluated at a stencil offset where phi is singular")
        out[s : s + chunk] = eval_rbf(spec, r) @ mu
    return out


def _phi_grows(spec: RbfSpec) -> bool:
    # bounded phi leaves no cancellation worth the series route
    return spec.family is Family.TPS or (spec.lam > 0 and spec.beta > 0)


def eval_psi(stencil: Stencil, spec: RbfSpec, x) -> np.ndarray:
    """Psi(x) = sum_a mu_a phi(|x - a|) for x of shape (n,) or (m, n)."""
    x = np.asarray(x, dtype=float)
    y = np.atleast_2d(x)
    if y.shape[1] != stencil.n:
        raise ValueError("point dimension does not match the stencil")
    amax = float(np.max(np.linalg.norm(stencil.offsets(), axis=1)))
    far = np.linalg.norm(y, axis=1) >= max(3.0 * amax, 2.0)
    if not _phi_grows(spec):
        far[:] = False
    out = np.empty(len(y))
    if (~far).any():
        out[~far] = _psi_direct(stencil, spec, y[~far])
    if far.any():
        out[far] = _psi_far(stencil, spec, y[far])
    return float(out[0]) if x.ndim == 1 else out


def psi_tail_constant(stencil: Stencil, spec: RbfSpec) -> float:
    """C with |Psi(y)| <= C (1 + |y|)^-decay, estimated from samples (times 2)."""
    key = "_tail_" + spec.to_json()
    if key in stencil.__dict__:
        return stencil.__dict__[key]
    decay = stencil_decay_bound(spec)
    n = stencil.n
    dirs = [np.eye(n)[0], np.ones(n) / math.sqrt(n)]
    radii = [2.0, 4.0, 8.0, 16.0, 32.0]
    pts = np.array([r * u for r in radii for u in dirs])
    vals = np.abs(eval_psi(stencil, spec, pts))
    c_est = 2.0 * float(np.max(vals * (1.0 + np.linalg.norm(pts, axis=1)) ** decay))
    c_est = max(c_est, 2.0 * abs(eval_psi(stencil, spec, np.zeros(n))))
    stencil.__dict__[key] = c_est
    return c_est


def _sphere_area(n: int) -> float:
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def _tail(c_est: float, decay: float, n: int, R: float) -> float:
    """Bound of sum over |y| > R of C (1 + |y|)^-decay (integral plus a shell)."""
    if decay <= n:
        return math.inf
    return c_est * _sphere_area(n) * ((1 + R) ** (n - decay) / (decay - n) + (1 + R) ** (n - 1 - decay) * 2 ** n)


def _ball_points(center: np.ndarray, radius: float, lo, hi, origin_radius: Optional[float], h: float):
    """Lattice points j in the box with |j - center| <= radius (and |j h| <= origin_radius)."""
    n = len(center)
    lo_c = [max(lo[i], int(math.floor(center[i] - radius))) for i in range(n)]
    hi_c = [min(hi[i], int(math.ceil(center[i] + radius))) for i in range(n)]
    if origin_radius is not None:
        m = int(math.floor(origin_radius / h))
        lo_c = [max(a, -m) for a in lo_c]
        hi_c = [min(b, m) for b in hi_c]
    if any(a > b for a, b in zip(lo_c, hi_c)):
        return
    first = np.arange(lo_c[0], hi_c[0] + 1)
    rest = [np.arange(a, b + 1) for a, b in zip(lo_c[1:], hi_c[1:])]
    tail = np.stack(np.meshgrid(*rest, indexing="ij"), axis=-1).reshape(-1, n - 1) if n > 1 else np.zeros((1, 0))
    for j0 in first:
        pts = np.concatenate([np.full((len(tail), 1), j0), tail], axis=1)
        keep = np.sum((pts - center) ** 2, axis=1) <= radius**2
        if origin_radius is not None:
            keep &= np.sum((pts * h) ** 2, axis=1) <= origin_radius**2
        if keep.any():
            yield pts[keep]


def truncation_radius(stencil: Stencil, spec: RbfSpec, tail_tol: float) -> float:
    """Lattice radius R with tail(R) <= tail_tol / 2 (relative to sup |f|)."""
    decay = stencil_decay_bound(spec)
    c_est = psi_tail_constant(stencil, spec)
    n = stencil.n
    if decay <= n:
        return math.inf
    R = 1.0
    while _tail(c_est, decay, n, R) > 0.5 * tail_tol:
        R *= 1.25
        if R > 1e7:
            return math.inf
    return R


class PsiTable:
    """Psi(theta + z) for integer z with |z| <= radius, computed once.

    Every point x with x/h = theta (mod 1) reads Psi(x/h - j) from here.
    """

    def __init__(self, stencil: Stencil, spec: RbfSpec, theta, radius: float):
        self.theta = np.asarray(theta, dtype=float)
        n = len(self.theta)
        self.size = int(math.ceil(radius)) + 1
        axes = [np.arange(-self.size, self.size + 1)] * n
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        inside = np.sum((grid + self.theta) ** 2, axis=1) <= (radius + 1.5) ** 2
        self.values = np.full(len(grid), np.nan)
        self.values[inside] = eval_psi(stencil, spec, grid[inside] + self.theta)
        self.values = self.values.reshape((2 * self.size + 1,) * n)

    def matches(self, center: np.ndarray) -> bool:
        frac = center - np.floor(center)
        return bool(np.all(np.abs(frac - self.theta) < 1e-9))

    def lookup(self, z: np.ndarray) -> np.ndarray:
        idx = z + self.size
        if np.any(idx < 0) or np.any(idx > 2 * self.size):
            raise IndexError("z outside the table")
        out = self.values[tuple(idx.T)]
        if np.isnan(out).any():
            raise IndexError("z outside the table")
        return out


def _table_cells(n: int, radius: float) -> float:
    return (2 * math.ceil(radius) + 3) ** n


def quasi_interpolate(
    stencil: Stencil,
    spec: RbfSpec,
    data: GridFunction,
    x,
    tail_tol: float = 1e-8,
    table: Optional[PsiTable] = None,
) -> float:
    """Q_h f(x) = sum_j f(j h) Psi(x/h - j) over a truncated set of j.

    The omitted part is kept below ``tail_tol * sup|f|`` using the decay
    bound of Psi; a box too small for that raises InsufficientMarginError.
    """
    x = np.asarray(x, dtype=float)
    n = stencil.n
    if x.shape != (n,) or data.n != n:
        raise ValueError("dimension mismatch")
    h = data.h
    decay = stencil_decay_bound(spec)
    c_est = psi_tail_constant(stencil, spec)
    center = x / h
    R = truncation_radius(stencil, spec, tail_tol)
    fsup = data.sup_norm()
    origin_radius = None
    if data.envelope is not None:
        # drop |j h| > r where the envelope makes every term negligible
        total = _tail(c_est, decay, n, 0.0) + c_est
        r = float(np.linalg.norm(x)) + h
        while data.envelope(r) * total / h**0 > 0.25 * tail_tol * max(fsup, 1e-300):
            r *= 1.1
            if r > 1e6:
                break
        origin_radius = r
    margin = min(min(center[i] - data.lo[i], data.hi[i] - center[i]) for i in range(n))
    if margin < R:
        outside = data.outside_bound
        if data.envelope is not None:
            box_r = min(min(-data.lo[i], data.hi[i]) for i in range(n)) * h
            outside = min(outside if outside is not None else math.inf, data.envelope(max(box_r, 0.0)))
        if outside is None:
            outside = fsup
        if margin <= 0 or outside * _tail(c_est, decay, n, margin) > 0.5 * tail_tol * max(fsup, 1e-300):
            raise InsufficientMarginError(
                f"x={x.tolist()} is {margin:.1f} lattice steps from the box edge; the tail budget needs {R:.1f}"
            )
    use_table = table is not None and table.matches(center)
    base = np.floor(center).astype(int)
    acc = 0.0
    for pts in _ball_points(center, R, data.lo, data.hi, origin_radius, h):
        fv = data.values(pts)
        nz = fv != 0
        if not nz.any():
            continue
        if use_table:
            psi = table.lookup(base - pts[nz])
        else:
            psi = eval_psi(stencil, spec, center - pts[nz])
        acc += float(np.dot(fv[nz], psi))
    return acc


def snap_to_phase(points: np.ndarray, h: float, theta: np.ndarray) -> np.ndarray:
    """Move each point to the nearest x with x/h = theta (mod 1)."""
    return h * (np.round(points / h - theta) + theta)


def phases(n: int, count: int = 2) -> List[np.ndarray]:
    sampler = qmc.Halton(d=n, scramble=False)
    return list(sampler.random(count + 3)[3:])


# --------------------------------------------------------------------------
# Harness


def interior_points(n: int, count: int = 8, half_width: float = 0.5) -> np.ndarray:
    """Deterministic low-discrepancy points in [-half_width, half_width]^n."""
    sampler = qmc.Halton(d=n, scramble=False)
    pts = sampler.random(count + 1)[1:]
    return (2.0 * pts - 1.0) * half_width


def _threads() -> int:
    import os

    try:
        return max(1, int(os.environ.get("QUASIRBF_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items, threads: Optional[int]):
    threads = threads or _threads()
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class MonomialResidual:
    exponent: Tuple[int, ...]
    residual: float
    box_sup: float

    @property
    def relative(self) -> float:
        return self.residual / self.box_sup if self.box_sup else self.residual

    def to_dict(self) -> dict:
        return {
            "exponent": list(self.exponent),
            "residual": self.residual,
            "box_sup": self.box_sup,
            "relative": self.relative,
        }


def monomials(n: int, degree: int) -> List[Tuple[int, ...]]:
    out = []
    for total in range(degree + 1):
        for g in itertools.product(range(total, -1, -1), repeat=n):
            if sum(g) == total:
                out.append(g)
    return out


def _ball_count(n: int, R: float) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * R**n


# lattice points visited by one moment pass
MAX_BALL_POINTS = 1e7


def lattice_moments(stencil, spec, theta, exponents, radius: float, inner: Optional[float] = None):
    """Sums of y^g Psi(y) over y in theta + Z^n with |y| <= radius.

    Returns ``(outer, inner_sums)``; the second is over ``|y| <= inner`` (or
    None).  With ``Q_h p(x) = sum_y p(x - h y) Psi(y)`` these sums give the
    truncated quasi-interpolant of every polynomial at points of phase theta.
    """
    theta = np.asarray(theta, dtype=float)
    n = len(theta)
    G = [tuple(int(v) for v in g) for g in exponents]
    top = max((max(g) for g in G), default=0)
    outer = np.zeros(len(G))
    inn = np.zeros(len(G)) if inner is not None else None
    big = [10**9] * n
    for z in _ball_points(-theta, radius, [-b for b in big], big, None, 1.0):
        y = z + theta
        psi = np.atleast_1d(eval_psi(stencil, spec, y))
        pw = [[np.ones(len(y))] for _ in range(n)]
        for i in range(n):
            for _ in range(top):
                pw[i].append(pw[i][-1] * y[:, i])
        mask = None if inner is None else np.sum(y**2, axis=1) <= inner**2
        for t, g in enumerate(G):
            w = psi.copy()
            for i, e in enumerate(g):
                if e:
                    w *= pw[i][e]
            outer[t] += w.sum()
            if mask is not None:
                inn[t] += w[mask].sum()
    return outer, inn


def _sub_exponents(g):
    return list(itertools.product(*[range(e + 1) for e in g]))


def reproduction_test(
    stencil: Stencil,
    spec: RbfSpec,
    degree: int,
    h: float,
    box_margin: Optional[int] = None,
    tail_tol: float = 1e-7,
    points: Optional[np.ndarray] = None,
    exponents: Optional[Sequence[Tuple[int, ...]]] = None,
    threads: Optional[int] = None,
    n_phases: int = 2,
) -> List[MonomialResidual]:
    """sup over interior points of |Q_h p - p| for each monomial of degree <= degree.

    The sum over j is truncated to the ball |x/h - j| <= R of the tail
    budget; ``box_margin`` (lattice steps of data beyond the test points)
    caps R.  Points are snapped to a few phases, so each phase needs one pass
    over the ball.  When the ball is too large to visit, R is capped and the
    moments are extrapolated from R and R/2 with the algebraic tail exponent.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    n = stencil.n
    pts = interior_points(n) if points is None else np.atleast_2d(points)
    R = truncation_radius(stencil, spec, tail_tol)
    cap = (MAX_BALL_POINTS / _ball_count(n, 1.0)) ** (1.0 / n)
    if box_margin is not None:
        cap = min(cap, float(box_margin))
        R = min(R, cap)
    extrapolate = not R <= cap
    Rb = min(R, cap)
    decay = stencil_decay_bound(spec)
    exps = [tuple(int(v) for v in g) for g in (exponents or monomials(n, degree))]
    needed = sorted({s for g in exps for s in _sub_exponents(g)})
    groups = [idx for idx in np.array_split(np.arange(len(pts)), n_phases) if len(idx)]
    thetas = phases(n, n_phases)[: len(groups)]

    def moments(theta):
        outer, inn = lattice_moments(stencil, spec, theta, needed, Rb, Rb / 2 if extrapolate else None)
        if extrapolate:
            for t, g in enumerate(needed):
                p = decay - n - sum(g)
                if p > 0:
                    outer[t] += (outer[t] - inn[t]) / (2.0**p - 1.0)
        return dict(zip(needed, outer))

    table = _map(moments, thetas, threads)
    half = float(np.max(np.abs(pts))) + h + Rb * h
    worst = {g: 0.0 for g in exps}
    for theta, idx, M in zip(thetas, groups, table):
        X = snap_to_phase(pts[idx], h, theta)
        for g in exps:
            val = np.zeros(len(X))
            for s in _sub_exponents(g):
                coef = float(np.prod([math.comb(e, a) for e, a in zip(g, s)])) * (-h) ** sum(s) * M[s]
                val += coef * np.prod(X ** (np.array(g) - np.array(s)), axis=1)
            exact = np.prod(X ** np.array(g), axis=1)
            worst[g] = max(worst[g], float(np.max(np.abs(val - exact))))
    return [MonomialResidual(g, worst[g], half ** sum(g)) for g in exps]


def _evaluate_cached(stencil, spec, data, pts, tail_tol, threads, n_phases, table_radius, tables):
    n = stencil.n
    h = data.h
    out_pts, out_vals = [], []
    groups = np.array_split(np.arange(len(pts)), n_phases)
    for i, (theta, idx) in enumerate(zip(phases(n, n_phases), groups)):
        if len(idx) == 0:
            continue
        snapped = snap_to_phase(pts[idx], h, theta)
        if i not in tables and math.isfinite(table_radius) and _table_cells(n, table_radius) <= 2e7:
            tables[i] = PsiTable(stencil, spec, theta, table_radius)
        table = tables.get(i)
        vals = _map(lambda p: quasi_interpolate(stencil, spec, data, p, tail_tol, table), list(snapped), threads)
        out_pts.append(snapped)
        out_vals.extend(vals)
    return np.concatenate(out_pts), np.array(out_vals)


def quasi_interpolate_compact(stencil: Stencil, spec: RbfSpec, func, h: float, radius: float, xs) -> np.ndarray:
    """Q_h f at each row of ``xs`` for f cut off to |x| <= radius.

    Uses ``Q_h f(x) = sum_m g_m phi(|x/h - m|)`` with ``g_m = sum_a mu_a
    f((m - a) h)``: the stencil is applied to the data once, so no
    truncation of Psi is needed.  Suited to data with fast-decaying envelope
    and bounded phi; a growing phi amplifies the rounding error of g.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    n = stencil.n
    off = stencil.offsets().astype(int)
    mu = stencil.mus()
    A = int(np.max(np.abs(off)))
    M = int(math.floor(radius / h))
    W = M + A
    side = np.arange(-W - A, W + A + 1)
    rest = np.stack(np.meshgrid(*([side] * (n - 1)), indexing="ij"), axis=-1) if n > 1 else np.zeros((0,))
    rest_sq = np.sum(rest**2, axis=-1) if n > 1 else np.zeros(())

    slabs: Dict[int, np.ndarray] = {}

    def fslab(j0):
        if j0 not in slabs:
            out = np.zeros(rest_sq.shape)
            inside = j0 * j0 + rest_sq <= M * M
            if abs(j0) <= M and inside.any():
                if n == 1:
                    out = np.asarray(func(np.array([[j0 * h]]))[0], dtype=float)
                else:
                    pts = np.concatenate([np.full((int(inside.sum()), 1), float(j0)), rest[inside]], axis=1)
                    out[inside] = func(pts * h)
            slabs[j0] = out
        return slabs[j0]

    core = tuple(slice(A, A + 2 * W + 1) for _ in range(n - 1))
    mgrid = rest[core].reshape(-1, n - 1) if n > 1 else np.zeros((1, 0))
    acc = np.zeros(len(xs))
    centers = xs / h
    for m0 in range(-W, W + 1):
        g = np.zeros(mgrid.shape[0])
        for a, w in zip(off, mu):
            src = fslab(m0 - a[0])
            sl = tuple(slice(A - a[i], A - a[i] + 2 * W + 1) for i in range(1, n))
            g += w * src[sl].reshape(-1)
        for key in [k for k in slabs if k < m0 - A]:
            del slabs[key]
        nz = g != 0
        if not nz.any():
            continue
        gm, pm = g[nz], mgrid[nz]
        for t, c in enumerate(centers):
            r2 = (c[0] - m0) ** 2 + np.sum((c[1:] - pm) ** 2, axis=1)
            acc[t] += float(np.dot(gm, eval_rbf(spec, np.sqrt(r2))))
    return acc


@dataclass(frozen=True)
class ConvergenceReport:
    h_values: List[float]
    sup_errors: List[float]
    fitted_slope: float
    log_corrected_slope: float
    target_order: float
    target_has_log: bool
    fit_residual: float = 0.0
    used_finest_half: bool = False
    pure_model_residual: float = 0.0
    log_model_residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "h_values": self.h_values,
            "sup_errors": self.sup_errors,
            "fitted_slope": self.fitted_slope,
            "log_corrected_slope": self.log_corrected_slope,
            "target_order": self.target_order,
            "target_has_log": self.target_has_log,
            "fit_residual": self.fit_residual,
            "used_finest_half": self.used_finest_half,
            "pure_model_residual": self.pure_model_residual,
            "log_model_residual": self.log_model_residual,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["h", "sup_error"])
        for h, e in zip(self.h_values, self.sup_errors):
            w.writerow([repr(float(h)), repr(float(e))])
        return buf.getvalue()


def target_rate(stencil: Stencil) -> Tuple[float, bool]:
    """(order, has_log) of the error: O(h^k) or O(h^k log(1/h)) when the log term is at s^0 relative."""
    k = stencil.singularity_order
    L = stencil.product_order - k
    return float(min(k, k + L)), L <= 0


def _fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(coef[0]), resid


def fit_rates(h_values, errors, target_order: float, threshold: float = 0.05):
    """(slope, log-corrected slope, residual, used finest half, pure residual, log residual)."""
    lh = np.log(np.asarray(h_values, dtype=float))
    le = np.log(np.asarray(errors, dtype=float))
    ll = np.log(np.log(1.0 / np.asarray(h_values, dtype=float)))
    slope, resid = _fit(lh, le)
    used_half = False
    corr, _ = _fit(lh, le - ll)
    if resid > threshold and len(lh) >= 4:
        idx = np.argsort(lh)[: max(2, len(lh) // 2)]
        slope, resid = _fit(lh[idx], le[idx])
        corr, _ = _fit(lh[idx], le[idx] - ll[idx])
        used_half = True
    pure = le - target_order * lh
    logm = le - target_order * lh - ll
    pure_res = float(np.sqrt(np.mean((pure - pure.mean()) ** 2)))
    log_res = float(np.sqrt(np.mean((logm - logm.mean()) ** 2)))
    return slope, corr, resid, used_half, pure_res, log_res


def convergence_study(
    stencil: Stencil,
    spec: RbfSpec,
    f: Callable[[np.ndarray], np.ndarray],
    h_values: Sequence[float],
    envelope: Optional[Callable[[float], float]] = None,
    points: Optional[np.ndarray] = None,
    tail_tol: float = 1e-10,
    half_width: Optional[float] = None,
    threads: Optional[int] = None,
    n_phases: int = 2,
) -> ConvergenceReport:
    """Sup error of Q_h f over fixed interior points for each h."""
    if len(h_values) < 3:
        raise ValueError("need at least 3 h values")
    hs = [float(h) for h in h_values]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("h values must be decreasing")
    n = stencil.n
    pts = interior_points(n) if points is None else np.atleast_2d(points)
    errors = []
    for h in hs:
        if envelope is not None and half_width is None and not _phi_grows(spec):
            # data beyond r changes Q_h f by at most envelope(r) * sum|Psi|
            r = 1.0
            while envelope(r) > tail_tol and r < 1e3:
                r *= 1.05
            vals = quasi_interpolate_compact(stencil, spec, f, h, r, pts)
            errors.append(float(np.max(np.abs(vals - f(pts)))))
            continue
        R = truncation_radius(stencil, spec, tail_tol)
        hw = half_width
        if hw is None:
            hw = float(np.max(np.abs(pts))) + (R + 1) * h if math.isfinite(R) else 8.0
            if envelope is not None:
                r = 1.0
                while envelope(r) > tail_tol * 1e-3 and r < 1e3:
                    r *= 1.1
                hw = min(hw, r) if math.isfinite(R) else r
        data = GridFunction.from_function(
            f, h, n, hw, envelope=envelope, outside_bound=None if envelope is None else envelope(hw)
        )
        radius = min(R, (hw + float(np.max(np.abs(pts)))) * math.sqrt(n) / h + 2)
        snapped, vals = _evaluate_cached(stencil, spec, data, pts, tail_tol, threads, n_phases, radius, {})
        errors.append(float(np.max(np.abs(vals - f(snapped)))))
    order, has_log = target_rate(stencil)
    slope, corr, resid, half, pure_res, log_res = fit_rates(hs, errors, order)
    return ConvergenceReport(hs, errors, slope, corr, order, has_log, resid, half, pure_res, log_res)


# --------------------------------------------------------------------------
# Test-function catalog


def _gaussian(X):
    return np.exp(-np.sum(np.asarray(X) ** 2, axis=1))


def _trig(X):
    return np.prod(np.cos(np.asarray(X)), axis=1)


def _runge(X):
    return 1.0 / (1.0 + 25.0 * np.sum(np.asarray(X) ** 2, axis=1))


CATALOG: Dict[str, Tuple[Callable, Optional[Callable[[float], float]], str]] = {
    "gaussian-bump": (_gaussian, lambda r: math.exp(-r * r), "exp(-|x|^2)"),
    "trig-product": (_trig, None, "prod_i cos(x_i)"),
    "runge": (_runge, lambda r: 1.0 / (1.0 + 25.0 * r * r), "1 / (1 + 25 |x|^2)"),
}
