"""Finite quasi-Lagrange stencils by moment matching in Fourier space.

The symbol ``P(xi) = sum mu_a cos(a . xi)`` must agree with ``1 / phi_hat``
near the origin.  With ``phi_hat(s) = s^-k (a_0 + a_1 s^2 + ...)`` up to the
first log (or odd) power ``L``, the reciprocal is the radial polynomial
``s^k (b_0 + b_1 s^2 + ...)`` through total degree ``2k + L``, and matching
the Taylor coefficients of P to it gives ``P phi_hat = 1 + O(s^{k+L} log s)``.
Coefficients are shared over hypercubic orbits (sign flips and permutations).
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .asymptotics import m0_of
from .mellin import eval_phi_hat
from .rbf_model import Family, RbfSpec
from .terms import AsymptoticExpansion

Offset = Tuple[int, ...]


class StencilError(ValueError):
    """No stencil with the requested properties."""


class InfeasibleStencilError(StencilError):
    """The moment system is inconsistent at this support radius."""


class ParityError(StencilError):
    """An odd or fractional power sits below the target order."""


@dataclass(frozen=True)
class Stencil:
    n: int
    support_radius: int
    coeffs: Dict[Offset, float]
    singularity_order: int
    reproduction_degree: int
    # order of the product P phi_hat - 1 at the origin (k + L)
    product_order: int = 0
    symmetry: str = "Hypercubic"

    def offsets(self) -> np.ndarray:
        return np.array(sorted(self.coeffs), dtype=float).reshape(-1, self.n)

    def mus(self) -> np.ndarray:
        return np.array([self.coeffs[a] for a in sorted(self.coeffs)])

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "support_radius": self.support_radius,
            "entries": [{"offset": list(a), "mu": self.coeffs[a]} for a in sorted(self.coeffs)],
            "singularity_order": self.singularity_order,
            "reproduction_degree": self.reproduction_degree,
            "product_order": self.product_order,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "Stencil":
        try:
            n = int(data["n"])
            coeffs = {tuple(int(v) for v in e["offset"]): float(e["mu"]) for e in data["entries"]}
            k = int(data["singularity_order"])
            return cls(
                n=n,
                support_radius=int(data["support_radius"]),
                coeffs=coeffs,
                singularity_order=k,
                reproduction_degree=int(data["reproduction_degree"]),
                product_order=int(data.get("product_order", k)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise StencilError(f"malformed stencil: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "Stencil":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise StencilError(f"malformed stencil JSON: {exc}") from None


@dataclass(frozen=True)
class SymbolTaylor:
    """Taylor coefficients of P at 0, keyed by multi-index (even entries only)."""

    coefficients: Dict[Offset, float]
    order: int

    def value(self, xi) -> float:
        xi = np.asarray(xi, dtype=float)
        return float(sum(c * np.prod(xi ** np.array(g)) for g, c in self.coefficients.items()))


@dataclass(frozen=True)
class StrangFixReport:
    degree_verified: int
    max_origin_residual: float
    max_lattice_residual: float
    checked_lattice_points: List[Offset] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "degree_verified": self.degree_verified,
            "max_origin_residual": self.max_origin_residual,
            "max_lattice_residual": self.max_lattice_residual,
            "checked_lattice_points": [list(p) for p in self.checked_lattice_points],
        }


# --------------------------------------------------------------------------
# Orbits and moments


def orbit_representatives(n: int, radius: int) -> List[Offset]:
    """Nonnegative, non-increasing offsets with max-norm <= radius."""
    reps = []
    for a in itertools.product(range(radius, -1, -1), repeat=n):
        if all(a[i] >= a[i + 1] for i in range(n - 1)):
            reps.append(a)
    return sorted(reps, key=lambda a: (max(a), sum(a), a))


def orbit(rep: Offset) -> List[Offset]:
    pts = set()
    for perm in set(itertools.permutations(rep)):
        nz = [i for i, v in enumerate(perm) if v]
        for signs in itertools.product((1, -1), repeat=len(nz)):
            p = list(perm)
            for i, sg in zip(nz, signs):
                p[i] *= sg
            pts.add(tuple(p))
    return sorted(pts)


def _even_multi_indices(n: int, half_degree: int) -> List[Offset]:
    """Sorted (non-increasing) beta with |beta| = half_degree; gamma = 2 beta."""
    out = []
    for b in itertools.product(range(half_degree, -1, -1), repeat=n):
        if sum(b) == half_degree and all(b[i] >= b[i + 1] for i in range(n - 1)):
            out.append(b)
    return out


def _multinomial_inv(beta: Offset) -> float:
    """m! / beta! with m = |beta|."""
    num = math.factorial(sum(beta))
    den = 1
    for b in beta:
        den *= math.factorial(b)
    return num / den


# --------------------------------------------------------------------------
# Construction


def _laurent_block(expansion: AsymptoticExpansion) -> Tuple[int, int, List[float]]:
    """(k, L, [a_0, a_1, ...]) with phi_hat = s^-k sum a_i s^{2i} below power L."""
    terms = expansion.terms
    if not terms:
        raise StencilError("empty expansion")
    lead = terms[0]
    if lead.has_log:
        raise StencilError("logarithmic leading term: no finite stencil")
    if lead.power >= 0:
        raise StencilError("no singularity at the origin: no finite stencil")
    k_real = -lead.power
    if abs(k_real - round(k_real)) > 1e-12 or round(k_real) % 2:
        raise ParityError(f"leading power {lead.power} is not a negative even integer")
    k = int(round(k_real))
    limit = expansion.truncated_at_power
    # the first log or odd/fractional power caps the attainable order
    for t in terms:
        even = abs(t.power - round(t.power)) < 1e-12 and round(t.power) % 2 == 0
        if t.has_log or not even:
            limit = min(limit, t.power)
            break
    L = int(math.floor(limit + 1e-12))
    coeffs = []
    for i in range((k + L + 1) // 2):
        p = -k + 2 * i
        if p >= limit - 1e-12:
            break
        match = [t.coeff for t in terms if abs(t.power - p) < 1e-12]
        coeffs.append(match[0] if match else 0.0)
    return k, L, coeffs


def _reciprocal(a: Sequence[float]) -> List[float]:
    b = [1.0 / a[0]]
    for i in range(1, len(a)):
        b.append(-sum(a[j] * b[i - j] for j in range(1, i + 1)) / a[0])
    return b


def _solve(As: np.ndarray, ys: np.ndarray) -> Tuple[np.ndarray, float]:
    sol, _, _, _ = np.linalg.lstsq(As, ys, rcond=1e-12)
    return sol, float(np.abs(As @ sol - ys).max())


def build_stencil(
    expansion: AsymptoticExpansion, n: int, support_radius: int, minimal_orbits: bool = True
) -> Stencil:
    """Least-norm hypercubic stencil with ``P phi_hat = 1 + O(s^{k+L})``.

    With ``minimal_orbits`` the orbits inside the max-norm box are taken in
    order of (max-norm, l1-norm) and the first consistent prefix is solved;
    otherwise every orbit in the box is used.
    """
    if support_radius < 1:
        raise StencilError("support_radius must be >= 1")
    k, L, a = _laurent_block(expansion)
    b = _reciprocal(a)
    max_degree = 2 * k + L  # Taylor degrees of P strictly below this are matched
    reps = orbit_representatives(n, support_radius)
    orbits = [np.array(orbit(r), dtype=float) for r in reps]
    rows, rhs = [], []
    for m in range(0, (max_degree + 1) // 2):
        i = m - k // 2
        for beta in _even_multi_indices(n, m):
            gamma = np.array(beta) * 2
            scale = (-1) ** m / np.prod([math.factorial(g) for g in gamma])
            rows.append([scale * float(np.sum(np.prod(o**gamma, axis=1))) for o in orbits])
            rhs.append(b[i] * _multinomial_inv(beta) if 0 <= i < len(b) else 0.0)
    A = np.array(rows)
    y = np.array(rhs)
    norms = np.maximum(np.abs(A).max(axis=1), np.abs(y))
    norms[norms == 0] = 1.0
    As, ys = A / norms[:, None], y / norms
    used = len(reps)
    sol, resid = _solve(As, ys)
    if resid > 1e-12:
        raise InfeasibleStencilError(
            f"moment system inconsistent at support_radius={support_radius} (residual {resid:.2e}); enlarge the radius"
        )
    if minimal_orbits:
        for m in range(1, len(reps)):
            trial, r_ = _solve(As[:, :m], ys)
            if r_ <= 1e-12:
                sol, used = trial, m
                break
    coeffs: Dict[Offset, float] = {}
    for r, mu in zip(reps[:used], sol):
        if mu == 0.0:
            continue
        for a_ in orbit(r):
            coeffs[a_] = float(mu)
    return Stencil(
        n=n,
        support_radius=max(max(abs(v) for v in a_) for a_ in coeffs),
        coeffs=coeffs,
        singularity_order=k,
        reproduction_degree=min(k - 1, k + L - 1),
        product_order=k + L,
    )


def minimal_stencil(
    expansion: AsymptoticExpansion, n: int, max_radius: int = 8, minimal_orbits: bool = True
) -> Stencil:
    """Smallest support radius whose moment system is consistent."""
    last = None
    for radius in range(1, max_radius + 1):
        try:
            return build_stencil(expansion, n, radius, minimal_orbits)
        except InfeasibleStencilError as exc:
            last = exc
    raise InfeasibleStencilError(f"no stencil up to radius {max_radius}: {last}")


# --------------------------------------------------------------------------
# Symbol


def _cos_in_u(m: int) -> np.ndarray:
    """Coefficients of cos(m x) as a polynomial in u = sin^2(x/2)."""
    cheb = np.polynomial.Chebyshev.basis(m).convert(kind=np.polynomial.Polynomial)
    return cheb(np.polynomial.Polynomial([1.0, -2.0])).coef[: m + 1]


def symbol_u_form(stencil: Stencil) -> np.ndarray:
    """P as a tensor-product polynomial in u_l = sin^2(xi_l / 2).

    Hypercubic symmetry makes P a sum of products of cos(a_l xi_l).  The
    coefficients of total u-degree below k/2 vanish in exact arithmetic and
    are set to zero, which removes the rounding floor of the cosine sum.
    """
    cached = stencil.__dict__.get("_u_form")
    if cached is not None:
        return cached
    n = stencil.n
    R = max(max(abs(v) for v in a) for a in stencil.coeffs)
    table = np.zeros((R + 1, R + 1))
    for m in range(R + 1):
        table[m, : m + 1] = _cos_in_u(m)
    q = np.zeros((R + 1,) * n)
    for a, mu in stencil.coeffs.items():
        term = np.array(mu)
        for v in a:
            term = np.multiply.outer(term, table[abs(v)])
        q += term
    degree = np.indices(q.shape).sum(axis=0)
    q[degree < stencil.singularity_order // 2] = 0.0
    stencil.__dict__["_u_form"] = q
    return q


def symbol_eval(stencil: Stencil, xi) -> np.ndarray:
    """P(xi); xi has shape (n,) or (m, n).

    Direct cosine summation away from the origin.  For |xi| < 1/2 the u-form
    is used instead: the cosine sum would lose all digits of a value of size
    |xi|^k there.
    """
    xi = np.asarray(xi, dtype=float)
    pts = np.atleast_2d(xi)
    val = np.cos(pts @ stencil.offsets().T) @ stencil.mus()
    near = np.linalg.norm(pts, axis=1) < 0.5
    if near.any():
        q = symbol_u_form(stencil)
        u = np.sin(pts[near] / 2.0) ** 2
        out = np.zeros(int(near.sum()))
        for idx in zip(*np.nonzero(q)):
            out += q[idx] * np.prod(u ** np.array(idx), axis=1)
        val[near] = out
    return float(val[0]) if xi.ndim == 1 else val


def symbol_eval_direct(stencil: Stencil, xi) -> np.ndarray:
    """P(xi) by plain cosine summation everywhere."""
    xi = np.asarray(xi, dtype=float)
    val = np.cos(np.atleast_2d(xi) @ stencil.offsets().T) @ stencil.mus()
    return float(val[0]) if xi.ndim == 1 else val


def symbol_derivative(stencil: Stencil, xi, gamma: Sequence[int]) -> float:
    """D^gamma P at xi, differentiating the cosine sum exactly."""
    off = stencil.offsets()
    g = np.array(gamma)
    order = int(g.sum())
    phase = off @ np.asarray(xi, dtype=float)
    # D^g cos(a.x) = a^g cos(a.x + order pi / 2)
    return float(np.sum(stencil.mus() * np.prod(off**g, axis=1) * np.cos(phase + order * math.pi / 2)))


def symbol_taylor(stencil: Stencil, order: int) -> SymbolTaylor:
    """Taylor coefficients of P at 0 through total degree ``order``."""
    off = stencil.offsets()
    mu = stencil.mus()
    out = {}
    for deg in range(0, order + 1, 2):
        for g in itertools.product(range(deg + 1), repeat=stencil.n):
            if sum(g) != deg or any(v % 2 for v in g):
                continue
            fact = np.prod([math.factorial(v) for v in g])
            val = (-1) ** (deg // 2) * float(np.sum(mu * np.prod(off ** np.array(g), axis=1))) / fact
            out[tuple(g)] = val
    return SymbolTaylor(out, order)


def moment(stencil: Stencil, gamma: Sequence[int]) -> float:
    return float(np.sum(stencil.mus() * np.prod(stencil.offsets() ** np.array(gamma), axis=1)))


def ray_directions(n: int) -> np.ndarray:
    """Coordinate axes and the main diagonals (at least 2n directions)."""
    dirs = [np.eye(n)[i] for i in range(n)]
    for signs in itertools.product((1.0, -1.0), repeat=n):
        if signs[0] > 0:
            dirs.append(np.array(signs) / math.sqrt(n))
    if n == 1:
        dirs.append(-np.eye(1)[0])
    return np.array(dirs)


def _radial_poly_coeffs(stencil: Stencil, u: np.ndarray, degree: int) -> List[float]:
    """p_j with P(t u) = sum_j p_j t^j, j <= degree (odd j vanish)."""
    proj = stencil.offsets() @ u
    mu = stencil.mus()
    out = []
    for j in range(degree + 1):
        if j % 2:
            out.append(0.0)
        else:
            out.append((-1) ** (j // 2) * float(np.sum(mu * proj**j)) / math.factorial(j))
    return out


def check_strang_fix(
    stencil: Stencil,
    spec: RbfSpec,
    degree: int,
    lattice_points: Sequence[Sequence[int]],
    expansion: Optional[AsymptoticExpansion] = None,
) -> StrangFixReport:
    """Numerical Strang-Fix check.

    Origin: the product of the symbol's Taylor polynomial along rays with the
    Laurent block of phi_hat must be 1 + O(t^{degree+1}); the largest stray
    product coefficient (relative) is combined with the direct residual
    |P phi_hat - 1| at a small ray point.  Lattice points ``j`` (entries are
    multiples of 2 pi divided by 2 pi, i.e. integer vectors): derivatives of P
    up to ``degree`` at 2 pi j, times |phi_hat(2 pi |j|)|.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    k = stencil.singularity_order
    deg = min(degree, k - 1, stencil.product_order - 1)
    n = stencil.n
    origin = 0.0
    dirs = ray_directions(n)
    t = 1e-3
    for u in dirs:
        val = symbol_eval(stencil, t * u) * eval_phi_hat(spec, t)
        origin = max(origin, abs(val - 1.0))
    if expansion is not None:
        k_, L, a = _laurent_block(expansion)
        for u in dirs:
            p = _radial_poly_coeffs(stencil, u, k + deg)
            # coefficient of t^m in P(tu) * t^-k sum a_i t^{2i}
            for m in range(0, deg + 1):
                acc = 0.0
                scale = 0.0
                for i, ai in enumerate(a):
                    j = m + k - 2 * i
                    if 0 <= j < len(p):
                        acc += p[j] * ai
                        scale += abs(p[j] * ai)
                target = 1.0 if m == 0 else 0.0
                if scale:
                    origin = max(origin, abs(acc - target) / max(scale, 1.0))
    lattice = 0.0
    checked = []
    for j in lattice_points:
        j = tuple(int(v) for v in j)
        if not any(j):
            raise ValueError("lattice points must be nonzero")
        x = 2 * math.pi * np.array(j, dtype=float)
        mag = abs(eval_phi_hat(spec, float(np.linalg.norm(x))))
        worst = 0.0
        scale = float(np.sum(np.abs(stencil.mus())))
        for total in range(deg + 1):
            for g in itertools.product(range(total + 1), repeat=n):
                if sum(g) == total:
                    worst = max(worst, abs(symbol_derivative(stencil, x, g)) / scale)
        lattice = max(lattice, worst * max(mag, 1.0))
        checked.append(j)
    return StrangFixReport(deg, origin, lattice, checked)


def stencil_decay_bound(spec: RbfSpec, expansion: Optional[AsymptoticExpansion] = None) -> float:
    """Algebraic decay exponent of Psi.

    TPS: 2n + 2d + 2 m0.  Inverse multiquadric type: 2n - 2 for even n,
    2n - 1 for odd n.
    """
    n = spec.n
    if spec.family is Family.TPS:
        m0 = expansion.m0 if expansion is not None and expansion.m0 is not None else m0_of(n, spec.d)
        return float(2 * n + 2 * spec.d + 2 * m0)
    return float(2 * n - 2 if n % 2 == 0 else 2 * n - 1)
