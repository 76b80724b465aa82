"""Approximation-order check on the scaled shift-invariant ladder.

For a stencil with symbol P, ``Psi_hat(xi + beta) = P(xi) phi_hat(|xi + beta|)``
at every ``beta`` in 2 pi Z^n, so

    c_beta = lim_{xi -> 0} |P(xi)| / |xi|^k * |phi_hat(|beta|)|.

The limit factor does not depend on beta and is computed once per ``k``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .lagrange import Stencil, ray_directions, symbol_eval
from .mellin import Method, MbIntegrand, NoConvergenceError, Which, eval_ft
from .rbf_model import Family, RbfSpec


class LimitDivergenceError(ArithmeticError):
    """|P(xi)| / |xi|^k grows without bound as xi -> 0."""


class LimitNotStableError(ArithmeticError):
    """The probe sequence did not settle to the requested accuracy."""


@dataclass(frozen=True)
class SymbolLimit:
    value: float
    per_direction: List[float]
    local_exponent: float


def symbol_limit(stencil: Stencil, k: float, t0: float = 0.05, halvings: int = 10, rtol: float = 1e-6) -> SymbolLimit:
    """max over rays of lim_{t -> 0} |P(t u)| / t^k.

    Along a ray ``P(t u) = b t^m (1 + O(t^2))``; the observed local exponent
    ``m - k`` decides between a zero limit, divergence and a finite limit,
    the last one sharpened by one Richardson step in ``t^2``.
    """
    dirs = ray_directions(stencil.n)
    ts = t0 * 0.5 ** np.arange(halvings + 1)
    limits, exps = [], []
    for u in dirs:
        P = np.abs(np.array([symbol_eval(stencil, t * u) for t in ts], dtype=float))
        if not np.any(P > 0):
            limits.append(0.0)
            exps.append(math.inf)
            continue
        ratio = P / ts**k
        q = math.log2(ratio[-2] / ratio[-1]) if ratio[-1] > 0 else math.inf
        exps.append(q)
        if q > 0.25:
            limits.append(0.0)
            continue
        if q < -0.25:
            raise LimitDivergenceError(
                f"|P(xi)|/|xi|^{k:g} grows like |xi|^{q:.3g} along u={np.round(u, 6).tolist()}"
            )
        rich = (4.0 * ratio[1:] - ratio[:-1]) / 3.0
        if abs(rich[-1] - rich[-2]) > rtol * abs(rich[-1]):
            raise LimitNotStableError(f"limit moved by {abs(rich[-1] - rich[-2]):.3g} under the last halving")
        limits.append(float(rich[-1]))
    finite = [q for q in exps if math.isfinite(q)]
    return SymbolLimit(max(limits), limits, max(finite, key=abs) if finite else math.inf)


def phi_hat_bound(spec: RbfSpec, s: float) -> Tuple[float, bool]:
    """(|phi_hat(s)|, exact) where exact=False marks an upper bound.

    Far out the transforms of the growing families are exponentially small
    and the line integral only resolves them to an absolute floor; there
    ``|value| + error`` is returned instead.
    """
    which = Which.TPS_SUM if spec.family is Family.TPS else Which.POWER
    integrand = MbIntegrand(which, spec)
    try:
        return abs(eval_ft(integrand, s, 1e-10).value), True
    except NoConvergenceError:
        res = eval_ft(integrand, s, 1e-10, method=Method.CONTOUR)
        return abs(res.value) + res.truncation_estimate, False


def _lattice_index(beta, n: int) -> Tuple[int, ...]:
    b = np.asarray(beta, dtype=float).reshape(-1)
    if b.shape != (n,):
        raise ValueError("beta has the wrong dimension")
    m = b / (2 * math.pi)
    mi = np.round(m)
    if np.any(np.abs(m - mi) > 1e-9):
        raise ValueError("beta must lie in 2 pi Z^n")
    if not np.any(mi):
        raise ValueError("beta must be nonzero")
    return tuple(int(v) for v in mi)


def estimate_c_beta(stencil: Stencil, spec: RbfSpec, beta, k: float) -> float:
    _lattice_index(beta, stencil.n)
    lim = symbol_limit(stencil, k).value
    if lim == 0.0:
        return 0.0
    val, _ = phi_hat_bound(spec, float(np.linalg.norm(beta)))
    return lim * val


@dataclass(frozen=True)
class LadderCheck:
    k: float
    s_smooth: float
    c_beta_table: Dict[Tuple[int, ...], float]
    partial_sum: float
    converged: bool
    partial_sums: List[float] = field(default_factory=list)
    increments: List[float] = field(default_factory=list)
    decay: str = ""
    fitted_exponent: Optional[float] = None
    bounded_entries: int = 0

    def to_dict(self) -> dict:
        rows = [
            {"m": list(m), "beta_norm": 2 * math.pi * math.sqrt(sum(v * v for v in m)), "c_beta": c}
            for m, c in sorted(self.c_beta_table.items())
        ]
        return {
            "k": self.k,
            "s_smooth": self.s_smooth,
            "partial_sum": self.partial_sum,
            "converged": self.converged,
            "partial_sums": self.partial_sums,
            "increments": self.increments,
            "decay": self.decay,
            "fitted_exponent": self.fitted_exponent,
            "bounded_entries": self.bounded_entries,
            "c_beta_table": rows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _classify_increments(radii: List[int], inc: List[float]) -> Tuple[str, Optional[float], bool]:
    pos = [(R, v) for R, v in zip(radii, inc) if v > 0]
    if not pos:
        return "zero", None, True
    if len(pos) < 3:
        return "vanishing", None, True
    lr = np.log([R for R, _ in pos])
    lv = np.log([v for _, v in pos])
    local = np.diff(lv) / np.diff(lr)
    tail = local[-max(2, len(local) // 2):]
    half = max(2, len(lr) // 2)
    slope = float(np.polyfit(lr[-half:], lv[-half:], 1)[0])
    # steepening slopes: faster than any power
    if tail[-1] < -10 and np.all(np.diff(tail) < 0):
        return "superpolynomial", slope, True
    return "algebraic", slope, slope < -1.05


def ladder_check(stencil: Stencil, spec: RbfSpec, k: float, s_smooth: float, radius: int = 6) -> LadderCheck:
    """Tabulate c_beta for |m|_inf <= radius (beta = 2 pi m) and test the weighted sum.

    Summands are ``c_beta^2 |beta|^(2 s)``; shell increments between
    successive radii decide convergence.
    """
    if not s_smooth < k:
        raise ValueError("need s_smooth < k")
    if int(radius) != radius or radius < 2:
        raise ValueError("radius must be an integer >= 2")
    n = stencil.n
    lim = symbol_limit(stencil, k).value
    cache: Dict[int, Tuple[float, bool]] = {}
    table: Dict[Tuple[int, ...], float] = {}
    shells = [0.0] * (radius + 1)
    bounded = 0
    for m in itertools.product(range(-radius, radius + 1), repeat=n):
        if not any(m):
            continue
        q = sum(v * v for v in m)
        if lim == 0.0:
            c = 0.0
        else:
            if q not in cache:
                cache[q] = phi_hat_bound(spec, 2 * math.pi * math.sqrt(q))
            val, exact = cache[q]
            bounded += not exact
            c = lim * val
        table[m] = float(c)
        bn = 2 * math.pi * math.sqrt(q)
        shells[max(abs(v) for v in m)] += c * c * bn ** (2 * s_smooth)
    shells = [float(v) for v in shells]
    sums = list(itertools.accumulate(shells[1:]))
    radii = list(range(2, radius + 1))
    inc = shells[2:]
    kind, slope, ok = _classify_increments(radii, inc)
    return LadderCheck(
        k=float(k),
        s_smooth=float(s_smooth),
        c_beta_table=table,
        partial_sum=sums[-1],
        converged=ok,
        partial_sums=sums[1:],
        increments=inc,
        decay=kind,
        fitted_exponent=slope,
        bounded_entries=bounded,
    )
