"""Small-s expansions of the transforms and the power-family regime classifier.

Two independent routes produce every TPS coefficient: closed-form constants
(:func:`tps_expansion_phi3`, :func:`tps_expansion_phi4`) and generic residue
extraction from the Mellin-Barnes integrand (:func:`residue_expansion`).  The
tests hold them against each other.

The closed forms use the first-collision offset ``m0 = (-n/2) mod d``.  The
often-quoted ``d - (n/2 mod d)`` agrees except when ``d`` divides ``n/2``,
where it is off by ``d``; :func:`m0_quoted` keeps that variant for comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

from .mellin import (
    DegeneratePoleError,
    MbIntegrand,
    Which,
    pole_term,
    shape_of,
    shape_poles,
    small_s_side,
    tps_shape,
)
from .rbf_model import Family, RbfSpec, SpecError
from .special_fn import EULER_GAMMA, digamma_real, harmonic, lgamma_real
from .terms import AsymptoticExpansion, ExpansionTerm, merge_terms


class Quadrant(str, Enum):
    MQ_POS_POS = "MQ_pos_pos"
    IMQ_POS_NEG = "IMQ_pos_neg"
    SINGULAR_NEG_POS = "Singular_neg_pos"
    IMQ_NEG_NEG = "IMQ_neg_neg"


class Feasibility(str, Enum):
    FINITE = "FiniteStencil"
    INFINITE = "InfiniteOnly"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class RegimeReport:
    quadrant: Quadrant
    leading: Optional[ExpansionTerm]
    qi_feasible: Feasibility
    singularity_order: float
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "quadrant": self.quadrant.value,
            "leading": None if self.leading is None else self.leading.to_dict(),
            "qi_feasible": self.qi_feasible.value,
            "singularity_order": self.singularity_order,
            "notes": self.notes,
        }


# --------------------------------------------------------------------------
# Pole bookkeeping for the tps family


def _require_even(n: int) -> int:
    if n % 2:
        raise SpecError(f"tps expansions need an even dimension, got n={n}")
    return n // 2


def m0_of(n: int, d: int) -> int:
    """Smallest m >= 0 with d | (n/2 + m): where the first log term sits (power 2 m0)."""
    return (-_require_even(n)) % d


def m0_quoted(n: int, d: int) -> int:
    """``d - (n/2 mod d)``; equals :func:`m0_of` unless d divides n/2."""
    return d - (_require_even(n) % d)


def t0_phi3(n: int, d: int) -> int:
    return -1 - math.ceil(n / (2 * d))


def t0_phi4(n: int, d: int) -> int:
    return -math.ceil(n / (2 * d))


def first_double_pole(spec: RbfSpec, which: str = "TpsIII", max_poles: int = 400) -> Tuple[int, int]:
    """(m0, t0) read off the first order-2 pole found by enumeration."""
    integrand = MbIntegrand(which, spec)
    shape = shape_of(integrand)
    count = 8
    while count <= max_poles:
        for pole in shape_poles(shape, "left", count):
            if pole.order == 2:
                term = pole_term(shape, pole)
                return int(round(term.power / 2)), int(round(pole.location))
        count *= 2
    raise DegeneratePoleError(f"no double pole among the first {max_poles} poles")


# --------------------------------------------------------------------------
# Residue route


def residue_expansion(shape, up_to_power: float) -> Tuple[List[ExpansionTerm], Optional[ExpansionTerm]]:
    """Terms with power < up_to_power from the small-s side, plus the next one."""
    side = small_s_side(shape)
    count = 8
    while True:
        poles = shape_poles(shape, side, count)
        terms = [pole_term(shape, p) for p in poles]
        beyond = [t for t in terms if t.power >= up_to_power - 1e-12]
        if beyond or len(poles) < count:
            break
        count *= 2
    merged = merge_terms(terms)
    kept = [t for t in merged if t.power < up_to_power - 1e-12]
    rest = [t for t in merged if t.power >= up_to_power - 1e-12]
    return kept, (rest[0] if rest else None)


# --------------------------------------------------------------------------
# Closed forms, tps family


def tps_leading(spec: RbfSpec) -> ExpansionTerm:
    """Leading small-s term of phi_hat_III (which is also the leading term of phi_hat)."""
    if spec.family is not Family.TPS:
        raise SpecError("tps_leading needs the tps family")
    return tps_leading_params(spec.n, spec.c, spec.d)


def tps_leading_params(n: int, c: float, d: float) -> ExpansionTerm:
    """As :func:`tps_leading` but for any real d > 0.

    Integer d: a simple pole and a pure power.  Otherwise the pole at the
    origin is double and a log(cs/2) term appears at the same power.
    """
    if not d > 0:
        raise SpecError("d must be positive")
    power = -n - 2 * d
    log_k = (n + 2 * d) * math.log(2.0) + 0.5 * n * math.log(math.pi)
    if float(d).is_integer():
        d = int(d)
        sign = -1.0 if d % 2 == 0 else 1.0
        coeff = sign * math.exp(log_k + math.log(d) + math.lgamma(d + 1) + math.lgamma(n / 2 + d))
        return ExpansionTerm(power=float(power), coeff=coeff)
    lg, sg = lgamma_real(-d)
    val = -sg * math.exp(log_k + math.log(d) + math.lgamma(d + n / 2) - lg)
    psi_sum = digamma_real(-d) + digamma_real(d + n / 2)
    return ExpansionTerm(power=float(power), coeff=-val * psi_sum, has_log=True, coeff_of_log=2 * val)


def _default_tps_power(n: int, d: int) -> float:
    return 2 * m0_of(n, d) + 1


def _phi3_closed(n: int, c: float, d: int) -> List[ExpansionTerm]:
    h = n // 2
    m0 = m0_of(n, d)
    t0 = t0_phi3(n, d)
    pi_n = math.pi ** (n / 2)
    terms = []
    # simple poles of Gamma(t)^2 at t = -j, j = 0 .. -t0-1
    lead = tps_leading_params(n, c, d)
    terms.append(lead)
    for j in range(1, -t0):
        if j * d - d <= 0:
            continue  # 1/Gamma(0): the pole at t = -1 is cancelled
        lg, sg = lgamma_real(h + d - j * d)
        val = (-1) ** (j + 1) * sg * pi_n * math.exp(
            (2 * d * (1 - j) + n) * math.log(2.0) + 2 * d * j * math.log(c) + lg - math.lgamma(j * d - d)
        ) / j
        terms.append(ExpansionTerm(power=float(-n + 2 * d * (j - 1)), coeff=val))
    # simple poles of Gamma(n/2 + d + d t) before the first collision
    for j in range(m0):
        a = -(n + 2 * j) / (2 * d) - 1
        val = (
            (-1) ** j
            * math.pi ** (n / 2 + 1)
            * 2.0 ** (-2 * j)
            * c ** (2 * d + 2 * j + n)
            / (math.factorial(j) * d * a * math.gamma(j + h) * math.sin(math.pi * a))
        )
        terms.append(ExpansionTerm(power=float(2 * j), coeff=val))
    sign = -1.0 if (t0 + m0) % 2 else 1.0
    c1 = (
        sign
        * 2.0 ** (1 - 2 * m0)
        * math.pi ** (n / 2)
        * d
        * c ** (2 * d + 2 * m0 + n)
        / (math.factorial(m0) * (d + m0 + h) * math.gamma(m0 + h))
    )
    c2 = 0.5 * (-2.0 / (2 * d + 2 * m0 + n) - harmonic(m0) - digamma_real(m0 + h) + EULER_GAMMA)
    terms.append(ExpansionTerm(power=float(2 * m0), coeff=c1 * c2, has_log=True, coeff_of_log=c1))
    return terms


def _phi4_closed(n: int, c: float, d: int) -> List[ExpansionTerm]:
    h = n // 2
    m0 = m0_of(n, d)
    t0 = t0_phi4(n, d)
    pref = 2.0**n * math.pi ** (n / 2) * c ** (2 * d)
    half_c = c / 2.0
    terms = [ExpansionTerm(power=float(-n), coeff=-pref * d * math.gamma(h))]
    for j in range(1, -t0):
        val = (-1) ** (j + 1) * math.gamma(h - d * j) / (j * math.gamma(d * j)) * half_c ** (2 * d * j)
        terms.append(ExpansionTerm(power=float(-n + 2 * d * j), coeff=pref * val))
    for j in range(m0):
        val = (
            (-1) ** j
            * math.pi
            / (math.factorial(j) * (h + j) * math.gamma(h + j) * math.sin(math.pi * (h + j) / d))
            * half_c ** (n + 2 * j)
        )
        terms.append(ExpansionTerm(power=float(2 * j), coeff=pref * val))
    sign = -1.0 if (t0 + m0) % 2 else 1.0
    c1 = sign * 2 * d / (math.factorial(m0) * math.gamma(1 + m0 + h)) * half_c ** (n + 2 * m0)
    c2 = 0.5 * (-1.0 / (h + m0) - harmonic(m0) - digamma_real(m0 + h) + EULER_GAMMA)
    terms.append(ExpansionTerm(power=float(2 * m0), coeff=pref * c1 * c2, has_log=True, coeff_of_log=pref * c1))
    return terms


def _tps_expansion(spec: RbfSpec, which: Which, up_to_power: Optional[float], route: str) -> AsymptoticExpansion:
    if spec.family is not Family.TPS:
        raise SpecError("tps expansions need the tps family")
    n, c, d = spec.n, spec.c, spec.d
    m0 = m0_of(n, d)
    t0 = t0_phi3(n, d) if which is Which.TPS_III else t0_phi4(n, d)
    if up_to_power is None:
        up_to_power = _default_tps_power(n, d)
    shape = tps_shape(which, n, c, d)
    res_terms, nxt = residue_expansion(shape, up_to_power)
    notes = []
    if route == "residue":
        terms = res_terms
    elif route == "closed":
        closed = _phi3_closed(n, c, d) if which is Which.TPS_III else _phi4_closed(n, c, d)
        terms = [t for t in merge_terms(closed) if t.power < up_to_power - 1e-12]
        if up_to_power > 2 * m0 + 1e-12:
            # the closed forms stop at the first log term; continue with residues
            extra = [t for t in res_terms if t.power > 2 * m0 + 1e-12]
            if extra:
                notes.append(f"terms above power {2 * m0} come from residue extraction")
            terms = merge_terms(terms + extra)
    else:
        raise ValueError("route must be 'closed' or 'residue'")
    return AsymptoticExpansion(
        terms=terms, c=c, truncated_at_power=float(up_to_power), m0=m0, t0=t0, notes=notes, next_term=nxt
    )


def tps_expansion_phi3(spec: RbfSpec, up_to_power: Optional[float] = None, route: str = "closed") -> AsymptoticExpansion:
    """phi_hat_III(s) as s -> 0 through the first log term (power 2 m0) by default."""
    return _tps_expansion(spec, Which.TPS_III, up_to_power, route)


def tps_expansion_phi4(spec: RbfSpec, up_to_power: Optional[float] = None, route: str = "closed") -> AsymptoticExpansion:
    """phi_hat_IV(s) as s -> 0, prefactor 2^n pi^{n/2} c^{2d} included."""
    return _tps_expansion(spec, Which.TPS_IV, up_to_power, route)


def tps_expansion(spec: RbfSpec, up_to_power: Optional[float] = None) -> AsymptoticExpansion:
    """Expansion of the full phi_hat (pieces III and IV together)."""
    a = tps_expansion_phi3(spec, up_to_power)
    b = tps_expansion_phi4(spec, up_to_power)
    nxt = [t for t in (a.next_term, b.next_term) if t is not None]
    nxt_term = None
    if nxt:
        p = min(t.power for t in nxt)
        nxt_term = merge_terms([t for t in nxt if abs(t.power - p) < 1e-12])[0]
    return AsymptoticExpansion(
        terms=merge_terms(a.terms + b.terms),
        c=spec.c,
        truncated_at_power=a.truncated_at_power,
        m0=a.m0,
        t0=a.t0,
        notes=a.notes + b.notes,
        next_term=nxt_term,
    )


# --------------------------------------------------------------------------
# Power family


def _quadrant(spec: RbfSpec) -> Quadrant:
    if spec.lam > 0:
        return Quadrant.MQ_POS_POS if spec.beta > 0 else Quadrant.IMQ_POS_NEG
    return Quadrant.SINGULAR_NEG_POS if spec.beta > 0 else Quadrant.IMQ_NEG_NEG


def power_expansion(spec: RbfSpec, up_to_power: Optional[float] = None) -> AsymptoticExpansion:
    """Small-s expansion of the power-family transform by residue enumeration.

    Odd and non-integer powers are kept.  The default truncation is just past
    the first log term (or six units past the leading power if no log term
    shows up early).
    """
    if spec.family is not Family.POWER:
        raise SpecError("power_expansion needs the power family")
    shape = shape_of(MbIntegrand(Which.POWER, spec))
    if up_to_power is None:
        side = small_s_side(shape)
        poles = shape_poles(shape, side, 24)
        terms = merge_terms(pole_term(shape, p) for p in poles)
        logs = [t.power for t in terms if t.has_log]
        up_to_power = (logs[0] + 1.0) if logs else terms[0].power + 6.0
    terms, nxt = residue_expansion(shape, up_to_power)
    return AsymptoticExpansion(terms=terms, c=spec.c, truncated_at_power=float(up_to_power), next_term=nxt)


def power_leading_closed_form(spec: RbfSpec) -> Optional[ExpansionTerm]:
    """Quadrant formulas for the leading term when it comes from a simple pole.

    ``None`` when the leading behaviour is a constant or a log term.
    """
    n, c, lam, beta = spec.n, spec.c, spec.lam, spec.beta
    pi_n = math.pi ** (n / 2)
    q = _quadrant(spec)
    if q is Quadrant.MQ_POS_POS or (q is Quadrant.IMQ_POS_NEG and -beta < n / lam):
        e = n + lam * beta
        lg1, s1 = lgamma_real(e / 2)
        lg2, s2 = lgamma_real(-lam * beta / 2)
        val = s1 * s2 * pi_n * math.exp(e * math.log(2.0) + lg1 - lg2)
        return ExpansionTerm(power=-e, coeff=val)
    lt = -lam
    if n / lt <= 1:
        return None
    e = n - lt
    lg1, s1 = lgamma_real(e / 2)
    val = s1 * pi_n * math.exp(e * math.log(2.0) + lt * (1 - beta) * math.log(c) + lg1 - math.lgamma(lt / 2)) * beta
    return ExpansionTerm(power=-e, coeff=val)


def power_series_closed_form(spec: RbfSpec, up_to_power: float) -> List[ExpansionTerm]:
    """Two-sum series of the lambda < 0, beta < 0 transform (simple poles only).

    Raises :class:`DegeneratePoleError` when the two pole families meet below
    ``up_to_power``: the collision is a log term the series does not carry.
    """
    if _quadrant(spec) is not Quadrant.IMQ_NEG_NEG:
        raise SpecError("the two-sum series covers lambda < 0, beta < 0 only")
    n, c = spec.n, spec.c
    lt, bt = -spec.lam, -spec.beta
    k = 1
    while -(n - lt * k) < up_to_power:
        x = (n - lt * k) / 2
        if x <= 0 and abs(x - round(x)) < 1e-12:
            raise DegeneratePoleError(f"double pole at power {-(n - lt * k)}; use power_expansion")
        k += 1
    pi_n = math.pi ** (n / 2)
    terms = []
    k = 1
    while -(n - lt * k) < up_to_power:
        lg1, s1 = lgamma_real((n - lt * k) / 2)
        val = (
            (-1) ** k
            * s1
            * pi_n
            * math.exp(
                (n - lt * k) * math.log(2.0)
                + lt * (k + bt) * math.log(c)  # scaling phi_hat(s) = c^{n+lt*bt} F(cs)
                - math.lgamma(k + 1)
                + math.lgamma(bt + k)
                - math.lgamma(bt)
                + lg1
                - math.lgamma(lt * k / 2)
            )
        )
        terms.append(ExpansionTerm(power=float(-(n - lt * k)), coeff=val))
        k += 1
    k = 0
    while 2 * k < up_to_power:
        a = -(n + 2 * k) / lt
        lg1, s1 = lgamma_real(a)
        val = (
            (-1) ** k
            * s1
            * pi_n
            * math.exp(
                (lt * bt + n + 2 * k) * math.log(c)
                - (2 * k - 1) * math.log(2.0)
                - math.log(lt)
                - math.lgamma(k + 1)
                + lg1
                + math.lgamma(bt - a)
                - math.lgamma(bt)
                - math.lgamma(n / 2 + k)
            )
        )
        terms.append(ExpansionTerm(power=float(2 * k), coeff=val))
        k += 1
    return merge_terms(terms)


def classify_regime(spec: RbfSpec) -> RegimeReport:
    """Sign quadrant of (lambda, beta) and whether a finite stencil can work.

    The verdict is read from the actual leading small-s term:
    a negative even-integer power without log admits a finite stencil, a log
    or an odd / fractional power needs infinitely many coefficients, and a
    constant (or vanishing) leading term rules quasi-interpolation out.
    """
    if spec.family is not Family.POWER:
        raise SpecError("classify_regime needs the power family")
    q = _quadrant(spec)
    notes = []
    try:
        shape = shape_of(MbIntegrand(Which.POWER, spec))
        poles = shape_poles(shape, small_s_side(shape), 4)
    except DegeneratePoleError as exc:
        return RegimeReport(q, None, Feasibility.INFEASIBLE, math.nan, f"degenerate pole configuration: {exc}")
    if not poles:
        return RegimeReport(q, None, Feasibility.INFEASIBLE, 0.0, "no poles on the small-s side")
    lead = pole_term(shape, poles[0])
    order = -lead.power
    if lead.has_log:
        verdict = Feasibility.INFINITE if order >= 0 else Feasibility.INFEASIBLE
        notes.append("leading term is logarithmic")
    elif order <= 0:
        verdict = Feasibility.INFEASIBLE
        notes.append("no singularity at the origin" if order < 0 else "leading term is a constant")
    elif abs(order - round(order)) < 1e-12 and round(order) % 2 == 0:
        verdict = Feasibility.FINITE
    else:
        verdict = Feasibility.INFINITE
        notes.append("leading power is odd or fractional")
    if spec.negative_integer_beta:
        notes.append("beta is a negative integer")
    if q is Quadrant.SINGULAR_NEG_POS:
        notes.append(
            f"the RBF is singular at the origin; direct use is impossible (transform alone would give {verdict.value}); "
            "a combination over several c values is required and not built here"
        )
        verdict = Feasibility.INFEASIBLE
    return RegimeReport(q, lead, verdict, order, "; ".join(notes))


def expansion_remainder(shape, up_to_power: float, s: float, tol: float = 1e-12) -> Tuple[float, float]:
    """f(s) minus its expansion below ``up_to_power``, as a contour integral.

    The contour is moved past the included poles, so the remainder is
    computed directly instead of by cancelling subtraction.  Returns
    ``(remainder, error_estimate)``.
    """
    from .mellin import line_integral

    side = small_s_side(shape)
    count = 8
    while True:
        poles = [p for p in shape_poles(shape, side, count, include_cancelled=False)]
        powers = [pole_term(shape, p).power for p in poles]
        if any(pw >= up_to_power - 1e-12 for pw in powers) or len(poles) < count:
            break
        count *= 2
    inside = [p.location for p, pw in zip(poles, powers) if pw < up_to_power - 1e-12]
    outside = [p.location for p, pw in zip(poles, powers) if pw >= up_to_power - 1e-12]
    if not outside:
        raise ValueError("no pole beyond the truncation power")
    if not inside:
        raise ValueError("no pole below the truncation power")
    r = 0.5 * (inside[-1] + outside[0])
    value, err = line_integral(shape, s, r, tol)
    # the line integral runs upward; left-side residues enter with +, so moving
    # leftwards past them leaves the line integral itself as the remainder
    return value, err
