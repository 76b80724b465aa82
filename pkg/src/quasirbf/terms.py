"""Expansion terms shared by the transform evaluator and the asymptotics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional


@dataclass(frozen=True)
class ExpansionTerm:
    """``coeff * s**power + coeff_of_log * s**power * log(c s / 2)``."""

    power: float
    coeff: float
    has_log: bool = False
    coeff_of_log: float = 0.0

    def value(self, s: float, c: float) -> float:
        v = self.coeff
        if self.has_log:
            v += self.coeff_of_log * math.log(c * s / 2.0)
        return v * s**self.power

    def to_dict(self) -> dict:
        return {
            "power": self.power,
            "coeff": self.coeff,
            "has_log": self.has_log,
            "coeff_of_log": self.coeff_of_log,
        }


@dataclass(frozen=True)
class AsymptoticExpansion:
    terms: List[ExpansionTerm]
    c: float
    truncated_at_power: float
    m0: Optional[int] = None
    t0: Optional[int] = None
    notes: List[str] = field(default_factory=list)
    # first term left out by the truncation, when known
    next_term: Optional[ExpansionTerm] = None

    def value(self, s: float, below: Optional[float] = None) -> float:
        return sum(t.value(s, self.c) for t in self.terms if below is None or t.power < below)

    @property
    def leading(self) -> ExpansionTerm:
        return self.terms[0]

    @property
    def first_log_power(self) -> Optional[float]:
        for t in self.terms:
            if t.has_log:
                return t.power
        return None

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "m0": self.m0,
            "t0": self.t0,
            "truncated_at_power": self.truncated_at_power,
            "terms": [t.to_dict() for t in self.terms],
        }


def merge_terms(terms, tol: float = 1e-12) -> List[ExpansionTerm]:
    """Combine terms of equal power and sort by increasing power."""
    out: List[ExpansionTerm] = []
    for t in sorted(terms, key=lambda t: t.power):
        if out and abs(out[-1].power - t.power) <= tol * max(1.0, abs(t.power)):
            prev = out[-1]
            out[-1] = replace(
                prev,
                coeff=prev.coeff + t.coeff,
                has_log=prev.has_log or t.has_log,
                coeff_of_log=prev.coeff_of_log + t.coeff_of_log,
            )
        else:
            out.append(t)
    return out
