"""The two radial basis function families and the four-part TPS split."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np


class Family(str, Enum):
    TPS = "tps"
    POWER = "power"


class SpecError(ValueError):
    """Invalid RBF parameters."""


@dataclass(frozen=True)
class RbfSpec:
    """Parameters of one RBF.

    ``GeneralizedTps``: ``(c^{2d} + r^{2d}) log(c^{2d} + r^{2d})``.
    ``PowerFamily``: ``(c^lam + r^lam)^beta``.
    """

    family: Family
    n: int
    c: float
    d: Optional[int] = None
    lam: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise SpecError(f"dimension n must be a positive integer, got {self.n!r}")
        if not (math.isfinite(self.c) and self.c > 0):
            raise SpecError(f"shape parameter c must be positive, got {self.c!r}")
        if self.family is Family.TPS:
            if self.d is None or int(self.d) != self.d or self.d < 1:
                raise SpecError(f"tps exponent d must be an integer >= 1, got {self.d!r}")
            object.__setattr__(self, "d", int(self.d))
        else:
            if self.lam is None or self.lam == 0 or not math.isfinite(self.lam):
                raise SpecError(f"lambda must be a nonzero real, got {self.lam!r}")
            if self.beta is None or not math.isfinite(self.beta):
                raise SpecError(f"beta must be a real number, got {self.beta!r}")
            if self.beta > 0 and float(self.beta).is_integer():
                raise SpecError(f"beta must not be a positive integer, got {self.beta!r}")
            if self.beta == 0:
                raise SpecError("beta = 0 gives a constant function")

    @classmethod
    def tps(cls, n: int, c: float, d: int) -> "RbfSpec":
        return cls(Family.TPS, n, c, d=d)

    @classmethod
    def power(cls, n: int, c: float, lam: float, beta: float) -> "RbfSpec":
        return cls(Family.POWER, n, c, lam=lam, beta=beta)

    @property
    def negative_integer_beta(self) -> bool:
        return self.family is Family.POWER and self.beta < 0 and float(self.beta).is_integer()

    def to_dict(self) -> dict:
        if self.family is Family.TPS:
            return {"family": "tps", "n": self.n, "c": self.c, "d": self.d}
        return {"family": "power", "n": self.n, "c": self.c, "lambda": self.lam, "beta": self.beta}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RbfSpec":
        if not isinstance(data, dict):
            raise SpecError("spec must be a JSON object")
        fam = data.get("family")
        try:
            if fam == "tps":
                return cls.tps(int(data["n"]), float(data["c"]), data["d"])
            if fam == "power":
                return cls.power(int(data["n"]), float(data["c"]), float(data["lambda"]), float(data["beta"]))
        except KeyError as exc:
            raise SpecError(f"spec is missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, SpecError):
                raise
            raise SpecError(f"bad spec field: {exc}") from None
        raise SpecError(f"unknown family {fam!r} (expected 'tps' or 'power')")

    @classmethod
    def from_json(cls, text: str) -> "RbfSpec":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"malformed spec JSON: {exc}") from None
        return cls.from_dict(data)


@dataclass(frozen=True)
class TpsSplit:
    phi1: float
    phi2: float
    phi3: float
    phi4: float

    @property
    def total(self) -> float:
        return self.phi1 + self.phi2 + self.phi3 + self.phi4


def eval_rbf(spec: RbfSpec, r):
    """phi(r) for scalar or array r >= 0.

    For the power family with ``lam < 0`` the value at ``r = 0`` is the limit
    0 when ``beta < 0``; with ``beta > 0`` the function is singular there and
    a ``ValueError`` is raised.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be nonnegative")
    if spec.family is Family.TPS:
        w = spec.c ** (2 * spec.d) + r ** (2 * spec.d)
        out = w * np.log(w)
    else:
        lam, beta, c = spec.lam, spec.beta, spec.c
        if lam > 0:
            out = (c**lam + r**lam) ** beta
        else:
            zero = r == 0
            if np.any(zero) and beta > 0:
                raise ValueError("power-family RBF with lambda < 0, beta > 0 is singular at r = 0")
            rr = np.where(zero, 1.0, r)
            out = np.where(zero, 0.0, (c**lam + rr**lam) ** beta)
    return float(out) if out.ndim == 0 else out


def eval_tps_split(spec: RbfSpec, r: float) -> TpsSplit:
    """The four summands phi_I..phi_IV at radius r."""
    if spec.family is not Family.TPS:
        raise SpecError("the four-part split exists only for the tps family")
    if r < 0:
        raise ValueError("radius must be nonnegative")
    c, d = spec.c, spec.d
    logc = math.log(c)
    r2d = r ** (2 * d)
    l1p = math.log1p((r / c) ** (2 * d))
    return TpsSplit(
        phi1=2 * d * c ** (2 * d) * logc,
        phi2=2 * d * r2d * logc,
        phi3=r2d * l1p,
        phi4=c ** (2 * d) * l1p,
    )
