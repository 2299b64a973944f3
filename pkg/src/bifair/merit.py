"""Merit functions mapping a mean reward to a positive merit score."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

IDENTITY = 0
AFFINE = 1
POWER = 2

KIND_NAMES = {"identity": IDENTITY, "affine": AFFINE, "power": POWER}

DEFAULT_MERIT_FLOOR = 1e-3


class MeritAssumptionError(ValueError):
    """The merit function is not bounded away from zero on its domain."""


@numba.njit(cache=True)
def merit_eval(kind, a, b, p, x):
    if kind == IDENTITY:
        return x
    if kind == AFFINE:
        return a * x + b
    return x**p


@dataclass(frozen=True)
class MeritSpec:
    """A monotone non-decreasing merit function on ``[lo, hi]``.

    ``affine`` evaluates ``a*mu + b``; ``power`` evaluates ``mu**p``.
    """

    kind: str = "identity"
    a: float = 1.0
    b: float = 0.0
    p: float = 1.0
    lo: float = DEFAULT_MERIT_FLOOR
    hi: float = 1.0

    @classmethod
    def identity(cls, merit_floor: float = DEFAULT_MERIT_FLOOR) -> "MeritSpec":
        return cls("identity", lo=merit_floor)

    @classmethod
    def affine(cls, a: float, b: float, merit_floor: float = DEFAULT_MERIT_FLOOR) -> "MeritSpec":
        return cls("affine", a=a, b=b, lo=merit_floor)

    @classmethod
    def power(cls, p: float, merit_floor: float = DEFAULT_MERIT_FLOOR) -> "MeritSpec":
        return cls("power", p=p, lo=merit_floor)

    @property
    def code(self) -> int:
        return KIND_NAMES[self.kind]

    @property
    def params(self) -> tuple[int, float, float, float]:
        return self.code, float(self.a), float(self.b), float(self.p)

    @property
    def domain(self) -> tuple[float, float]:
        return self.lo, self.hi

    def problems(self) -> list[str]:
        """Every violated requirement, as readable messages (empty when valid)."""
        errs = []
        if self.kind not in KIND_NAMES:
            return [f"unknown merit kind {self.kind!r}"]
        if not (0.0 <= self.lo <= self.hi <= 1.0):
            errs.append(f"merit domain [{self.lo}, {self.hi}] not inside [0,1]")
        if self.kind == "affine" and self.a < 0:
            errs.append(f"affine merit with a={self.a} is decreasing; only non-decreasing merits are supported")
        if self.kind == "power" and self.p < 1:
            errs.append(f"power merit needs p >= 1 (got {self.p})")
        if not errs:
            g1 = self(self.lo)
            if not g1 > 0:
                errs.append(f"γ₁ = {g1} violates the minimum-merit assumption (needs γ₁ > 0 on [{self.lo}, {self.hi}])")
        return errs

    def __call__(self, mu):
        return merit_value(self, mu)

    @property
    def gamma1(self) -> float:
        return merit_bounds(self)[0]

    @property
    def gamma2(self) -> float:
        return merit_bounds(self)[1]

    @property
    def lipschitz_L(self) -> float:
        return merit_bounds(self)[2]


def merit_value(spec: MeritSpec, mu):
    """Evaluate the merit at ``mu`` (scalar or array); values must lie in the domain."""
    arr = np.asarray(mu, dtype=np.float64)
    if np.any(arr < spec.lo) or np.any(arr > spec.hi):
        raise ValueError(f"mean {mu} outside merit domain [{spec.lo}, {spec.hi}]; clip first")
    if spec.kind == "identity":
        out = arr.copy()
    elif spec.kind == "affine":
        out = spec.a * arr + spec.b
    else:
        out = arr**spec.p
    return float(out) if out.ndim == 0 else out


def merit_bounds(spec: MeritSpec) -> tuple[float, float, float]:
    """Return ``(gamma1, gamma2, lipschitz_L)`` over the domain.

    All supported forms are non-decreasing, so the extrema sit at the domain
    ends; ``power`` has its steepest slope at the upper end.
    """
    if spec.kind not in KIND_NAMES:
        raise ValueError(f"unknown merit kind {spec.kind!r}")
    lo, hi = spec.lo, spec.hi
    if spec.kind == "identity":
        g1, g2, lip = lo, hi, 1.0
    elif spec.kind == "affine":
        if spec.a < 0:
            raise ValueError("decreasing affine merit is not supported")
        g1, g2, lip = spec.a * lo + spec.b, spec.a * hi + spec.b, abs(spec.a)
    else:
        if spec.p < 1:
            raise ValueError("power merit needs p >= 1")
        g1, g2, lip = lo**spec.p, hi**spec.p, spec.p * hi ** (spec.p - 1)
    if not g1 > 0:
        raise MeritAssumptionError(f"γ₁ = {g1} on [{lo}, {hi}]: merit must be bounded away from 0")
    return float(g1), float(g2), float(lip)
