"""Deterministic increasing processes used by the splitting construction.

All schedules are piecewise linear with slopes 0 or 1.  Evaluation is done in
exact rational arithmetic and rounded once, so values at breakpoints (which
are multiples of the mesh ``T/n``) come out exact.

* ``identity``        t
* ``a_schedule``      A_t(n): flat at k*delta on [2k delta, (2k+1) delta],
                      slope one on [(2k+1) delta, (2k+2) delta]
* ``b_schedule``      B_t(n) = A_{t+delta}(n)
* ``kappa``           time change of the stretched interval [0, (d1+1) T]:
                      runs during the first delta of every block of length
                      (d1+1) delta and is flat for the rest
* ``kappa_shifted``   kappa(max(t - r delta, 0))
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real

KINDS = ("identity", "a_schedule", "b_schedule", "kappa", "kappa_shifted")


def _exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(float(x))


@dataclass(frozen=True)
class ClockSchedule:
    kind: str = "identity"
    n: int | None = None
    T: float | None = None
    d1: int | None = None
    r: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown clock kind {self.kind!r}")
        if self.kind != "identity":
            if self.n is None or self.n < 1:
                raise ValueError("schedule needs n >= 1")
            if self.T is None or not self.T > 0:
                raise ValueError("schedule needs T > 0")
        if self.kind in ("kappa", "kappa_shifted") and (self.d1 is None or self.d1 < 1):
            raise ValueError("kappa needs d1 >= 1")
        if self.r < 0:
            raise ValueError("shift r must be >= 0")

    @classmethod
    def identity(cls) -> "ClockSchedule":
        return cls()

    @classmethod
    def a_schedule(cls, n: int, T: float) -> "ClockSchedule":
        return cls("a_schedule", n, T)

    @classmethod
    def b_schedule(cls, n: int, T: float) -> "ClockSchedule":
        return cls("b_schedule", n, T)

    @classmethod
    def kappa(cls, n: int, T: float, d1: int) -> "ClockSchedule":
        return cls("kappa", n, T, d1)

    @classmethod
    def kappa_shifted(cls, n: int, T: float, d1: int, r: int) -> "ClockSchedule":
        return cls("kappa_shifted", n, T, d1, r)

    @property
    def delta(self) -> Fraction | None:
        if self.kind == "identity":
            return None
        return _exact(self.T) / self.n

    def _eval_exact(self, t: Fraction) -> Fraction:
        if self.kind == "identity":
            return t
        delta = self.delta
        # work in mesh units u = t / delta so the piecewise logic stays in integers
        u = t / delta
        if self.kind == "b_schedule":
            u += 1
        if self.kind in ("a_schedule", "b_schedule"):
            k = u // 2
            rest = u - 2 * k
            return (k + rest - 1) * delta if rest > 1 else k * delta
        if self.kind == "kappa_shifted":
            u -= self.r
        if u <= 0:
            return Fraction(0)
        block = self.d1 + 1
        k = u // block
        rest = u - k * block
        return (k + min(rest, 1)) * delta

    def eval(self, t):
        """Value at time ``t`` (float in, float out; Fraction in, Fraction out)."""
        if t < 0:
            raise ValueError("clocks are evaluated at t >= 0")
        v = self._eval_exact(_exact(t))
        return v if isinstance(t, Fraction) else float(v)

    __call__ = eval

    def breakpoints(self, horizon) -> list[Fraction]:
        """Slope changes in [0, horizon] (plus both endpoints)."""
        h = _exact(horizon)
        pts = {Fraction(0), h}
        if self.kind != "identity":
            delta = self.delta
            j = 0
            while j * delta <= h:
                pts.add(j * delta)
                j += 1
        return sorted(pts)


def increment(clock: ClockSchedule, s, t):
    """Stieltjes increment clock(t) - clock(s), for 0 <= s <= t."""
    if s > t:
        raise ValueError(f"increment needs s <= t, got s={s}, t={t}")
    return clock.eval(t) - clock.eval(s)


def schedule_distance(c1: ClockSchedule, c0: ClockSchedule, horizon: Real) -> float:
    """sup over [0, horizon] of |c1(t) - c0(t)|, exact for piecewise-linear pairs."""
    pts = sorted(set(c1.breakpoints(horizon)) | set(c0.breakpoints(horizon)))
    best = max(abs(c1._eval_exact(p) - c0._eval_exact(p)) for p in pts)
    return float(best)


def splitting_clocks(n: int, T: float, d1: int) -> tuple[list[ClockSchedule], list[ClockSchedule]]:
    """Drift clocks of the exact (first) and split (second) time-changed systems.

    In both systems L_0 and the noise run on kappa; L_r runs on kappa in the
    exact system and on kappa(. - r delta) in the split one.
    """
    kap = ClockSchedule.kappa(n, T, d1)
    exact = [kap] * (d1 + 1)
    split = [kap] + [ClockSchedule.kappa_shifted(n, T, d1, r) for r in range(1, d1 + 1)]
    return exact, split
