"""Default-intensity families, portfolio state, and rate-vector assembly.

Both built-in families are homogeneous and symmetric: every surviving obligor
carries the same intensity given the time, the hidden state x in {0, 1} and
the number of defaults observed so far.  That symmetry is what the ordered
default-time formulas rely on, so heterogeneous coefficients are out of scope.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .chain import RateVector, TimeRateFunction

__all__ = [
    "PortfolioState",
    "IntensityModel",
    "LinearContagion",
    "ExpDecayContagion",
    "CustomIntensity",
    "intensity",
    "surviving_rate_vector",
    "lambda_max",
    "survival_rate_function",
]


@dataclass(frozen=True)
class PortfolioState:
    """Observed default record: portfolio size and ordered (obligor, time) defaults."""

    obligor_count: int
    defaults: tuple[tuple[int, float], ...] = field(default=())

    def __post_init__(self) -> None:
        k = self.obligor_count
        if k < 1:
            raise ValueError(f"obligor_count must be >= 1, got {k}")
        if len(self.defaults) > k:
            raise ValueError("more defaults than obligors")
        ids = [i for i, _ in self.defaults]
        times = [t for _, t in self.defaults]
        if len(set(ids)) != len(ids):
            raise ValueError("default obligor ids must be distinct")
        if any(not 1 <= i <= k for i in ids):
            raise ValueError(f"obligor ids must lie in 1..{k}")
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise ValueError("default times must be strictly increasing")

    @property
    def n_defaults(self) -> int:
        return len(self.defaults)

    @property
    def last_default_time(self) -> float:
        return self.defaults[-1][1] if self.defaults else 0.0

    def survivors(self) -> tuple[int, ...]:
        gone = {i for i, _ in self.defaults}
        return tuple(i for i in range(1, self.obligor_count + 1) if i not in gone)

    def is_alive(self, obligor: int) -> bool:
        return all(obligor != i for i, _ in self.defaults)

    def with_default(self, obligor: int, time: float) -> "PortfolioState":
        return PortfolioState(self.obligor_count, self.defaults + ((obligor, time),))


class IntensityModel:
    """Base for per-obligor default intensities lambda(t, x, n_defaulted_others)."""

    #: False when the intensity depends on absolute time (needs the freezing scheme).
    time_dependent: bool = False

    def single(self, t: float, x: int, n_defaults: int) -> float:
        """Intensity of one surviving obligor given time, hidden state, default count."""
        raise NotImplementedError

    def single_bound(self, from_time: float, k: int) -> float:
        """Upper bound on self.single over [from_time, inf), x in {0,1}, up to k-1 defaults."""
        raise NotImplementedError


@dataclass(frozen=True)
class LinearContagion(IntensityModel):
    """lambda_i(t) = a + b * x + c * (number of defaulted others)."""

    a: float
    b: float
    c: float
    time_dependent = False

    def __post_init__(self) -> None:
        _check_coefficients(self.a, self.b, self.c, allow_negative_b=True)

    def single(self, t: float, x: int, n_defaults: int) -> float:
        return self.a + self.b * x + self.c * n_defaults

    def single_bound(self, from_time: float, k: int) -> float:
        return self.a + max(self.b, 0.0) + self.c * (k - 1)


@dataclass(frozen=True)
class ExpDecayContagion(IntensityModel):
    """lambda_i(t) = (a + c * defaulted others) * exp(-t) + b * x.

    Time t is absolute model time from inception, so the contagion load decays
    regardless of when defaults happened.
    """

    a: float
    b: float
    c: float
    time_dependent = True

    def __post_init__(self) -> None:
        _check_coefficients(self.a, self.b, self.c)

    def single(self, t: float, x: int, n_defaults: int) -> float:
        return (self.a + self.c * n_defaults) * math.exp(-t) + self.b * x

    def single_bound(self, from_time: float, k: int) -> float:
        return (self.a + self.c * (k - 1)) * math.exp(-from_time) + self.b


@dataclass(frozen=True)
class CustomIntensity(IntensityModel):
    """Extension point: arbitrary (t, x, n_defaults) -> rate with a declared bound.

    The bound must dominate the rate over the whole intended horizon; it is
    load-bearing for the step-size control, which is why it is mandatory.
    """

    func: Callable[[float, int, int], float]
    horizon_bound: float
    time_dependent = True
    homogeneous_symmetric = True

    def __post_init__(self) -> None:
        if not (math.isfinite(self.horizon_bound) and self.horizon_bound >= 0.0):
            raise ValueError("custom intensities must declare a finite horizon bound")

    def single(self, t: float, x: int, n_defaults: int) -> float:
        v = self.func(t, x, n_defaults)
        if v < 0.0:
            raise ValueError(f"custom intensity returned a negative rate {v}")
        return v

    def single_bound(self, from_time: float, k: int) -> float:
        return self.horizon_bound


def _check_coefficients(a: float, b: float, c: float, allow_negative_b: bool = False) -> None:
    for name, v in (("a", a), ("b", b), ("c", c)):
        if not math.isfinite(v):
            raise ValueError(f"coefficient {name} must be finite")
    # Checked against the worst reachable state (x = 1, any default count): the
    # linear form stays nonnegative iff a >= 0, a + b >= 0 and c >= 0, while the
    # decaying form additionally needs b >= 0 because the a-part vanishes as
    # t grows.
    ok = a >= 0.0 and c >= 0.0 and a + b >= 0.0 and (allow_negative_b or b >= 0.0)
    if not ok:
        raise ValueError(
            f"intensity can go negative for a={a}, b={b}, c={c}"
        )


def intensity(
    model: IntensityModel, obligor: int, t: float, x: int, port: PortfolioState
) -> float:
    """Intensity of a surviving obligor at absolute time t in hidden state x."""
    if not port.is_alive(obligor):
        raise ValueError(f"obligor {obligor} has already defaulted")
    if t < port.last_default_time:
        raise ValueError("evaluation time precedes the last recorded default")
    if x not in (0, 1):
        raise ValueError("hidden state index must be 0 or 1")
    return model.single(t, x, port.n_defaults)


def surviving_rate_vector(model: IntensityModel, port: PortfolioState, t: float) -> RateVector:
    """Minus the summed intensity of all survivors, per hidden state."""
    n = len(port.survivors())
    m = port.n_defaults
    return RateVector(-n * model.single(t, 0, m), -n * model.single(t, 1, m))


def lambda_max(model: IntensityModel, k: int, horizon: float = 0.0) -> float:
    """Bound on any single-obligor intensity over [0, horizon], all states and records."""
    if horizon < 0.0:
        raise ValueError("horizon must be >= 0")
    return model.single_bound(0.0, k)


def survival_rate_function(
    model: IntensityModel,
    port: PortfolioState,
    window_start: float,
    extra: RateVector | None = None,
    breakpoints: tuple[float, ...] = (),
) -> TimeRateFunction:
    """Summed-survivor exponent as a TimeRateFunction, optionally plus a constant term.

    The bound covers the window [window_start, inf): for the built-in families
    the summed intensity is nonincreasing in time for a fixed default record.
    """
    n = len(port.survivors())
    m = port.n_defaults
    e0 = extra.u0 if extra is not None else 0.0
    e1 = extra.u1 if extra is not None else 0.0

    def rates(t: float) -> RateVector:
        return RateVector(
            -n * model.single(t, 0, m) + e0, -n * model.single(t, 1, m) + e1
        )

    per_single = model.single_bound(window_start, port.obligor_count)
    bound = n * per_single + max(abs(e0), abs(e1))
    return TimeRateFunction(rates, bound, breakpoints)
