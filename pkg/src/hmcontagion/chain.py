"""Two-state continuous-time Markov chain quantities.

Everything downstream (filtering, default-time densities, pricing) reduces to
weighted occupation-time moment generating functions of a two-state chain.
For exponent rates u = (u0, u1) applied while the chain occupies state 0 / 1,
the endpoint-resolved MGF table

    phi[i, j] = E[ exp( integral of u(X_s) ds ) ; X_t = j | X_0 = i ]

solves dPhi/dt = A Phi with A = [[u0 - theta0, theta0], [theta1, u1 - theta1]],
i.e. phi(t) = expm(A t).  This module evaluates that exponential in closed
form, handles time-dependent rates by the left-endpoint freezing scheme with
its error bound, and provides the step-size / error-budget arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ChainSpec",
    "RateVector",
    "TimeRateFunction",
    "DegenerateTransitionError",
    "transition_prob",
    "transition_matrix",
    "phi_homogeneous",
    "mgf_homogeneous",
    "step_size",
    "phi_inhomogeneous",
    "epsilon_for_relative_error",
    "default_epsilon",
]

EPSILON_CAP = 1.0 - 1e-9
_BISECT_RES = 1e-12


class DegenerateTransitionError(ZeroDivisionError):
    """Raised when an MGF value would divide by a vanishing transition probability."""


@dataclass(frozen=True)
class ChainSpec:
    """Hidden two-state chain: rates theta0 (0 -> 1), theta1 (1 -> 0)."""

    theta0: float
    theta1: float
    initial_state: int = 0

    def __post_init__(self) -> None:
        for name in ("theta0", "theta1"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.initial_state not in (0, 1):
            raise ValueError(f"initial_state must be 0 or 1, got {self.initial_state}")


@dataclass(frozen=True)
class RateVector:
    """Per-unit-time exponent, one component per chain state."""

    u0: float
    u1: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.u0) and math.isfinite(self.u1)):
            raise ValueError(f"rate components must be finite, got ({self.u0}, {self.u1})")

    def __add__(self, other: "RateVector") -> "RateVector":
        return RateVector(self.u0 + other.u0, self.u1 + other.u1)


@dataclass(frozen=True)
class TimeRateFunction:
    """Time-dependent exponent t -> RateVector with a finite sup-norm bound.

    ``bound`` must dominate max(|u0(t)|, |u1(t)|) over the horizon it is used
    on; it feeds the step-size control.  ``breakpoints`` are absolute times at
    which the function is allowed to be discontinuous; the freezing partition
    always cuts there, so exactly piecewise-constant rates are reproduced
    exactly.
    """

    func: Callable[[float], RateVector]
    bound: float
    breakpoints: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if not (math.isfinite(self.bound) and self.bound >= 0.0):
            raise ValueError(f"rate bound must be finite and >= 0, got {self.bound}")

    def __call__(self, t: float) -> RateVector:
        return self.func(t)


def transition_matrix(spec: ChainSpec, t: float) -> np.ndarray:
    """2x2 transition probability table P[i, j] over a duration t >= 0."""
    if t < 0.0:
        raise ValueError(f"duration must be >= 0, got {t}")
    q = spec.theta0 + spec.theta1
    if q == 0.0:
        return np.eye(2)
    e = math.exp(-q * t)
    p01 = spec.theta0 * (1.0 - e) / q
    p10 = spec.theta1 * (1.0 - e) / q
    return np.array([[1.0 - p01, p01], [p10, 1.0 - p10]])


def transition_prob(spec: ChainSpec, i: int, j: int, t: float) -> float:
    """P(X_t = j | X_0 = i) in closed form."""
    if i not in (0, 1) or j not in (0, 1):
        raise ValueError("state indices must be 0 or 1")
    return float(transition_matrix(spec, t)[i, j])


def _expm2(a11: float, a12: float, a21: float, a22: float, t: float) -> np.ndarray:
    """exp(A t) for a real 2x2 matrix with a12 * a21 >= 0 (real eigenvalues).

    Written as exp(mu t) [cosh(g t) I + sinh(g t)/g * B] with B = A - mu I,
    mu the mean eigenvalue and 2g the eigenvalue gap.  The series branch for
    g t near 0 is the repeated-eigenvalue limit and avoids the 0/0 of the
    eigen-decomposition difference quotient.
    """
    prod = a12 * a21
    if prod < 0.0:
        raise ValueError("off-diagonal product must be >= 0 for a real eigenvalue gap")
    mu = 0.5 * (a11 + a22)
    d = 0.5 * (a11 - a22)
    g = math.sqrt(d * d + prod)
    z = g * t
    if z < 1e-6:
        e = math.exp(mu * t)
        ch = e * (1.0 + 0.5 * z * z)
        sh = e * t * (1.0 + z * z / 6.0)
    else:
        ep = math.exp((mu + g) * t)
        em = math.exp((mu - g) * t)
        ch = 0.5 * (ep + em)
        sh = 0.5 * (ep - em) / g
    return np.array([[ch + sh * d, sh * a12], [sh * a21, ch - sh * d]])


def phi_homogeneous(spec: ChainSpec, u: RateVector, t: float) -> np.ndarray:
    """Endpoint-resolved occupation-time MGF table for constant exponent rates.

    Entry [i, j] is E[exp(u0 T0 + u1 T1); X_t = j | X_0 = i] where T0, T1 are
    the occupation times of the two states over [0, t].  At u = 0 this is the
    transition matrix; the table satisfies the semigroup property in t.
    """
    if t < 0.0:
        raise ValueError(f"duration must be >= 0, got {t}")
    return _expm2(u.u0 - spec.theta0, spec.theta0, spec.theta1, u.u1 - spec.theta1, t)


def mgf_homogeneous(spec: ChainSpec, u: RateVector, i: int, j: int, t: float) -> float:
    """Occupation-time MGF conditioned on both endpoints: phi[i, j] / P[i, j].

    Degenerate when the conditioning transition has zero probability (i != j
    at t = 0, or transitions disabled by a zero theta); callers that multiply
    the MGF back by transition probabilities should use phi tables directly.
    """
    p = transition_prob(spec, i, j, t)
    if p < 1e-300:
        raise DegenerateTransitionError(
            f"P_{i}{j}({t}) = {p}; endpoint-conditioned MGF undefined"
        )
    return float(phi_homogeneous(spec, u, t)[i, j]) / p


def step_size(epsilon: float, rate_bound: float) -> float:
    """Largest freezing step keeping the per-step MGF error below epsilon.

    Returns -ln(1 - epsilon) / rate_bound; a zero bound means the exponent is
    identically zero and any step is exact, signalled by +inf.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    if rate_bound < 0.0:
        raise ValueError(f"rate_bound must be >= 0, got {rate_bound}")
    if rate_bound == 0.0:
        return math.inf
    return -math.log1p(-epsilon) / rate_bound


def _partition(s0: float, t: float, h_max: float, breakpoints: Sequence[float]) -> list[float]:
    """Grid over [s0, s0 + t]: cut at declared breakpoints, then evenly with step <= h_max."""
    end = s0 + t
    cuts = sorted({s0, end, *(b for b in breakpoints if s0 < b < end)})
    grid = [s0]
    for a, b in zip(cuts[:-1], cuts[1:]):
        span = b - a
        n = 1 if not math.isfinite(h_max) else max(1, math.ceil(span / h_max - 1e-12))
        if n > 20_000_000:
            raise ValueError(f"partition of {span} at step {h_max} needs {n} pieces")
        for k in range(1, n + 1):
            grid.append(a + span * k / n)
    grid[-1] = end
    return grid


def phi_inhomogeneous(
    spec: ChainSpec, rates: TimeRateFunction, s0: float, t: float, epsilon: float
) -> np.ndarray:
    """Approximate MGF table for time-dependent rates over [s0, s0 + t].

    The window is partitioned with step at most step_size(epsilon, bound); on
    each piece the rate vector is frozen at the left endpoint and the pieces
    are chained by the semigroup product, summing over intermediate states.
    Each per-step table is within epsilon of the true one, and the result is
    exact when the rates are piecewise constant between declared breakpoints.
    """
    if t < 0.0:
        raise ValueError(f"duration must be >= 0, got {t}")
    if t == 0.0:
        return np.eye(2)
    h_max = step_size(epsilon, rates.bound)
    grid = _partition(s0, t, h_max, rates.breakpoints)
    out = np.eye(2)
    for a, b in zip(grid[:-1], grid[1:]):
        out = out @ phi_homogeneous(spec, rates(a), b - a)
    return out


def _relative_error_bound(eps: float, duration: float, rate_bound: float) -> float:
    """Worst-case relative error of the frozen-step product over one window.

    With M = duration * rate_bound / (-ln(1 - eps)) steps, each step's table
    is below 1 and above 1 - eps, and the chained product over both state
    sequences inflates to 2^M [ (1 + eps / (1 - eps))^(M + 1) - 1 ].
    """
    if duration == 0.0 or rate_bound == 0.0:
        return 0.0
    ell = -math.log1p(-eps)
    m = duration * rate_bound / ell
    # 2^M * (exp(L (M+1)) - 1) with L*M = duration*rate_bound; evaluate in logs.
    log_growth = (m + 1.0) * ell
    if log_growth > 700.0:
        return math.inf
    log_total = m * math.log(2.0) + math.log(math.expm1(log_growth))
    if log_total > 700.0:
        return math.inf
    return math.exp(log_total)


def epsilon_for_relative_error(
    zeta: float, seg1: float, seg2: float, rate_bound: float
) -> float:
    """Largest per-step error budget meeting the two-window relative-error bound.

    Both windows must satisfy _relative_error_bound(eps, ., .) < zeta / 2.
    The bound diverges at both ends of (0, 1), so a minimising budget always
    exists; when even the minimum exceeds zeta / 2 the target is infeasible
    (the bound is first-order in the step and cannot shrink with eps) and the
    minimiser itself is returned as the best achievable budget.
    """
    if not 0.0 < zeta < 1.0:
        raise ValueError(f"zeta must be in (0, 1), got {zeta}")
    if seg1 < 0.0 or seg2 < 0.0:
        raise ValueError("segment durations must be >= 0")
    if rate_bound < 0.0:
        raise ValueError(f"rate_bound must be >= 0, got {rate_bound}")
    if rate_bound == 0.0 or (seg1 == 0.0 and seg2 == 0.0):
        return EPSILON_CAP

    def bound(eps: float) -> float:
        return max(
            _relative_error_bound(eps, seg1, rate_bound),
            _relative_error_bound(eps, seg2, rate_bound),
        )

    target = 0.5 * zeta
    if bound(EPSILON_CAP) < target:
        return EPSILON_CAP

    # Locate the minimiser on a log grid, then sharpen by ternary search.
    grid = np.logspace(-12, math.log10(EPSILON_CAP), 241)
    values = [bound(float(e)) for e in grid]
    k = int(np.argmin(values))
    lo = float(grid[max(k - 1, 0)])
    hi = float(grid[min(k + 1, len(grid) - 1)])
    while hi - lo > _BISECT_RES:
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if bound(m1) <= bound(m2):
            hi = m2
        else:
            lo = m1
    eps_min = 0.5 * (lo + hi)
    if bound(eps_min) >= target:
        return eps_min

    # Feasible: the bound increases to the right of the minimiser, so the
    # largest admissible budget is the crossing on that branch.
    lo, hi = eps_min, EPSILON_CAP
    while hi - lo > _BISECT_RES:
        mid = 0.5 * (lo + hi)
        if bound(mid) < target:
            lo = mid
        else:
            hi = mid
    return lo


def default_epsilon(zeta: float, seg1: float, seg2: float, rate_bound: float) -> float:
    """Per-step budget actually used by callers: the relative-error rule capped at zeta.

    The cap keeps the per-step additive error at or below the requested
    relative target even when the two-window bound is infeasibly loose.
    """
    return min(epsilon_for_relative_error(zeta, seg1, seg2, rate_bound), zeta)
