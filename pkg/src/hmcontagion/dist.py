"""Joint and ordered default-time distributions conditional on the observed record.

Given the posterior over the hidden state at valuation time t and the default
record, the joint density of the surviving obligors' default times factorises
over inter-default segments.  With the candidate times sorted, each segment
contributes an endpoint-resolved survival table (the summed-survivor exponent
over the segment) followed by the defaulting obligor's intensity at the
segment end, as a diagonal in the hidden state:

    f = posterior_row . [ T_1 W_1 ] [ T_2 W_2 ] ... [ T_n W_n ] . 1

This is the density of the vector of default times (obligor identities
attached); it integrates to one over the full orthant.  Ordered default-time
probabilities for homogeneous symmetric intensities replace the single-obligor
diagonals with summed-survivor diagonals and fold the tail beyond the query
time into one survival factor, leaving a nested one-dimensional integral per
additional default.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import Mapping

import numpy as np
from scipy.integrate import quad_vec

from .chain import ChainSpec, default_epsilon, phi_homogeneous, phi_inhomogeneous
from .filtering import Posterior
from .model import (
    IntensityModel,
    PortfolioState,
    survival_rate_function,
    surviving_rate_vector,
)

__all__ = [
    "DensityQuery",
    "joint_density",
    "joint_survival",
    "ordered_interval_prob",
    "ordered_survival",
]

_QUAD_RTOL = 1e-6
_DEFAULT_ZETA = 1e-3
_MAX_MC_DIM = 10
_QUAD_DIM = 3


@dataclass(frozen=True)
class DensityQuery:
    """Valuation context plus one candidate default time per surviving obligor."""

    t: float
    posterior: Posterior
    port: PortfolioState
    model: IntensityModel
    chain: ChainSpec
    assignment: Mapping[int, float] = field(default_factory=dict)

    def ordered_pairs(self) -> list[tuple[int, float]]:
        survivors = set(self.port.survivors())
        if set(self.assignment) != survivors:
            raise ValueError(
                f"assignment must cover exactly the survivors {sorted(survivors)}"
            )
        floor = max(self.t, self.port.last_default_time)
        if any(v <= floor for v in self.assignment.values()):
            raise ValueError("candidate times must exceed the valuation time and last default")
        pairs = sorted(self.assignment.items(), key=lambda kv: kv[1])
        times = [v for _, v in pairs]
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise ValueError("candidate times must be strictly increasing")
        return pairs


def _survival_table(
    chain: ChainSpec,
    model: IntensityModel,
    port: PortfolioState,
    start: float,
    duration: float,
    epsilon: float | None,
) -> np.ndarray:
    """Endpoint-resolved no-default exposure over [start, start + duration]."""
    if duration == 0.0:
        return np.eye(2)
    if not model.time_dependent:
        return phi_homogeneous(chain, surviving_rate_vector(model, port, start), duration)
    n = len(port.survivors())
    bound = n * model.single_bound(start, port.obligor_count)
    eps = epsilon if epsilon is not None else default_epsilon(_DEFAULT_ZETA, duration, 0.0, max(bound, 1e-30))
    rates = survival_rate_function(model, port, start)
    return phi_inhomogeneous(chain, rates, start, duration, eps)


def joint_density(q: DensityQuery, epsilon: float | None = None) -> float:
    """Joint density of the surviving obligors' default times at the queried point.

    Mixes the start-state conditional densities by the posterior, so it is
    linear in the posterior by construction.  Nonnegative everywhere.
    """
    pairs = q.ordered_pairs()
    vec = q.posterior.as_array()
    port = q.port
    prev = q.t
    m = port.n_defaults
    k_total = port.obligor_count
    for obligor, tau in pairs:
        table = _survival_table(q.chain, q.model, port, prev, tau - prev, epsilon)
        lam = np.array([q.model.single(tau, 0, m), q.model.single(tau, 1, m)])
        vec = (vec @ table) * lam
        port = port.with_default(obligor, tau)
        m += 1
        prev = tau
    assert k_total == port.obligor_count
    return float(vec.sum())


def _tail_rate(model: IntensityModel, n_alive: int, m: int, at_time: float) -> float:
    """Reference decay rate for mapping a (lower, inf) integral onto (0, 1)."""
    late = model.single(at_time + 20.0, 0, m)
    return max(n_alive * min(model.single(at_time, 0, m), late), 1e-4)


def joint_survival(
    thresholds: Mapping[int, float],
    t: float,
    posterior: Posterior,
    port: PortfolioState,
    model: IntensityModel,
    chain: ChainSpec,
    epsilon: float | None = None,
    mc_paths: int = 200_000,
    seed: int = 20260811,
) -> tuple[float, float]:
    """P(every surviving obligor outlives its threshold), with an error estimate.

    Computed by integrating the joint density over the orthant above the
    thresholds: exact nested quadrature up to three survivors, a total-hazard
    Monte Carlo estimate (with its standard error) beyond that.  The density
    route equates survival with "everyone defaults after the thresholds", so
    it requires default times that are almost surely finite; both built-in
    families satisfy that whenever their base coefficient is positive.
    """
    survivors = set(port.survivors())
    if set(thresholds) != survivors:
        raise ValueError(f"thresholds must cover exactly the survivors {sorted(survivors)}")
    if any(v < t for v in thresholds.values()):
        raise ValueError("thresholds must be >= the valuation time")
    n = len(survivors)
    if n > _MAX_MC_DIM:
        raise ValueError(f"dimension {n} exceeds the supported maximum {_MAX_MC_DIM}")
    if n > _QUAD_DIM:
        from .mc import estimate_joint_survival

        return estimate_joint_survival(
            thresholds, t, posterior, port, model, chain, n_paths=mc_paths, seed=seed
        )

    lows = {i: max(v, t) for i, v in thresholds.items()}
    total = 0.0
    for order in permutations(sorted(survivors)):
        total += _cone_integral(order, lows, t, posterior, port, model, chain, epsilon)
    return total, _QUAD_RTOL * max(total, 1.0)


def _cone_integral(
    order: tuple[int, ...],
    lows: Mapping[int, float],
    t: float,
    posterior: Posterior,
    port: PortfolioState,
    model: IntensityModel,
    chain: ChainSpec,
    epsilon: float | None,
) -> float:
    """Integral of the joint density over one default-order cone above the thresholds."""

    def level(l: int, prev: float, state: PortfolioState) -> np.ndarray:
        lower = max(lows[order[l]], prev)
        m = state.n_defaults
        n_alive = len(state.survivors())
        rate = _tail_rate(model, n_alive, m, lower)

        def integrand(z: float) -> np.ndarray:
            v = lower - math.log1p(-z) / rate
            table = _survival_table(chain, model, state, prev, v - prev, epsilon)
            lam = np.array([model.single(v, 0, m), model.single(v, 1, m)])
            nxt = state.with_default(order[l], v)
            inner = (
                level(l + 1, v, nxt)
                if l + 1 < len(order)
                else np.ones(2)
            )
            return table @ (lam * inner) / (rate * (1.0 - z))

        val, _ = quad_vec(integrand, 0.0, 1.0 - 1e-12, epsrel=_QUAD_RTOL, epsabs=1e-14)
        return val

    return float(posterior.as_array() @ level(0, t, port))


def _require_symmetric(model: IntensityModel) -> None:
    if not getattr(model, "homogeneous_symmetric", True):
        raise ValueError("ordered default-time formulas need a homogeneous symmetric model")


def ordered_interval_prob(
    k: int,
    s: float,
    t: float,
    posterior: Posterior,
    port: PortfolioState,
    model: IntensityModel,
    chain: ChainSpec,
    epsilon: float | None = None,
) -> float:
    """P(k-th default occurs by s and the (k+1)-th after s | record at t).

    k counts defaults from inception, so k = current default count queries
    "no further default by s".  Nested one-dimensional quadrature over the
    k - m intermediate default times; the beyond-s tail is a single survival
    factor.
    """
    _require_symmetric(model)
    m = port.n_defaults
    kk = port.obligor_count
    if not m <= k <= kk:
        raise ValueError(f"order index k={k} outside [{m}, {kk}]")
    if s < t:
        raise ValueError("query time must be >= the valuation time")

    def tail(l: int, prev: float, state: PortfolioState) -> np.ndarray:
        if l == k:
            return _survival_table(chain, model, state, prev, s - prev, epsilon) @ np.ones(2)
        m_now = state.n_defaults
        n_alive = len(state.survivors())
        next_id = state.survivors()[0]

        def integrand(v: float) -> np.ndarray:
            table = _survival_table(chain, model, state, prev, v - prev, epsilon)
            lam = n_alive * np.array(
                [model.single(v, 0, m_now), model.single(v, 1, m_now)]
            )
            return table @ (lam * tail(l + 1, v, state.with_default(next_id, v)))

        val, _ = quad_vec(integrand, prev, s, epsrel=_QUAD_RTOL, epsabs=1e-14)
        return val

    return float(posterior.as_array() @ tail(m, t, port))


def ordered_survival(
    k: int,
    s: float,
    t: float,
    posterior: Posterior,
    port: PortfolioState,
    model: IntensityModel,
    chain: ChainSpec,
    epsilon: float | None = None,
) -> float:
    """P(k-th default happens after s | record at t): partial sum over interval events."""
    _require_symmetric(model)
    m = port.n_defaults
    if k <= m:
        return 0.0
    if k > port.obligor_count:
        raise ValueError(f"order index k={k} exceeds the portfolio size")
    return sum(
        ordered_interval_prob(i, s, t, posterior, port, model, chain, epsilon)
        for i in range(m, k)
    )
