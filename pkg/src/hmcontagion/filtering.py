"""Posterior of the hidden state given Y-jumps and defaults.

The observed record is split into sub-periods holding one event each.  For a
sub-period [s, s + ds] the event densities

    f[j, i] = P(event at the observed offset, end state i | start state j, record)

are products of endpoint-resolved exposure tables (no Y-jump, no default) on
either side of the event and the event's own rate at the intermediate state.
A two-stage Bayes step reweights the start-of-period posterior by the row sums
of f and pushes it to the period end by the normalised rows.

Two conventions are switchable:

* exact mode (default) evaluates each side's exposure as a single MGF at the
  summed Y-rate + survivor-intensity exponent; the literal mode keeps the two
  MGFs separate, dividing and re-multiplying by the transition probability.
* the Y rate in force is the rate out of the currently occupied Y state; the
  literal parity selector (which swaps the two rate functions) is available
  for compatibility.
"""
from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .chain import (
    ChainSpec,
    RateVector,
    default_epsilon,
    phi_homogeneous,
    phi_inhomogeneous,
    transition_matrix,
)
from .model import IntensityModel, PortfolioState, surviving_rate_vector, survival_rate_function

__all__ = [
    "EventKind",
    "Event",
    "EventHistory",
    "ObservationSpec",
    "Posterior",
    "FilterContext",
    "Segment",
    "DegenerateEvidenceError",
    "current_y_rate",
    "f_default",
    "f_yjump",
    "update_at_event",
    "no_event_posterior",
    "run_filter",
]

_P_FLOOR = 1e-14
_DEFAULT_ZETA = 1e-3


class DegenerateEvidenceError(ArithmeticError):
    """All event densities vanished: the observed event is impossible under the model."""

    def __init__(self, message: str, event_index: int | None = None):
        super().__init__(message)
        self.event_index = event_index


class EventKind(enum.Enum):
    YJUMP = "yjump"
    DEFAULT = "default"


@dataclass(frozen=True)
class Event:
    time: float
    kind: EventKind
    obligor: int | None = None

    def __post_init__(self) -> None:
        if self.time <= 0.0:
            raise ValueError(f"event time must be > 0, got {self.time}")
        if self.kind is EventKind.DEFAULT and self.obligor is None:
            raise ValueError("default events need an obligor id")
        if self.kind is EventKind.YJUMP and self.obligor is not None:
            raise ValueError("yjump events carry no obligor id")


@dataclass(frozen=True)
class EventHistory:
    """Ordered observable record up to a horizon."""

    events: tuple[Event, ...]
    horizon: float
    y_initial: int = 0

    def __post_init__(self) -> None:
        times = [e.time for e in self.events]
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise ValueError("event times must be strictly increasing")
        if times and times[-1] > self.horizon:
            raise ValueError("events beyond the horizon")
        if self.horizon < 0.0:
            raise ValueError("horizon must be >= 0")
        ids = [e.obligor for e in self.events if e.kind is EventKind.DEFAULT]
        if len(set(ids)) != len(ids):
            raise ValueError("default obligor ids must be distinct")
        if self.y_initial not in (0, 1):
            raise ValueError("y_initial must be 0 or 1")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("time,kind,obligor\n")
        for e in self.events:
            ob = "" if e.obligor is None else str(e.obligor)
            buf.write(f"{e.time:.12g},{e.kind.value},{ob}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, horizon: float, y_initial: int = 0) -> "EventHistory":
        events = []
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if lines and lines[0].lower().replace(" ", "") == "time,kind,obligor":
            lines = lines[1:]
        for ln_no, ln in enumerate(lines, start=2):
            parts = [p.strip() for p in ln.split(",")]
            if len(parts) != 3:
                raise ValueError(f"line {ln_no}: expected 3 columns, got {len(parts)}")
            try:
                t = float(parts[0])
                kind = EventKind(parts[1].lower())
                ob = int(parts[2]) if parts[2] else None
            except (ValueError, KeyError) as exc:
                raise ValueError(f"line {ln_no}: {exc}") from None
            events.append(Event(t, kind, ob))
        return cls(tuple(events), horizon=horizon, y_initial=y_initial)


@dataclass(frozen=True)
class ObservationSpec:
    """Y-chain jump rates as functions of the hidden state.

    eta0 is the y0 -> y1 rate (per hidden state), eta1 the y1 -> y0 rate.
    """

    eta0: tuple[float, float]
    eta1: tuple[float, float]
    y_initial: int = 0

    def __post_init__(self) -> None:
        for pair in (self.eta0, self.eta1):
            if any(not (math.isfinite(v) and v >= 0.0) for v in pair):
                raise ValueError("Y-jump rates must be finite and >= 0")
        if self.y_initial not in (0, 1):
            raise ValueError("y_initial must be 0 or 1")

    def max_rate(self) -> float:
        return max(*self.eta0, *self.eta1)


@dataclass(frozen=True)
class Posterior:
    p0: float
    p1: float

    def __post_init__(self) -> None:
        if self.p0 < -1e-12 or self.p1 < -1e-12 or abs(self.p0 + self.p1 - 1.0) > 1e-9:
            raise ValueError(f"not a probability vector: ({self.p0}, {self.p1})")

    @classmethod
    def from_weights(cls, w0: float, w1: float) -> "Posterior":
        s = w0 + w1
        if not (s > 0.0 and math.isfinite(s)):
            raise DegenerateEvidenceError(f"posterior weights not normalisable: ({w0}, {w1})")
        return cls(w0 / s, w1 / s)

    def as_array(self) -> np.ndarray:
        return np.array([self.p0, self.p1])


@dataclass(frozen=True)
class Segment:
    """One sub-period [start, start + length] of the record."""

    start: float
    length: float

    def __post_init__(self) -> None:
        if self.length < 0.0 or self.start < 0.0:
            raise ValueError("segment must have start >= 0 and length >= 0")


@dataclass(frozen=True)
class FilterContext:
    """Everything the event densities need about the record up to a segment start."""

    chain: ChainSpec
    obs: ObservationSpec
    model: IntensityModel
    port: PortfolioState
    n_yjumps: int = 0
    paper_literal: bool = False
    literal_c: bool = False
    zeta: float = _DEFAULT_ZETA

    def after_yjump(self) -> "FilterContext":
        return replace(self, n_yjumps=self.n_yjumps + 1)

    def after_default(self, obligor: int, time: float) -> "FilterContext":
        return replace(self, port=self.port.with_default(obligor, time))


def current_y_rate(
    obs: ObservationSpec, n_jumps: int, x: int, literal_c: bool = False
) -> float:
    """Jump rate of Y out of its current state after n_jumps jumps, hidden state x.

    The literal parity selector indexes the rate function by
    C(n) = 1 when n + y_initial is even, 0 otherwise, which swaps the two rate
    functions relative to the occupied-state reading.
    """
    if x not in (0, 1):
        raise ValueError("hidden state index must be 0 or 1")
    if literal_c:
        sel = 1 if (n_jumps + obs.y_initial) % 2 == 0 else 0
    else:
        sel = (obs.y_initial + n_jumps) % 2
    return (obs.eta0 if sel == 0 else obs.eta1)[x]


def _y_rate_vector(ctx: FilterContext, n_jumps: int) -> RateVector:
    return RateVector(
        -current_y_rate(ctx.obs, n_jumps, 0, ctx.literal_c),
        -current_y_rate(ctx.obs, n_jumps, 1, ctx.literal_c),
    )


def _pick_epsilon(ctx: FilterContext, seg: Segment, offset: float, epsilon: float | None) -> float:
    if epsilon is not None:
        if not 0.0 < epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
        return epsilon
    n_alive = len(ctx.port.survivors())
    bound = n_alive * ctx.model.single_bound(seg.start, ctx.port.obligor_count)
    bound += ctx.obs.max_rate()
    if bound == 0.0:
        return 0.5
    return default_epsilon(ctx.zeta, offset, seg.length - offset, bound)


def _exposure_table(
    ctx: FilterContext,
    port: PortfolioState,
    n_jumps: int,
    start: float,
    duration: float,
    epsilon: float,
) -> np.ndarray:
    """No-event exposure table over [start, start + duration].

    Entry [j, l]: joint density of (no Y jump, no default, X at the window end
    equals l) given X at the window start equals j.
    """
    if duration == 0.0:
        return np.eye(2)
    y_u = _y_rate_vector(ctx, n_jumps)
    if not ctx.paper_literal:
        if not ctx.model.time_dependent:
            u = surviving_rate_vector(ctx.model, port, start) + y_u
            return phi_homogeneous(ctx.chain, u, duration)
        rates = survival_rate_function(ctx.model, port, start, extra=y_u)
        return phi_inhomogeneous(ctx.chain, rates, start, duration, epsilon)
    # Literal mode: separate MGFs for the Y exposure and the survivor exposure,
    # recombined through a single transition probability.
    phi_y = phi_homogeneous(ctx.chain, y_u, duration)
    if not ctx.model.time_dependent:
        phi_l = phi_homogeneous(ctx.chain, surviving_rate_vector(ctx.model, port, start), duration)
    else:
        rates = survival_rate_function(ctx.model, port, start)
        phi_l = phi_inhomogeneous(ctx.chain, rates, start, duration, epsilon)
    p = transition_matrix(ctx.chain, duration)
    out = np.zeros((2, 2))
    for j in range(2):
        for l in range(2):
            if p[j, l] >= _P_FLOOR:
                out[j, l] = phi_y[j, l] * phi_l[j, l] / p[j, l]
    return out


def _event_table(
    ctx: FilterContext,
    seg: Segment,
    offset: float,
    event_rate,  # callable state -> rate at the event instant
    ctx_after: FilterContext,
    epsilon: float | None,
) -> np.ndarray:
    if not 0.0 < offset <= seg.length:
        raise ValueError(f"event offset {offset} outside segment of length {seg.length}")
    eps = _pick_epsilon(ctx, seg, offset, epsilon)
    t_event = seg.start + offset
    pre = _exposure_table(ctx, ctx.port, ctx.n_yjumps, seg.start, offset, eps)
    post = _exposure_table(
        ctx_after, ctx_after.port, ctx_after.n_yjumps, t_event, seg.length - offset, eps
    )
    rates = np.array([event_rate(0), event_rate(1)])
    return pre @ np.diag(rates) @ post


def f_yjump(
    j: int,
    i: int,
    sbar: float,
    seg: Segment,
    ctx: FilterContext,
    epsilon: float | None = None,
) -> float:
    """Density of a Y jump at offset sbar with no other event in the segment."""
    table = f_yjump_table(sbar, seg, ctx, epsilon)
    return float(table[j, i])


def f_yjump_table(
    sbar: float, seg: Segment, ctx: FilterContext, epsilon: float | None = None
) -> np.ndarray:
    def rate(x: int) -> float:
        return current_y_rate(ctx.obs, ctx.n_yjumps, x, ctx.literal_c)

    return _event_table(ctx, seg, sbar, rate, ctx.after_yjump(), epsilon)


def f_default(
    j: int,
    i: int,
    beta: int,
    tbar: float,
    seg: Segment,
    ctx: FilterContext,
    epsilon: float | None = None,
) -> float:
    """Density of obligor beta defaulting at offset tbar with no other event."""
    table = f_default_table(beta, tbar, seg, ctx, epsilon)
    return float(table[j, i])


def f_default_table(
    beta: int, tbar: float, seg: Segment, ctx: FilterContext, epsilon: float | None = None
) -> np.ndarray:
    if not ctx.port.is_alive(beta):
        raise ValueError(f"obligor {beta} has already defaulted")
    t_event = seg.start + tbar
    m = ctx.port.n_defaults

    def rate(x: int) -> float:
        return ctx.model.single(t_event, x, m)

    return _event_table(ctx, seg, tbar, rate, ctx.after_default(beta, t_event), epsilon)


def _event_to_table(
    event: Event, seg: Segment, ctx: FilterContext, epsilon: float | None
) -> np.ndarray:
    offset = event.time - seg.start
    if event.kind is EventKind.YJUMP:
        return f_yjump_table(offset, seg, ctx, epsilon)
    return f_default_table(event.obligor, offset, seg, ctx, epsilon)


def update_at_event(
    prior: Posterior,
    event: Event,
    seg: Segment,
    ctx: FilterContext,
    epsilon: float | None = None,
) -> Posterior:
    """Two-stage Bayes step across a one-event segment.

    Stage one reweights the segment-start posterior by the total event density
    per start state; stage two pushes it to the segment end by the density's
    normalised rows.  Composed, the end posterior is prior @ f renormalised.
    """
    table = _event_to_table(event, seg, ctx, epsilon)
    p = prior.as_array()
    row_sums = table.sum(axis=1)
    denominator = float(p @ row_sums)
    if not (denominator > 0.0 and math.isfinite(denominator)):
        raise DegenerateEvidenceError(
            f"event at t={event.time} has vanishing density under the model"
        )
    start_post = p * row_sums / denominator
    out = np.zeros(2)
    for j in range(2):
        if row_sums[j] > 0.0:
            out += start_post[j] * table[j] / row_sums[j]
    return Posterior.from_weights(float(out[0]), float(out[1]))


def no_event_posterior(
    t: float, ctx: FilterContext, epsilon: float | None = None
) -> Posterior:
    """Posterior at t when nothing has been observed on [0, t]."""
    if ctx.port.n_defaults or ctx.n_yjumps:
        raise ValueError("no_event_posterior requires an empty record")
    init = ctx.chain.initial_state
    if t == 0.0:
        return Posterior(1.0 if init == 0 else 0.0, 1.0 if init == 1 else 0.0)
    eps = _pick_epsilon(ctx, Segment(0.0, t), t, epsilon)
    table = _exposure_table(ctx, ctx.port, 0, 0.0, t, eps)
    return Posterior.from_weights(float(table[init, 0]), float(table[init, 1]))


def run_filter(
    history: EventHistory,
    obs: ObservationSpec,
    chain: ChainSpec,
    model: IntensityModel,
    obligor_count: int,
    epsilon: float | None = None,
    paper_literal: bool = False,
    literal_c: bool = False,
    zeta: float = _DEFAULT_ZETA,
) -> list[tuple[float, Posterior]]:
    """Posterior trajectory: one entry right after each event, plus the horizon.

    Deterministic for fixed inputs; an empty record yields the single
    no-event entry at the horizon.
    """
    if history.y_initial != obs.y_initial:
        raise ValueError("history and observation spec disagree on the initial Y state")
    ctx = FilterContext(
        chain=chain,
        obs=obs,
        model=model,
        port=PortfolioState(obligor_count),
        paper_literal=paper_literal,
        literal_c=literal_c,
        zeta=zeta,
    )
    init = chain.initial_state
    posterior = Posterior(1.0 if init == 0 else 0.0, 1.0 if init == 1 else 0.0)
    out: list[tuple[float, Posterior]] = []
    prev_time = 0.0
    for idx, event in enumerate(history.events):
        seg = Segment(prev_time, event.time - prev_time)
        try:
            posterior = update_at_event(posterior, event, seg, ctx, epsilon)
        except DegenerateEvidenceError as exc:
            raise DegenerateEvidenceError(str(exc), event_index=idx) from None
        if event.kind is EventKind.YJUMP:
            ctx = ctx.after_yjump()
        else:
            ctx = ctx.after_default(event.obligor, event.time)
        out.append((event.time, posterior))
        prev_time = event.time
    # Trailing event-free stretch: pure exposure pushforward to the horizon.
    tail = history.horizon - prev_time
    if tail > 0.0 or not out:
        eps = _pick_epsilon(ctx, Segment(prev_time, tail), tail, epsilon) if tail > 0 else 0.5
        table = _exposure_table(ctx, ctx.port, ctx.n_yjumps, prev_time, tail, eps)
        weights = posterior.as_array() @ table
        posterior = Posterior.from_weights(float(weights[0]), float(weights[1]))
    out.append((history.horizon, posterior))
    return out
