"""Generic execution of timer-driven hybrid systems.

A model object supplies the flow and jump behavior (see
``model.HybridFOModel`` for the concrete interface); this module owns hybrid
time bookkeeping, exact event scheduling for affinely decreasing timers,
jump-priority semantics, and the resulting solution arcs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

# Two timer events within this many seconds count as simultaneous.
EVENT_TOL = 1e-12


@dataclass(frozen=True)
class HybridTime:
    t: float
    j: int


@dataclass
class JumpRecord:
    time: HybridTime
    case: str  # "G1", "G2", "G3-first-half", "G3-second-half"
    applied: str  # which map fired: "g1" or "g2"
    state_before: object
    state_after: object


@dataclass
class JumpStats:
    alpha: list  # gradient jumps per completed input period
    alpha_bar: list  # prefix sums, alpha_bar[0] == 0


@dataclass
class Segment:
    """One flow interval of a hybrid arc, at fixed jump index j."""

    j: int
    t_start: float
    t_end: float
    times: np.ndarray
    states: list
    rate_c: float = -1.0
    rate_g: float = -1.0

    def matrix(self) -> np.ndarray:
        return np.vstack([s.as_vector() for s in self.states])


@dataclass
class HybridArc:
    segments: list
    jumps: list
    seed: int | None = None
    sample_dt: float = 0.01
    min_dwell: float | None = None

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end

    @property
    def jump_count(self) -> int:
        return len(self.jumps)

    def segment_for(self, j: int) -> Segment:
        for seg in self.segments:
            if seg.j == j:
                return seg
        raise KeyError(f"arc has no segment with jump index {j}")


def next_event(tau_c: float, tau_g: float, rate_c: float = -1.0, rate_g: float = -1.0):
    """Time until the first timer reaches zero, and which timer(s) expire.

    Timers decrease affinely, so event times are exact: dt = tau / |rate|.
    Returns (dt, which) with which in {"c", "g", "both"}.
    """
    if rate_c >= 0.0 or rate_g >= 0.0:
        raise ValueError("timer rates must be strictly negative")
    if tau_c < 0.0 or tau_g < 0.0:
        raise ValueError("timers must be nonnegative")
    dt_c = tau_c / -rate_c
    dt_g = tau_g / -rate_g
    if abs(dt_c - dt_g) <= EVENT_TOL:
        return min(dt_c, dt_g), "both"
    if dt_c < dt_g:
        return dt_c, "c"
    return dt_g, "g"


def _advance_timers(state, rate_c, rate_g, dt, expired=""):
    tau_c = state.tau_c + rate_c * dt
    tau_g = state.tau_g + rate_g * dt
    if expired in ("c", "both") or abs(tau_c) <= EVENT_TOL:
        tau_c = 0.0
    if expired in ("g", "both") or abs(tau_g) <= EVENT_TOL:
        tau_g = 0.0
    return max(tau_c, 0.0), max(tau_g, 0.0)


def _point_segment(model, state, t, j):
    rate_c, rate_g = model.timer_rates()
    return Segment(j, t, t, np.array([t]), [state], rate_c, rate_g)


def _flow_segment(model, state, t, j, t_max, sample_dt):
    """Flow from (t, j) until the next timer event or t_max.

    Returns (segment, end_state, end_time, horizon_hit).
    """
    rate_c, rate_g = model.timer_rates()
    remaining = t_max - t
    if remaining <= EVENT_TOL:
        return _point_segment(model, state, t, j), state, t, True
    if model.which_case(state) is not None:
        return _point_segment(model, state, t, j), state, t, False

    dt_event, which = next_event(state.tau_c, state.tau_g, rate_c, rate_g)
    if dt_event <= remaining + EVENT_TOL:
        dt_flow, expired, horizon_hit = dt_event, which, False
    else:
        dt_flow, expired, horizon_hit = remaining, "", True

    times = [t]
    states = [state]
    x = state.x
    elapsed = 0.0
    n_grid = int(np.floor(dt_flow / sample_dt - 1e-9))
    for _ in range(n_grid):
        x = model.flow_x(x, state.u, sample_dt)
        elapsed += sample_dt
        tau_c, tau_g = _advance_timers(state, rate_c, rate_g, elapsed)
        times.append(t + elapsed)
        states.append(dataclasses.replace(state, x=x, tau_c=tau_c, tau_g=tau_g))
    # closing partial step to the exact segment end
    x_end = model.flow_x(x, state.u, dt_flow - elapsed)
    tau_c, tau_g = _advance_timers(state, rate_c, rate_g, dt_flow, expired)
    end_state = dataclasses.replace(state, x=x_end, tau_c=tau_c, tau_g=tau_g)
    t_end = t + dt_flow
    times.append(t_end)
    states.append(end_state)

    if not model.contains(end_state):
        raise RuntimeError(
            f"state left the flow/jump domain at t={t_end} (model bug): {end_state}"
        )
    seg = Segment(j, t, t_end, np.asarray(times), states, rate_c, rate_g)
    return seg, end_state, t_end, horizon_hit


def draw_tau_c_reset(policy, rng, interval):
    """Resolve the set-valued tau_c reset via the configured policy."""
    lo, hi = interval
    kind = policy.tau_c_reset
    if kind == "fixed":
        value = policy.tau_c_value
        if value is None or not (lo - EVENT_TOL <= value <= hi + EVENT_TOL):
            raise ValueError(
                f"fixed tau_c reset {value} outside reset interval [{lo}, {hi}]"
            )
        return float(value)
    if kind == "uniform":
        return float(rng.uniform(lo, hi)) if hi > lo else lo
    if kind == "min":
        return lo
    if kind == "max":
        return hi
    raise ValueError(f"unknown tau_c reset policy {kind!r}")


def _resolve_jump(model, state, policy, rng):
    """Apply the jump map once, returning [(case_label, applied, new_state), ...].

    A simultaneous expiry of both timers produces two consecutive entries
    (the composite jump executes both single-timer maps in policy order).
    """
    case = model.which_case(state)
    if case is None:
        raise RuntimeError("jump requested outside the jump set")
    if case == "g1":
        return [("G1", "g1", model.g1(state))]
    if case == "g2":
        tau = draw_tau_c_reset(policy, rng, model.reset_interval())
        return [("G2", "g2", model.g2(state, tau))]

    order = policy.case3_order
    if order == "random":
        order = "g1_first" if rng.integers(2) == 0 else "g2_first"
    steps = []
    if order == "g1_first":
        mid = model.g1(state)
        steps.append(("G3-first-half", "g1", mid))
        tau = draw_tau_c_reset(policy, rng, model.reset_interval())
        steps.append(("G3-second-half", "g2", model.g2(mid, tau)))
    elif order == "g2_first":
        tau = draw_tau_c_reset(policy, rng, model.reset_interval())
        mid = model.g2(state, tau)
        steps.append(("G3-first-half", "g2", mid))
        steps.append(("G3-second-half", "g1", model.g1(mid)))
    else:
        raise ValueError(f"unknown case-3 order {order!r}")
    return steps


def simulate(model, zeta0, policy, horizon, sample_dt: float = 0.01) -> HybridArc:
    """Run the hybrid system from zeta0 until t >= T or j >= J.

    Jump-priority semantics: whenever the state is in the jump set the jump
    map is applied (nondeterminism resolved via policy + seeded RNG);
    otherwise the state flows exactly to the next timer event. Deterministic
    for a fixed seed.
    """
    t_max, j_max = horizon
    if sample_dt <= 0:
        raise ValueError("sample_dt must be positive")
    if not model.contains(zeta0):
        raise ValueError("initial state outside the flow and jump sets")
    rng = np.random.default_rng(policy.seed)

    state, t, j = zeta0, 0.0, 0
    segments: list[Segment] = []
    jumps: list[JumpRecord] = []
    while True:
        if j >= j_max:
            segments.append(_point_segment(model, state, t, j))
            break
        seg, state, t, horizon_hit = _flow_segment(model, state, t, j, t_max, sample_dt)
        segments.append(seg)
        if horizon_hit:
            break
        steps = _resolve_jump(model, state, policy, rng)
        for i, (label, applied, new_state) in enumerate(steps):
            jumps.append(JumpRecord(HybridTime(t, j), label, applied, state, new_state))
            state = new_state
            j += 1
            if i < len(steps) - 1 and j < j_max:
                segments.append(_point_segment(model, state, t, j))

    return HybridArc(
        segments,
        jumps,
        seed=policy.seed,
        sample_dt=sample_dt,
        min_dwell=model.min_dwell(),
    )


def arc_lookup(arc: HybridArc, at: HybridTime):
    """State at hybrid time (t, j); x linearly interpolated between samples,
    timers reconstructed exactly, piecewise-constant components held."""
    seg = arc.segment_for(at.j)
    if not (seg.t_start - EVENT_TOL <= at.t <= seg.t_end + EVENT_TOL):
        raise KeyError(
            f"time {at.t} outside segment [{seg.t_start}, {seg.t_end}] at j={at.j}"
        )
    t = min(max(at.t, seg.t_start), seg.t_end)
    idx = int(np.searchsorted(seg.times, t))
    idx = min(idx, len(seg.times) - 1)
    if abs(seg.times[idx] - t) <= EVENT_TOL:
        return seg.states[idx]
    lo = idx - 1
    t0, t1 = seg.times[lo], seg.times[idx]
    w = (t - t0) / (t1 - t0)
    x = (1.0 - w) * seg.states[lo].x + w * seg.states[idx].x
    base = seg.states[0]
    dt = t - seg.t_start
    return dataclasses.replace(
        base,
        x=x,
        tau_c=max(base.tau_c + seg.rate_c * dt, 0.0),
        tau_g=max(base.tau_g + seg.rate_g * dt, 0.0),
    )


def jump_stats(arc: HybridArc) -> JumpStats:
    """Count gradient-descent jumps per completed input period.

    Input changes must occur at the jump positions the period bookkeeping
    implies; a mismatch means the jump log is malformed.
    """
    alpha = []
    counter = 0
    for pos, rec in enumerate(arc.jumps):
        if rec.applied == "g1":
            counter += 1
        elif rec.applied == "g2":
            alpha.append(counter)
            counter = 0
            expected = sum(alpha) + len(alpha) - 1
            if pos != expected:
                raise ValueError(
                    f"malformed jump log: input change #{len(alpha)} at jump "
                    f"position {pos}, expected {expected}"
                )
        else:
            raise ValueError(f"malformed jump log: unknown map {rec.applied!r}")
    alpha_bar = [0]
    for a in alpha:
        alpha_bar.append(alpha_bar[-1] + a)
    return JumpStats(alpha, alpha_bar)


@dataclass
class NonZenoReport:
    passed: bool
    violations: list
    max_jumps_per_instant: int
    min_flow_gap: float | None = None


def check_non_zeno(arc: HybridArc, min_dwell: float | None = None) -> NonZenoReport:
    """Structural non-Zeno checks on a simulated arc.

    Verifies that (a) every completed jump sequence leaves both timers
    strictly positive, (b) at most two jumps share one continuous time, and
    (c) flow intervals between jump sequences last at least min_dwell.
    Violations are reported, not raised.
    """
    if min_dwell is None:
        min_dwell = arc.min_dwell
    violations = []
    groups = []
    for rec in arc.jumps:
        if groups and abs(rec.time.t - groups[-1][-1].time.t) <= EVENT_TOL:
            groups[-1].append(rec)
        else:
            groups.append([rec])

    max_per_instant = max((len(g) for g in groups), default=0)
    for g in groups:
        if len(g) > 2:
            violations.append(f"{len(g)} jumps at t={g[0].time.t}")
        last = g[-1].state_after
        if last.tau_c <= 0.0 or last.tau_g <= 0.0:
            violations.append(
                f"nonpositive timer after jump sequence at t={g[0].time.t}: "
                f"tau_c={last.tau_c}, tau_g={last.tau_g}"
            )
    min_gap = None
    if min_dwell is not None:
        for a, b in zip(groups, groups[1:]):
            gap = b[0].time.t - a[0].time.t
            min_gap = gap if min_gap is None else min(min_gap, gap)
            if gap < min_dwell - EVENT_TOL:
                violations.append(
                    f"flow gap {gap} after jump sequence at t={a[0].time.t} "
                    f"shorter than {min_dwell}"
                )
    return NonZenoReport(not violations, violations, max_per_instant, min_gap)
