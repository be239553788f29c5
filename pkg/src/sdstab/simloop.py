"""Sampled-data closed-loop execution and verification.

The loop takes an arbitrary sampling partition T1 = 0 < T2 < ... and, on
each interval [T_i, T_{i+1}), builds the control from the state measured
at T_i alone: starting from that measurement it chains verified one-step
programs on model-predicted states (the model and the plant coincide
here), then integrates the plant through the resulting schedule. Chain
boundaries where a program ran to completion are recorded as checkpoints;
V must drop strictly at every checkpoint and stay below twice the value
at the latest checkpoint in between.

Each chained program is synthesized with its duration capped by the time
remaining in the interval; since the candidate durations start at that
cap and halve, chains normally land exactly on T_{i+1}. A chain that
fails to land after many programs is truncated at T_{i+1} and the
interval is flagged as clamped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._rk import IntegrationError, integrate_segment, fixed_steps
from .certify import DEFAULT_N_MAX, DEFAULT_TAU_ZERO, SystemDef
from .synth import (
    CertificateInconclusive, ControlProgram, SearchBudget, StepResult,
    SynthesisFailed, synthesize_step,
)

__all__ = [
    "Partition", "Trajectory", "LoopReport", "IntervalRecord", "PlannedStep",
    "FactCheck", "IntegrationError",
    "integrate", "run_closed_loop", "verify_facts", "plan_interval",
]

DEFAULT_STOP_RADIUS = 1e-3
DEFAULT_DIVERGENCE_BOUND = 1e6
# near the origin the overshoot bound forces program durations of order |x|,
# so interval chains legitimately hold many programs before the stop radius
_MAX_CHAIN_PROGRAMS = 4096
_LANDING_RTOL = 1e-9


@dataclass(frozen=True)
class Partition:
    """Sampling times T1 = 0 < T2 < ...; explicit leading times followed by
    an unbounded uniform continuation."""

    lead_times: tuple[float, ...]
    step: float

    def __post_init__(self):
        if not self.lead_times or self.lead_times[0] != 0.0:
            raise ValueError("partition must start at time 0")
        for a, b in zip(self.lead_times, self.lead_times[1:]):
            if not b > a:
                raise ValueError("partition times must be strictly increasing")
        if not self.step > 0:
            raise ValueError(f"continuation step must be positive, got {self.step}")

    @classmethod
    def uniform(cls, step: float) -> "Partition":
        return cls((0.0,), step)

    @classmethod
    def explicit(cls, times: Sequence[float], tail_step: float | None = None) -> "Partition":
        times = tuple(float(t) for t in times)
        if tail_step is None:
            if len(times) < 2:
                raise ValueError("explicit partition needs at least two times")
            tail_step = times[-1] - times[-2]
        return cls(times, float(tail_step))

    @property
    def kind(self) -> str:
        return "uniform" if len(self.lead_times) == 1 else "explicit"

    def times_until(self, horizon: float) -> list[float]:
        """Strictly increasing times from 0 through the first one >= horizon."""
        if not horizon > 0:
            raise ValueError(f"horizon must be positive, got {horizon}")
        out = []
        for t in self.lead_times:
            if t >= horizon:
                out.append(t)
                return out
            out.append(t)
        k = 1
        while True:
            t = self.lead_times[-1] + k * self.step
            out.append(t)
            if t >= horizon:
                return out
            k += 1


@dataclass
class Trajectory:
    """Dense samples of a run plus checkpoint and switching metadata.
    v_sup is the largest V seen at any accepted integration step, which is
    finer-grained than the recorded samples."""

    times: np.ndarray
    states: np.ndarray
    v_values: np.ndarray
    checkpoints: list[tuple[float, np.ndarray, float]]
    events: list[float]
    v_sup: float = 0.0


@dataclass(frozen=True)
class PlannedStep:
    program: ControlProgram
    case: str
    N: int
    rho: float
    u1: float
    predicted_drop: float
    predicted_ratio: float
    predicted_end: tuple[float, ...]


@dataclass
class IntervalRecord:
    t_start: float
    t_end: float
    measured_state: tuple[float, ...]
    steps: list[PlannedStep]
    clamped: bool


@dataclass
class LoopReport:
    final_state: np.ndarray
    final_norm: float
    checkpoint_vs: list[tuple[float, float]]
    overshoot_ratio: float
    threshold_times: dict[float, float]
    intervals: list[IntervalRecord]
    stopped_early: bool
    stop_time: float | None
    failure: str | None = None


@dataclass(frozen=True)
class FactCheck:
    name: str
    passed: bool
    detail: str


# --- program integration -------------------------------------------------------

def integrate(sys: SystemDef, x0, program: ControlProgram, tol: float = 1e-10,
              sample_dt: float | None = None,
              divergence_bound: float = DEFAULT_DIVERGENCE_BOUND) -> Trajectory:
    """Integrate the program from x0, stepping exactly onto segment switch
    times, with dense output every sample_dt (default: duration/100)."""
    x = np.asarray(x0, dtype=float)
    total = program.duration
    if sample_dt is None:
        sample_dt = total / 100.0
    times = [0.0]
    states = [x.copy()]
    events = []
    t_base = 0.0
    v_at = sys.v_at
    v_sup = v_at(x)

    def track(_t, state):
        nonlocal v_sup
        v = v_at(state)
        if v > v_sup:
            v_sup = v

    for value, duration in program.segments:
        interior = _interior_grid(duration, sample_dt)
        samples, x = integrate_segment(
            sys.rhs(value), x, duration, tol,
            divergence_bound=divergence_bound,
            sample_times=interior, h_max=duration, on_step=track)
        for s, y in samples[1:]:
            times.append(t_base + s)
            states.append(y)
        t_base += duration
        events.append(t_base)
    times = np.array(times)
    states = np.vstack(states)
    v_values = np.array([sys.v_at(y) for y in states])
    return Trajectory(times, states, v_values, [], events[:-1], v_sup)


def _interior_grid(duration: float, sample_dt: float) -> list[float]:
    if sample_dt <= 0 or sample_dt >= duration:
        return []
    count = int(math.floor(duration / sample_dt))
    grid = [j * sample_dt for j in range(1, count + 1)]
    return [s for s in grid if s < duration * (1 - 1e-12)]


# --- interval planning -----------------------------------------------------------

def plan_interval(
        sys: SystemDef, z, duration: float, xi_cap: float, *,
        tol: float = 1e-10, n_max: int = DEFAULT_N_MAX,
        budget: SearchBudget | None = None,
        tau_zero: float = DEFAULT_TAU_ZERO,
        stop_radius: float = DEFAULT_STOP_RADIUS) -> tuple[list[PlannedStep], bool]:
    """Chain one-step programs covering [0, duration] from the measured
    state z, advancing on model-predicted states only. Returns the planned
    steps and whether the final program had to be clamped.

    Deterministic in its arguments: replaying it from the same measured
    state reproduces the same control schedule exactly.
    """
    from .synth import flow_endpoint  # local import to keep module surface tidy

    steps: list[PlannedStep] = []
    state = np.asarray(z, dtype=float)
    remaining = duration
    clamped = False
    last_eps = None
    while remaining > 0:
        if float(np.linalg.norm(state)) <= stop_radius:
            break
        if len(steps) >= _MAX_CHAIN_PROGRAMS:
            # Zeno guard: synthesize once more without the remaining-time cap
            # and truncate the program at the interval end.
            result = synthesize_step(
                sys, state, xi_cap, budget=budget, n_max=n_max, tol=tol,
                tau_zero=tau_zero)
            program = (result.program.truncated(remaining)
                       if result.program.duration > remaining else result.program)
            end, _ = flow_endpoint(sys, state, program, tol)
            steps.append(_planned(result, program, end))
            clamped = True
            break
        # warm start: durations rarely grow much between consecutive chain
        # programs, so cap the search near the last success (it can still
        # double every program when the state allows longer steps)
        xi_step = min(xi_cap, remaining)
        if last_eps is not None:
            xi_step = min(xi_step, max(2.0 * last_eps, remaining / 64.0))
        result = synthesize_step(
            sys, state, xi_step, budget=budget, n_max=n_max,
            tol=tol, tau_zero=tau_zero)
        program = result.program
        eps = program.duration
        end = np.array(result.end_state)
        if abs(eps - remaining) <= _LANDING_RTOL * remaining:
            # snap onto the interval end; the relative rescale is O(1e-9)
            # and preserves the two-segment duration ratio exactly
            program = program.scaled(remaining / eps)
            eps = remaining
            end, _ = flow_endpoint(sys, state, program, tol)
        steps.append(_planned(result, program, end))
        state = end
        remaining -= eps
        last_eps = eps
    return steps, clamped


def _planned(result: StepResult, program: ControlProgram, end: np.ndarray) -> PlannedStep:
    return PlannedStep(
        program=program,
        case=result.certificate.case.value,
        N=result.certificate.N,
        rho=result.rho,
        u1=result.u1,
        predicted_drop=result.v_drop,
        predicted_ratio=result.sup_v_ratio,
        predicted_end=tuple(float(v) for v in end),
    )


# --- the closed loop --------------------------------------------------------------

def run_closed_loop(
        sys: SystemDef, x0, partition: Partition, horizon: float,
        xi_cap: float | None = None, *,
        stop_radius: float = DEFAULT_STOP_RADIUS,
        tol: float = 1e-10, n_max: int = DEFAULT_N_MAX,
        budget: SearchBudget | None = None,
        tau_zero: float = DEFAULT_TAU_ZERO,
        samples_per_interval: int = 100) -> tuple[Trajectory, LoopReport]:
    """Execute the sampled-data loop: measure at each partition time, apply
    the planned open-loop schedule until the next one, stop early once the
    state enters the stop radius."""
    x = np.asarray(x0, dtype=float)
    v0 = sys.v_at(x)
    times = [0.0]
    states = [x.copy()]
    checkpoints = [(0.0, x.copy(), v0)]
    events: list[float] = []
    intervals: list[IntervalRecord] = []
    stopped = False
    stop_time = None
    failure = None
    overshoot = 1.0
    v_sup = v0

    if float(np.linalg.norm(x)) <= stop_radius:
        traj = _assemble(sys, times, states, checkpoints, events, v_sup)
        report = _report(sys, traj, intervals, True, 0.0, None, overshoot)
        return traj, report

    boundaries = partition.times_until(horizon)
    if xi_cap is None:
        # programs are capped by the time remaining in the interval anyway,
        # so the global cap only bounds the largest step ever attempted
        gaps = [b - a for a, b in zip(boundaries, boundaries[1:])]
        xi_cap = min(1.0, max(gaps)) if gaps else 1.0

    t_cursor = 0.0
    for t_a, t_b in zip(boundaries, boundaries[1:]):
        t_b = min(t_b, horizon)
        if t_b <= t_a or stopped:
            break
        measured = x.copy()
        try:
            planned, clamped = plan_interval(
                sys, measured, t_b - t_a, xi_cap, tol=tol, n_max=n_max,
                budget=budget, tau_zero=tau_zero, stop_radius=stop_radius)
        except (SynthesisFailed, CertificateInconclusive, IntegrationError) as exc:
            failure = f"interval [{t_a}, {t_b}): {exc}"
            intervals.append(IntervalRecord(
                t_a, t_b, tuple(float(v) for v in measured), [], False))
            break
        record = IntervalRecord(
            t_a, t_b, tuple(float(v) for v in measured), planned, clamped)
        intervals.append(record)
        sample_dt = (t_b - t_a) / samples_per_interval
        for idx, step in enumerate(planned):
            base_v = checkpoints[-1][2]
            piece = integrate(sys, x, step.program, tol=tol, sample_dt=sample_dt)
            for s, y in zip(piece.times[1:], piece.states[1:]):
                times.append(t_cursor + s)
                states.append(y)
            for e in piece.events:
                events.append(t_cursor + e)
            t_cursor += step.program.duration
            events.append(t_cursor)
            x = piece.states[-1].copy()
            v_sup = max(v_sup, piece.v_sup)
            if base_v > 0:
                overshoot = max(overshoot, piece.v_sup / base_v)
            is_last = idx == len(planned) - 1
            if not (clamped and is_last):
                checkpoints.append((t_cursor, x.copy(), sys.v_at(x)))
            if float(np.linalg.norm(x)) <= stop_radius:
                stopped = True
                stop_time = t_cursor
                break
        if not stopped and t_b - t_cursor > 1e-9 * max(1.0, t_b):
            # the planner gave up early only because its predicted state
            # entered the stop radius; the executed state agrees to within
            # integration tolerance, so end the run here
            stopped = True
            stop_time = t_cursor
        if stopped:
            break

    traj = _assemble(sys, times, states, checkpoints, events, v_sup)
    report = _report(sys, traj, intervals, stopped, stop_time, failure, overshoot)
    return traj, report


def _assemble(sys, times, states, checkpoints, events, v_sup=None) -> Trajectory:
    times = np.array(times)
    states = np.vstack(states)
    v_values = np.array([sys.v_at(y) for y in states])
    if v_sup is None:
        v_sup = float(np.max(v_values)) if len(v_values) else 0.0
    return Trajectory(times, states, v_values, checkpoints, events, v_sup)


def _report(sys, traj: Trajectory, intervals, stopped, stop_time, failure,
            overshoot=None) -> LoopReport:
    final_state = traj.states[-1]
    checkpoint_vs = [(t, v) for t, _, v in traj.checkpoints]
    if overshoot is None:
        overshoot = _overshoot_ratio(traj)
    thresholds = _threshold_times(traj)
    return LoopReport(
        final_state=final_state,
        final_norm=float(np.linalg.norm(final_state)),
        checkpoint_vs=checkpoint_vs,
        overshoot_ratio=overshoot,
        threshold_times=thresholds,
        intervals=intervals,
        stopped_early=stopped,
        stop_time=stop_time,
        failure=failure,
    )


def _overshoot_ratio(traj: Trajectory) -> float:
    """max over samples of V(x(s)) / V(latest checkpoint at or before s)."""
    if not traj.checkpoints:
        return 1.0
    cp_times = [t for t, _, _ in traj.checkpoints]
    cp_vs = [v for _, _, v in traj.checkpoints]
    ratio = 1.0
    idx = 0
    for t, v in zip(traj.times, traj.v_values):
        while idx + 1 < len(cp_times) and cp_times[idx + 1] <= t:
            idx += 1
        base = cp_vs[idx]
        if base > 0:
            ratio = max(ratio, v / base)
    return ratio


def _threshold_times(traj: Trajectory) -> dict[float, float]:
    """First time from which V stays at or below each half-decade threshold."""
    if len(traj.times) == 0:
        return {}
    v = traj.v_values
    suffix_max = np.maximum.accumulate(v[::-1])[::-1]
    v_start = v[0]
    out = {}
    if v_start <= 0:
        return out
    mu = v_start / 2.0
    floor = float(np.min(suffix_max))
    while mu >= floor and mu > 0:
        idx = np.argmax(suffix_max <= mu)
        if suffix_max[idx] <= mu:
            out[mu] = float(traj.times[idx])
        else:
            break
        mu /= 2.0
    return out


# --- verification ------------------------------------------------------------------

def verify_facts(traj: Trajectory, report: LoopReport,
                 thresholds: Sequence[float] | None = None) -> list[FactCheck]:
    """Named checks of the decrease, boundedness and attractivity facts a
    successful run must satisfy. Reports failures, never raises."""
    checks = []

    vs = [v for _, v in report.checkpoint_vs]
    drops = [a - b for a, b in zip(vs, vs[1:])]
    decrease_ok = all(d > 0 for d in drops)
    detail = (f"min drop {min(drops):.3e}" if drops else "fewer than two checkpoints")
    checks.append(FactCheck("checkpoint_decrease", decrease_ok, detail))

    bound_ok = report.overshoot_ratio <= 2.0 + 1e-9
    checks.append(FactCheck(
        "overshoot_bound", bound_ok, f"ratio {report.overshoot_ratio:.6f}"))

    if thresholds is None:
        thresholds = _attained_thresholds(traj, report)
    attr_ok = True
    details = []
    for mu in thresholds:
        tau = None
        for t, v in report.checkpoint_vs:
            if 4.0 * v <= mu:
                tau = t
                break
        if tau is None:
            continue
        mask = traj.times >= tau
        worst = float(np.max(traj.v_values[mask])) if np.any(mask) else 0.0
        ok = worst <= mu * (1 + 1e-9)
        attr_ok = attr_ok and ok
        details.append(f"mu={mu:.3e}: tau={tau:.3f}, sup V after = {worst:.3e}")
    checks.append(FactCheck(
        "attractivity", attr_ok, "; ".join(details) if details else "no threshold attained"))
    return checks


def _attained_thresholds(traj: Trajectory, report: LoopReport) -> list[float]:
    if not report.checkpoint_vs:
        return []
    v0 = report.checkpoint_vs[0][1]
    v_min = min(v for _, v in report.checkpoint_vs)
    out = []
    mu = v0 / 2.0
    while mu > 4.0 * v_min and mu > 0:
        out.append(mu)
        mu /= 4.0
    return out


def observed_integration_order(sys: SystemDef, x0, u: float, duration: float,
                               exact_end: np.ndarray,
                               step_counts: Sequence[int] = (32, 64, 128)) -> float:
    """Fixed-step convergence slope against a closed-form endpoint."""
    errors = []
    for steps in step_counts:
        end = fixed_steps(sys.rhs(u), np.asarray(x0, dtype=float), duration, steps)
        errors.append(float(np.linalg.norm(end - exact_end)))
    hs = [duration / s for s in step_counts]
    slope = np.polyfit(np.log(hs), np.log(errors), 1)[0]
    return float(slope)
