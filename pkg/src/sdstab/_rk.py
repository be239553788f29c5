"""Embedded Dormand-Prince 4(5) stepper with error-per-unit-step control.

The 5th-order solution is propagated (local extrapolation, FSAL); the
embedded 4th-order result supplies the error estimate. Accepting steps
against err <= scale * h keeps the endpoint error roughly proportional
to the tolerance, so tightening the tolerance tenfold buys a tenfold
error reduction.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = ["IntegrationError", "integrate_segment", "fixed_steps"]


class IntegrationError(RuntimeError):
    """Step-size underflow, divergence, or a domain failure in the RHS."""


_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = (
    9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# difference between the 5th- and 4th-order weights
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_SAFETY = 0.9


def _stages(rhs, y, h, k1):
    k2 = rhs(y + h * (_A21 * k1))
    k3 = rhs(y + h * (_A31 * k1 + _A32 * k2))
    k4 = rhs(y + h * (_A41 * k1 + _A42 * k2 + _A43 * k3))
    k5 = rhs(y + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
    k6 = rhs(y + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
    y_new = y + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
    k7 = rhs(y_new)
    err = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
    return y_new, err, k7


def integrate_segment(
        rhs: Callable[[np.ndarray], np.ndarray],
        y0: np.ndarray,
        duration: float,
        tol: float,
        divergence_bound: float = 1e6,
        sample_times: Sequence[float] | None = None,
        h_max: float | None = None,
        on_step=None):
    """Integrate ydot = rhs(y) over [0, duration].

    Steps land exactly on every requested sample time and on the segment
    end. Returns (samples, y_end) where samples are (t, y) pairs at the
    requested times including both endpoints. ``on_step(t, y)`` is invoked
    at every accepted step for callers that track extrema.
    """
    if duration < 0:
        raise ValueError(f"segment duration must be >= 0, got {duration}")
    y = np.asarray(y0, dtype=float).copy()
    if duration == 0.0:
        return [(0.0, y.copy()), (0.0, y.copy())], y

    targets = sorted({float(s) for s in (sample_times or []) if 0.0 < s < duration})
    targets.append(duration)
    samples = [(0.0, y.copy())]
    if on_step is not None:
        on_step(0.0, y)

    rtol = tol
    atol = tol * 1e-2
    h_cap = min(duration, h_max) if h_max else duration
    h = min(h_cap, duration / 50.0)
    t = 0.0
    target_idx = 0
    try:
        k1 = rhs(y)
    except (ZeroDivisionError, ValueError, OverflowError) as exc:
        raise IntegrationError(f"right-hand side failed at start: {exc}") from exc

    while target_idx < len(targets):
        target = targets[target_idx]
        gap = target - t
        if gap <= 1e-14 * max(1.0, abs(t)):
            # arrived within roundoff of the target; the state is the
            # target state to machine precision
            samples.append((target, y.copy()))
            t = target
            target_idx += 1
            continue
        h = min(h, h_cap, gap)
        if h < 1e-14 * max(1.0, abs(t)):
            raise IntegrationError(f"step size underflow at t = {t}")
        try:
            y_new, err, k_last = _stages(rhs, y, h, k1)
        except (ZeroDivisionError, ValueError, OverflowError) as exc:
            raise IntegrationError(f"right-hand side failed near t = {t}: {exc}") from exc
        if not np.all(np.isfinite(y_new)):
            raise IntegrationError(f"non-finite state near t = {t}")
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.max(np.abs(err) / scale))
        if err_norm <= h:
            t += h
            y = y_new
            k1 = k_last
            if on_step is not None:
                on_step(t, y)
            if float(np.max(np.abs(y))) > divergence_bound:
                raise IntegrationError(
                    f"state norm exceeded divergence bound {divergence_bound} at t = {t}")
            if t >= target:
                samples.append((target, y.copy()))
                t = target
                target_idx += 1
            factor = _SAFETY * (h / max(err_norm, 1e-300)) ** 0.25
            h *= min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
        else:
            factor = _SAFETY * (h / err_norm) ** 0.25
            h *= max(_MIN_FACTOR, min(1.0, factor))
    return samples, y


def fixed_steps(rhs, y0, duration: float, steps: int) -> np.ndarray:
    """Propagate with a fixed step (no error control); 5th-order endpoint."""
    y = np.asarray(y0, dtype=float).copy()
    h = duration / steps
    k1 = rhs(y)
    for _ in range(steps):
        y, _, k1 = _stages(rhs, y, h, k1)
    return y
