"""Time integration: classical RK4 and an adaptive Dormand-Prince 5(4) pair.

Both integrators clamp tiny negative values (down to ``-CLAMP``) to zero
and stop early once the field has stayed below ``CONVERGED_FIELD`` for
``CONVERGED_WINDOW`` accepted steps.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .exceptions import ConvergenceError, InvalidParametersError, NegativityError
from .model import Finding, ModelParams, StateVec, _as_array, _rhs, equal_death_rates, require_valid, state_labels

__all__ = [
    "Trajectory",
    "default_step",
    "integrate",
    "logistic_solution",
    "logistic_check",
    "params_hash",
    "write_csv",
]

CLAMP = 1e-10
CONVERGED_FIELD = 1e-10
CONVERGED_WINDOW = 100
ATOL = 1e-9
RTOL = 1e-7

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def params_hash(params: ModelParams) -> str:
    """Short stable identifier of a parameter set."""
    blob = json.dumps(params.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class Trajectory:
    """Output times and states (one row per time, state order)."""

    times: np.ndarray
    states: np.ndarray
    params_hash: str
    converged: bool = False
    method: str = "rk4"

    def __len__(self):
        return len(self.times)

    def state(self, i: int) -> StateVec:
        return StateVec.from_array(self.states[i])

    @property
    def final(self) -> StateVec:
        return self.state(-1)

    @property
    def j(self) -> int:
        return self.states.shape[1] - 4


def default_step(params: ModelParams) -> float:
    """``min(0.01, 0.1 / r)`` with ``r`` the fastest rate in the model."""
    p = params
    rates = [
        p.f * p.c_v, p.f * p.c, p.gamma, p.mu_s, p.mu_r, p.mu_tilde_s, p.mu_tilde,
        p.beta1, p.beta_v1 * p.S_bar, *p.outflow,
    ]
    return min(0.01, 0.1 / max(rates))


def _clamp(y: np.ndarray, t: float) -> np.ndarray:
    if not np.all(np.isfinite(y)):
        raise ConvergenceError(f"non-finite state at t={t!r}")
    low = y.min()
    if low < 0.0:
        if low < -CLAMP:
            k = int(np.argmin(y))
            raise NegativityError(f"component {k} reached {low!r} at t={t!r}")
        y = np.where(y < 0.0, 0.0, y)
    return y


def _check_initial(p: ModelParams, y0: np.ndarray) -> None:
    if np.any(y0 < 0) or not np.all(np.isfinite(y0)):
        raise InvalidParametersError([Finding("schema", "initial", "initial state must be finite and nonnegative")])
    if not y0[: p.j + 2].sum() > 0:
        raise InvalidParametersError([Finding("schema", "initial", "initial host population must be positive")])


def integrate(
    params: ModelParams,
    initial,
    t_end: float,
    *,
    method: str = "rk4",
    dt: float | None = None,
    atol: float = ATOL,
    rtol: float = RTOL,
    stop_on_convergence: bool = True,
    record_every: int = 1,
    max_steps: int = 10**7,
) -> Trajectory:
    """Integrate from ``initial`` at ``t = 0`` up to ``t_end``.

    ``method`` is ``"rk4"`` (fixed step ``dt``, default
    :func:`default_step`, the last step shortened to land on ``t_end``) or
    ``"adaptive"``.  Every ``record_every``-th accepted step is stored, plus
    the first and last.  An adaptive step that would push a compartment
    below ``-CLAMP`` is rejected and retried smaller; a fixed step doing so
    raises :class:`NegativityError`.
    """
    p = params
    require_valid(p, assumptions=False)
    y = _as_array(p, initial).copy()
    _check_initial(p, y)
    if not t_end >= 0 or not math.isfinite(t_end):
        raise ValueError(f"t_end must be finite and nonnegative, got {t_end!r}")
    if method not in ("rk4", "adaptive"):
        raise ValueError(f"unknown method {method!r}")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")

    def field(state):
        return _rhs(p, state)

    stepper = _rk4_steps if method == "rk4" else _dopri_steps
    kwargs = {"dt": dt or default_step(p)} if method == "rk4" else {"atol": atol, "rtol": rtol, "h0": dt}
    if method == "rk4" and not kwargs["dt"] > 0:
        raise ValueError("dt must be positive")

    times = [0.0]
    states = [y.copy()]
    window: deque = deque(maxlen=CONVERGED_WINDOW)
    converged = False
    n = 0
    t = 0.0
    for t, y, fy in stepper(field, y, t_end, max_steps=max_steps, **kwargs):
        n += 1
        if n % record_every == 0:
            times.append(t)
            states.append(y)
        window.append(float(np.max(np.abs(fy))))
        if stop_on_convergence and len(window) == CONVERGED_WINDOW and max(window) < CONVERGED_FIELD:
            converged = True
            break
    if times[-1] != t:
        times.append(t)
        states.append(y)
    return Trajectory(
        times=np.asarray(times),
        states=np.asarray(states),
        params_hash=params_hash(p),
        converged=converged,
        method=method,
    )


def _rk4_steps(field, y, t_end, *, dt, max_steps):
    """Yield ``(t, y, f(y))`` after each fixed step."""
    t = 0.0
    k1 = field(y)
    n_steps = math.ceil(t_end / dt - 1e-12) if t_end > 0 else 0
    if n_steps > max_steps:
        raise ConvergenceError(f"{n_steps} steps requested, cap is {max_steps}")
    for i in range(n_steps):
        h = min(dt, t_end - i * dt)
        k2 = field(y + 0.5 * h * k1)
        k3 = field(y + 0.5 * h * k2)
        k4 = field(y + h * k3)
        t = t_end if i == n_steps - 1 else (i + 1) * dt
        y = _clamp(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), t)
        k1 = field(y)
        yield t, y, k1


def _initial_step(field, y, f0, atol, rtol):
    # standard starting-step heuristic for a 5th-order method
    scale = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = field(y + h0 * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    h1 = max(1e-6, h0 * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def _dopri_steps(field, y, t_end, *, atol, rtol, h0, max_steps):
    """Yield ``(t, y, f(y))`` after each accepted adaptive step."""
    t = 0.0
    if t_end == 0:
        return
    f0 = field(y)
    h = min(h0 or _initial_step(field, y, f0, atol, rtol), t_end)
    k = np.empty((7, y.size))
    steps = 0
    while t < t_end:
        if steps >= max_steps:
            raise ConvergenceError(f"step cap {max_steps} reached at t={t!r}")
        steps += 1
        h = min(h, t_end - t)
        if h <= 16 * np.finfo(float).eps * max(1.0, abs(t)):
            raise ConvergenceError(f"step size underflow at t={t!r}", residual=h)
        k[0] = f0
        for s in range(1, 7):
            k[s] = field(y + h * (np.asarray(_A[s]) @ k[:s]))
        y_new = y + h * (_B5 @ k)
        # k[6] is the field at y_new (first-same-as-last)
        err_vec = h * (_E @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if not np.all(np.isfinite(y_new)):
            err = math.inf
        elif y_new.min() < -CLAMP:
            err = max(err, 2.0)
        if err <= 1.0:
            t = t_end if t_end - (t + h) <= 1e-14 * t_end else t + h
            y = _clamp(y_new, t)
            f0 = k[6].copy() if y is y_new else field(y)
            yield t, y, f0
            factor = 5.0 if err == 0 else min(5.0, 0.9 * err ** -0.2)
        else:
            factor = 0.2 if not math.isfinite(err) else max(0.2, 0.9 * err ** -0.2)
        h *= factor


def logistic_solution(params: ModelParams, N0: float, t):
    """Closed-form ``N(t)`` for ``N' = (beta1 - mu_s) N (1 - N / S_bar)``."""
    p = params
    r = p.beta1 - p.mu_s
    t = np.asarray(t, dtype=float)
    if r == 0.0 or N0 == 0.0:
        return np.full_like(t, N0)
    e = np.exp(-r * t)
    return p.S_bar * N0 / (N0 + (p.S_bar - N0) * e)


def logistic_check(params: ModelParams, N0: float, t_end: float = 50.0) -> float:
    """Max deviation of the simulated host total from the logistic solution.

    The run starts disease-free with ``S = N0`` and the vectors at
    carrying capacity.  Requires equal host death rates.
    """
    p = params
    if not equal_death_rates(p, vector=False):
        raise InvalidParametersError([Finding("error", "mu", "logistic check needs equal host death rates")])
    initial = StateVec(S=N0, I=(0.0,) * p.j, R=0.0, S_v=p.Sv_bar, I_v=0.0)
    traj = integrate(p, initial, t_end, method="adaptive", atol=1e-12, rtol=1e-10, stop_on_convergence=False)
    j = p.j
    N = traj.states[:, : j + 2].sum(axis=1)
    return float(np.max(np.abs(N - logistic_solution(p, N0, traj.times))))


def write_csv(traj: Trajectory, fh) -> None:
    """Write ``t,S,I1..Ij,R,Sv,Iv`` rows with 17 significant digits."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["t", *state_labels(traj.j)])
    for t, row in zip(traj.times, traj.states):
        writer.writerow([format(float(t), ".17g"), *(format(float(x), ".17g") for x in row)])
