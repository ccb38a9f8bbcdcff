"""Disease-free and endemic equilibria.

With equal host death rates every equilibrium is slaved to the value of
``I_1``: the stage chain, ``R``, the vector classes and ``S`` follow from
``I_1`` by explicit formulas, leaving one scalar condition ``I_1' = 0``.
That condition has a closed-form positive root exactly when R0 > 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParametersError
from .model import Finding, ModelParams, StateVec, equal_death_rates, require_valid, vector_field
from .reproduction import r0_closed_form

__all__ = [
    "EquilibriumReport",
    "NoEE",
    "dfe",
    "stage_chain",
    "slaved_state",
    "endemic_equilibrium",
    "endemic_equilibrium_scan",
    "fixed_point_condition",
    "scan_roots",
    "verify_equilibrium",
]

SCAN_SAMPLES = 10**6
BISECT_TOL = 1e-12
THRESHOLD_ROUNDING = 1e-13


@dataclass(frozen=True)
class EquilibriumReport:
    kind: str
    state: StateVec
    xi: float
    chain: tuple
    residual_inf_norm: float
    method: str = "closed-form"

    def to_dict(self) -> dict:
        """State compartments at top level, then the diagnostics."""
        return {
            **self.state.to_dict(),
            "kind": self.kind,
            "method": self.method,
            "xi": self.xi,
            "chain": list(self.chain),
            "residual_inf_norm": self.residual_inf_norm,
        }


@dataclass(frozen=True)
class NoEE:
    """No positive endemic equilibrium exists (R0 <= 1).

    ``i1`` is the value the closed form produces, which is zero or negative.
    """

    r0: float
    i1: float
    reason: str

    def __bool__(self):
        return False


def verify_equilibrium(params: ModelParams, state) -> float:
    """Max-norm of the vector field at ``state``."""
    return float(np.max(np.abs(vector_field(params, _as_state(state).as_array()))))


def _as_state(state) -> StateVec:
    return state if isinstance(state, StateVec) else StateVec.from_array(state)


def dfe(params: ModelParams) -> EquilibriumReport:
    state = StateVec.dfe(params)
    return EquilibriumReport(
        kind="DFE",
        state=state,
        xi=math.fsum(_stage_weights(params)),
        chain=tuple(stage_chain(params)),
        residual_inf_norm=verify_equilibrium(params, state),
    )


def stage_chain(params: ModelParams) -> np.ndarray:
    """Multipliers ``c_1..c_j`` with ``I_{k+1} = c_k I_k`` and ``R = c_j I_j``.

    Treatment rates enlarge the stage exit rates.  With ``theta > 0`` the
    recovered class is also fed from earlier stages, so ``c_j`` alone no
    longer gives ``R``; :func:`slaved_state` handles that case.
    """
    p = params
    c = np.empty(p.j)
    if p.j > 1:
        c[:-1] = np.asarray(p.alpha) / p.outflow[1:]
    c[-1] = p.gamma / p.mu_r
    return c


def _stage_weights(params: ModelParams) -> np.ndarray:
    """``I_k / I_1`` for ``k = 1..j`` (the products ``c_{k-1} ... c_0``)."""
    c = stage_chain(params)
    return np.concatenate(([1.0], np.cumprod(c[:-1])))


def slaved_state(params: ModelParams, i1) -> np.ndarray:
    """Points on ``N = S_bar`` slaved to the given values of ``I_1``.

    The stages, ``R`` and the vector classes are fixed by their equilibrium
    balances and ``S`` closes the host total at ``S_bar``.  Every equation
    then vanishes except ``S'`` and ``I_1'``, and those two cancel, so
    ``I_1' = 0`` is the only condition left.  Vectorized over ``i1``;
    returns shape ``(len(i1), j + 4)`` (or ``(j + 4,)`` for a scalar).
    Assumes equal death rates.
    """
    p = params
    i1 = np.asarray(i1, dtype=float)
    scalar = i1.ndim == 0
    i1 = np.atleast_1d(i1)
    weights = _stage_weights(p)
    I = i1[:, None] * weights[None, :]
    xi = float(weights.sum())
    R = (I[:, :-1] @ np.asarray(p.theta) + p.gamma * I[:, -1]) / p.mu_r if p.j > 1 else p.gamma * I[:, -1] / p.mu_r
    Sv = p.mu_tilde_s * p.Sv_bar / (p.mu_tilde_s + p.f * p.c * i1 * xi / p.S_bar)
    Iv = p.Sv_bar - Sv
    S = p.S_bar - I.sum(axis=1) - R
    out = np.column_stack((S, I, R, Sv, Iv))
    return out[0] if scalar else out


def fixed_point_condition(params: ModelParams, i1) -> np.ndarray:
    """``I_1'`` evaluated on the slaved states.

    Divided by ``I_1`` this is strictly decreasing, so it has at most one
    positive root, and one exactly when R0 > 1.
    """
    p = params
    y = np.atleast_2d(slaved_state(p, i1))
    return p.f * p.c_v * y[:, -1] * y[:, 0] / p.S_bar - p.outflow[0] * y[:, 1]


def _check_equal_rates(p: ModelParams) -> None:
    require_valid(p)
    if not equal_death_rates(p):
        raise InvalidParametersError([Finding(
            "error", "mu",
            "endemic equilibrium needs mu_s = mu_i = mu_r and mu_tilde = mu_tilde_s",
        )])


def endemic_equilibrium(params: ModelParams):
    """The unique endemic equilibrium, or :class:`NoEE` when R0 <= 1.

    Requires equal death rates (host and vector) and no treatment; for
    ``theta > 0`` see :func:`endemic_equilibrium_scan`.
    """
    p = params
    _check_equal_rates(p)
    if p.has_treatment:
        raise InvalidParametersError([Finding(
            "error", "theta",
            "closed-form endemic equilibrium is only available for theta = 0; "
            "use endemic_equilibrium_scan",
        )])
    r0 = r0_closed_form(p)
    weights = _stage_weights(p)
    xi = math.fsum(weights)
    denom = p.f * p.c * p.S_bar * p.mu_s * xi + p.Sv_bar * p.f ** 2 * p.c * p.c_v * xi
    i1 = p.S_bar ** 2 * p.mu_s * p.mu_tilde_s * (r0 * r0 - 1.0) / denom
    if r0 * r0 - 1.0 < -THRESHOLD_ROUNDING:
        return NoEE(r0=r0, i1=i1, reason="R0 < 1: the nonzero equilibrium is negative")
    # R0 = 1 up to rounding counts as the threshold itself
    if r0 * r0 - 1.0 <= THRESHOLD_ROUNDING:
        return NoEE(r0=r0, i1=0.0, reason="R0 = 1: the endemic branch meets the DFE")
    y = slaved_state(p, i1)
    # S from its own balance rather than from the host total
    y[0] = p.mu_s * p.S_bar / (p.mu_s + p.f * p.c_v * y[-1] / p.S_bar)
    state = StateVec.from_array(y)
    return EquilibriumReport(
        kind="EE",
        state=state,
        xi=xi,
        chain=tuple(stage_chain(p)),
        residual_inf_norm=verify_equilibrium(p, state),
    )


def scan_roots(params: ModelParams, *, samples: int = SCAN_SAMPLES, tol: float = BISECT_TOL) -> list[float]:
    """Positive roots of :func:`fixed_point_condition` on ``(0, S_bar]``.

    Samples the condition on a uniform grid, then bisects every sign change
    to absolute width ``tol * S_bar``.  The condition is positive just above
    0 exactly when R0 > 1, which covers a root lying left of the first grid
    point.
    """
    p = params
    grid = np.linspace(0.0, p.S_bar, samples + 1)[1:]
    g = fixed_point_condition(p, grid)
    sign = np.sign(g)
    brackets = []
    slope0 = p.outflow[0] * (r0_closed_form(p) ** 2 - 1.0)
    if slope0 > 0 and sign[0] < 0:
        brackets.append((0.0, grid[0]))
    idx = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    brackets.extend((grid[i], grid[i + 1]) for i in idx)
    roots = [float(grid[i]) for i in np.nonzero(sign == 0)[0]]
    for lo, hi in brackets:
        g_lo = fixed_point_condition(p, lo)[0] if lo > 0 else slope0
        while hi - lo > tol * p.S_bar:
            mid = 0.5 * (lo + hi)
            g_mid = fixed_point_condition(p, mid)[0]
            if g_mid == 0:
                lo = hi = mid
                break
            if (g_mid > 0) == (g_lo > 0):
                lo, g_lo = mid, g_mid
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    return sorted(roots)


def endemic_equilibrium_scan(params: ModelParams):
    """Endemic equilibrium from a numeric scan of the ``I_1`` condition.

    Works for the treatment variant as well; the root is polished from the
    bisection bracket, so residuals are at bisection accuracy rather than
    rounding level.  Returns :class:`NoEE` when no positive root exists.
    """
    p = params
    _check_equal_rates(p)
    roots = scan_roots(p)
    if not roots:
        return NoEE(r0=r0_closed_form(p), i1=0.0, reason="no positive root of the I_1 condition")
    if len(roots) > 1:
        raise ArithmeticError(f"found {len(roots)} endemic equilibria, expected one")
    state = StateVec.from_array(slaved_state(p, roots[0]))
    weights = _stage_weights(p)
    return EquilibriumReport(
        kind="EE",
        state=state,
        xi=float(weights.sum()),
        chain=tuple(stage_chain(p)),
        residual_inf_norm=verify_equilibrium(p, state),
        method="scan",
    )
