"""Host/vector relapsing-disease model: parameters, state, vector field.

State vectors are laid out as ``[S, I_1, ..., I_j, R, S_v, I_v]`` (length
``j + 4``).  The treatment variant (direct removal from infected stage ``i``
to ``R`` at rate ``theta_i``) shares the same code path; ``theta = 0``
gives the untreated model exactly.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field, fields
from functools import cached_property
import numpy as np

from .exceptions import DegeneratePopulationError, InvalidParametersError

__all__ = [
    "Finding",
    "ModelParams",
    "StateVec",
    "DimensionlessParams",
    "validate",
    "require_valid",
    "equal_death_rates",
    "beta_host",
    "beta_vector",
    "vector_field",
    "flux_decomposition",
    "to_dimensionless",
    "from_dimensionless",
    "manifold_residual",
    "state_labels",
]

SCALAR_FIELDS = (
    "f", "c", "c_v", "gamma", "mu_s", "mu_r", "mu_tilde_s", "mu_tilde",
    "S_bar", "Sv_bar", "beta1", "beta_v1",
)
VECTOR_FIELDS = ("mu", "alpha", "theta")


@dataclass(frozen=True)
class Finding:
    """One validation result.

    ``level`` is ``"schema"`` (the parameter set is malformed and nothing can
    be computed), ``"error"`` (a modelling assumption of the host/vector
    model is violated) or ``"warning"``.
    """

    level: str
    field: str
    message: str

    def __str__(self):
        return f"{self.level}: {self.field}: {self.message}"


@dataclass(frozen=True)
class ModelParams:
    j: int
    f: float
    c: float
    c_v: float
    gamma: float
    mu_s: float
    mu: tuple
    mu_r: float
    alpha: tuple
    mu_tilde_s: float
    mu_tilde: float
    S_bar: float
    Sv_bar: float
    beta1: float
    beta_v1: float
    theta: tuple = None

    def __post_init__(self):
        set_ = object.__setattr__
        j = self.j
        if isinstance(j, numbers.Integral) and not isinstance(j, bool):
            j = int(j)
        elif isinstance(j, float) and j.is_integer():
            j = int(j)
        set_(self, "j", j)
        for name in SCALAR_FIELDS:
            set_(self, name, float(getattr(self, name)))
        set_(self, "mu", _floats(self.mu))
        set_(self, "alpha", _floats(self.alpha))
        if self.theta is None:
            theta = (0.0,) * max(j - 1, 0) if isinstance(j, int) else ()
        else:
            theta = _floats(self.theta)
        set_(self, "theta", theta)
        problems = _schema_findings(self)
        if problems:
            raise InvalidParametersError(problems)

    @cached_property
    def outflow(self) -> np.ndarray:
        """Per-capita exit rate of each infected stage (length ``j``)."""
        out = np.empty(self.j)
        out[:-1] = np.asarray(self.alpha) + np.asarray(self.mu[:-1]) + np.asarray(self.theta)
        out[-1] = self.gamma + self.mu[-1]
        return out

    @property
    def has_treatment(self) -> bool:
        return any(t != 0.0 for t in self.theta)

    def replace(self, **changes) -> "ModelParams":
        data = self.to_dict()
        data.update(changes)
        return ModelParams(**data)

    def to_dict(self) -> dict:
        out = {}
        for fld in fields(self):
            value = getattr(self, fld.name)
            out[fld.name] = list(value) if isinstance(value, tuple) else value
        return out


def _floats(values) -> tuple:
    return tuple(float(x) for x in np.atleast_1d(np.asarray(values, dtype=float)))


def _schema_findings(p: ModelParams) -> list[Finding]:
    out = []
    if not isinstance(p.j, (int, np.integer)) or isinstance(p.j, bool) or p.j < 1:
        return [Finding("schema", "j", f"must be an integer >= 1, got {p.j!r}")]
    if len(p.mu) != p.j:
        out.append(Finding("schema", "mu", f"expected length j={p.j}, got {len(p.mu)}"))
    if len(p.alpha) != p.j - 1:
        out.append(Finding("schema", "alpha", f"expected length j-1={p.j - 1}, got {len(p.alpha)}"))
    if len(p.theta) != p.j - 1:
        out.append(Finding("schema", "theta", f"expected length j-1={p.j - 1}, got {len(p.theta)}"))
    for name in SCALAR_FIELDS:
        value = getattr(p, name)
        if not math.isfinite(value):
            out.append(Finding("schema", name, "must be finite"))
        elif value < 0:
            out.append(Finding("schema", name, "must be nonnegative"))
    for name in VECTOR_FIELDS:
        for i, value in enumerate(getattr(p, name)):
            if not math.isfinite(value):
                out.append(Finding("schema", f"{name}[{i}]", "must be finite"))
            elif value < 0:
                out.append(Finding("schema", f"{name}[{i}]", "must be nonnegative"))
    # quantities the model divides by
    for name in ("gamma", "mu_tilde", "S_bar", "Sv_bar"):
        if getattr(p, name) == 0:
            out.append(Finding("schema", name, "must be strictly positive"))
    for i, value in enumerate(p.alpha):
        if value == 0:
            out.append(Finding("schema", f"alpha[{i}]", "must be strictly positive"))
    return out


def validate(params: ModelParams) -> list[Finding]:
    """Check the modelling assumptions of the host/vector system.

    Returns every violated constraint (level ``"error"``) plus warnings; an
    empty list means the parameter set satisfies all of them.  Death rates
    that differ between host classes are only a warning, but note that the
    constant-population manifold ``N = S_bar`` is then no longer invariant.
    """
    p = params
    out = _schema_findings(p)
    if out:
        return out
    for name in SCALAR_FIELDS:
        if getattr(p, name) <= 0:
            out.append(Finding("error", name, "must be strictly positive"))
    for i, value in enumerate(p.mu):
        if value <= 0:
            out.append(Finding("error", f"mu[{i}]", "must be strictly positive"))
    for name in ("c", "c_v"):
        if getattr(p, name) > 1:
            out.append(Finding("error", name, "competency must lie in [0, 1]"))
    if p.beta1 < p.mu_s:
        out.append(Finding("error", "beta1", "beta1 >= mu_s is required"))
    if p.beta_v1 < p.mu_tilde_s:
        out.append(Finding("error", "beta_v1", "beta_v1 >= mu_tilde_s is required"))
    for i, value in enumerate(p.mu):
        if value < p.mu_s:
            out.append(Finding("error", f"mu[{i}]", "infected death rate must be >= mu_s"))
    if p.mu_r < p.mu_s:
        out.append(Finding("error", "mu_r", "recovered death rate must be >= mu_s"))
    if p.mu_tilde < p.mu_tilde_s:
        out.append(Finding("error", "mu_tilde", "infected vector death rate must be >= mu_tilde_s"))

    if not equal_death_rates(p, vector=False):
        out.append(Finding(
            "warning", "mu",
            "unequal death rates: manifold N=S_bar not invariant",
        ))
    if p.mu_tilde != p.mu_tilde_s:
        out.append(Finding(
            "warning", "mu_tilde",
            "unequal vector death rates: manifold N_v=Sv_bar not invariant",
        ))
    if p.beta_v1 * p.S_bar < p.mu_tilde_s:
        out.append(Finding(
            "warning", "beta_v1",
            "beta_v1*S_bar < mu_tilde_s: vector population decays instead of relaxing to Sv_bar",
        ))
    return out


def require_valid(params: ModelParams, *, assumptions: bool = True) -> None:
    """Raise :class:`InvalidParametersError` on any error-level finding.

    With ``assumptions=False`` only structural problems are fatal; this is
    what the reproduction-number routines need, since their formulas stay
    well defined for e.g. zero infected-class mortality.
    """
    bad = [f for f in validate(params) if f.level == "schema" or (assumptions and f.level == "error")]
    if bad:
        raise InvalidParametersError(bad)


def equal_death_rates(params: ModelParams, *, vector: bool = True) -> bool:
    p = params
    host = all(m == p.mu_s for m in p.mu) and p.mu_r == p.mu_s
    if not vector:
        return host
    return host and p.mu_tilde == p.mu_tilde_s


@dataclass(frozen=True)
class StateVec:
    """A point in phase space."""

    S: float
    I: tuple
    R: float
    S_v: float
    I_v: float

    def __post_init__(self):
        object.__setattr__(self, "I", tuple(float(x) for x in np.atleast_1d(self.I)))
        for name in ("S", "R", "S_v", "I_v"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def j(self) -> int:
        return len(self.I)

    @property
    def N(self) -> float:
        return self.S + sum(self.I) + self.R

    @property
    def N_v(self) -> float:
        return self.S_v + self.I_v

    def as_array(self) -> np.ndarray:
        return np.array([self.S, *self.I, self.R, self.S_v, self.I_v], dtype=float)

    @classmethod
    def from_array(cls, y) -> "StateVec":
        y = np.asarray(y, dtype=float)
        if y.ndim != 1 or y.size < 5:
            raise ValueError(f"state array must be 1-D with length j+4 >= 5, got shape {y.shape}")
        return cls(S=y[0], I=y[1:-3], R=y[-3], S_v=y[-2], I_v=y[-1])

    @classmethod
    def dfe(cls, params: ModelParams) -> "StateVec":
        return cls(S=params.S_bar, I=(0.0,) * params.j, R=0.0, S_v=params.Sv_bar, I_v=0.0)

    def to_dict(self) -> dict:
        return {"S": self.S, "I": list(self.I), "R": self.R, "S_v": self.S_v, "I_v": self.I_v}


def state_labels(j: int) -> list[str]:
    return ["S", *(f"I{k}" for k in range(1, j + 1)), "R", "Sv", "Iv"]


def beta_host(params: ModelParams, N):
    """Logistic host recruitment ``beta1*N - ((beta1 - mu_s)/S_bar) * N**2``."""
    p = params
    return p.beta1 * N - ((p.beta1 - p.mu_s) / p.S_bar) * N * N


def beta_vector(params: ModelParams, N_tilde, N):
    """Vector recruitment; equals ``mu_tilde_s * Sv_bar`` at ``(Sv_bar, S_bar)``.

    The quadratic damping acts on the total vector population ``N_tilde``.
    """
    p = params
    return p.beta_v1 * N_tilde * N - ((p.beta_v1 * p.S_bar - p.mu_tilde_s) / p.Sv_bar) * N_tilde * N_tilde


def _as_array(params: ModelParams, state) -> np.ndarray:
    y = state.as_array() if isinstance(state, StateVec) else np.asarray(state, dtype=float)
    if y.shape != (params.j + 4,):
        raise ValueError(f"state has shape {y.shape}, expected ({params.j + 4},)")
    return y


def _rhs(p: ModelParams, y: np.ndarray) -> np.ndarray:
    j = p.j
    S = y[0]
    I = y[1:j + 1]
    R = y[j + 1]
    Sv = y[j + 2]
    Iv = y[j + 3]
    sum_I = I.sum()
    N = S + sum_I + R
    if not N > 0.0:
        raise DegeneratePopulationError(f"total host population is {N!r}")
    host_inf = p.f * p.c_v * Iv * S / N
    vec_inf = p.f * p.c * Sv * sum_I / N

    dy = np.empty_like(y)
    dy[0] = beta_host(p, N) - host_inf - p.mu_s * S
    dI = -p.outflow * I
    dI[0] += host_inf
    if j > 1:
        dI[1:] += np.asarray(p.alpha) * I[:-1]
    dy[1:j + 1] = dI
    dy[j + 1] = np.dot(p.theta, I[:-1]) + p.gamma * I[-1] - p.mu_r * R if j > 1 else p.gamma * I[-1] - p.mu_r * R
    dy[j + 2] = beta_vector(p, Sv + Iv, N) - vec_inf - p.mu_tilde_s * Sv
    dy[j + 3] = vec_inf - p.mu_tilde * Iv
    return dy


def vector_field(params: ModelParams, state):
    """Time derivative of every compartment.

    Accepts a :class:`StateVec` (returns one) or a flat array (returns an
    array).  Raises :class:`DegeneratePopulationError` when ``N = 0``.
    """
    dy = _rhs(params, _as_array(params, state))
    return StateVec.from_array(dy) if isinstance(state, StateVec) else dy


def flux_decomposition(params: ModelParams, state):
    """Split the field into new infections, inflow and outflow.

    Returns three arrays ``(F, V_plus, V_minus)`` in state order such that
    ``vector_field = F + V_plus - V_minus``.
    """
    p = params
    y = _as_array(p, state)
    j = p.j
    S, I, R, Sv, Iv = y[0], y[1:j + 1], y[j + 1], y[j + 2], y[j + 3]
    N = S + I.sum() + R
    if not N > 0.0:
        raise DegeneratePopulationError(f"total host population is {N!r}")
    host_inf = p.f * p.c_v * Iv * S / N
    vec_inf = p.f * p.c * Sv * I.sum() / N
    F = np.zeros_like(y)
    vp = np.zeros_like(y)
    vm = np.zeros_like(y)
    F[1] = host_inf
    F[j + 3] = vec_inf
    vp[0] = beta_host(p, N)
    vm[0] = host_inf + p.mu_s * S
    if j > 1:
        vp[2:j + 1] = np.asarray(p.alpha) * I[:-1]
    vm[1:j + 1] = p.outflow * I
    vp[j + 1] = (np.dot(p.theta, I[:-1]) if j > 1 else 0.0) + p.gamma * I[-1]
    vm[j + 1] = p.mu_r * R
    vp[j + 2] = beta_vector(p, Sv + Iv, N)
    vm[j + 2] = vec_inf + p.mu_tilde_s * Sv
    vm[j + 3] = p.mu_tilde * Iv
    return F, vp, vm


@dataclass(frozen=True)
class DimensionlessParams:
    """Rates measured in units of the recovery rate ``gamma``.

    ``h`` holds the scaled treatment rates ``theta_i / gamma``.
    """

    k: float
    l: float
    q: tuple
    b: tuple
    b_s: float
    b_r: float
    b_tilde_s: float
    b_tilde: float
    h: tuple = field(default=())


def to_dimensionless(params: ModelParams) -> DimensionlessParams:
    p = params
    g = p.gamma
    return DimensionlessParams(
        k=p.f * p.c_v / g,
        l=p.f * p.c / g,
        q=tuple(a / g for a in p.alpha),
        b=tuple(m / g for m in p.mu),
        b_s=p.mu_s / g,
        b_r=p.mu_r / g,
        b_tilde_s=p.mu_tilde_s / g,
        b_tilde=p.mu_tilde / g,
        h=tuple(t / g for t in p.theta),
    )


def from_dimensionless(dp: DimensionlessParams, gamma: float) -> dict:
    """Recover the dimensional rate combinations from scaled ones.

    The biting rate and the competencies only enter as the products
    ``f*c_v`` and ``f*c``, so those are what is returned.
    """
    return {
        "f_c_v": dp.k * gamma,
        "f_c": dp.l * gamma,
        "alpha": tuple(x * gamma for x in dp.q),
        "mu": tuple(x * gamma for x in dp.b),
        "theta": tuple(x * gamma for x in dp.h),
        "mu_s": dp.b_s * gamma,
        "mu_r": dp.b_r * gamma,
        "mu_tilde_s": dp.b_tilde_s * gamma,
        "mu_tilde": dp.b_tilde * gamma,
    }


def manifold_residual(params: ModelParams, trajectory) -> float:
    """Largest deviation ``|N(t) - S_bar|`` along a trajectory.

    ``trajectory`` may be a :class:`~relapsing.simulate.Trajectory` or an
    array of states with one row per output time.
    """
    states = getattr(trajectory, "states", trajectory)
    states = np.atleast_2d(np.asarray(states, dtype=float))
    j = params.j
    N = states[:, 0] + states[:, 1:j + 1].sum(axis=1) + states[:, j + 1]
    return float(np.max(np.abs(N - params.S_bar)))
