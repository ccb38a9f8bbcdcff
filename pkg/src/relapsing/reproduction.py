"""Basic reproduction number of the relapsing host/vector model.

Three independent routes to R0 are provided:

* the closed form, a sum over infected stages of products of
  ``alpha_{l-1} / (alpha_l + mu_l + theta_l)`` (with ``alpha_0 = 1`` and
  ``alpha_j = gamma``), also evaluated in nested (Horner) form;
* the next-generation reduction ``sqrt(rho * k * delta1 * eps_last)`` built
  from the first column and the corner entry of ``V^{-1}``;
* a power iteration on the explicitly formed matrix ``W V^{-1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConvergenceError, CrossCheckError, InvalidParametersError
from .model import Finding, ModelParams, require_valid, to_dimensionless

__all__ = [
    "NextGenPair",
    "r0_terms",
    "zeta",
    "r0_closed_form",
    "r0_nested",
    "build_next_gen",
    "delta1_products",
    "delta1_nested",
    "r0_reduction",
    "spectral_radius",
    "r0_spectral",
    "r0_zero_mortality",
    "biting_rate_for_r0",
    "with_r0",
]

POWER_TOL = 1e-12
POWER_MAX_ITER = 10**6
SPECTRAL_AGREEMENT = 1e-10


def _prefactor(p: ModelParams) -> float:
    # c * c_v * Sv_bar / (mu_tilde * S_bar); f is kept out
    return p.c * p.c_v * p.Sv_bar / (p.mu_tilde * p.S_bar)


def r0_terms(params: ModelParams) -> np.ndarray:
    """The ``j`` products summed inside the square root of R0.

    Term ``k`` is the probability of reaching stage ``k`` times the mean
    residence time there, i.e. ``prod_{l<=k} alpha_{l-1} / xi_l`` where
    ``xi_l`` is the total exit rate of stage ``l``.
    """
    p = params
    inflow = np.concatenate(([1.0], p.alpha))
    return np.cumprod(inflow / p.outflow)


def zeta(params: ModelParams) -> float:
    """The biting-rate-free factor of R0, so that ``R0 = f * zeta``."""
    return math.sqrt(_prefactor(params) * math.fsum(r0_terms(params)))


def r0_nested(params: ModelParams) -> float:
    """R0 through the nested form ``1/xi_1 (1 + alpha_1/xi_2 (1 + ...))``."""
    p = params
    xi = p.outflow
    acc = 1.0 / xi[-1]
    for k in range(p.j - 2, -1, -1):
        acc = (1.0 + p.alpha[k] * acc) / xi[k]
    return p.f * math.sqrt(_prefactor(p) * acc)


def r0_closed_form(params: ModelParams) -> float:
    r0 = params.f * zeta(params)
    assert math.isclose(r0, r0_nested(params), rel_tol=1e-13, abs_tol=0.0), (
        "nested and sum-of-products R0 disagree"
    )
    return r0


@dataclass(frozen=True)
class NextGenPair:
    """New-infection (``W``) and transfer (``V``) Jacobians at the DFE.

    Built for the infected subsystem ``(i_1, ..., i_j, i_v)`` with time
    measured in units of ``1/gamma``.
    """

    W: np.ndarray
    V: np.ndarray
    rho: float
    delta1: float
    eps_last: float

    @property
    def k(self) -> float:
        return float(self.W[0, -1])

    @property
    def product(self) -> np.ndarray:
        """``W V^{-1}`` formed from a full triangular inverse of ``V``."""
        n = self.V.shape[0]
        return self.W @ np.linalg.solve(self.V, np.eye(n))


def build_next_gen(params: ModelParams) -> NextGenPair:
    p = params
    dp = to_dimensionless(p)
    j = p.j
    rho = dp.l * p.Sv_bar / p.S_bar

    W = np.zeros((j + 1, j + 1))
    W[0, j] = dp.k
    W[j, :j] = rho

    V = np.zeros((j + 1, j + 1))
    diag = np.empty(j + 1)
    diag[:j - 1] = np.asarray(dp.q) + np.asarray(dp.b[:-1]) + np.asarray(dp.h)
    diag[j - 1] = 1.0 + dp.b[-1]
    diag[j] = dp.b_tilde
    V[np.diag_indices(j + 1)] = diag
    for i in range(j - 1):
        V[i + 1, i] = -dp.q[i]

    # first column of V^{-1} by forward substitution on V x = e_1
    col = np.zeros(j + 1)
    col[0] = 1.0 / diag[0]
    for i in range(1, j):
        col[i] = -V[i, i - 1] * col[i - 1] / diag[i]
    delta1 = math.fsum(col[:j])
    eps_last = 1.0 / diag[j]
    return NextGenPair(W=W, V=V, rho=rho, delta1=delta1, eps_last=eps_last)


def delta1_products(q, b) -> float:
    """``sum_k prod_{l<k} q_l / prod_{l<=k} (q_l + b_l)`` with ``q_0 = q_j = 1``.

    ``q`` has ``j - 1`` entries and ``b`` has ``j`` (treatment rates, if any,
    should already be folded into ``b``).
    """
    q_ext = np.concatenate((np.asarray(q, dtype=float), [1.0]))
    num = np.concatenate(([1.0], q_ext[:-1]))
    den = q_ext + np.asarray(b, dtype=float)
    return math.fsum(np.cumprod(num / den))


def delta1_nested(q, b) -> float:
    q = list(q) + [1.0]
    acc = 1.0 / (q[-1] + b[-1])
    for k in range(len(b) - 2, -1, -1):
        acc = (1.0 + q[k] * acc) / (q[k] + b[k])
    return acc


def r0_reduction(pair: NextGenPair) -> float:
    """Spectral radius of ``W V^{-1}`` from its two nonzero eigenvalues."""
    return math.sqrt(pair.rho * pair.k * pair.delta1 * pair.eps_last)


def spectral_radius(M, *, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> float:
    """Spectral radius of a nonnegative square matrix by power iteration.

    The next-generation product has the eigenvalue pair ``+r, -r``, on which
    a plain power iteration oscillates, so the iteration runs on ``M @ M``
    (whose dominant eigenvalue ``r**2`` is unique up to multiplicity) and the
    square root is returned.  The start vector is all ones.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if np.any(M < 0):
        raise ValueError("power iteration here requires a nonnegative matrix")
    M2 = M @ M
    x = np.ones(M.shape[0])
    lam = None
    for _ in range(max_iter):
        y = M2 @ x
        lam_new = float(np.max(y))
        if lam_new == 0.0:
            return 0.0
        x = y / lam_new
        if lam is not None and abs(lam_new - lam) <= tol * lam_new:
            return math.sqrt(lam_new)
        lam = lam_new
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations",
        residual=float(np.max(np.abs(M2 @ x - lam * x))),
    )


def r0_spectral(params: ModelParams) -> float:
    """Dominant eigenvalue of the next-generation matrix.

    Computed by power iteration on the formed product and checked against
    the analytic two-eigenvalue reduction; disagreement beyond ``1e-10``
    (relative) raises :class:`CrossCheckError`.
    """
    pair = build_next_gen(params)
    numeric = spectral_radius(pair.product)
    analytic = r0_reduction(pair)
    if not math.isclose(numeric, analytic, rel_tol=SPECTRAL_AGREEMENT, abs_tol=1e-300):
        raise CrossCheckError(
            f"power iteration gives {numeric!r}, analytic reduction gives {analytic!r}"
        )
    return numeric


def r0_zero_mortality(params: ModelParams) -> float:
    """R0 when no infected host dies and nobody is treated.

    Reduces to ``f * sqrt(c c_v Sv_bar / (mu_tilde S_bar)) * sqrt(sum 1/alpha_i)``
    with ``alpha_j = gamma``: R0 squared is proportional to the total time an
    infection lasts.
    """
    p = params
    bad = [Finding("error", f"mu[{i}]", "must be 0 for the zero-mortality form")
           for i, m in enumerate(p.mu) if m != 0.0]
    bad += [Finding("error", f"theta[{i}]", "must be 0 for the zero-mortality form")
            for i, t in enumerate(p.theta) if t != 0.0]
    if bad:
        raise InvalidParametersError(bad)
    durations = [1.0 / a for a in p.alpha] + [1.0 / p.gamma]
    r0 = p.f * math.sqrt(_prefactor(p)) * math.sqrt(math.fsum(durations))
    assert math.isclose(r0, r0_closed_form(p), rel_tol=1e-12)
    return r0


def biting_rate_for_r0(params: ModelParams, target: float) -> float:
    """Biting rate that puts R0 at ``target``; ``params.f`` is ignored."""
    if not target > 0:
        raise ValueError(f"target R0 must be positive, got {target!r}")
    require_valid(params, assumptions=False)
    return target / zeta(params)


def with_r0(params: ModelParams, target: float) -> ModelParams:
    """Copy of ``params`` with ``f`` replaced so that R0 equals ``target``."""
    return params.replace(f=biting_rate_for_r0(params, target))
