"""Linear stability of the disease-free equilibrium and the R0 = 1 bifurcation.

All matrices derive from ``J = d(vector_field)/d(state)``.  For block
analysis the state is permuted to infected-first order

    (I_1, ..., I_j, I_v, S, S_v, R)

so that at the DFE ``J = [[T, 0], [L, D]]`` with ``T = F - V`` the infected
block.  Null vectors, ``eps`` and the bifurcation coefficients are reported
in this order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ConvergenceError,
    CrossCheckError,
    DegeneratePopulationError,
    InvalidParametersError,
)
from .model import Finding, ModelParams, StateVec, _as_array, equal_death_rates, require_valid
from .reproduction import r0_closed_form, with_r0, zeta

__all__ = [
    "CharPoly",
    "BifurcationReport",
    "Classification",
    "ThresholdError",
    "jacobian",
    "hessian",
    "infected_first_order",
    "dfe_blocks",
    "char_poly_dfe",
    "char_poly_discrepancy",
    "linear_coefficient_identity",
    "polynomial_roots",
    "dfe_spectrum",
    "null_vectors",
    "eps_matrix",
    "center_uninfected",
    "bifurcation_coefficients",
    "classify_bifurcation",
]

THRESHOLD_TOL = 1e-8
COLLAPSED_AGREEMENT = 1e-10


class ThresholdError(InvalidParametersError):
    """Bifurcation quantities requested away from R0 = 1."""

    def __init__(self, r0):
        self.r0 = r0
        super().__init__([Finding("error", "f", f"R0 = {r0!r} is not within {THRESHOLD_TOL} of 1")])


def _split(p: ModelParams, y: np.ndarray):
    j = p.j
    S, I, R, Sv, Iv = y[0], y[1:j + 1], y[j + 1], y[j + 2], y[j + 3]
    N = S + I.sum() + R
    if not N > 0.0:
        raise DegeneratePopulationError(f"total host population is {N!r}")
    return S, I, R, Sv, Iv, N


def jacobian(params: ModelParams, state) -> np.ndarray:
    """Analytic Jacobian of the vector field, in state order."""
    p = params
    y = _as_array(p, state)
    j = p.j
    n = j + 4
    S, I, R, Sv, Iv, N = _split(p, y)
    sigma = I.sum()
    iS, iR, iSv, iIv = 0, j + 1, j + 2, j + 3
    host = np.r_[iS, 1:j + 1, iR]
    others = np.r_[1:j + 1, iR]  # host columns other than S

    fcv, fc = p.f * p.c_v, p.f * p.c
    N2 = N * N
    dbeta = p.beta1 - 2.0 * (p.beta1 - p.mu_s) * N / p.S_bar
    damp_v = (p.beta_v1 * p.S_bar - p.mu_tilde_s) / p.Sv_bar
    Nv = Sv + Iv

    # host infection H = fcv*Iv*S/N
    dH = np.zeros(n)
    dH[iS] = fcv * Iv * (N - S) / N2
    dH[others] = -fcv * Iv * S / N2
    dH[iIv] = fcv * S / N
    # vector infection Vi = fc*Sv*sigma/N
    dVi = np.zeros(n)
    dVi[[iS, iR]] = -fc * Sv * sigma / N2
    dVi[1:j + 1] = fc * Sv * (N - sigma) / N2
    dVi[iSv] = fc * sigma / N

    J = np.zeros((n, n))
    J[iS, host] = dbeta
    J[iS] -= dH
    J[iS, iS] -= p.mu_s

    J[1] += dH
    idx = np.arange(1, j + 1)
    J[idx, idx] -= p.outflow
    if j > 1:
        J[idx[1:], idx[:-1]] += np.asarray(p.alpha)
        J[iR, 1:j] += np.asarray(p.theta)
    J[iR, j] += p.gamma
    J[iR, iR] -= p.mu_r

    J[iSv, host] = p.beta_v1 * Nv
    J[iSv, [iSv, iIv]] = p.beta_v1 * N - 2.0 * damp_v * Nv
    J[iSv] -= dVi
    J[iSv, iSv] -= p.mu_tilde_s

    J[iIv] += dVi
    J[iIv, iIv] -= p.mu_tilde
    return J


def hessian(params: ModelParams, state) -> np.ndarray:
    """Second derivatives ``H[i, a, b] = d2 f_i / dx_a dx_b`` in state order."""
    p = params
    y = _as_array(p, state)
    j = p.j
    n = j + 4
    S, I, R, Sv, Iv, N = _split(p, y)
    sigma = I.sum()
    iS, iR, iSv, iIv = 0, j + 1, j + 2, j + 3
    host = np.r_[iS, 1:j + 1, iR]
    others = np.r_[1:j + 1, iR]
    infected = np.arange(1, j + 1)
    uninf_host = np.array([iS, iR])
    N2, N3 = N * N, N * N * N
    fcv, fc = p.f * p.c_v, p.f * p.c

    # u = S/N and its derivatives over host variables
    du = np.zeros(n)
    du[iS] = (N - S) / N2
    du[others] = -S / N2
    d2u = np.zeros((n, n))
    d2u[np.ix_(others, others)] = 2.0 * S / N3
    d2u[iS, others] = d2u[others, iS] = (2.0 * S - N) / N3
    d2u[iS, iS] = -2.0 * (N - S) / N3
    # w = sigma/N
    dw = np.zeros(n)
    dw[infected] = (N - sigma) / N2
    dw[uninf_host] = -sigma / N2
    d2w = np.zeros((n, n))
    d2w[np.ix_(infected, infected)] = -2.0 * (N - sigma) / N3
    d2w[np.ix_(infected, uninf_host)] = (2.0 * sigma - N) / N3
    d2w[np.ix_(uninf_host, infected)] = (2.0 * sigma - N) / N3
    d2w[np.ix_(uninf_host, uninf_host)] = 2.0 * sigma / N3

    HH = fcv * Iv * d2u
    HH[iIv, :] += fcv * du
    HH[:, iIv] += fcv * du
    HV = fc * Sv * d2w
    HV[iSv, :] += fc * dw
    HV[:, iSv] += fc * dw

    H = np.zeros((n, n, n))
    H[iS][np.ix_(host, host)] = -2.0 * (p.beta1 - p.mu_s) / p.S_bar
    H[iS] -= HH
    H[1] += HH
    damp_v = (p.beta_v1 * p.S_bar - p.mu_tilde_s) / p.Sv_bar
    vec = np.array([iSv, iIv])
    H[iSv][np.ix_(vec, vec)] = -2.0 * damp_v
    H[iSv][np.ix_(host, vec)] = p.beta_v1
    H[iSv][np.ix_(vec, host)] = p.beta_v1
    H[iSv] -= HV
    H[iIv] += HV
    return H


def infected_first_order(j: int) -> np.ndarray:
    """Permutation taking state order to ``(I_1..I_j, I_v, S, S_v, R)``."""
    return np.r_[1:j + 1, j + 3, 0, j + 2, j + 1]


def dfe_blocks(params: ModelParams):
    """``(T, L, D)`` blocks of the DFE Jacobian in infected-first order."""
    perm = infected_first_order(params.j)
    J = jacobian(params, StateVec.dfe(params))[np.ix_(perm, perm)]
    m = params.j + 1
    return J[:m, :m], J[m:, :m], J[m:, m:]


@dataclass(frozen=True)
class CharPoly:
    """``p(lam) = det(lam*I - T)`` for the infected DFE block.

    ``xi`` are the exit rates ``xi_1..xi_j`` of the infected host stages
    followed by ``mu_tilde``; ``prefix`` are the products
    ``alpha_0 * ... * alpha_i`` (``alpha_0 = 1``) for ``i = 0..j-1``;
    ``K = f**2 c c_v Sv_bar / S_bar``.  ``coefficients[k]`` multiplies
    ``lam**k``.
    """

    xi: tuple
    prefix: tuple
    K: float
    coefficients: tuple

    @property
    def degree(self) -> int:
        return len(self.xi)

    def evaluate(self, lam):
        """Value and derivative at ``lam`` from the product/sum structure."""
        xi = self.xi
        P, dP = 1.0, 0.0
        for x in xi:
            dP = dP * (lam + x) + P
            P = P * (lam + x)
        q, dq = self.prefix[0], 0.0
        for m in range(1, len(self.prefix)):
            dq = dq * (lam + xi[m]) + q
            q = q * (lam + xi[m]) + self.prefix[m]
        return P - self.K * q, dP - self.K * dq

    def __call__(self, lam):
        return self.evaluate(lam)[0]

    def magnitude(self, lam) -> float:
        """``p`` evaluated with every term made positive; a rounding scale."""
        r = abs(lam)
        P = math.prod(r + x for x in self.xi)
        q = self.prefix[0]
        for m in range(1, len(self.prefix)):
            q = q * (r + self.xi[m]) + self.prefix[m]
        return P + self.K * q

    @property
    def constant(self) -> float:
        return self.coefficients[0]

    @property
    def linear(self) -> float:
        return self.coefficients[1]


def char_poly_dfe(params: ModelParams) -> CharPoly:
    p = params
    xi = tuple(p.outflow) + (p.mu_tilde,)
    prefix = tuple(np.cumprod(np.concatenate(([1.0], p.alpha))))
    K = p.f ** 2 * p.c * p.c_v * p.Sv_bar / p.S_bar

    P = np.array([1.0])
    for x in xi:
        P = np.polynomial.polynomial.polymul(P, [x, 1.0])
    Q = np.zeros(p.j)
    for i, a in enumerate(prefix):
        term = np.array([a])
        for x in xi[i + 1:p.j]:
            term = np.polynomial.polynomial.polymul(term, [x, 1.0])
        Q[:term.size] += term
    coeffs = P.copy()
    coeffs[:Q.size] -= K * Q
    return CharPoly(xi=xi, prefix=prefix, K=K, coefficients=tuple(coeffs))


def char_poly_discrepancy(params: ModelParams, points=32, rng=None) -> float:
    """Largest relative gap between ``p`` and ``det(lam*I - T)``.

    Both the structured evaluation and the monomial coefficients are compared
    against a dense determinant of the assembled infected block at ``points``
    random complex ``lam``.
    """
    rng = np.random.default_rng(rng)
    cp = char_poly_dfe(params)
    T, _, _ = dfe_blocks(params)
    scale = max(cp.xi)
    worst = 0.0
    eye = np.eye(T.shape[0])
    for _ in range(points):
        lam = complex(*rng.uniform(-2.0 * scale, 2.0 * scale, size=2))
        exact = np.linalg.det(lam * eye - T)
        mono = np.polynomial.polynomial.polyval(lam, cp.coefficients)
        ref = cp.magnitude(lam)
        worst = max(worst, abs(cp(lam) - exact) / ref, abs(mono - exact) / ref)
    return worst


def linear_coefficient_identity(params: ModelParams) -> float:
    """Linear coefficient of ``p`` at R0 = 1 written as a sum of positive terms.

    Dividing ``p`` by ``prod (lam + xi_i)`` gives ``1 - G(lam)`` with
    ``G(0) = R0**2``; differentiating at 0 with ``R0 = 1`` yields
    ``p'(0) = prod(xi) * (K / xi_{j+1}) * sum_k A_k / P_k * (sum_{m<=k} 1/xi_m + 1/xi_{j+1})``
    where ``A_k`` are the alpha prefix products and ``P_k = xi_1 ... xi_k``.
    Only meaningful when ``params`` sit at the threshold.
    """
    cp = char_poly_dfe(params)
    xi = np.asarray(cp.xi)
    j = params.j
    P_k = np.cumprod(xi[:j])
    inv_cum = np.cumsum(1.0 / xi[:j])
    terms = np.asarray(cp.prefix) / P_k * (inv_cum + 1.0 / xi[j])
    return float(np.prod(xi) * cp.K / xi[j] * math.fsum(terms))


def polynomial_roots(cp: CharPoly, *, tol=1e-15, max_iter=1000) -> np.ndarray:
    """All roots of ``cp`` by Aberth-Ehrlich simultaneous iteration.

    Uses the structured evaluation only (no companion matrix).  Raises
    :class:`ConvergenceError` carrying the worst scaled residual if the
    iteration stalls.
    """
    n = cp.degree
    coeffs = np.asarray(cp.coefficients)
    # Fujiwara bound on the root moduli
    radius = 2.0 * max(abs(coeffs[n - k]) ** (1.0 / k) for k in range(1, n + 1))
    z = radius * np.exp(1j * (2.0 * np.pi * np.arange(n) / n + 0.4))

    for _ in range(max_iter):
        biggest = 0.0
        for k in range(n):
            val, der = cp.evaluate(z[k])
            if val == 0:
                continue
            ratio = val / der if der != 0 else val
            diff = z[k] - np.delete(z, k)
            repulsion = np.sum(1.0 / diff)
            step = ratio / (1.0 - ratio * repulsion)
            z[k] -= step
            biggest = max(biggest, abs(step) / max(1.0, abs(z[k])))
        if biggest < tol:
            break
    else:
        res = max(abs(cp(x)) / cp.magnitude(x) for x in z)
        if res > 1e-10:
            raise ConvergenceError(f"Aberth iteration stalled, scaled residual {res:.3e}", residual=res)
    for k in range(n):
        for _ in range(3):
            val, der = cp.evaluate(z[k])
            if der == 0 or val == 0:
                break
            z[k] -= val / der
    # roots that are real up to rounding are reported as real
    z = np.where(np.abs(z.imag) <= 1e-12 * np.maximum(1.0, np.abs(z)), z.real + 0j, z)
    return np.sort_complex(z)


def dfe_spectrum(params: ModelParams) -> np.ndarray:
    """All ``j + 4`` eigenvalues of the DFE Jacobian.

    The infected block contributes the roots of :func:`char_poly_dfe`; the
    uninfected block is triangular (taken in the order R, S, S_v) and
    contributes its diagonal ``mu_s - beta1``, ``mu_tilde_s - beta_v1*S_bar``
    and ``-mu_r``.
    """
    cp = char_poly_dfe(params)
    roots = polynomial_roots(cp)
    _, _, D = dfe_blocks(params)
    tri = D[np.ix_([2, 0, 1], [2, 0, 1])]
    if np.any(np.triu(tri, 1) != 0.0):
        raise CrossCheckError("uninfected DFE block is not triangular")
    return np.concatenate((roots, np.diag(D).astype(complex)))


def null_vectors(params: ModelParams):
    """Left/right null vectors of the infected block ``T`` at R0 = 1.

    Solved by substitution along the stage chain: ``w`` forward from
    ``w_1 = 1``, ``v`` backward from ``v_{j+1} = 1``.  ``v`` is rescaled so
    that ``v . w = 1``; both are componentwise positive.
    """
    p = params
    j = p.j
    xi = p.outflow
    w = np.empty(j + 1)
    w[0] = 1.0
    for k in range(1, j):
        w[k] = p.alpha[k - 1] * w[k - 1] / xi[k]
    w[j] = xi[0] / (p.f * p.c_v)

    K = p.f * p.c * p.Sv_bar / p.S_bar
    v = np.empty(j + 1)
    v[j] = 1.0
    v[j - 1] = K / xi[j - 1]
    for k in range(j - 2, -1, -1):
        v[k] = (p.alpha[k] * v[k + 1] + K) / xi[k]
    v /= v @ w
    return v, w


def eps_matrix(params: ModelParams) -> np.ndarray:
    """Uninfected response ``eps`` (rows S, S_v, R) to infected perturbations.

    Built with the uninfected classes linearized at their death rates only,
    i.e. ``eps = -J4^{-1} J3`` with ``J4 = diag(mu_s, mu_tilde_s, mu_r)``.
    Recruitment is left out: with equal death rates the center direction
    keeps both population totals fixed, so recruitment does not act on it
    (see :func:`center_uninfected`).  This also keeps ``eps`` defined when
    ``beta1 = mu_s``, where the exact uninfected block is singular.
    """
    p = params
    j = p.j
    eps = np.zeros((3, j + 1))
    eps[0, j] = -p.f * p.c_v / p.mu_s
    eps[1, :j] = -p.f * p.c * p.Sv_bar / (p.S_bar * p.mu_tilde_s)
    eps[2, :j - 1] = np.asarray(p.theta) / p.mu_r
    eps[2, j - 1] = p.gamma / p.mu_r
    return eps


def center_uninfected(params: ModelParams, w_inf) -> np.ndarray:
    """Uninfected part ``(S, S_v, R)`` of the center direction over ``w_inf``.

    Fixed by the recovered-class balance and by holding the host and vector
    totals constant, which is what the linearized flow does along the zero
    eigenvector when all death rates match.
    """
    p = params
    j = p.j
    w_inf = np.asarray(w_inf, dtype=float)
    r = (np.dot(p.theta, w_inf[:j - 1]) + p.gamma * w_inf[j - 1]) / p.mu_r
    return np.array([-(w_inf[:j].sum() + r), -w_inf[j], r])


@dataclass(frozen=True)
class BifurcationReport:
    """Transcritical-bifurcation data at R0 = 1 (infected-first ordering)."""

    mu: float
    zeta: float
    f: float
    v: np.ndarray
    w: np.ndarray
    a: float
    b: float
    a_collapsed: float
    b_collapsed: float
    eps: np.ndarray
    dfe_eigs: np.ndarray
    vw: float
    null_residual: float

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "zeta": self.zeta,
            "f": self.f,
            "v": self.v.tolist(),
            "w": self.w.tolist(),
            "vw": self.vw,
            "null_residual": self.null_residual,
            "a": self.a,
            "b": self.b,
            "a_collapsed": self.a_collapsed,
            "b_collapsed": self.b_collapsed,
            "eps": self.eps.tolist(),
            "dfe_eigs": [[float(z.real), float(z.imag)] for z in self.dfe_eigs],
        }


def _require_threshold_params(p: ModelParams) -> float:
    require_valid(p)
    if not equal_death_rates(p):
        raise InvalidParametersError([Finding(
            "error", "mu", "bifurcation analysis needs mu_s = mu_i = mu_r and mu_tilde = mu_tilde_s",
        )])
    r0 = r0_closed_form(p)
    if abs(r0 - 1.0) > THRESHOLD_TOL:
        raise ThresholdError(r0)
    return r0


def bifurcation_coefficients(params: ModelParams) -> BifurcationReport:
    """Coefficients ``a`` and ``b`` of the transcritical bifurcation.

    ``params`` must already sit at R0 = 1 (see
    :func:`~relapsing.reproduction.with_r0`).  ``a`` and ``b`` are evaluated
    from the general tensor sums over the exact second derivatives of the
    field and compared against their closed collapsed expressions.
    """
    p = params
    r0 = _require_threshold_params(p)
    j = p.j
    m = j + 1
    z = zeta(p)

    T, _, _ = dfe_blocks(p)
    v_inf, w_inf = null_vectors(p)
    null_res = max(float(np.max(np.abs(v_inf @ T))), float(np.max(np.abs(T @ w_inf))))
    eps = eps_matrix(p)
    drift = np.max(np.abs(eps @ w_inf - center_uninfected(p, w_inf)))
    if drift > COLLAPSED_AGREEMENT * max(1.0, float(np.max(np.abs(eps @ w_inf)))):
        raise CrossCheckError(f"uninfected center direction disagrees with eps @ w by {drift!r}")

    perm = infected_first_order(j)
    dfe = StateVec.dfe(p)
    H = hessian(p, dfe)[np.ix_(perm, perm, perm)]
    h_inf = H[:m, :m, :m]
    h_mix = H[:m, :m, m:]
    ew = eps @ w_inf
    a = 0.5 * np.einsum("i,j,k,ijk->", v_inf, w_inf, w_inf, h_inf) + np.einsum(
        "i,j,l,ijl->", v_inf, w_inf, ew, h_mix
    )

    v_full = np.concatenate((v_inf, np.zeros(3)))
    w_full = np.concatenate((w_inf, ew))
    # J is affine in f, so d/df J is the difference at f = 1 and f = 0
    J1 = (jacobian(p.replace(f=1.0), dfe) - jacobian(p.replace(f=0.0), dfe))[np.ix_(perm, perm)]
    b = float(v_full @ J1 @ w_full) / z

    sum_w = float(np.sum(w_inf[:j]))
    a_c = -(v_inf[0] * w_inf[j] ** 2 * p.f ** 2 * p.c_v ** 2 / (p.S_bar * p.mu_s)) - (
        v_inf[j] * sum_w ** 2 * p.f ** 2 * p.c ** 2 * p.Sv_bar / (p.S_bar ** 2 * p.mu_tilde_s)
    )
    b_c = v_inf[0] * w_inf[j] * p.c_v / z + v_inf[j] * p.c * p.Sv_bar / (p.S_bar * z) * sum_w

    for name, general, collapsed in (("a", a, a_c), ("b", b, b_c)):
        if not math.isclose(general, collapsed, rel_tol=COLLAPSED_AGREEMENT):
            raise CrossCheckError(f"{name}: general form {general!r} != collapsed form {collapsed!r}")

    return BifurcationReport(
        mu=r0 - 1.0,
        zeta=z,
        f=p.f,
        v=v_full,
        w=w_full,
        a=float(a),
        b=b,
        a_collapsed=float(a_c),
        b_collapsed=float(b_c),
        eps=eps,
        dfe_eigs=dfe_spectrum(p),
        vw=float(v_full @ w_full),
        null_residual=null_res,
    )


@dataclass(frozen=True)
class Classification:
    """Outcome of :func:`classify_bifurcation`.

    ``direction`` is ``"forward"`` when the endemic branch exists for R0 > 1
    and is stable (``a < 0``), ``"backward"`` otherwise.  The ``ee_*``
    fields come from the numerical confirmation at ``R0 = 1 + offset``.
    """

    kind: str
    direction: str
    report: BifurcationReport
    ee_state: StateVec | None
    ee_spectral_abscissa: float
    confirmed: bool

    def to_dict(self) -> dict:
        return {
            "classification": self.kind,
            "direction": self.direction,
            "confirmed": self.confirmed,
            "ee_state": None if self.ee_state is None else self.ee_state.to_dict(),
            "ee_spectral_abscissa": self.ee_spectral_abscissa,
        }


def classify_bifurcation(params: ModelParams, *, offset: float = 1e-3) -> Classification:
    """Classify the bifurcation of the DFE at R0 = 1.

    ``params.f`` is replaced by the threshold biting rate.  The forward
    branch is confirmed numerically by computing the endemic equilibrium at
    ``R0 = 1 + offset`` and checking that it is positive and that every
    eigenvalue of the Jacobian there has negative real part.
    """
    from .equilibria import endemic_equilibrium, endemic_equilibrium_scan

    crit = with_r0(params, 1.0)
    report = bifurcation_coefficients(crit)
    kind = "transcritical" if report.b != 0.0 and report.a != 0.0 else "degenerate"
    direction = "forward" if report.a < 0 else "backward"

    near = with_r0(params, 1.0 + offset)
    if near.has_treatment:
        ee = endemic_equilibrium_scan(near)
    else:
        ee = endemic_equilibrium(near)
    if not ee:
        return Classification(kind, direction, report, None, float("nan"), False)
    eigs = np.linalg.eigvals(jacobian(near, ee.state))
    abscissa = float(np.max(eigs.real))
    positive = all(x > 0 for x in ee.state.as_array())
    confirmed = kind == "transcritical" and direction == "forward" and positive and abscissa < 0
    return Classification(kind, direction, report, ee.state, abscissa, confirmed)
