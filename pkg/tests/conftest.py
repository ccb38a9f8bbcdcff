from __future__ import annotations

import numpy as np
import pytest

from relapsing import ModelParams


def ones(j: int = 1, **overrides) -> ModelParams:
    """Every rate, competency and capacity equal to one."""
    data = dict(
        j=j, f=1.0, c=1.0, c_v=1.0, gamma=1.0, mu_s=1.0, mu=[1.0] * j, mu_r=1.0,
        alpha=[1.0] * (j - 1), mu_tilde_s=1.0, mu_tilde=1.0, S_bar=1.0, Sv_bar=1.0,
        beta1=1.0, beta_v1=1.0,
    )
    data.update(overrides)
    return ModelParams(**data)


def random_params(
    rng: np.random.Generator,
    j: int | None = None,
    *,
    equal: bool = True,
    theta: bool = False,
    max_j: int = 10,
    rate_range=(0.2, 2.0),
) -> ModelParams:
    """A random parameter set satisfying every modelling assumption.

    Recruitment is strictly above replacement so the DFE is hyperbolic in
    the uninfected directions.  ``equal=False`` draws infected and vector
    death rates above the susceptible ones.
    """
    lo, hi = rate_range
    j = int(rng.integers(1, max_j + 1)) if j is None else j
    mu_s = rng.uniform(lo, hi)
    mu_ts = rng.uniform(lo, hi)
    S_bar = rng.uniform(0.5, 5.0)
    Sv_bar = rng.uniform(0.5, 5.0)
    if equal:
        mu = [mu_s] * j
        mu_r = mu_s
        mu_t = mu_ts
    else:
        mu = list(mu_s + rng.uniform(0.0, 1.0, j))
        mu_r = mu_s + rng.uniform(0.0, 1.0)
        mu_t = mu_ts + rng.uniform(0.0, 1.0)
    return ModelParams(
        j=j,
        f=rng.uniform(0.2, 3.0),
        c=rng.uniform(0.2, 1.0),
        c_v=rng.uniform(0.2, 1.0),
        gamma=rng.uniform(lo, hi),
        mu_s=mu_s,
        mu=mu,
        mu_r=mu_r,
        alpha=list(rng.uniform(lo, hi, j - 1)),
        theta=list(rng.uniform(0.0, 1.0, j - 1)) if theta else None,
        mu_tilde_s=mu_ts,
        mu_tilde=mu_t,
        S_bar=S_bar,
        Sv_bar=Sv_bar,
        beta1=mu_s * rng.uniform(1.2, 3.0),
        beta_v1=mu_ts * max(1.0, 1.0 / S_bar) * rng.uniform(1.2, 3.0),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
