from __future__ import annotations

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ones, random_params
from relapsing import (
    InvalidParametersError,
    NegativityError,
    StateVec,
    endemic_equilibrium,
    manifold_residual,
    with_r0,
)
from relapsing.simulate import (
    Trajectory,
    default_step,
    integrate,
    logistic_check,
    logistic_solution,
    params_hash,
    write_csv,
)


def _perturbed_dfe(p, eps=1e-3):
    y = StateVec.dfe(p).as_array()
    y[1] += eps
    return y


def _dynamics_params(rng, **kw):
    return random_params(rng, rate_range=(0.2, 1.0), max_j=5, **kw)


class TestIntegrate:
    def test_dfe_stays_put(self, rng):
        for _ in range(5):
            p = random_params(rng, theta=True)
            y0 = StateVec.dfe(p).as_array()
            traj = integrate(p, y0, 20.0, stop_on_convergence=False)
            assert np.max(np.abs(traj.states - y0)) < 1e-10

    def test_dfe_adaptive_within_tolerance(self, rng):
        # large adaptive steps sit on the stability boundary, so the drift
        # is bounded by the local tolerance rather than by roundoff
        p = random_params(rng, theta=True)
        y0 = StateVec.dfe(p).as_array()
        traj = integrate(p, y0, 20.0, method="adaptive", stop_on_convergence=False)
        assert np.all(np.abs(traj.states - y0) < 10 * (1e-9 + 1e-7 * np.abs(y0)))

    def test_trajectory_shape(self, rng):
        p = random_params(rng, j=3)
        traj = integrate(p, _perturbed_dfe(p), 1.0, dt=0.1)
        assert isinstance(traj, Trajectory)
        assert len(traj) == 11 and traj.states.shape == (11, 7)
        assert np.all(np.diff(traj.times) > 0)
        assert traj.times[-1] == 1.0
        assert traj.params_hash == params_hash(p)
        assert traj.j == 3

    def test_record_every(self, rng):
        p = random_params(rng, j=2)
        traj = integrate(p, _perturbed_dfe(p), 1.0, dt=0.1, record_every=4)
        np.testing.assert_allclose(traj.times, [0.0, 0.4, 0.8, 1.0])

    def test_zero_horizon(self, rng):
        p = random_params(rng)
        for method in ("rk4", "adaptive"):
            traj = integrate(p, _perturbed_dfe(p), 0.0, method=method)
            assert len(traj) == 1
            np.testing.assert_array_equal(traj.states[0], _perturbed_dfe(p))

    def test_default_step(self):
        assert default_step(ones(1)) == 0.01
        assert default_step(ones(1, f=40.0)) == pytest.approx(0.1 / 40.0)

    def test_sub_threshold_decay(self, rng):
        for method in ("rk4", "adaptive"):
            p = with_r0(_dynamics_params(rng, theta=True), 0.9)
            traj = integrate(p, _perturbed_dfe(p), 200.0, method=method)
            assert np.max(np.abs(traj.final.as_array() - StateVec.dfe(p).as_array())) < 1e-6

    def test_supra_threshold_reaches_ee(self, rng):
        p = with_r0(_dynamics_params(rng), 1.1)
        traj = integrate(p, _perturbed_dfe(p), 2000.0, method="adaptive")
        ee = endemic_equilibrium(p).state.as_array()
        assert np.max(np.abs(traj.final.as_array() - ee)) < 1e-4

    def test_early_stop_flag(self):
        p = with_r0(ones(1, beta1=2.0, beta_v1=2.0), 0.5)
        traj = integrate(p, _perturbed_dfe(p), 1e4)
        assert traj.converged and traj.times[-1] < 1e4
        full = integrate(p, _perturbed_dfe(p), 50.0, stop_on_convergence=False)
        assert not full.converged and full.times[-1] == 50.0

    def test_rk4_order(self):
        # fixed-step error against a tight adaptive reference
        p = with_r0(ones(3, alpha=[0.7, 1.3], gamma=0.9, beta1=2.0, beta_v1=1.5, mu_tilde=1.2), 1.5)
        y0 = _perturbed_dfe(p, 0.1)
        ref = integrate(p, y0, 10.0, method="adaptive", atol=1e-14, rtol=1e-13, stop_on_convergence=False)
        errs = [
            np.max(np.abs(integrate(p, y0, 10.0, dt=dt, stop_on_convergence=False).final.as_array() - ref.final.as_array()))
            for dt in (0.2, 0.1)
        ]
        assert 10.0 <= errs[0] / errs[1] <= 24.0

    def test_adaptive_matches_rk4(self, rng):
        p = random_params(rng, j=4, theta=True, equal=False)
        y0 = _perturbed_dfe(p, 0.05)
        a = integrate(p, y0, 5.0, method="adaptive", atol=1e-12, rtol=1e-10).final.as_array()
        b = integrate(p, y0, 5.0, dt=0.001).final.as_array()
        assert np.max(np.abs(a - b)) < 1e-9

    def test_rejects_bad_initial(self):
        p = ones(1)
        with pytest.raises(InvalidParametersError):
            integrate(p, [1.0, -0.1, 0.0, 1.0, 0.0], 1.0)
        with pytest.raises(InvalidParametersError):
            integrate(p, [0.0, 0.0, 0.0, 1.0, 0.0], 1.0)
        with pytest.raises(ValueError):
            integrate(p, [1.0, 0.0, 0.0, 1.0, 0.0], -1.0)
        with pytest.raises(ValueError):
            integrate(p, [1.0, 0.0, 0.0, 1.0, 0.0], 1.0, method="euler")

    def test_negativity_breach(self):
        # a huge fixed step on a fast decay overshoots below zero
        p = ones(1, gamma=50.0)
        with pytest.raises(NegativityError):
            integrate(p, [0.5, 0.5, 0.0, 1.0, 0.0], 1.0, dt=0.5)

    def test_adaptive_survives_the_same_problem(self):
        p = ones(1, gamma=50.0)
        traj = integrate(p, [0.5, 0.5, 0.0, 1.0, 0.0], 1.0, method="adaptive", dt=0.5)
        assert traj.states.min() >= 0.0


class TestManifold:
    def test_conservation(self, rng):
        for _ in range(10):
            p = _dynamics_params(rng, theta=True)
            y0 = _perturbed_dfe(with_r0(p, 1.5), 0.0)
            y0[0] -= 0.2 * p.S_bar
            y0[1] += 0.2 * p.S_bar
            traj = integrate(with_r0(p, 1.5), y0, 100.0, method="adaptive")
            assert manifold_residual(p, traj.states) < 1e-8

    def test_unequal_rates_leave_manifold(self, rng):
        p = with_r0(random_params(rng, j=2, equal=False), 1.5)
        y0 = StateVec.dfe(p).as_array()
        y0[0] -= 0.2 * p.S_bar
        y0[1] += 0.2 * p.S_bar
        traj = integrate(p, y0, 20.0, method="adaptive")
        assert manifold_residual(p, traj.states) > 1e-4


class TestLogistic:
    def test_at_capacity(self, rng):
        p = random_params(rng, theta=True)
        assert logistic_check(p, p.S_bar) < 1e-10

    def test_half_capacity(self, rng):
        for _ in range(5):
            p = random_params(rng)
            assert logistic_check(p, p.S_bar / 2) < 1e-6
            N = logistic_solution(p, p.S_bar / 2, np.linspace(0, 50, 200))
            assert np.all(np.diff(N) >= 0) and N[-1] <= p.S_bar * (1 + 1e-15)

    def test_simulated_total_is_monotone(self, rng):
        p = random_params(rng, j=3)
        initial = StateVec(S=p.S_bar / 2, I=(0.0,) * 3, R=0.0, S_v=p.Sv_bar, I_v=0.0)
        N = integrate(p, initial, 50.0, method="adaptive", stop_on_convergence=False).states[:, :5].sum(axis=1)
        assert np.all(np.diff(N) >= -1e-12)
        assert N[-1] == pytest.approx(p.S_bar, rel=1e-6)

    def test_zero_growth(self):
        p = ones(2, S_bar=3.0)
        assert logistic_check(p, 1.2) < 1e-10
        np.testing.assert_array_equal(logistic_solution(p, 1.2, [0.0, 10.0]), [1.2, 1.2])

    def test_requires_equal_host_rates(self, rng):
        with pytest.raises(InvalidParametersError):
            logistic_check(random_params(rng, equal=False), 1.0)


class TestCSV:
    def test_header_and_format(self):
        p = ones(2)
        traj = integrate(p, _perturbed_dfe(p), 0.02)
        buf = io.StringIO()
        write_csv(traj, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "t,S,I1,I2,R,Sv,Iv"
        assert len(lines) == 4
        row = [float(x) for x in lines[-1].split(",")]
        np.testing.assert_array_equal(row[1:], traj.states[-1])
        assert lines[1] == "0,1,0.001,0,0,1,0"
        assert lines[2].startswith("0.01,1.0000099007622796,")


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), r0=st.floats(0.5, 3.0))
def test_states_stay_nonnegative(seed, r0):
    p = with_r0(random_params(np.random.default_rng(seed), theta=True, max_j=4), r0)
    traj = integrate(p, _perturbed_dfe(p, 0.01 * p.S_bar), 20.0, method="adaptive")
    assert traj.states.min() >= 0.0
