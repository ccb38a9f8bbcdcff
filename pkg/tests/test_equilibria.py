from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ones, random_params
from relapsing import (
    InvalidParametersError,
    NoEE,
    StateVec,
    dfe,
    endemic_equilibrium,
    r0_closed_form,
    verify_equilibrium,
    with_r0,
)
from relapsing.equilibria import (
    endemic_equilibrium_scan,
    fixed_point_condition,
    scan_roots,
    slaved_state,
    stage_chain,
)
from relapsing.model import vector_field

WORKED = dict(f=2.0)  # j = 1, R0^2 = 2


class TestDFE:
    def test_all_ones_j2(self):
        rep = dfe(ones(2))
        assert rep.kind == "DFE"
        np.testing.assert_array_equal(rep.state.as_array(), [1, 0, 0, 0, 1, 0])
        assert rep.residual_inf_norm < 1e-14

    def test_unequal_rates_still_fixed(self, rng):
        for _ in range(20):
            p = random_params(rng, equal=False, theta=True)
            rep = dfe(p)
            assert rep.residual_inf_norm < 1e-14 * max(p.S_bar, p.Sv_bar) * 10
            assert rep.state.I_v == 0.0


class TestWorkedExample:
    def test_values(self):
        rep = endemic_equilibrium(ones(1, **WORKED))
        s = rep.state
        np.testing.assert_allclose(
            [s.S, s.I[0], s.R, s.S_v, s.I_v], [2 / 3, 1 / 6, 1 / 6, 3 / 4, 1 / 4], rtol=0, atol=1e-12
        )
        assert s.N == pytest.approx(1.0, abs=1e-15)
        assert rep.residual_inf_norm < 1e-12

    def test_perturbed_is_not_equilibrium(self):
        y = endemic_equilibrium(ones(1, **WORKED)).state.as_array()
        y[1] += 0.01
        assert verify_equilibrium(ones(1, **WORKED), y) > 1e-4


class TestNoEE:
    def test_threshold(self, rng):
        for _ in range(20):
            out = endemic_equilibrium(with_r0(random_params(rng), 1.0))
            assert isinstance(out, NoEE) and not out
            assert out.i1 == pytest.approx(0.0, abs=1e-12)
            assert "R0 = 1" in out.reason

    def test_below_threshold(self, rng):
        out = endemic_equilibrium(with_r0(random_params(rng), 0.9))
        assert isinstance(out, NoEE)
        assert out.i1 < 0
        assert "negative" in out.reason

    def test_rejects_unequal_rates(self, rng):
        with pytest.raises(InvalidParametersError):
            endemic_equilibrium(random_params(rng, equal=False))

    def test_rejects_treatment(self, rng):
        p = random_params(rng, j=3, theta=True)
        with pytest.raises(InvalidParametersError):
            endemic_equilibrium(p)


class TestClosedForm:
    def test_residual_and_manifold(self, rng):
        for _ in range(100):
            p = with_r0(random_params(rng), rng.uniform(1.01, 3.0))
            rep = endemic_equilibrium(p)
            s = rep.state
            assert rep.residual_inf_norm < 1e-10
            assert s.N == pytest.approx(p.S_bar, rel=1e-12)
            assert s.N_v == pytest.approx(p.Sv_bar, rel=1e-12)
            assert all(x > 0 for x in s.I) and s.I_v > 0

    def test_chain(self, rng):
        p = with_r0(random_params(rng, j=6), 2.0)
        s = endemic_equilibrium(p).state
        c = stage_chain(p)
        np.testing.assert_allclose(np.array(s.I[1:]) / np.array(s.I[:-1]), c[:-1], rtol=1e-13)
        assert s.R / s.I[-1] == pytest.approx(c[-1], rel=1e-13)

    def test_continuity_at_threshold(self, rng):
        for _ in range(20):
            p = with_r0(random_params(rng), 1.0 + 1e-4)
            ee = endemic_equilibrium(p).state.as_array()
            assert np.max(np.abs(ee - StateVec.dfe(p).as_array())) < 1e-3

    def test_scan_agrees(self, rng):
        for _ in range(5):
            p = with_r0(random_params(rng), rng.uniform(1.05, 3.0))
            roots = scan_roots(p)
            assert len(roots) == 1
            assert roots[0] == pytest.approx(endemic_equilibrium(p).state.I[0], abs=1e-10)

    def test_scan_finds_nothing_below_threshold(self, rng):
        p = with_r0(random_params(rng), 0.8)
        assert scan_roots(p, samples=10**4) == []


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), frac=st.floats(0.0, 1.0), treated=st.booleans())
def test_slaved_state_leaves_only_the_first_stage_condition(seed, frac, treated):
    p = random_params(np.random.default_rng(seed), theta=treated)
    y = slaved_state(p, frac * p.S_bar)
    field = vector_field(p, y)
    scale = 1e-12 * max(1.0, np.max(np.abs(y)))
    assert np.max(np.abs(field[2:])) < scale
    assert field[0] == pytest.approx(-field[1], abs=scale)
    assert field[1] == pytest.approx(fixed_point_condition(p, frac * p.S_bar)[0], abs=scale)
    assert y[: p.j + 2].sum() == pytest.approx(p.S_bar, rel=1e-14)


class TestTreatmentScan:
    def test_scan_ee_is_equilibrium(self, rng):
        for _ in range(3):
            p = with_r0(random_params(rng, j=4, theta=True), 1.5)
            rep = endemic_equilibrium_scan(p)
            assert rep.method == "scan"
            assert rep.residual_inf_norm < 1e-9
            assert rep.state.N == pytest.approx(p.S_bar, rel=1e-12)

    def test_scan_matches_closed_form_without_treatment(self, rng):
        p = with_r0(random_params(rng, j=3), 1.7)
        a = endemic_equilibrium_scan(p).state.as_array()
        b = endemic_equilibrium(p).state.as_array()
        np.testing.assert_allclose(a, b, atol=1e-10)

    def test_scan_below_threshold(self, rng):
        p = with_r0(random_params(rng, j=3, theta=True), 0.9)
        assert not endemic_equilibrium_scan(p)

    def test_r0_unchanged_by_reporting(self, rng):
        p = with_r0(random_params(rng), 1.3)
        endemic_equilibrium(p)
        assert r0_closed_form(p) == pytest.approx(1.3, rel=1e-12)
