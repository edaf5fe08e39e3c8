"""Concentration reports, effective-noise checks and window averages."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ampsw._rng import stream_rng
from ampsw.amp_core import amp_step, generate_instance, initial_state
from ampsw.diagnostics import (
    ConcentrationReport,
    check_h_moments,
    effective_noise,
    gaussian_window_average,
    mc_window_average,
    q0_norm_check,
    stein_identity_check,
)
from ampsw.markov_signal import ChainError, FiniteMarkovChain, sample_path

REF_CHAIN = FiniteMarkovChain(
    states=(0.0, 1.0),
    transition=((Fraction(67, 70), Fraction(3, 70)), (Fraction(1, 10), Fraction(9, 10))),
)


class TestReport:
    def test_absolute_tolerance(self):
        r = ConcentrationReport.make("x", 1.02, 1.0, 100, abs_tol=0.05)
        assert r.passed and r.abs_dev == pytest.approx(0.02)
        assert not ConcentrationReport.make("x", 1.10, 1.0, 100, abs_tol=0.05).passed

    def test_relative_tolerance(self):
        r = ConcentrationReport.make("x", 2.1, 2.0, 100, rel_tol=0.10)
        assert r.passed and r.rel_dev == pytest.approx(0.05)
        assert not ConcentrationReport.make("x", 2.5, 2.0, 100, rel_tol=0.10).passed

    def test_zero_theoretical_disables_relative(self):
        r = ConcentrationReport.make("x", 0.01, 0.0, 100, rel_tol=0.10)
        assert r.rel_dev is None and not r.passed

    def test_exact_match_passes_any_configuration(self):
        assert ConcentrationReport.make("x", 0.0, 0.0, 10).passed
        assert ConcentrationReport.make("x", 0.0, 0.0, 10, rel_tol=0.0).passed

    def test_no_tolerance_no_pass(self):
        assert not ConcentrationReport.make("x", 1.0, 1.000001, 10).passed

    def test_serialization(self):
        r = ConcentrationReport.make("q", 1.5, 1.0, 10, abs_tol=1.0)
        d = r.as_dict()
        assert d["name"] == "q" and d["passed"] and d["abs_dev"] == 0.5
        assert "q" in r.row() and "pass" in r.row()
        assert "FAIL" in ConcentrationReport.make("q", 9.0, 1.0, 10, abs_tol=1.0).row()

    @given(
        emp=st.floats(-1e6, 1e6),
        theo=st.floats(-1e6, 1e6),
        abs_tol=st.none() | st.floats(0, 1e6),
        rel_tol=st.none() | st.floats(0, 1e6),
    )
    def test_pass_flag_definition(self, emp, theo, abs_tol, rel_tol):
        r = ConcentrationReport.make("p", emp, theo, 1, abs_tol=abs_tol, rel_tol=rel_tol)
        dev = abs(emp - theo)
        expect = dev == 0.0
        if abs_tol is not None:
            expect = expect or dev <= abs_tol
        if rel_tol is not None and theo != 0:
            expect = expect or dev / abs(theo) <= rel_tol
        assert r.passed == expect
        assert r.abs_dev == dev


class TestEffectiveNoise:
    def test_zero_signal_zero_noise_gives_zero(self):
        chain = FiniteMarkovChain(states=(0.0,), transition=[[1.0]])
        inst = generate_instance(chain, 50, 0.5, 0.0, seed=1)
        h = effective_noise(initial_state(inst), inst)
        assert np.all(h == 0.0)

    def test_matches_definition(self):
        inst = generate_instance(REF_CHAIN, 120, 0.5, 0.1, seed=5)
        state = initial_state(inst)
        h = effective_noise(state, inst)
        assert np.array_equal(h, inst.beta0 - (inst.A.T @ state.z + state.beta))
        assert h.shape == (120,)

    def test_moment_checks_accept_exact_gaussian(self):
        tau2 = 1.1
        h = math.sqrt(tau2) * stream_rng(0, "diag_gauss").standard_normal(100_000)
        beta0 = sample_path(REF_CHAIN, 100_000, 1)
        reports = check_h_moments(h, tau2, beta0, n=30_000)
        assert [r.passed for r in reports] == [True, True, True]
        names = [r.name for r in reports]
        assert names == ["h_norm2_over_N", "h_dot_beta0_over_n", "h_tail_fraction"]

    def test_moment_checks_flag_wrong_scale(self):
        tau2 = 1.1
        h = math.sqrt(tau2) * stream_rng(0, "diag_gauss").standard_normal(100_000)
        beta0 = sample_path(REF_CHAIN, 100_000, 1)
        inflated = check_h_moments(2.0 * h, tau2, beta0, n=30_000)
        assert not inflated[0].passed and not inflated[2].passed
        zero = check_h_moments(np.zeros(100_000), tau2, beta0, n=30_000)
        assert not zero[0].passed and not zero[2].passed


class TestQ0:
    def test_reference_instance(self):
        inst = generate_instance(REF_CHAIN, 4000, 0.5, 0.1, seed=0)
        r = q0_norm_check(inst)
        assert r.theoretical == pytest.approx(0.6, rel=1e-12)
        assert r.passed and r.rel_dev < 0.05

    def test_degenerate_zero_signal(self):
        chain = FiniteMarkovChain(states=(0.0,), transition=[[1.0]])
        inst = generate_instance(chain, 100, 0.5, 0.0, seed=1)
        r = q0_norm_check(inst)
        assert r.empirical == 0.0 and r.theoretical == 0.0
        assert r.abs_dev == 0.0 and r.passed

    def test_sign_chain_is_exact(self):
        chain = FiniteMarkovChain(states=(-1.0, 1.0), transition=[[0.6, 0.4], [0.2, 0.8]])
        inst = generate_instance(chain, 800, 0.5, 0.05, seed=3)
        r = q0_norm_check(inst)
        assert r.empirical == 2.0 and r.theoretical == 2.0 and r.abs_dev == 0.0


class TestWindowAverages:
    def test_constant_function_has_zero_deviation(self):
        r = mc_window_average(REF_CHAIN, "one", 0, 1000, seed=0)
        assert r.abs_dev == 0.0 and r.passed

    def test_center_square_against_enumeration(self):
        r = mc_window_average(REF_CHAIN, "square", 0, 100_000, seed=1)
        assert r.theoretical == pytest.approx(0.3, abs=1e-12)
        assert r.passed

    def test_first_last_product_against_enumeration(self):
        r = mc_window_average(REF_CHAIN, "first_last_product", 1, 100_000, seed=1)
        assert r.theoretical == pytest.approx(171 / 700, rel=1e-12)
        assert r.passed

    def test_unknown_function_rejected(self):
        with pytest.raises(ValueError):
            mc_window_average(REF_CHAIN, "entropy", 0, 100, seed=0)

    def test_enumeration_cap_propagates(self):
        with pytest.raises(ChainError):
            mc_window_average(REF_CHAIN, "square", 10, 100, seed=0)

    def test_gaussian_sum_squares(self):
        r = gaussian_window_average("sum_squares", 1, 100_000, seed=0)
        assert abs(r.theoretical - 1.0) < 0.01
        assert r.passed

    def test_gaussian_first_last_product(self):
        r = gaussian_window_average("first_last_product", 2, 100_000, seed=0)
        assert abs(r.theoretical) < 0.01
        assert r.passed

    def test_gaussian_max_matches_closed_form(self):
        r = gaussian_window_average("max", 2, 100_000, seed=0)
        assert abs(r.theoretical - 1 / math.sqrt(math.pi)) < 0.004
        assert r.passed

    def test_gaussian_window_validation(self):
        with pytest.raises(ValueError):
            gaussian_window_average("max", 0, 100, seed=0)
        with pytest.raises(ValueError):
            gaussian_window_average("entropy", 1, 100, seed=0)


class TestStein:
    @pytest.mark.parametrize("tau", [1.0, 0.5])
    def test_identity_holds_within_mc_error(self, tau):
        r = stein_identity_check(REF_CHAIN, tau)
        assert r.passed and r.abs_dev < 1e-3

    def test_odd_sample_count_rejected(self):
        with pytest.raises(ValueError):
            stein_identity_check(REF_CHAIN, 1.0, samples=999_999)


class TestAgainstAmpRun:
    def test_h_checks_pass_on_real_iteration(self):
        # First-iteration effective noise of an AMP run at modest size.
        inst = generate_instance(REF_CHAIN, 4000, 0.5, 0.1, seed=2)
        from ampsw.markov_signal import window_marginal
        from ampsw.state_evolution import GaussHermiteEngine, SEParams, run_se

        prior = window_marginal(REF_CHAIN, 1)
        params = SEParams(N=4000, delta=0.5, sigma2=0.1, sigma_beta2=0.3, k=1)
        trace = run_se(params, prior, T=3, engine=GaussHermiteEngine(nodes=16))
        state = initial_state(inst)
        h = effective_noise(state, inst)
        reports = check_h_moments(h, trace.tau2_at(0), inst.beta0, n=inst.n)
        assert reports[0].passed and reports[1].passed
