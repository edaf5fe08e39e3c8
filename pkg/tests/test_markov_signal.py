"""Chain validation, stationary solve, sampling and window enumeration."""

import math
from fractions import Fraction

import numpy as np
import pytest

from ampsw.markov_signal import (
    ENUMERATION_CAP,
    ChainError,
    FiniteMarkovChain,
    WindowPrior,
    check_reversibility,
    sample_path,
    second_moment,
    spectral_gap,
    stationary_distribution,
    window_marginal,
)

class TestConstruction:
    def test_reference_stationary(self, ref_chain):
        assert ref_chain.stationary == pytest.approx((0.7, 0.3), abs=1e-12)
        assert ref_chain.stationary_exact == (Fraction(7, 10), Fraction(3, 10))

    def test_exact_transition_preserved(self, ref_chain):
        assert ref_chain.transition_exact == (
            (Fraction(67, 70), Fraction(3, 70)),
            (Fraction(1, 10), Fraction(9, 10)),
        )
        assert ref_chain.transition[0, 1] == pytest.approx(3 / 70)

    def test_three_state_stationary_solves(self):
        P = [[0.5, 0.3, 0.2], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4]]
        chain = FiniteMarkovChain(states=(-1.0, 0.0, 1.0), transition=P)
        g = stationary_distribution(chain)
        assert g.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(g > 0)
        assert g @ np.asarray(P) == pytest.approx(g, abs=1e-10)

    def test_single_state(self):
        chain = FiniteMarkovChain(states=(2.0,), transition=[[1.0]])
        assert chain.stationary == pytest.approx((1.0,))
        assert chain.second_moment() == 4.0

    def test_second_moment_reference(self, ref_chain):
        assert ref_chain.second_moment() == pytest.approx(0.3, abs=1e-15)
        assert second_moment(ref_chain) == pytest.approx(0.3, abs=1e-15)

    def test_second_moment_sign_chain(self):
        chain = FiniteMarkovChain(states=(-1.0, 1.0), transition=[[0.6, 0.4], [0.2, 0.8]])
        assert chain.second_moment() == 1.0

    def test_transition_is_read_only(self, ref_chain):
        with pytest.raises(ValueError):
            ref_chain.transition[0, 0] = 0.5

    @pytest.mark.parametrize(
        "states, transition",
        [
            ((0.0, 1.0), [[0.5, 0.5]]),                       # not square
            ((0.0, 1.0), [[0.6, 0.6], [0.5, 0.5]]),           # row sum > 1
            ((0.0, 1.0), [[1.2, -0.2], [0.5, 0.5]]),          # entries outside [0, 1]
            ((0.0, 1.0, 2.0), [[0.5, 0.5], [0.5, 0.5]]),      # size mismatch
            ((0.0, 0.0), [[0.5, 0.5], [0.5, 0.5]]),           # duplicate states
            ((0.0, float("nan")), [[0.5, 0.5], [0.5, 0.5]]),  # non-finite state
            ((0.0, 1.0), [[1.0, 0.0], [0.0, 1.0]]),           # reducible: no unique gamma
        ],
    )
    def test_invalid_chains_rejected(self, states, transition):
        with pytest.raises(ChainError):
            FiniteMarkovChain(states=states, transition=transition)


class TestReversibility:
    def test_reference_is_exactly_reversible(self, ref_chain):
        ok, violation = check_reversibility(ref_chain)
        assert ok
        assert violation == 0.0

    def test_float_entries_keep_tiny_residue(self):
        # The same chain written as floats: each entry rounds to a dyadic
        # rational, and the rounded rows no longer balance exactly.  The
        # residue stays far below the pass threshold.
        chain = FiniteMarkovChain(states=(0.0, 1.0),
                                  transition=[[67 / 70, 3 / 70], [0.1, 0.9]])
        ok, violation = check_reversibility(chain)
        assert ok
        assert violation < 1e-12

    def test_cycle_is_not_reversible(self):
        P = [[0.0, 0.9, 0.1], [0.1, 0.0, 0.9], [0.9, 0.1, 0.0]]
        chain = FiniteMarkovChain(states=(0.0, 1.0, 2.0), transition=P)
        ok, violation = check_reversibility(chain)
        assert not ok
        assert violation > 0.1


class TestSpectralGap:
    def test_reference_gap(self, ref_chain):
        assert abs(spectral_gap(ref_chain) - 1 / 7) <= 1e-12

    def test_identity_matrix_has_zero_gap(self):
        assert spectral_gap(np.eye(3)) == pytest.approx(0.0, abs=1e-12)

    def test_rank_one_matrix_has_unit_gap(self):
        P = np.tile([0.7, 0.3], (2, 1))
        assert spectral_gap(P) == pytest.approx(1.0, abs=1e-12)

    def test_non_reversible_chain_rejected(self):
        P = [[0.0, 0.9, 0.1], [0.1, 0.0, 0.9], [0.9, 0.1, 0.0]]
        chain = FiniteMarkovChain(states=(0.0, 1.0, 2.0), transition=P)
        with pytest.raises(ChainError):
            spectral_gap(chain)

    def test_complex_spectrum_rejected(self):
        with pytest.raises(ChainError):
            spectral_gap([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])


class TestSamplePath:
    def test_deterministic_for_seed(self, ref_chain):
        a = sample_path(ref_chain, 500, 42)
        b = sample_path(ref_chain, 500, 42)
        assert np.array_equal(a, b)

    def test_values_are_states(self, ref_chain):
        p = sample_path(ref_chain, 200, 1)
        assert set(np.unique(p)) <= {0.0, 1.0}
        assert len(p) == 200

    def test_generator_input_advances(self, ref_chain):
        rng = np.random.default_rng(5)
        p1 = sample_path(ref_chain, 300, rng)
        p2 = sample_path(ref_chain, 300, rng)
        assert not np.array_equal(p1, p2)
        fresh = sample_path(ref_chain, 300, np.random.default_rng(5))
        assert np.array_equal(p1, fresh)

    def test_empty_path_rejected(self, ref_chain):
        with pytest.raises(ValueError):
            sample_path(ref_chain, 0, 0)

    def test_long_run_state_frequency(self, ref_chain):
        p = sample_path(ref_chain, 1_000_000, 0)
        assert abs(float(np.mean(p == 0.0)) - 0.7) < 0.005

    def test_window_frequencies_match_marginal(self, ref_chain, ref_priors):
        # For each seed: all 8 length-3 window frequencies of a 1e5-step
        # path within 4/sqrt(N) of the enumerated values; at least 18 of
        # 20 seeds must pass in full.
        prior = ref_priors[1]
        N = 100_000
        tol = 4.0 / math.sqrt(N)
        passes = 0
        for seed in range(20):
            path = sample_path(ref_chain, N + 2, seed)
            wins = np.lib.stride_tricks.sliding_window_view(path, 3)
            devs = [abs(float(np.mean(np.all(wins == seq, axis=1))) - prob)
                    for seq, prob in zip(prior.sequences, prior.probs)]
            passes += max(devs) <= tol
        assert passes >= 18


class TestWindowMarginal:
    def test_k0_is_stationary(self, ref_priors):
        prior = ref_priors[0]
        assert prior.window_len == 1
        assert np.array_equal(prior.sequences, [[0.0], [1.0]])
        assert prior.probs == pytest.approx((0.7, 0.3), abs=1e-15)
        assert prior.center_mean() == pytest.approx(0.3, abs=1e-15)

    def test_k1_atom_probabilities(self, ref_chain, ref_priors):
        prior = ref_priors[1]
        probs = {tuple(s): p for s, p in zip(prior.sequences, prior.probs)}
        assert probs[(0.0, 0.0, 0.0)] == pytest.approx(0.7 * (67 / 70) ** 2, abs=1e-15)
        assert probs[(0.0, 1.0, 0.0)] == pytest.approx(0.7 * (3 / 70) * 0.1, abs=1e-15)

    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_probs_form_distribution(self, ref_priors, k):
        prior = ref_priors[k]
        assert len(prior.probs) == 2 ** (2 * k + 1)
        assert prior.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(prior.probs >= 0)

    @pytest.mark.parametrize("k", [1, 2])
    def test_every_coordinate_marginal_is_stationary(self, ref_priors, k):
        prior = ref_priors[k]
        for j in range(prior.window_len):
            mass_one = float(prior.probs[prior.sequences[:, j] == 1.0].sum())
            assert mass_one == pytest.approx(0.3, abs=1e-12)

    def test_marginalizing_both_ends_shrinks_k(self, ref_priors):
        # Summing the length-5 distribution over its outer coordinates
        # must reproduce the length-3 one, and length-3 over its outer
        # coordinates the length-1 one.
        for k in (2, 1):
            big, small = ref_priors[k], ref_priors[k - 1]
            collapsed = {}
            for seq, p in zip(big.sequences, big.probs):
                collapsed[tuple(seq[1:-1])] = collapsed.get(tuple(seq[1:-1]), 0.0) + p
            for seq, p in zip(small.sequences, small.probs):
                assert collapsed[tuple(seq)] == pytest.approx(p, abs=1e-12)

    def test_center_second_moment(self, ref_priors):
        for k in (0, 1, 2):
            assert ref_priors[k].second_moment() == pytest.approx(0.3, abs=1e-12)
            assert second_moment(ref_priors[k]) == pytest.approx(0.3, abs=1e-12)

    def test_enumeration_cap(self, ref_chain):
        assert 2 ** 21 > ENUMERATION_CAP
        with pytest.raises(ChainError):
            window_marginal(ref_chain, 10)

    def test_negative_k_rejected(self, ref_chain):
        with pytest.raises(ValueError):
            window_marginal(ref_chain, -1)

    def test_window_prior_validation(self):
        with pytest.raises(ValueError):
            WindowPrior(k=0, sequences=[[0.0], [1.0]], probs=[0.6, 0.6], center_index=0)
        with pytest.raises(ValueError):
            WindowPrior(k=1, sequences=[[0.0], [1.0]], probs=[0.7, 0.3], center_index=1)
