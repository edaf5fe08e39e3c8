"""Shared fixtures: the reference two-state chain used across the suite.

The chain has states {0, 1} with transition rates r(0->1) = 3/70 and
r(1->0) = 1/10, giving stationary distribution (0.7, 0.3), spectral gap
1/7, signal variance 0.21 and second moment 0.3.  Rates are kept as
Fractions so exact-arithmetic paths stay exact.
"""

from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

from ampsw.markov_signal import FiniteMarkovChain, window_marginal

settings.register_profile(
    "repro",
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repro")

REF_TRANSITION = (
    (Fraction(67, 70), Fraction(3, 70)),
    (Fraction(1, 10), Fraction(9, 10)),
)
REF_STATES = (0.0, 1.0)


@pytest.fixture(scope="session")
def ref_chain():
    return FiniteMarkovChain(states=REF_STATES, transition=REF_TRANSITION)


@pytest.fixture(scope="session")
def ref_priors(ref_chain):
    return {k: window_marginal(ref_chain, k) for k in (0, 1, 2)}
