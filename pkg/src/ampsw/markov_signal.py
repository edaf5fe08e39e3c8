"""Finite-state Markov chain signal model.

The unknown signal is a stationary time-homogeneous Markov chain on a
finite set of real values.  This module validates transition matrices,
computes the stationary distribution and spectral gap, samples signal
paths, and enumerates the window marginal

    pi(x_1, ..., x_{2k+1}) = gamma(x_1) * prod_{i=2}^{2k+1} P(x_{i-1}, x_i),

the distribution of a length-(2k+1) window of the stationary chain.
The window marginal is the prior used by both the sliding-window
denoiser and state evolution.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-10
REVERSIBILITY_TOL = 1e-10
ENUMERATION_CAP = 2**20


class ChainError(ValueError):
    """Transition matrix outside the supported class."""


def _as_matrix(transition) -> np.ndarray:
    P = np.asarray(transition, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ChainError(f"transition must be square, got shape {P.shape}")
    return P


@dataclass(frozen=True)
class FiniteMarkovChain:
    """Validated chain with cached stationary distribution.

    states are the real values the signal takes, in the order indexing
    the transition matrix rows.  Construction fails unless the chain
    has a unique, strictly positive stationary distribution.
    """

    states: tuple
    transition: np.ndarray
    transition_exact: tuple | None = field(init=False, repr=False, compare=False)
    stationary: np.ndarray = field(init=False, repr=False)
    stationary_exact: tuple | None = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        states = tuple(float(s) for s in self.states)
        if len(set(states)) != len(states):
            raise ChainError("states must be distinct")
        if not all(np.isfinite(states)):
            raise ChainError("states must be finite reals")
        Pq = _exact_matrix(self.transition)
        P = _as_matrix(self.transition)
        if P.shape[0] != len(states):
            raise ChainError("transition size does not match number of states")
        if np.any(P < 0) or np.any(P > 1):
            raise ChainError("transition entries must lie in [0, 1]")
        rowsum_err = np.max(np.abs(P.sum(axis=1) - 1.0))
        if rowsum_err > ROW_SUM_TOL:
            raise ChainError(f"rows must sum to 1 (max error {rowsum_err:.3g})")
        P = P.copy()
        P.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "transition_exact", Pq)
        g, exact = _stationary_of(P, Pq)
        object.__setattr__(self, "stationary", g)
        object.__setattr__(self, "stationary_exact", exact)

    @property
    def num_states(self) -> int:
        return len(self.states)

    def second_moment(self) -> float:
        """sigma_beta^2 = sum_s gamma(s) s^2."""
        s = np.asarray(self.states)
        return float(np.dot(self.stationary, s * s))


_EXACT_SOLVE_MAX_STATES = 32


def _exact_matrix(transition) -> tuple | None:
    """Transition entries as a tuple-of-tuples of Fractions, or None.

    Fraction(entry) is exact for int, float, and Fraction inputs, so the
    rational view loses nothing; entries given as Fractions (e.g. parsed
    from "3/70" in a config) stay exact rather than rounding to binary.
    """
    rows = transition.tolist() if isinstance(transition, np.ndarray) else transition
    try:
        Pq = tuple(tuple(Fraction(x) for x in row) for row in rows)
    except (TypeError, ValueError):
        return None
    if len(Pq) > _EXACT_SOLVE_MAX_STATES:
        return None
    return Pq


def _exact_stationary(Pq: tuple) -> tuple[Fraction, ...] | None:
    """Solve gamma P = gamma, sum gamma = 1 in exact rational arithmetic.

    Gaussian elimination over Fractions decides uniqueness exactly and
    leaves no roundoff in the result (detailed-balance flows of a
    reversible chain then cancel to literal zero).  Returns None when
    the solution is not unique.
    """
    S = len(Pq)
    # Rows of (P^T - I) x = 0 with the last equation replaced by sum x = 1.
    M = [[Pq[j][i] - (1 if i == j else 0) for j in range(S)] for i in range(S - 1)]
    M.append([Fraction(1)] * S)
    rhs = [Fraction(0)] * (S - 1) + [Fraction(1)]
    for col in range(S):
        pivot = next((r for r in range(col, S) if M[r][col] != 0), None)
        if pivot is None:
            return None
        M[col], M[pivot] = M[pivot], M[col]
        rhs[col], rhs[pivot] = rhs[pivot], rhs[col]
        inv = 1 / M[col][col]
        M[col] = [v * inv for v in M[col]]
        rhs[col] *= inv
        for r in range(S):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [a - f * b for a, b in zip(M[r], M[col])]
                rhs[r] -= f * rhs[col]
    return tuple(rhs)


def _stationary_of(P: np.ndarray, Pq: tuple | None) -> tuple[np.ndarray, tuple[Fraction, ...] | None]:
    """Stationary distribution of P, strictly positive and unique.

    Exact rational solve for small chains; eigen-solve of P^T with a
    power-iteration fallback otherwise.  Errors unless the solution is
    unique and strictly positive (irreducibility).  Returns the float
    vector plus the exact rational solution when one was computed.
    """
    g = None
    exact = None
    if Pq is not None:
        exact = _exact_stationary(Pq)
        if exact is not None:
            g = np.array([float(x) for x in exact])
    if g is None:
        try:
            vals, vecs = np.linalg.eig(P.T)
            unit = np.where(np.abs(vals - 1.0) < 1e-9)[0]
            if len(unit) != 1:
                raise ChainError("no unique stationary distribution")
            g = np.real(vecs[:, unit[0]])
        except np.linalg.LinAlgError:
            g = np.full(P.shape[0], 1.0 / P.shape[0])
            for _ in range(100_000):
                g_next = g @ P
                if np.max(np.abs(g_next - g)) < 1e-14:
                    break
                g = g_next
            g = g_next
        g = g / g.sum()
    if np.any(g < 1e-14):
        raise ChainError("no unique stationary distribution")
    if np.max(np.abs(g @ P - g)) > STATIONARY_TOL:
        raise ChainError("stationary solve failed tolerance")
    g.setflags(write=False)
    return g, exact


def stationary_distribution(chain: FiniteMarkovChain) -> np.ndarray:
    """gamma with gamma P = gamma, entries > 0, summing to 1."""
    return chain.stationary


def check_reversibility(chain: FiniteMarkovChain) -> tuple[bool, float]:
    """Detailed balance gamma_i P_ij = gamma_j P_ji; returns (ok, max violation).

    Flows are compared in exact rational arithmetic when the stationary
    distribution was solved exactly, so a genuinely reversible chain
    reports violation 0.0 rather than a one-ulp residue.
    """
    if chain.stationary_exact is not None and chain.transition_exact is not None:
        g = chain.stationary_exact
        Pq = chain.transition_exact
        S = len(g)
        pairs = (
            abs(g[i] * Pq[i][j] - g[j] * Pq[j][i])
            for i in range(S)
            for j in range(i + 1, S)
        )
        violation = float(max(pairs, default=Fraction(0)))
    else:
        g = chain.stationary
        P = chain.transition
        flow = g[:, None] * P
        violation = float(np.max(np.abs(flow - flow.T)))
    return violation <= REVERSIBILITY_TOL, violation


def spectral_gap(chain_or_matrix) -> float:
    """1 - lambda_2 where lambda_2 is the second-largest transition eigenvalue.

    Accepts a FiniteMarkovChain (must be reversible, so the spectrum is
    real) or a raw row-stochastic matrix, for which only realness of the
    spectrum is checked.  Raw matrices are accepted because degenerate
    examples (identity, all-rows-equal) have no unique stationary
    distribution and cannot be constructed as chains.
    """
    if isinstance(chain_or_matrix, FiniteMarkovChain):
        ok, violation = check_reversibility(chain_or_matrix)
        if not ok:
            raise ChainError(f"chain not reversible (violation {violation:.3g}); spectrum may be complex")
        P = chain_or_matrix.transition
    else:
        P = _as_matrix(chain_or_matrix)
    vals = np.linalg.eigvals(P)
    if np.max(np.abs(vals.imag)) > 1e-10:
        raise ChainError("complex spectrum; spectral gap undefined")
    ordered = np.sort(vals.real)[::-1]
    if len(ordered) < 2:
        return 0.0
    lam2 = min(ordered[1], 1.0)  # guard roundoff pushing lambda_2 above 1
    return float(1.0 - lam2)


def sample_path(chain: FiniteMarkovChain, N: int, seed) -> np.ndarray:
    """Length-N stationary path: beta[0] ~ gamma, beta[i] ~ P[beta[i-1], .].

    seed is an integer or a numpy Generator.  One uniform is consumed
    per step, in order, so paths are reproducible bit-for-bit.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = rng.random(N).tolist()
    gamma_cum = np.cumsum(chain.stationary).tolist()
    row_cum = [tuple(row) for row in np.cumsum(chain.transition, axis=1)]
    idx = np.empty(N, dtype=np.intp)
    j = bisect_right(gamma_cum, u[0])
    idx[0] = j
    for i in range(1, N):
        j = bisect_right(row_cum[j], u[i])
        idx[i] = j
    return np.asarray(chain.states)[idx]


@dataclass(frozen=True)
class WindowPrior:
    """Enumerated length-(2k+1) windows of the stationary chain.

    sequences is an (M, 2k+1) array, probs the matching pi values,
    center_index = k.  M = |S|^(2k+1).
    """

    k: int
    sequences: np.ndarray
    probs: np.ndarray
    center_index: int

    def __post_init__(self):
        seqs = np.atleast_2d(np.asarray(self.sequences, dtype=float))
        probs = np.asarray(self.probs, dtype=float)
        if seqs.shape != (len(probs), 2 * self.k + 1):
            raise ValueError("sequences shape does not match probs and k")
        if abs(probs.sum() - 1.0) > 1e-10:
            raise ValueError("window probabilities must sum to 1")
        seqs.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "sequences", seqs)
        object.__setattr__(self, "probs", probs)

    @property
    def window_len(self) -> int:
        return 2 * self.k + 1

    @property
    def centers(self) -> np.ndarray:
        return self.sequences[:, self.center_index]

    def center_mean(self) -> float:
        return float(np.dot(self.probs, self.centers))

    def second_moment(self) -> float:
        c = self.centers
        return float(np.dot(self.probs, c * c))


def window_marginal(chain: FiniteMarkovChain, k: int) -> WindowPrior:
    """WindowPrior for half-window k, by full enumeration of the product
    formula in the module docstring."""
    if k < 0:
        raise ValueError("k must be >= 0")
    S = chain.num_states
    L = 2 * k + 1
    count = S**L
    if count > ENUMERATION_CAP:
        raise ChainError(f"enumeration of {count} sequences exceeds cap {ENUMERATION_CAP}")
    grids = np.meshgrid(*([np.arange(S)] * L), indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    probs = chain.stationary[idx[:, 0]].copy()
    for j in range(1, L):
        probs *= chain.transition[idx[:, j - 1], idx[:, j]]
    sequences = np.asarray(chain.states)[idx].astype(float)
    return WindowPrior(k=k, sequences=sequences, probs=probs, center_index=k)


def second_moment(prior_or_chain) -> float:
    """sigma_beta^2 of the signal's stationary distribution."""
    return prior_or_chain.second_moment()
