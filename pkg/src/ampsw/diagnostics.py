"""Empirical checks of the theory's concentration claims.

Covered here: the effective-noise vector h^{t+1} = beta0 - (A* z^t +
beta^t) and its moments, the initial error norm ||q^0||^2 / n, window
averages of pseudo-Lipschitz functions over Markov paths and Gaussian
streams, and the Stein identity E[Z eta(beta + tau Z)] = tau E[eta'].
Each check emits a ConcentrationReport; tolerances default to
3/sqrt(sample size) for averages of bounded quantities and 10% relative
for variance-like quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import stream_rng
from .amp_core import AmpState, ProblemInstance
from .denoiser import posterior_moments
from .markov_signal import FiniteMarkovChain, sample_path, window_marginal

GAUSS_REF_SAMPLES = 1_000_000


@dataclass(frozen=True)
class ConcentrationReport:
    """Empirical vs theoretical value with recomputed deviations.

    passed is (abs_dev <= abs_tol) or (rel_dev <= rel_tol), each clause
    only when that tolerance is configured.
    """

    name: str
    empirical: float
    theoretical: float
    abs_dev: float
    rel_dev: float | None
    sample_size: int
    abs_tol: float | None
    rel_tol: float | None
    passed: bool

    @classmethod
    def make(cls, name: str, empirical: float, theoretical: float, sample_size: int,
             abs_tol: float | None = None, rel_tol: float | None = None) -> "ConcentrationReport":
        abs_dev = abs(empirical - theoretical)
        rel_dev = abs_dev / abs(theoretical) if theoretical != 0 else None
        ok = abs_dev == 0.0  # zero deviation is inside every tolerance
        if abs_tol is not None:
            ok = ok or abs_dev <= abs_tol
        if rel_tol is not None and rel_dev is not None:
            ok = ok or rel_dev <= rel_tol
        return cls(name=name, empirical=float(empirical), theoretical=float(theoretical),
                   abs_dev=float(abs_dev), rel_dev=None if rel_dev is None else float(rel_dev),
                   sample_size=int(sample_size), abs_tol=abs_tol, rel_tol=rel_tol, passed=ok)

    def as_dict(self) -> dict:
        return {
            "name": self.name, "empirical": self.empirical, "theoretical": self.theoretical,
            "abs_dev": self.abs_dev, "rel_dev": self.rel_dev, "sample_size": self.sample_size,
            "abs_tol": self.abs_tol, "rel_tol": self.rel_tol, "passed": self.passed,
        }

    def row(self) -> str:
        rel = "-" if self.rel_dev is None else f"{self.rel_dev:.3e}"
        return (f"{self.name:<28} emp={self.empirical:+.6f} theo={self.theoretical:+.6f} "
                f"abs={self.abs_dev:.3e} rel={rel} {'pass' if self.passed else 'FAIL'}")


def effective_noise(state: AmpState, instance: ProblemInstance) -> np.ndarray:
    """h^{t+1} = beta0 - (A* z^t + beta^t) for the state holding (beta^t, z^t)."""
    return instance.beta0 - (instance.A.T @ state.z + state.beta)


def check_h_moments(h: np.ndarray, tau2: float, beta0: np.ndarray, n: int,
                    rel_tol: float = 0.10, dot_tol: float = 0.05) -> list[ConcentrationReport]:
    """Moment checks against h ~ N(0, tau_t^2 I) in the PL-average sense."""
    N = len(h)
    tau = math.sqrt(tau2)
    tail = float(np.mean(np.abs(h) / tau > 1.96))
    return [
        ConcentrationReport.make("h_norm2_over_N", float(np.dot(h, h) / N), tau2,
                                 N, rel_tol=rel_tol),
        ConcentrationReport.make("h_dot_beta0_over_n", float(np.dot(h, beta0) / n), 0.0,
                                 N, abs_tol=dot_tol),
        ConcentrationReport.make("h_tail_fraction", tail, 0.05, N, abs_tol=3.0 / math.sqrt(N)),
    ]


def q0_norm_check(instance: ProblemInstance, rel_tol: float = 0.05) -> ConcentrationReport:
    """||q^0||^2 / n = ||beta0||^2 / n against sigma_0^2 = sigma_beta^2 / delta."""
    sigma02 = instance.sigma_beta2 / instance.delta
    emp = float(np.dot(instance.beta0, instance.beta0) / instance.n)
    return ConcentrationReport.make("q0_norm2_over_n", emp, sigma02, instance.N, rel_tol=rel_tol)


def _center_col(x: np.ndarray) -> np.ndarray:
    return x[:, (x.shape[1] - 1) // 2]


WINDOW_FUNCTIONS = {
    "one": lambda x: np.ones(len(x)),
    "square": lambda x: _center_col(x) ** 2,
    "first_last_product": lambda x: x[:, 0] * x[:, -1],
    "sum_squares": lambda x: (x * x).sum(axis=1),
    "max": lambda x: x.max(axis=1),
}


def mc_window_average(chain: FiniteMarkovChain, f: str, k: int, N: int, seed: int,
                      abs_tol: float | None = None) -> ConcentrationReport:
    """Average of f over the N overlapping windows of a sampled path,
    against the enumeration-exact E_pi[f]."""
    if f not in WINDOW_FUNCTIONS:
        raise ValueError(f"unknown window function {f!r}")
    fn = WINDOW_FUNCTIONS[f]
    prior = window_marginal(chain, k)
    exact = float(np.dot(prior.probs, fn(prior.sequences)))
    path = sample_path(chain, N + 2 * k, stream_rng(seed, "diag_path"))
    windows = np.lib.stride_tricks.sliding_window_view(path, 2 * k + 1)
    emp = float(fn(windows).mean())
    return ConcentrationReport.make(f"mc_window[{f},k={k}]", emp, exact, N,
                                    abs_tol=3.0 / math.sqrt(N) if abs_tol is None else abs_tol)


def gaussian_window_average(f: str, d: int, N: int, seed: int,
                            abs_tol: float | None = None) -> ConcentrationReport:
    """Average of f over N overlapping d-windows of one Gaussian stream,
    against an independent 10^6-sample plain Monte Carlo estimate."""
    if f not in WINDOW_FUNCTIONS:
        raise ValueError(f"unknown window function {f!r}")
    if d < 1:
        raise ValueError("d must be >= 1")
    fn = WINDOW_FUNCTIONS[f]
    stream = stream_rng(seed, "diag_gauss").standard_normal(N + d - 1)
    windows = np.lib.stride_tricks.sliding_window_view(stream, d)
    emp = float(fn(windows).mean())
    ref = float(fn(stream_rng(seed, "diag_ref").standard_normal((GAUSS_REF_SAMPLES, d))).mean())
    return ConcentrationReport.make(f"gaussian_window[{f},d={d}]", emp, ref, N,
                                    abs_tol=3.0 / math.sqrt(N) if abs_tol is None else abs_tol)


def stein_identity_check(chain: FiniteMarkovChain, tau: float, samples: int = 1_000_000,
                         seed: int = 0, abs_tol: float = 1e-3) -> ConcentrationReport:
    """E[Z eta(beta + tau Z)] vs tau E[eta'(beta + tau Z)] for the k=0 denoiser.

    beta is enumerated exactly; the same antithetic Z bank feeds both
    sides so their Monte Carlo errors largely cancel in the difference.
    """
    if samples % 2:
        raise ValueError("antithetic pairing needs an even sample count")
    prior = window_marginal(chain, 0)
    tau2 = tau * tau
    half = stream_rng(seed, "stein").standard_normal((samples // 2, 1))
    Z = np.concatenate([half, -half])[:, 0]
    lhs = 0.0
    rhs = 0.0
    for s, p in zip(prior.sequences[:, 0], prior.probs):
        m1, var = posterior_moments(prior, tau2, (s + tau * Z)[:, None])
        lhs += p * float(np.mean(Z * m1))
        rhs += p * tau * float(np.mean(var / tau2))
    return ConcentrationReport.make("stein_identity", lhs, rhs, samples, abs_tol=abs_tol)
