"""Bayesian sliding-window posterior-mean denoiser.

For a window prior pi over sequences x in S^{2k+1} and effective noise
level tau, the denoiser maps a noisy window v to the posterior mean of
the center coordinate under the model v = x + tau Z, Z ~ N(0, I):

    eta(v) = sum_x pi(x) w(x) x_{k+1} / sum_x pi(x) w(x),
    w(x)   = exp(-||v - x||^2 / (2 tau^2)).

Weights are formed in log space and shifted by their maximum before
exponentiating, so arbitrarily small tau cannot underflow every weight.
The partial derivative with respect to the center coordinate is the
posterior variance over tau^2,

    eta'(v) = Var(X_{k+1} | v) / tau^2,

the conditional-mean identity for Gaussian noise; finite differences
serve as a test oracle only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .markov_signal import WindowPrior


@dataclass(frozen=True)
class BayesSWConfig:
    """Prior plus effective noise level; immutable per AMP iteration."""

    prior: WindowPrior
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def window_len(self) -> int:
        return self.prior.window_len


def posterior_moments(prior: WindowPrior, tau2: float, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance of the center coordinate, row-wise.

    V has shape (m, 2k+1); returns two length-m arrays.  The squared
    distance ||v - x||^2 expands to ||v||^2 - 2 v.x + ||x||^2 so the
    cross term is a single matrix product against all sequences.
    """
    seqs = prior.sequences
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if V.shape[1] != seqs.shape[1]:
        raise ValueError(f"window length {V.shape[1]} does not match prior {seqs.shape[1]}")
    centers = prior.centers
    d2 = (V * V).sum(axis=1)[:, None] - 2.0 * (V @ seqs.T) + (seqs * seqs).sum(axis=1)[None, :]
    logw = np.log(prior.probs)[None, :] - d2 / (2.0 * tau2)
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    denom = w.sum(axis=1)
    m1 = (w @ centers) / denom
    m2 = (w @ (centers * centers)) / denom
    var = np.maximum(m2 - m1 * m1, 0.0)
    return m1, var


def bayes_denoise(cfg: BayesSWConfig, v) -> float:
    """eta(v); output lies in the convex hull of the center state values."""
    m1, _ = posterior_moments(cfg.prior, cfg.tau**2, np.asarray(v, dtype=float)[None, :])
    return float(m1[0])


def bayes_center_derivative(cfg: BayesSWConfig, v) -> float:
    """d eta / d v_{k+1} = posterior center variance / tau^2; always >= 0."""
    _, var = posterior_moments(cfg.prior, cfg.tau**2, np.asarray(v, dtype=float)[None, :])
    return float(var[0] / cfg.tau**2)


def _edge_windows(s: np.ndarray, k: int, positions: np.ndarray) -> np.ndarray:
    """Windows at edge positions with missing entries set to the median
    of the available entries of that window (boundary variant)."""
    N = len(s)
    out = np.empty((len(positions), 2 * k + 1))
    for r, i in enumerate(positions):
        lo, hi = i - k, i + k + 1
        avail = s[max(lo, 0):min(hi, N)]
        med = float(np.median(avail))
        win = np.full(2 * k + 1, med)
        src_lo = max(lo, 0)
        win[src_lo - lo:src_lo - lo + len(avail)] = avail
        out[r] = win
    return out


def denoise_signal(cfg: BayesSWConfig, s: np.ndarray, boundary: str = "zero") -> tuple[np.ndarray, float]:
    """Apply the denoiser to every window of s.

    Middle positions i in [k, N-k) (0-based) are denoised from their
    full window.  The Onsager sum adds eta'(window_i) over exactly
    those middle positions under either boundary policy.

    boundary "zero": estimate outside the middle is 0.
    boundary "median": edge windows are completed with the median of
    their available entries and denoised too.
    """
    s = np.asarray(s, dtype=float)
    k = cfg.prior.k
    N = len(s)
    if N < 2 * k + 1:
        raise ValueError(f"signal length {N} shorter than window {2 * k + 1}")
    if boundary not in ("zero", "median"):
        raise ValueError(f"unknown boundary policy {boundary!r}")
    tau2 = cfg.tau**2
    windows = np.lib.stride_tricks.sliding_window_view(s, 2 * k + 1)
    m1, var = posterior_moments(cfg.prior, tau2, windows)
    beta_hat = np.zeros(N)
    beta_hat[k:N - k] = m1
    onsager_sum = float(var.sum() / tau2)
    if boundary == "median" and k > 0:
        edge_pos = np.concatenate([np.arange(k), np.arange(N - k, N)])
        edge_m1, _ = posterior_moments(cfg.prior, tau2, _edge_windows(s, k, edge_pos))
        beta_hat[edge_pos] = edge_m1
    return beta_hat, onsager_sum


@dataclass(frozen=True)
class DenoiserContract:
    """Value + center-derivative pair used by the AMP recursion."""

    window_len: int
    evaluate: object
    center_derivative: object


def bayes_contract(cfg: BayesSWConfig) -> DenoiserContract:
    return DenoiserContract(
        window_len=cfg.window_len,
        evaluate=lambda v: bayes_denoise(cfg, v),
        center_derivative=lambda v: bayes_center_derivative(cfg, v),
    )
