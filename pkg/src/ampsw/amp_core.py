"""AMP recursion with sliding-window denoisers.

Measurement model y = A beta0 + w with A i.i.d. N(0, 1/n).  Starting
from beta^0 = 0, z^0 = y, each iteration forms the effective
observation s^t = A* z^t + beta^t, denoises its windows to get
beta^{t+1}, and carries the Onsager correction into the next residual:

    z^{t+1} = y - A beta^{t+1} + (z^t / n) sum_i eta_t'([s^t]_{i-k}^{i+k}),

the sum running over the middle positions k+1 <= i <= N-k.  The state
after a step holds the matching pair (beta^{t+1}, z^{t+1}); the Onsager
sum divides by n while summing N - 2k terms, exactly as the recursion
is written.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import markov_signal
from ._rng import stream_rng
from .denoiser import BayesSWConfig, denoise_signal
from .markov_signal import FiniteMarkovChain, WindowPrior

NOISE_KINDS = ("gaussian", "uniform")


@dataclass(frozen=True)
class ProblemInstance:
    """One sampled (A, beta0, w) triple with y = A beta0 + w exactly."""

    A: np.ndarray
    y: np.ndarray
    beta0: np.ndarray
    w: np.ndarray
    n: int
    N: int
    delta: float
    sigma2: float
    sigma_beta2: float
    seed: int
    noise: str

    def __post_init__(self):
        if self.A.shape != (self.n, self.N):
            raise ValueError("matrix shape mismatch")
        if self.sigma2 > 0:
            dev = abs(np.dot(self.w, self.w) / self.n - self.sigma2)
            if dev > 5 * self.sigma2 / np.sqrt(self.n):
                raise ValueError(f"noise norm {dev:.3g} outside construction tolerance")
        for name in ("A", "y", "beta0", "w"):
            getattr(self, name).setflags(write=False)


def generate_instance(chain: FiniteMarkovChain, N: int, delta: float, sigma2: float,
                      noise: str = "gaussian", seed: int = 0) -> ProblemInstance:
    """Sample an instance; A, beta0 and w come from separate seed streams.

    noise "gaussian" is N(0, sigma2); "uniform" is the bounded
    alternative on [-sqrt(3 sigma2), sqrt(3 sigma2)], same variance.
    """
    if N < 1 or delta <= 0:
        raise ValueError("need N >= 1 and delta > 0")
    if noise not in NOISE_KINDS:
        raise ValueError(f"unknown noise kind {noise!r}")
    n = round(delta * N)
    if n < 1:
        raise ValueError("delta * N rounds to zero measurements")
    A = stream_rng(seed, "matrix").normal(0.0, 1.0 / np.sqrt(n), size=(n, N))
    beta0 = markov_signal.sample_path(chain, N, stream_rng(seed, "signal"))
    rng_noise = stream_rng(seed, "noise")
    if noise == "gaussian":
        w = rng_noise.normal(0.0, np.sqrt(sigma2), size=n)
    else:
        half = np.sqrt(3.0 * sigma2)
        w = rng_noise.uniform(-half, half, size=n)
    y = A @ beta0 + w
    return ProblemInstance(A=A, y=y, beta0=beta0, w=w, n=n, N=N, delta=n / N,
                           sigma2=sigma2, sigma_beta2=chain.second_moment(),
                           seed=seed, noise=noise)


@dataclass(frozen=True)
class AmpState:
    """(t, beta^t, z^t) plus the last Onsager derivative sum."""

    t: int
    beta: np.ndarray
    z: np.ndarray
    onsager_prev: float
    tau2_used: float | None = None

    def __post_init__(self):
        self.beta.setflags(write=False)
        self.z.setflags(write=False)


def initial_state(instance: ProblemInstance) -> AmpState:
    """beta^0 = 0 and z^0 = y; negative-index quantities are zero."""
    return AmpState(t=0, beta=np.zeros(instance.N), z=instance.y.copy(), onsager_prev=0.0)


def amp_step(state: AmpState, instance: ProblemInstance, prior: WindowPrior,
             tau2: float, boundary: str = "zero", use_onsager: bool = True) -> AmpState:
    """Advance (beta^t, z^t) to (beta^{t+1}, z^{t+1}) at noise level tau_t^2.

    use_onsager=False zeroes the correction term; kept only so tests can
    demonstrate the resulting miscalibration.
    """
    if not tau2 > 0:
        raise ValueError("tau^2 must be positive")
    s = instance.A.T @ state.z + state.beta
    cfg = BayesSWConfig(prior=prior, tau=float(np.sqrt(tau2)))
    beta_next, onsager = denoise_signal(cfg, s, boundary=boundary)
    z_next = instance.y - instance.A @ beta_next
    if use_onsager:
        z_next += (state.z / instance.n) * onsager
    return AmpState(t=state.t + 1, beta=beta_next, z=z_next,
                    onsager_prev=onsager, tau2_used=tau2)


def middle_mse(beta: np.ndarray, beta0: np.ndarray, k: int) -> float:
    """Mean squared error over the middle coordinates k+1..N-k (1-based)."""
    N = len(beta0)
    if N <= 2 * k:
        raise ValueError("no middle coordinates")
    d = beta[k:N - k] - beta0[k:N - k]
    return float(np.dot(d, d) / (N - 2 * k))


_PL_LOSSES = {
    "squared": lambda a, b: (a - b) ** 2,
    "absolute": lambda a, b: np.abs(a - b),
    "product": lambda a, b: a * b,
}


def pl_loss(beta: np.ndarray, beta0: np.ndarray, k: int, phi: str) -> float:
    """Average of an order-2 pseudo-Lipschitz loss over middle coordinates."""
    if phi not in _PL_LOSSES:
        raise ValueError(f"unknown loss {phi!r}")
    N = len(beta0)
    if N <= 2 * k:
        raise ValueError("no middle coordinates")
    vals = _PL_LOSSES[phi](beta[k:N - k], beta0[k:N - k])
    return float(vals.mean())


@dataclass(frozen=True)
class AmpRun:
    """Snapshots and losses for one AMP run; index t covers 0..T."""

    k: int
    tau_source: str
    boundary: str
    states: tuple
    middle_mse: np.ndarray
    tau2: np.ndarray
    instance_seed: int


def run_amp(instance: ProblemInstance, prior: WindowPrior, T: int,
            tau_source: str = "se-trace", se_trace=None, boundary: str = "zero",
            use_onsager: bool = True, seed: int | None = None) -> AmpRun:
    """Run T AMP iterations.

    tau_source "se-trace" reads tau_t^2 from
    the supplied trace, which must cover index T either by length or by
    having converged (the trace then continues at its fixed point).
    tau_source "empirical" uses ||z^t||^2 / n instead.  seed is a
    bookkeeping tag recorded in the result; the run itself is a
    deterministic function of the instance.
    """
    if tau_source not in ("se-trace", "empirical"):
        raise ValueError(f"unknown tau source {tau_source!r}")
    if tau_source == "se-trace":
        if se_trace is None:
            raise ValueError("se-trace mode needs an SE trace")
        if len(se_trace) <= T and not se_trace.converged:
            raise ValueError(f"SE trace of length {len(se_trace)} does not cover T={T} and is not converged")
    k = prior.k
    state = initial_state(instance)
    states = [state]
    mses = [middle_mse(state.beta, instance.beta0, k)]
    tau2s = [se_trace.tau2_at(0) if tau_source == "se-trace"
             else float(np.dot(state.z, state.z) / instance.n)]
    for t in range(T):
        tau2 = tau2s[-1] if tau_source == "empirical" else se_trace.tau2_at(t)
        state = amp_step(state, instance, prior, tau2, boundary=boundary, use_onsager=use_onsager)
        states.append(state)
        mses.append(middle_mse(state.beta, instance.beta0, k))
        tau2s.append(se_trace.tau2_at(t + 1) if tau_source == "se-trace"
                     else float(np.dot(state.z, state.z) / instance.n))
    return AmpRun(k=k, tau_source=tau_source, boundary=boundary, states=tuple(states),
                  middle_mse=np.asarray(mses), tau2=np.asarray(tau2s),
                  instance_seed=instance.seed if seed is None else seed)
