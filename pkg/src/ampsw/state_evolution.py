"""State evolution for the sliding-window AMP recursion.

Starting from sigma_0^2 = sigma_beta^2 / delta, iterate

    tau_t^2     = sigma^2 + sigma_t^2,
    sigma_t+1^2 = (1/delta) ((1 - w_k) E[(eta_t(beta + tau_t Z) - beta_{k+1})^2]
                             + w_k sigma_beta^2),      w_k = 2k / N,

where beta is a window drawn from the chain's window marginal and
Z ~ N(0, I_{2k+1}) independent.  The expectation is exact over the
enumerated prior; the Gaussian dimension is handled by a pluggable
engine: seeded antithetic Monte Carlo (default) or tensor-product
Gauss-Hermite quadrature.

The Monte Carlo engine reuses one frozen sample bank across se_step
calls (common random numbers), which makes the iteration a fixed
deterministic map; without that, successive differences |d sigma^2|
would floor at the sampling noise and the convergence test below could
never trigger.

The predicted middle-coordinate MSE of the AMP estimate whose error
level is sigma_t^2 is

    (n (tau_t^2 - sigma^2) - 2k sigma_beta^2) / (N - 2k),

which equals sigma_beta^2 exactly at t = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import stream_rng
from .denoiser import posterior_moments
from .markov_signal import WindowPrior

CONVERGENCE_TOL = 1e-8
DEFAULT_MAX_T = 30
GH_POINT_CAP = 2**22


def se_init(sigma_beta2: float, delta: float) -> float:
    """sigma_0^2 = sigma_beta^2 / delta."""
    if not (sigma_beta2 > 0 and delta > 0):
        raise ValueError("sigma_beta2 and delta must be positive")
    return sigma_beta2 / delta


@dataclass(frozen=True)
class SEParams:
    """Problem parameters entering the recursion.

    n is rounded from delta * N once; the exact ratio n/N is what all
    downstream formulas use, so delta never drifts silently.
    """

    N: int
    delta: float
    sigma2: float
    sigma_beta2: float
    k: int

    def __post_init__(self):
        if self.N <= 2 * self.k:
            raise ValueError("need N > 2k")
        if self.sigma2 < 0 or self.sigma_beta2 <= 0 or self.delta <= 0:
            raise ValueError("bad parameters")

    @property
    def n(self) -> int:
        return round(self.delta * self.N)

    @property
    def delta_actual(self) -> float:
        return self.n / self.N

    @property
    def w_k(self) -> float:
        return 2 * self.k / self.N


class MonteCarloEngine:
    """E over Z by seeded Monte Carlo with antithetic pairs (Z, -Z).

    The bank is built chunk by chunk from streams derived from
    (seed, chunk index) and accumulated in fixed chunk order, so results
    are reproducible and independent of any worker configuration.
    """

    name = "mc"

    def __init__(self, samples: int = 200_000, seed: int = 0, antithetic: bool = True,
                 chunk: int = 65_536):
        if samples <= 0:
            raise ValueError("sample count must be positive")
        if antithetic and samples % 2:
            raise ValueError("antithetic pairing needs an even sample count")
        self.samples = samples
        self.seed = seed
        self.antithetic = antithetic
        self.chunk = chunk
        self._banks: dict[int, np.ndarray] = {}

    def _bank(self, dim: int) -> np.ndarray:
        if dim not in self._banks:
            fresh = self.samples // 2 if self.antithetic else self.samples
            parts = []
            for c, start in enumerate(range(0, fresh, self.chunk)):
                rng = stream_rng(self.seed, "se_mc", c)
                parts.append(rng.standard_normal((min(self.chunk, fresh - start), dim)))
            Z = np.concatenate(parts, axis=0)
            if self.antithetic:
                Z = np.concatenate([Z, -Z], axis=0)
            Z.setflags(write=False)
            self._banks[dim] = Z
        return self._banks[dim]

    def center_mse(self, prior: WindowPrior, tau2: float) -> float:
        """E[(eta(beta + tau Z) - beta_center)^2], prior enumerated exactly."""
        Z = self._bank(prior.window_len)
        tau = np.sqrt(tau2)
        total = 0.0
        for m in range(len(prior.probs)):
            x = prior.sequences[m]
            c = x[prior.center_index]
            acc = 0.0
            for a in range(0, len(Z), self.chunk):
                m1, _ = posterior_moments(prior, tau2, x[None, :] + tau * Z[a:a + self.chunk])
                acc += float(((m1 - c) ** 2).sum())
            total += prior.probs[m] * acc / len(Z)
        return total

    def describe(self) -> dict:
        return {"engine": self.name, "samples": self.samples, "seed": self.seed,
                "antithetic": self.antithetic}


class GaussHermiteEngine:
    """E over Z by tensor-product Gauss-Hermite quadrature.

    Deterministic and, for the smooth integrands here, far more accurate
    than Monte Carlo at low window dimension; the point count grows as
    nodes^(2k+1), capped to keep memory bounded.
    """

    name = "gauss-hermite"

    def __init__(self, nodes: int = 16, chunk: int = 65_536):
        if nodes < 2:
            raise ValueError("need at least 2 nodes per dimension")
        self.nodes = nodes
        self.chunk = chunk
        self._grids: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def _grid(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        if dim not in self._grids:
            if self.nodes**dim > GH_POINT_CAP:
                raise ValueError(f"{self.nodes}^{dim} quadrature points exceed cap {GH_POINT_CAP}")
            x, w = np.polynomial.hermite.hermgauss(self.nodes)
            z1 = np.sqrt(2.0) * x          # physicists' nodes rescaled to N(0,1)
            w1 = w / np.sqrt(np.pi)
            grids = np.meshgrid(*([z1] * dim), indexing="ij")
            Z = np.stack([g.ravel() for g in grids], axis=1)
            W = np.ones(len(Z))
            for d in range(dim):
                W *= np.meshgrid(*([w1] * dim), indexing="ij")[d].ravel()
            Z.setflags(write=False)
            W.setflags(write=False)
            self._grids[dim] = (Z, W)
        return self._grids[dim]

    def center_mse(self, prior: WindowPrior, tau2: float) -> float:
        Z, W = self._grid(prior.window_len)
        tau = np.sqrt(tau2)
        total = 0.0
        for m in range(len(prior.probs)):
            x = prior.sequences[m]
            c = x[prior.center_index]
            acc = 0.0
            for a in range(0, len(Z), self.chunk):
                m1, _ = posterior_moments(prior, tau2, x[None, :] + tau * Z[a:a + self.chunk])
                acc += float(((m1 - c) ** 2) @ W[a:a + self.chunk])
            total += prior.probs[m] * acc
        return total

    def describe(self) -> dict:
        return {"engine": self.name, "nodes": self.nodes}


@dataclass(frozen=True)
class SETrace:
    """Per-iteration sigma_t^2, tau_t^2 and predicted middle MSE.

    tau2[t] - sigma2[t] equals the noise variance exactly because tau2
    is stored as sigma2 + params.sigma2, never recomputed.
    """

    params: SEParams
    sigma2: np.ndarray
    tau2: np.ndarray
    predicted_mse: np.ndarray
    engine_info: dict
    converged: bool
    converged_at: int | None = None

    def __post_init__(self):
        for name in ("sigma2", "tau2", "predicted_mse"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.sigma2)

    def tau2_at(self, t: int) -> float:
        """tau_t^2, extending a converged trace by its fixed point."""
        if t < len(self.sigma2):
            return float(self.tau2[t])
        if self.converged:
            return float(self.tau2[-1])
        raise IndexError(f"trace of length {len(self.sigma2)} has no tau_{t}^2 and is not converged")

    def to_rows(self) -> list[tuple[int, float, float, float]]:
        return [(t, float(self.sigma2[t]), float(self.tau2[t]), float(self.predicted_mse[t]))
                for t in range(len(self.sigma2))]


def predicted_middle_mse(tau2_next: float, params: SEParams) -> float:
    """(n (tau^2 - sigma^2) - 2k sigma_beta^2) / (N - 2k)."""
    if tau2_next < params.sigma2:
        raise ValueError("tau^2 below the noise floor")
    return (params.n * (tau2_next - params.sigma2) - 2 * params.k * params.sigma_beta2) / (params.N - 2 * params.k)


def se_step(sigma_t2: float, params: SEParams, prior: WindowPrior, engine) -> float:
    """One application of the recursion map at error level sigma_t^2."""
    if not sigma_t2 > 0:
        raise ValueError("sigma_t^2 must be positive")
    tau2 = params.sigma2 + sigma_t2
    mse = engine.center_mse(prior, tau2)
    return ((1.0 - params.w_k) * mse + params.w_k * params.sigma_beta2) / params.delta_actual


def run_se(params: SEParams, prior: WindowPrior, T: int = DEFAULT_MAX_T, engine=None) -> SETrace:
    """Trace of at most T steps, stopping early once |d sigma^2| < 1e-8."""
    if T < 0:
        raise ValueError("T must be >= 0")
    if engine is None:
        engine = MonteCarloEngine()
    sigma2 = [se_init(params.sigma_beta2, params.delta_actual)]
    converged = False
    converged_at = None
    for t in range(T):
        nxt = se_step(sigma2[-1], params, prior, engine)
        delta = abs(nxt - sigma2[-1])
        sigma2.append(nxt)
        if delta < CONVERGENCE_TOL:
            converged = True
            converged_at = t + 1
            break
    sig = np.asarray(sigma2)
    tau2 = params.sigma2 + sig
    pred = (params.n * sig - 2 * params.k * params.sigma_beta2) / (params.N - 2 * params.k)
    return SETrace(params=params, sigma2=sig, tau2=tau2, predicted_mse=pred,
                   engine_info=engine.describe(), converged=converged, converged_at=converged_at)
