"""Approximate message passing with sliding-window denoisers.

Recovers stationary Markov-chain signals from noisy Gaussian linear
measurements y = A beta0 + w.  Submodules: markov_signal (chain model
and window marginals), denoiser (Bayesian sliding-window posterior
mean), state_evolution (the deterministic error predictor), amp_core
(the recursion), diagnostics (concentration checks), experiment_cli
(config-driven runs and the amp-sw entry point).

Submodules are imported lazily so the CLI can pin thread environment
variables before numpy loads.
"""

from __future__ import annotations

import importlib

__all__ = [
    "amp_core",
    "denoiser",
    "diagnostics",
    "experiment_cli",
    "markov_signal",
    "state_evolution",
]

__version__ = "0.1.0"


def __getattr__(name: str):
    if name in __all__:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
