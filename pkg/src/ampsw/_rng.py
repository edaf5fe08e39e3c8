"""Named seed streams derived from a master seed.

Every sampling site in the package draws from its own child stream so
that, for a fixed master seed, enlarging one consumer (say the Monte
Carlo sample count) never perturbs the draws of another (say the
measurement matrix).  Stream ids are part of the reproducibility
contract: changing them invalidates previously recorded outputs.
"""

from __future__ import annotations

import numpy as np

STREAM_IDS = {
    "matrix": 1,
    "signal": 2,
    "noise": 3,
    "se_mc": 4,
    "diag_path": 5,
    "diag_gauss": 6,
    "diag_ref": 7,
    "stein": 8,
}


def stream_seed_sequence(master_seed: int, stream: str, index: int = 0) -> np.random.SeedSequence:
    """SeedSequence for (master_seed, stream, index), index for per-chunk substreams."""
    if stream not in STREAM_IDS:
        raise KeyError(f"unknown stream {stream!r}")
    return np.random.SeedSequence([int(master_seed), STREAM_IDS[stream], int(index)])


def stream_rng(master_seed: int, stream: str, index: int = 0) -> np.random.Generator:
    """PCG64 generator on the named stream."""
    return np.random.default_rng(stream_seed_sequence(master_seed, stream, index))
