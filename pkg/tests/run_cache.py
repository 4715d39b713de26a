"""Disk memoization for the acceptance suite's heavy deterministic runs.

Annealing and greedy runs are pure functions of their configuration and
seed, so their results are cached under ``tests/.acceptance_cache`` (or
``DAMAP_ACCEPTANCE_CACHE``) keyed by a configuration signature.  Delete the
directory to force recomputation; determinism itself is asserted separately
by the acceptance suite.
"""

import hashlib
import os
import pickle
import time
from pathlib import Path

CACHE_DIR = Path(os.environ.get("DAMAP_ACCEPTANCE_CACHE", Path(__file__).parent / ".acceptance_cache"))


def _key(tag: str, signature) -> Path:
    digest = hashlib.sha256(repr(signature).encode()).hexdigest()[:16]
    return CACHE_DIR / f"{tag}-{digest}.pkl"


def cached_run(tag: str, signature, compute):
    """Return the cached value for (tag, signature), computing and timing on a miss.

    ``compute`` takes no arguments; the stored payload is (value, seconds).
    """
    path = _key(tag, signature)
    if path.exists():
        with open(path, "rb") as handle:
            value, seconds = pickle.load(handle)
        return value, seconds
    start = time.perf_counter()
    value = compute()
    seconds = time.perf_counter() - start
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        pickle.dump((value, seconds), handle)
    return value, seconds
