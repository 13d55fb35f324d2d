"""Reproducible random-number substreams.

All randomness in the package flows from a single 64-bit master seed.
Independent tasks (Monte Carlo blocks, ensemble replicas, curve points)
derive their own generator from ``(seed, *path)`` so results do not depend
on execution order or on how work is split across threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
U = TypeVar("U")

#: Environment variable capping task parallelism (default: os.cpu_count()).
THREADS_ENV_VAR = "LDP_THREADS"


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Return the PCG64 substream addressed by ``(seed, *path)``.

    The split function is ``SeedSequence((seed, *path))``: equal address,
    equal stream, regardless of which task asks first.
    """
    entropy = (int(seed),) + tuple(int(p) for p in path)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "")
    if raw.strip():
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}")
        return max(1, value)
    return max(1, os.cpu_count() or 1)


def ordered_map(fn: Callable[[T], U], items: Sequence[T] | Iterable[T]) -> list[U]:
    """Map ``fn`` over ``items``, possibly in parallel, preserving order.

    Tasks must be independently seeded (see :func:`derive_rng`); the result
    list is identical for any thread count.
    """
    items = list(items)
    workers = min(thread_count(), max(1, len(items)))
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
