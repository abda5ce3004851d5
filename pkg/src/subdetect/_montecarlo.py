"""Replicate scheduling and order-statistic calibration shared by the
adaptive test and the harness."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.stats import binom

from .core_model import derive_seed

# sub-stream tags under one root seed
NULL_STREAM = 0
ALT_STREAM = 1
SUPPORT_STREAM = 2
CALIBRATION_STREAM = 3

CHUNK = 64


def stream_root(root_seed: int, tag: int, *keys: int) -> int:
    return derive_seed(root_seed, tag, *keys)


def map_replicates(fn, n_reps: int, threads: int = 1) -> list:
    """``[fn(r) for r in range(n_reps)]`` evaluated in fixed chunks.

    Each replicate owns its random stream, so the result does not depend
    on ``threads``.
    """
    if threads <= 1 or n_reps <= CHUNK:
        return [fn(r) for r in range(n_reps)]
    bounds = [(a, min(a + CHUNK, n_reps)) for a in range(0, n_reps, CHUNK)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda ab: [fn(r) for r in range(*ab)], bounds)
        return [x for part in parts for x in part]


class InsufficientReplicatesError(ValueError):
    """Too few null replicates to certify the requested level."""


def joint_cutoffs(null_stats, level: float, confidence: float | None = 0.95) -> tuple[np.ndarray, int, int]:
    """Equal-rank cutoffs controlling the chance that any column exceeds.

    Column ``k`` gets the ``(n - j)``-th order statistic as its cutoff
    (rejection is ``stat > cutoff``), with the same ``j`` for every
    column.  ``FW(j)`` is the number of replicates rejected in-sample at
    rank ``j``.

    With ``confidence`` set, ``j`` is the largest rank with
    ``P(Bin(n, level) > FW(j)) >= confidence``: for a single continuous
    statistic the rejection probability of the returned cutoff is then at
    most ``level`` with probability ``confidence`` over the calibration
    sample.  With ``confidence=None`` the rule is the marginal one,
    ``(FW(j) + 1) / (n + 1) <= level``, which for one column is the order
    statistic ``X_(ceil((n + 1)(1 - level)))``.

    Returns
    -------
    cutoffs : ndarray
    j : int
    fw : int
        Number of null replicates rejected in-sample at the chosen cutoffs.

    Raises
    ------
    InsufficientReplicatesError
        If no rank satisfies the rule.
    """
    stats = np.asarray(null_stats, dtype=np.float64)
    if stats.ndim == 1:
        stats = stats[:, None]
    n, k = stats.shape
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if confidence is not None and not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    ordered = np.sort(stats, axis=0)
    # replicate i exceeds column c at rank j iff j >= n - (#values < stats[i, c])
    first_rank = np.full(n, n, dtype=np.int64)
    for c in range(k):
        below = np.searchsorted(ordered[:, c], stats[:, c], side="left")
        np.minimum(first_rank, n - below, out=first_rank)
    counts = np.bincount(first_rank, minlength=n + 1)[:n]
    fw = np.cumsum(counts)
    if confidence is None:
        allowed = np.nonzero((fw + 1) <= level * (n + 1))[0]
    else:
        allowed = np.nonzero(binom.sf(fw, n, level) >= confidence)[0]
    if allowed.size == 0:
        raise InsufficientReplicatesError(f"{n} replicates cannot certify level {level}")
    j = int(allowed[-1])
    return ordered[n - 1 - j].copy(), j, int(fw[j])
