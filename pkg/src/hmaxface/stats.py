"""Non-parametric statistics: bootstrap, Wilcoxon signed-rank, SEM.

Random streams come from numpy's PCG64 bit generator seeded through
``SeedSequence``; ``RNG_ALGORITHM`` is recorded in every report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

RNG_ALGORITHM = f"numpy-{np.__version__}/PCG64/SeedSequence"
EXACT_MAX_N = 25


class StatsError(ValueError):
    pass


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent stream for (seed, *key); the same inputs give the same stream anywhere."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(key))))


def derive_seed(seed: int, *key: int) -> int:
    """A 63-bit integer seed for the sub-stream (seed, *key)."""
    state = np.random.SeedSequence(seed, spawn_key=tuple(key)).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


@dataclass(frozen=True)
class BootstrapResult:
    estimate: float
    sem: float
    p_one_sided: float
    p_two_sided: float
    n_runs: int
    seed: int
    p_floored: bool = False
    direction: str = "greater"

    def as_dict(self) -> dict:
        return {"estimate": self.estimate, "sem": self.sem, "p_one_sided": self.p_one_sided,
                "p_two_sided": self.p_two_sided, "n_runs": self.n_runs, "seed": self.seed,
                "p_floored": self.p_floored, "direction": self.direction}


def bootstrap_indices(n: int, n_runs: int, seed: int) -> np.ndarray:
    """(n_runs, n) resampling indices drawn with replacement."""
    if n < 2:
        raise StatsError("bootstrap needs at least 2 samples")
    if n_runs < 1:
        raise StatsError("n_runs must be >= 1")
    return make_rng(seed).integers(0, n, size=(n_runs, n))


def summarize_replicates(estimate: float, replicates: np.ndarray, seed: int,
                         direction: str = "greater") -> BootstrapResult:
    """SEM and p-values from bootstrap replicate values.

    The one-sided p is the fraction of replicates on the wrong side of zero
    (<= 0 for ``direction="greater"``, >= 0 for ``"less"``), floored at
    1 / n_runs. The two-sided p doubles the smaller tail, capped at 1.
    """
    reps = np.asarray(replicates, dtype=np.float64)
    n_runs = reps.size
    if n_runs < 1:
        raise StatsError("no bootstrap replicates")
    if direction not in ("greater", "less"):
        raise StatsError("direction must be 'greater' or 'less'")
    frac_le = float(np.mean(reps <= 0))
    frac_ge = float(np.mean(reps >= 0))
    raw_one = frac_le if direction == "greater" else frac_ge
    raw_two = min(1.0, 2.0 * min(frac_le, frac_ge))
    floor = 1.0 / n_runs
    # identical replicates give exactly 0, not rounding noise from the mean
    sem = float(reps.std(ddof=1)) if n_runs > 1 and np.ptp(reps) > 0 else 0.0
    return BootstrapResult(float(estimate), sem, max(raw_one, floor), max(raw_two, floor), n_runs,
                           seed, p_floored=raw_one < floor, direction=direction)


def bootstrap_mean(values, idx: np.ndarray, seed: int, direction: str = "greater") -> BootstrapResult:
    """Bootstrap of a mean using precomputed resampling indices (shared across conditions)."""
    v = np.asarray(values, dtype=np.float64)
    return summarize_replicates(v.mean(), v[idx].mean(axis=1), seed, direction)


def bootstrap(samples, statistic: Callable[[np.ndarray], float] = np.mean, n_runs: int = 1000,
              seed: int = 0, direction: str = "greater") -> BootstrapResult:
    """Resample `samples` (units along axis 0) with replacement `n_runs` times."""
    samples = np.asarray(samples)
    if samples.ndim == 0 or len(samples) < 2:
        raise StatsError("bootstrap needs at least 2 samples")
    idx = bootstrap_indices(len(samples), n_runs, seed)
    reps = np.array([statistic(samples[row]) for row in idx], dtype=np.float64)
    return summarize_replicates(statistic(samples), reps, seed, direction)


def sem(values: Sequence[float]) -> float:
    """Standard error of the mean (sample SD with n - 1, over sqrt(n))."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise StatsError("SEM needs at least 2 values")
    return float(v.std(ddof=1) / math.sqrt(v.size))


def signed_ranks(diffs) -> tuple[np.ndarray, np.ndarray]:
    """Average ranks of |d| for the non-zero differences, and their signs."""
    d = np.asarray(diffs, dtype=np.float64)
    d = d[d != 0]
    if d.size == 0:
        raise StatsError("all differences are zero; signed-rank test undefined")
    a = np.abs(d)
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size)
    sorted_a = a[order]
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks, np.sign(d)


def _exact_null_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """counts[s] = number of sign patterns whose doubled positive-rank sum is s."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=object)  # exact integers, 2**25 fits but stay safe
    counts[0] = 1
    for r in doubled_ranks.astype(int):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(diffs, alternative: str = "two-sided") -> float:
    """Wilcoxon signed-rank p-value for paired differences.

    Zero differences are dropped. Up to 25 non-zero differences the null
    distribution of the positive-rank sum is enumerated exactly over all
    sign assignments (tied ranks averaged). Beyond that a normal
    approximation with tie-corrected variance and continuity correction is
    used. `alternative` is "two-sided", "greater" (differences tend to be
    positive) or "less".
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise StatsError(f"unknown alternative {alternative!r}")
    ranks, signs = signed_ranks(diffs)
    n = ranks.size
    w_plus = float(ranks[signs > 0].sum())
    mean = ranks.sum() / 2.0
    if n <= EXACT_MAX_N:
        doubled = np.round(2 * ranks).astype(int)
        counts = _exact_null_counts(doubled)
        total = 2 ** n
        sums = np.arange(counts.size)
        w2 = int(round(2 * w_plus))
        if alternative == "greater":
            hits = sum(counts[w2:])
        elif alternative == "less":
            hits = sum(counts[:w2 + 1])
        else:
            dev = abs(w2 - 2 * mean)
            hits = sum(c for s, c in zip(sums, counts) if abs(s - 2 * mean) >= dev - 1e-9)
        return float(min(1.0, hits / total))
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    sd = math.sqrt(var)
    if alternative == "greater":
        z = (w_plus - mean - 0.5) / sd
        return 0.5 * math.erfc(z / math.sqrt(2))
    if alternative == "less":
        z = (w_plus - mean + 0.5) / sd
        return 0.5 * math.erfc(-z / math.sqrt(2))
    z = max(abs(w_plus - mean) - 0.5, 0.0) / sd
    return float(min(1.0, math.erfc(z / math.sqrt(2))))
