import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hmaxface.stats import (StatsError, bootstrap, bootstrap_indices, bootstrap_mean, derive_seed, make_rng,
                            sem, signed_ranks, summarize_replicates, wilcoxon_signed_rank)


def enumeration_p(diffs, alternative="two-sided"):
    """Oracle: flip every sign pattern of the non-zero |d| ranks and count."""
    d = np.asarray(diffs, dtype=float)
    d = d[d != 0]
    a = np.abs(d)
    # average ranks by direct comparison, independent of the library's ranking
    ranks = np.array([np.sum(a < x) + (np.sum(a == x) + 1) / 2.0 for x in a])
    w_obs = ranks[d > 0].sum()
    mean = ranks.sum() / 2.0
    ws = np.array([sum(r for r, s in zip(ranks, signs) if s)
                   for signs in itertools.product((0, 1), repeat=len(ranks))])
    eps = 1e-9
    if alternative == "greater":
        return np.mean(ws >= w_obs - eps)
    if alternative == "less":
        return np.mean(ws <= w_obs + eps)
    return min(1.0, np.mean(np.abs(ws - mean) >= abs(w_obs - mean) - eps))


def test_wilcoxon_matches_enumeration_oracle_on_100_random_cases():
    rng = np.random.default_rng(2024)
    for case in range(100):
        n = int(rng.integers(1, 11))
        # integer-valued draws so ties and zeros actually occur
        diffs = rng.integers(-4, 5, size=n).astype(float)
        if not np.any(diffs):
            diffs[0] = 1.0
        for alt in ("two-sided", "greater", "less"):
            assert wilcoxon_signed_rank(diffs, alt) == pytest.approx(enumeration_p(diffs, alt), abs=1e-12), \
                (case, diffs, alt)


@given(st.lists(st.floats(-10, 10, allow_nan=False).filter(lambda x: abs(x) > 1e-6), min_size=1, max_size=10))
def test_wilcoxon_property_oracle(diffs):
    assert wilcoxon_signed_rank(diffs) == pytest.approx(enumeration_p(diffs), abs=1e-12)


def test_wilcoxon_all_positive_ten():
    assert wilcoxon_signed_rank(np.arange(1, 11)) == pytest.approx(2 / 2 ** 10)


def test_wilcoxon_balanced_pair_is_one():
    assert wilcoxon_signed_rank([2.5, -2.5]) == 1.0


def test_wilcoxon_all_zero_raises():
    with pytest.raises(StatsError):
        wilcoxon_signed_rank([0.0, 0.0])


def test_wilcoxon_large_n_tiny_p():
    p = wilcoxon_signed_rank(np.linspace(0.01, 1, 1000))
    assert 0 <= p < 1e-100


def test_wilcoxon_normal_branch_close_to_exact_at_boundary():
    rng = np.random.default_rng(5)
    d = rng.normal(0.3, 1, size=26)
    # exact on the first 25 vs normal on 26 should be in the same ballpark
    assert abs(wilcoxon_signed_rank(d) - wilcoxon_signed_rank(d[:25])) < 0.2


@given(st.lists(st.floats(-5, 5, allow_nan=False).filter(lambda x: abs(x) > 1e-3), min_size=1, max_size=40),
       st.floats(0.01, 100))
def test_wilcoxon_scale_invariance_and_direction_flip(diffs, k):
    d = np.asarray(diffs)
    assert wilcoxon_signed_rank(d * k) == pytest.approx(wilcoxon_signed_rank(d), rel=1e-9)
    assert wilcoxon_signed_rank(-d, "greater") == pytest.approx(wilcoxon_signed_rank(d, "less"), rel=1e-9)


def test_signed_ranks_average_ties():
    ranks, signs = signed_ranks([1, -1, 2, 0])
    assert ranks.tolist() == [1.5, 1.5, 3.0]
    assert signs.tolist() == [1, -1, 1]


def test_sem_examples():
    assert sem([0, 2]) == pytest.approx(1.0)
    assert sem([3, 3, 3]) == 0.0
    with pytest.raises(StatsError):
        sem([1.0])


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=50), st.floats(-10, 10),
       st.randoms())
def test_sem_homogeneity_and_permutation(values, k, rnd):
    v = np.asarray(values)
    assert sem(v * k) == pytest.approx(abs(k) * sem(v), rel=1e-9, abs=1e-9)
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert sem(shuffled) == pytest.approx(sem(values), rel=1e-9, abs=1e-12)


def test_bootstrap_sem_matches_closed_form_on_gaussian_samples():
    rng = np.random.default_rng(7)
    for n in (10, 30, 100):
        x = rng.normal(2.0, 3.0, size=n)
        closed = x.std(ddof=0) / math.sqrt(n)  # bootstrap SE of the mean converges to the plug-in SE
        res = bootstrap(x, np.mean, n_runs=10_000, seed=n)
        assert abs(res.sem - closed) / closed < 0.10
        assert abs(res.sem - sem(x)) / sem(x) < 0.10


def test_bootstrap_two_point_set():
    res = bootstrap(np.array([0.0, 1.0]), np.mean, n_runs=10_000, seed=1)
    assert res.sem == pytest.approx(0.5 / math.sqrt(2), rel=0.10)


def test_bootstrap_constant_samples():
    res = bootstrap(np.full(8, 4.2), np.mean, n_runs=200, seed=3)
    assert res.estimate == pytest.approx(4.2)
    assert res.sem == 0.0


def test_bootstrap_deterministic_and_seed_sensitive():
    x = np.random.default_rng(0).normal(size=20)
    assert bootstrap(x, n_runs=500, seed=9) == bootstrap(x, n_runs=500, seed=9)
    assert bootstrap(x, n_runs=500, seed=9).sem != bootstrap(x, n_runs=500, seed=10).sem


def test_bootstrap_needs_two_samples():
    with pytest.raises(StatsError):
        bootstrap([1.0], n_runs=10)
    with pytest.raises(StatsError):
        bootstrap_indices(5, 0, 1)


def test_p_values_recomputable_from_replicates():
    rng = np.random.default_rng(11)
    x = rng.normal(0.1, 1, size=20)
    idx = bootstrap_indices(20, 1000, 4)
    res = bootstrap_mean(x, idx, 4)
    reps = x[idx].mean(axis=1)
    assert res.p_one_sided == pytest.approx(max(np.mean(reps <= 0), 1e-3))
    less = bootstrap_mean(x, idx, 4, direction="less")
    assert less.p_one_sided == pytest.approx(max(np.mean(reps >= 0), 1e-3))
    assert res.p_two_sided == pytest.approx(max(min(1, 2 * min(np.mean(reps <= 0), np.mean(reps >= 0))), 1e-3))


def test_p_floor_flagged():
    res = summarize_replicates(1.0, np.ones(100), seed=0)
    assert res.p_one_sided == 0.01 and res.p_floored
    res = summarize_replicates(-1.0, -np.ones(100), seed=0)
    assert res.p_one_sided == 1.0 and not res.p_floored


@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=200))
def test_summary_invariants(reps):
    res = summarize_replicates(0.0, np.asarray(reps), seed=0)
    assert 0 <= res.p_one_sided <= 1 and 0 <= res.p_two_sided <= 1
    assert res.sem >= 0


def test_rng_streams_reproducible_and_independent():
    a = make_rng(5, 1, 2).random(4)
    assert np.array_equal(a, make_rng(5, 1, 2).random(4))
    assert not np.array_equal(a, make_rng(5, 1, 3).random(4))
    assert derive_seed(5, 1) == derive_seed(5, 1)
    assert derive_seed(5, 1) != derive_seed(5, 2)
    assert 0 <= derive_seed(123, 4) < 2 ** 63
