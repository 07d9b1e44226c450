"""Face inversion effect: behavioral (pairwise C2 dissimilarity) and neural (mean response)."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.spatial.distance import pdist

from ..hmax.model import HmaxModel
from ..hmax.templates import TemplateBank
from ..stats import (bootstrap_indices, derive_seed, make_rng, summarize_replicates,
                     wilcoxon_signed_rank)
from ..stimulus.transforms import invert, pad
from .common import (EXPERIMENT_KEYS, C2Cache, ExperimentConfig, ExperimentError, ExperimentReport,
                     StimulusConfig, extract)

BEHAVIORAL_COLUMNS = ("trial_id", "size", "orientation", "face_a", "face_b", "dissimilarity")
NEURAL_COLUMNS = ("trial_id", "size", "template", "mean_upright", "mean_inverted", "effect",
                  "in_band", "selected")


def fie_responses(bank_by_size: dict[str, TemplateBank], test_faces: list[np.ndarray], n: int,
                  sizes, model: HmaxModel, stim: StimulusConfig,
                  cache: C2Cache | None = None) -> dict[str, dict[str, np.ndarray]]:
    """{size: {"upright": (n, T), "inverted": (n, T)}} C2 responses of the first `n` faces."""
    if len(test_faces) < n:
        raise ExperimentError(f"inversion experiment needs {n} test faces, got {len(test_faces)}")
    sizes = [s for s in sizes if s in bank_by_size]
    if not sizes:
        raise ExperimentError("no template bank for any requested tuning size")
    m, bg = stim.margin_px, stim.background
    faces = [pad(f, m, m, m, m, bg) for f in test_faces[:n]]
    c2 = extract(model, faces + [invert(f) for f in faces], {s: bank_by_size[s] for s in sizes}, cache)
    return {s: {"upright": c2[s][:n], "inverted": c2[s][n:]} for s in sizes}


def pair_means(dist: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Mean dissimilarity over pairs of distinct faces for each resampling.

    `dist` is the (n, n) distance matrix (zero diagonal) and `counts` the
    (runs, n) multiplicity of each face in each resample. Pairs that pick
    the same face twice are excluded.
    """
    c = counts.astype(np.float64)
    num = np.einsum("ri,ij,rj->r", c, dist, c)
    den = c.sum(axis=1) ** 2 - np.sum(c * c, axis=1)
    return num / den


def _square(condensed: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    out[iu] = condensed
    return out + out.T


def run_fie_behavioral(bank_by_size: dict[str, TemplateBank], test_faces: list[np.ndarray],
                       cfg: ExperimentConfig, model: HmaxModel | None = None,
                       stim: StimulusConfig | None = None, cache: C2Cache | None = None,
                       responses: dict | None = None) -> ExperimentReport:
    model = model or HmaxModel()
    stim = stim or StimulusConfig()
    n = cfg.fie_faces
    resp = responses or fie_responses(bank_by_size, test_faces, n, cfg.sizes, model, stim, cache)
    sizes = list(resp)
    report = ExperimentReport("fie", trial_columns=BEHAVIORAL_COLUMNS)
    key = EXPERIMENT_KEYS["fie"]
    idx_seed = derive_seed(cfg.seed, key, 1)
    idx = bootstrap_indices(n, cfg.fie_boot_runs, idx_seed)
    counts = np.zeros((len(idx), n))
    np.add.at(counts, (np.arange(len(idx))[:, None], idx), 1)
    report.seeds = {"master": cfg.seed, "bootstrap": idx_seed}

    pairs = list(itertools.combinations(range(n), 2))
    trial_id = 0
    reps, estimates = {}, {}
    for size in sizes:
        dists, level_means = {}, {}
        for orient in ("upright", "inverted"):
            cond = pdist(resp[size][orient])
            dists[orient] = _square(cond, n)
            for (a, b), d in zip(pairs, cond):
                report.trials.append({"trial_id": trial_id, "size": size, "orientation": orient,
                                      "face_a": a, "face_b": b, "dissimilarity": float(d)})
                trial_id += 1
            level_means[orient] = float(cond.mean())
            level = pair_means(dists[orient], counts)
            res = summarize_replicates(cond.mean(), level, idx_seed)
            report.add(size, orient, "mean-dissimilarity", res.estimate, res.sem, n=len(pairs),
                       test=f"bootstrap[{res.n_runs}]")
        estimates[size] = level_means["upright"] - level_means["inverted"]
        reps[size] = pair_means(dists["upright"], counts) - pair_means(dists["inverted"], counts)
        report.add_boot(size, "upright-minus-inverted", "effect",
                        summarize_replicates(estimates[size], reps[size], idx_seed), n)
    for s1, s2 in itertools.combinations(sizes, 2):
        report.add_boot(f"{s1}-vs-{s2}", "upright-minus-inverted", "effect-difference",
                        summarize_replicates(estimates[s1] - estimates[s2], reps[s1] - reps[s2],
                                             idx_seed), n, two_sided=True)

    # coverage control: fewer templates for the larger sizes, redrawn every replicate
    cov_seed = derive_seed(cfg.seed, key, 2)
    cov_reps, cov_est = {}, {}
    for size in sizes:
        total = resp[size]["upright"].shape[1]
        k = int(cfg.coverage_subsets.get(size, total))
        if not 1 <= k <= total:
            raise ExperimentError(f"coverage subset of {k} templates for {size} (bank has {total})")
        if k == total:
            cov_est[size], cov_reps[size] = estimates[size], reps[size]
        else:
            rng = make_rng(cov_seed, sizes.index(size))
            cov_est[size], cov_reps[size] = _coverage(resp[size], counts, k, rng)
        report.add_boot(size, "upright-minus-inverted", "coverage-effect",
                        summarize_replicates(cov_est[size], cov_reps[size], cov_seed), n,
                        n_templates=k)
    for s1, s2 in itertools.combinations(sizes, 2):
        report.add_boot(f"{s1}-vs-{s2}", "upright-minus-inverted", "coverage-effect-difference",
                        summarize_replicates(cov_est[s1] - cov_est[s2], cov_reps[s1] - cov_reps[s2],
                                             cov_seed), n, two_sided=True)
    report.extra = {"n_faces": n, "n_pairs": len(pairs), "coverage_subsets": dict(cfg.coverage_subsets)}
    return report


def _coverage(resp: dict[str, np.ndarray], counts: np.ndarray, k: int,
              rng: np.random.Generator) -> tuple[float, np.ndarray]:
    """Replicates (and their full-sample mean) of the effect with a fresh k-template subset each run."""
    n, total = resp["upright"].shape
    runs = len(counts)
    reps = np.empty(runs)
    full = np.empty(runs)
    ones = np.ones((1, n))
    for r in range(runs):
        cols = rng.choice(total, size=k, replace=False)
        du = _square(pdist(resp["upright"][:, cols]), n)
        di = _square(pdist(resp["inverted"][:, cols]), n)
        both = np.vstack([counts[r:r + 1], ones])
        vals = pair_means(du, both) - pair_means(di, both)
        reps[r], full[r] = vals
    return float(full.mean()), reps


def run_fie_neural(bank_by_size: dict[str, TemplateBank], test_faces: list[np.ndarray],
                   cfg: ExperimentConfig, model: HmaxModel | None = None,
                   stim: StimulusConfig | None = None, cache: C2Cache | None = None,
                   responses: dict | None = None) -> ExperimentReport:
    model = model or HmaxModel()
    stim = stim or StimulusConfig()
    n = cfg.fie_faces
    resp = responses or fie_responses(bank_by_size, test_faces, n, cfg.sizes, model, stim, cache)
    sizes = list(resp)
    report = ExperimentReport("fie-neural", trial_columns=NEURAL_COLUMNS)
    sel_seed = derive_seed(cfg.seed, EXPERIMENT_KEYS["fie-neural"], 1)
    report.seeds = {"master": cfg.seed, "equalize": sel_seed}
    lo, hi = cfg.response_band

    means, effects, in_band = {}, {}, {}
    for size in sizes:
        up = resp[size]["upright"].mean(axis=0)
        inv = resp[size]["inverted"].mean(axis=0)
        means[size] = (up, inv)
        effects[size] = up - inv
        in_band[size] = np.flatnonzero((up >= lo) & (up <= hi))
    empty = [s for s in sizes if in_band[s].size == 0]
    if empty:
        raise ExperimentError(f"no {', '.join(empty)} template has a mean upright response in "
                              f"[{lo}, {hi}]; the tuning width sigma is probably miscalibrated")
    n_eq = min(in_band[s].size for s in sizes)
    rng = make_rng(sel_seed)
    selected = {s: np.sort(rng.choice(in_band[s], size=n_eq, replace=False)) for s in sizes}

    trial_id = 0
    for size in sizes:
        up, inv = means[size]
        sel = np.zeros(up.size, dtype=bool)
        sel[selected[size]] = True
        band_mask = (up >= lo) & (up <= hi)
        for j in range(up.size):
            report.trials.append({"trial_id": trial_id, "size": size, "template": j,
                                  "mean_upright": float(up[j]), "mean_inverted": float(inv[j]),
                                  "effect": float(up[j] - inv[j]), "in_band": bool(band_mask[j]),
                                  "selected": bool(sel[j])})
            trial_id += 1
        report.add(size, "upright", "mean-response", float(up.mean()), _sem(up), n=up.size)
        report.add(size, "inverted", "mean-response", float(inv.mean()), _sem(inv), n=inv.size)
        for cond, vals in (("effect", effects[size]), ("band-effect", effects[size][selected[size]])):
            report.add(size, "upright-minus-inverted", cond, float(vals.mean()), _sem(vals),
                       _wilcoxon(vals), "wilcoxon-two-sided", vals.size, test="wilcoxon",
                       p_greater=_wilcoxon(vals, "greater"),
                       n_in_band=int(in_band[size].size) if cond == "band-effect" else None)
    for s1, s2 in itertools.combinations(sizes, 2):
        # templates of different sizes are paired by index (after the random selection)
        k = min(effects[s1].size, effects[s2].size)
        for cond, d in (("effect-difference", effects[s1][:k] - effects[s2][:k]),
                        ("band-effect-difference",
                         effects[s1][selected[s1]] - effects[s2][selected[s2]])):
            report.add(f"{s1}-vs-{s2}", "upright-minus-inverted", cond, float(d.mean()), _sem(d),
                       _wilcoxon(d), "wilcoxon-two-sided", d.size, test="wilcoxon")
    report.extra = {"n_faces": n, "response_band": [lo, hi], "n_equalized": int(n_eq),
                    "n_in_band": {s: int(in_band[s].size) for s in sizes}}
    return report


def _sem(v: np.ndarray) -> float:
    return float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0


def _wilcoxon(v: np.ndarray, alternative: str = "two-sided") -> float:
    if not np.any(v != 0):
        return 1.0
    return wilcoxon_signed_rank(v, alternative)

