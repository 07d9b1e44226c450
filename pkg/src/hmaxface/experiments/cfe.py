"""Composite face effect: same-top composite pairs, aligned vs misaligned."""

from __future__ import annotations

import itertools

import numpy as np

from ..hmax.model import HmaxModel
from ..hmax.templates import TemplateBank
from ..stats import bootstrap_indices, bootstrap_mean, derive_seed, make_rng, wilcoxon_signed_rank
from ..stimulus.transforms import apply_attention_cfe, invert, make_composite, pad
from .common import (EXPERIMENT_KEYS, C2Cache, ExperimentConfig, ExperimentError, ExperimentReport,
                     StimulusConfig, calibrate_threshold, extract)

ORIENTATIONS = ("upright", "inverted")
ALIGNMENTS = ("aligned", "misaligned")
TRIAL_COLUMNS = ("trial_id", "size", "orientation", "alignment", "kind", "pair", "stim_a", "stim_b",
                 "top_a", "bottom_a", "top_b", "bottom_b", "tops_identical", "dissimilarity",
                 "threshold", "judged_same", "analyzed")


def cfe_design(n_faces: int, seed: int) -> list[dict]:
    """One same-top pair and one distractor per top face.

    Same trial: composites (top i, bottom a) and (top i, bottom b), a != b != i.
    Distractor: (top i, bottom a) against (top m, bottom b), m != i.
    """
    if n_faces < 4:
        raise ExperimentError("the composite design needs at least 4 faces")
    rng = make_rng(seed, EXPERIMENT_KEYS["cfe"])
    design = []
    for i in range(n_faces):
        others = np.array([j for j in range(n_faces) if j != i])
        a, b = (int(v) for v in rng.choice(others, size=2, replace=False))
        m = int(rng.choice(others))
        design.append({"top": i, "bottom_a": a, "bottom_b": b, "distractor_top": m})
    return design


class CompositeBuilder:
    """Builds attended composite stimuli and remembers their pre-attention top halves."""

    def __init__(self, faces: list[np.ndarray], stim: StimulusConfig):
        self.stim = stim
        shape = faces[0].shape
        self.misalign = stim.misalignment(shape)
        m = stim.margin_px
        bg = stim.background
        # room on the right for the shifted bottom half
        self.faces = [pad(f, m, m, m, m + self.misalign, bg) for f in faces]
        self.half = self.faces[0].shape[0] // 2

    def raw(self, top: int, bottom: int, aligned: bool) -> np.ndarray:
        s = self.stim
        return make_composite(self.faces[top], self.faces[bottom], aligned, s.gap_px,
                              self.misalign, s.background)

    def attended(self, raw: np.ndarray, inverted: bool) -> np.ndarray:
        s = self.stim
        img = invert(raw) if inverted else raw
        return apply_attention_cfe(img, s.cfe_attenuation, s.gap_px, inverted, s.background, grow=True,
                                   pivot=s.pivot)


def run_cfe(bank_by_size: dict[str, TemplateBank], test_faces: list[np.ndarray], cfg: ExperimentConfig,
            model: HmaxModel | None = None, stim: StimulusConfig | None = None,
            cache: C2Cache | None = None) -> ExperimentReport:
    model = model or HmaxModel()
    stim = stim or StimulusConfig()
    n = cfg.cfe_faces
    if len(test_faces) < n:
        raise ExperimentError(f"composite experiment needs {n} test faces, got {len(test_faces)}")
    sizes = [s for s in cfg.sizes if s in bank_by_size]
    if not sizes:
        raise ExperimentError("no template bank for any requested tuning size")
    faces = test_faces[:n]
    design = cfe_design(n, cfg.seed)
    builder = CompositeBuilder(faces, stim)

    # every distinct stimulus once
    stimuli: dict[tuple, int] = {}
    images: list[np.ndarray] = []
    tops: dict[tuple, np.ndarray] = {}

    def stim_index(top, bottom, aligned, inverted):
        key = (top, bottom, aligned, inverted)
        if key not in stimuli:
            raw = builder.raw(top, bottom, aligned)
            tops[key] = raw[:builder.half]
            stimuli[key] = len(images)
            images.append(builder.attended(raw, inverted))
        return stimuli[key]

    plan = []  # (orientation, alignment, kind, pair, key_a, key_b)
    for orient, align in itertools.product(ORIENTATIONS, ALIGNMENTS):
        inv, al = orient == "inverted", align == "aligned"
        for p, d in enumerate(design):
            ka = (d["top"], d["bottom_a"], al, inv)
            kb = (d["top"], d["bottom_b"], al, inv)
            kd = (d["distractor_top"], d["bottom_b"], al, inv)
            for kind, k2 in (("same", kb), ("different", kd)):
                stim_index(*ka)
                stim_index(*k2)
                plan.append((orient, align, kind, p, ka, k2))

    c2 = extract(model, images, {s: bank_by_size[s] for s in sizes}, cache)

    report = ExperimentReport("cfe", trial_columns=TRIAL_COLUMNS)
    report.seeds = {"master": cfg.seed, "design": [cfg.seed, EXPERIMENT_KEYS["cfe"]]}
    idx_seed = derive_seed(cfg.seed, EXPERIMENT_KEYS["cfe"], 1)
    boot_idx = bootstrap_indices(n, cfg.cfe_boot_runs, idx_seed)
    report.seeds["bootstrap"] = idx_seed
    trial_id = 0
    thresholds = {}
    for size in sizes:
        resp = c2[size]
        dis = {}
        absdiff = {}
        for orient, align, kind, p, ka, kb in plan:
            a, b = resp[stimuli[ka]], resp[stimuli[kb]]
            dis[(orient, align, kind, p)] = float(np.sqrt(np.sum((a - b) ** 2)))
            if kind == "same":
                absdiff[(orient, align, p)] = np.abs(a - b)
        aligned_up = [dis[("upright", "aligned", "same", p)] for p in range(n)]
        theta = calibrate_threshold(aligned_up, cfg.target_hit_rate)
        thresholds[size] = theta

        for orient, align, kind, p, ka, kb in plan:
            d = dis[(orient, align, kind, p)]
            report.trials.append({
                "trial_id": trial_id, "size": size, "orientation": orient, "alignment": align,
                "kind": kind, "pair": p, "stim_a": stimuli[ka], "stim_b": stimuli[kb],
                "top_a": ka[0], "bottom_a": ka[1], "top_b": kb[0], "bottom_b": kb[1],
                "tops_identical": bool(np.array_equal(tops[ka], tops[kb])),
                "dissimilarity": d, "threshold": theta, "judged_same": bool(d < theta),
                "analyzed": kind == "same"})
            trial_id += 1

        hits = {(o, a): np.array([dis[(o, a, "same", p)] < theta for p in range(n)], dtype=float)
                for o, a in itertools.product(ORIENTATIONS, ALIGNMENTS)}
        effects = {}
        for orient in ORIENTATIONS:
            for align in ALIGNMENTS:
                res = bootstrap_mean(hits[(orient, align)], boot_idx, idx_seed)
                report.add(size, orient, align, res.estimate, res.sem, n=n, test="hit-rate",
                           threshold=theta)
            effects[orient] = hits[(orient, "misaligned")] - hits[(orient, "aligned")]
            report.add_boot(size, orient, "effect", bootstrap_mean(effects[orient], boot_idx, idx_seed), n)
        report.add_boot(size, "upright-minus-inverted", "effect",
                        bootstrap_mean(effects["upright"] - effects["inverted"], boot_idx, idx_seed), n)

        # each template on its own: does alignment make the two composites differ more?
        per_neuron = {o: np.mean([absdiff[(o, "aligned", p)] - absdiff[(o, "misaligned", p)]
                                  for p in range(n)], axis=0) for o in ORIENTATIONS}
        for label, vals in (("upright", per_neuron["upright"]),
                            ("upright-minus-inverted", per_neuron["upright"] - per_neuron["inverted"])):
            report.add(size, label, "single-neuron", float(np.mean(vals)), None,
                       _wilcoxon_or_one(vals), "wilcoxon-two-sided", len(vals), test="wilcoxon",
                       median=float(np.median(vals)), frac_positive=float(np.mean(vals > 0)),
                       p_greater=_wilcoxon_or_one(vals, "greater"))

    for s1, s2 in itertools.combinations(sizes, 2):
        e1 = _effect_vector(report, s1, n)
        e2 = _effect_vector(report, s2, n)
        report.add_boot(f"{s1}-vs-{s2}", "upright", "effect-difference",
                        bootstrap_mean(e1 - e2, boot_idx, idx_seed), n, two_sided=True)
    report.extra = {"thresholds": thresholds, "n_pairs": n, "n_stimuli": len(images),
                    "misalign_px": builder.misalign}
    return report


def _effect_vector(report: ExperimentReport, size: str, n: int) -> np.ndarray:
    """Per-pair upright effect (misaligned hit - aligned hit) rebuilt from the trial table."""
    out = np.zeros(n)
    for t in report.trials:
        if t["size"] == size and t["orientation"] == "upright" and t["kind"] == "same":
            sign = 1.0 if t["alignment"] == "misaligned" else -1.0
            out[t["pair"]] += sign * float(t["judged_same"])
    return out


def _wilcoxon_or_one(vals: np.ndarray, alternative: str = "two-sided") -> float:
    if not np.any(vals != 0):
        return 1.0
    return wilcoxon_signed_rank(vals, alternative)
