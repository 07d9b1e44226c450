"""Whole-part effect: 2AFC memory for an eye region, in the whole face vs in isolation."""

from __future__ import annotations

import itertools

import numpy as np

from ..hmax.model import HmaxModel
from ..hmax.templates import TemplateBank
from ..stats import bootstrap_indices, bootstrap_mean, derive_seed
from ..stimulus.transforms import Region, apply_attention_wpe, invert, make_whole_part, pad
from .common import (EXPERIMENT_KEYS, C2Cache, ExperimentConfig, ExperimentError, ExperimentReport,
                     StimulusConfig, extract)

ORIENTATIONS = ("upright", "inverted")
CONDITIONS = ("whole", "part")
TRIAL_COLUMNS = ("trial_id", "size", "orientation", "condition", "eyes_a", "eyes_b", "base",
                 "dissimilarity_correct", "dissimilarity_foil", "score")


def shared_eye_region(regions: list[Region] | None, shape: tuple[int, int],
                      stim: StimulusConfig) -> Region:
    """One eye region for every face: the union of the per-face regions, or the configured default."""
    if regions:
        out = regions[0]
        for r in regions[1:]:
            out = out.union(r)
    else:
        top, left, bottom, right = stim.eye_region_frac
        h, w = shape
        out = Region(int(round(top * h)), int(round(left * w)),
                     int(round(bottom * h)), int(round(right * w)))
    out.check(shape)
    return out


def two_afc(d_correct: np.ndarray, d_foil: np.ndarray) -> np.ndarray:
    """1 when the correct choice is closer to the study stimulus, 0 when farther, 0.5 on ties."""
    return np.where(d_correct < d_foil, 1.0, np.where(d_correct > d_foil, 0.0, 0.5))


def run_wpe(bank_by_size: dict[str, TemplateBank], test_faces: list[np.ndarray], cfg: ExperimentConfig,
            eye_regions: list[Region] | None = None, model: HmaxModel | None = None,
            stim: StimulusConfig | None = None, cache: C2Cache | None = None) -> ExperimentReport:
    model = model or HmaxModel()
    stim = stim or StimulusConfig()
    n = cfg.wpe_faces
    if n < 3:
        raise ExperimentError("whole-part trials need at least 3 faces")
    if len(test_faces) < n:
        raise ExperimentError(f"whole-part experiment needs {n} test faces, got {len(test_faces)}")
    sizes = [s for s in cfg.sizes if s in bank_by_size]
    if not sizes:
        raise ExperimentError("no template bank for any requested tuning size")
    m, bg = stim.margin_px, stim.background
    region = shared_eye_region(eye_regions[:n] if eye_regions else None, test_faces[0].shape, stim)
    faces = [pad(f, m, m, m, m, bg) for f in test_faces[:n]]
    region = region.shifted(m, m)
    height = faces[0].shape[0]

    # per orientation: study (unattended whole), attended whole, attended part, for each (eyes, base)
    combos = [(a, b) for a in range(n) for b in range(n) if a != b]
    slot = {c: i for i, c in enumerate(combos)}
    images = []
    for orient in ORIENTATIONS:
        inv = orient == "inverted"
        reg = region.flipped(height) if inv else region
        for eyes, base in combos:
            whole, part = make_whole_part(faces[eyes], faces[base], region, stim.feather_px, bg)
            if inv:
                whole, part = invert(whole), invert(part)
            images.append(whole)
            images.append(apply_attention_wpe(whole, reg, stim.wpe_attenuation, bg, grow=True, pivot=stim.pivot))
            images.append(apply_attention_wpe(part, reg, stim.wpe_attenuation, bg, grow=True, pivot=stim.pivot))
    c2 = extract(model, images, {s: bank_by_size[s] for s in sizes}, cache)

    report = ExperimentReport("wpe", trial_columns=TRIAL_COLUMNS)
    idx_seed = derive_seed(cfg.seed, EXPERIMENT_KEYS["wpe"], 1)
    boot_idx = bootstrap_indices(n, cfg.wpe_boot_runs, idx_seed)
    report.seeds = {"master": cfg.seed, "bootstrap": idx_seed}
    triples = [(a, b, base) for a, b, base in itertools.permutations(range(n), 3)]
    ta = np.array([t[0] for t in triples])
    tb = np.array([t[1] for t in triples])
    tbase = np.array([t[2] for t in triples])
    trial_id = 0
    per_base = {}
    for size in sizes:
        resp = c2[size]
        for oi, orient in enumerate(ORIENTATIONS):
            block = resp[oi * 3 * len(combos):(oi + 1) * 3 * len(combos)].reshape(len(combos), 3, -1)
            study, whole_att, part_att = block[:, 0], block[:, 1], block[:, 2]
            s_idx = np.array([slot[(a, base)] for a, base in zip(ta, tbase)])
            f_idx = np.array([slot[(b, base)] for b, base in zip(tb, tbase)])
            for cond, test in (("whole", whole_att), ("part", part_att)):
                d_ok = np.linalg.norm(study[s_idx] - test[s_idx], axis=1)
                d_foil = np.linalg.norm(study[s_idx] - test[f_idx], axis=1)
                score = two_afc(d_ok, d_foil)
                acc = np.bincount(tbase, weights=score, minlength=n) / np.bincount(tbase, minlength=n)
                per_base[(size, orient, cond)] = acc
                for t, (a, b, base) in enumerate(triples):
                    report.trials.append({"trial_id": trial_id, "size": size, "orientation": orient,
                                          "condition": cond, "eyes_a": a, "eyes_b": b, "base": base,
                                          "dissimilarity_correct": float(d_ok[t]),
                                          "dissimilarity_foil": float(d_foil[t]),
                                          "score": float(score[t])})
                    trial_id += 1
                res = bootstrap_mean(acc, boot_idx, idx_seed)
                report.add(size, orient, cond, res.estimate, res.sem, n=len(triples), test="accuracy")
            eff = per_base[(size, orient, "whole")] - per_base[(size, orient, "part")]
            report.add_boot(size, orient, "effect", bootstrap_mean(eff, boot_idx, idx_seed), n)
        report.add_boot(size, "upright-minus-inverted", "effect",
                        bootstrap_mean(_effect(per_base, size, "upright") - _effect(per_base, size, "inverted"),
                                       boot_idx, idx_seed), n)
    for s1, s2 in itertools.combinations(sizes, 2):
        for orient in ("upright", "upright-minus-inverted"):
            diff = _effect(per_base, s1, orient) - _effect(per_base, s2, orient)
            report.add_boot(f"{s1}-vs-{s2}", orient, "effect-difference",
                            bootstrap_mean(diff, boot_idx, idx_seed), n, two_sided=True)
    report.extra = {"n_faces": n, "n_trials_per_condition": len(triples),
                    "eye_region": region.as_dict()}
    return report


def _effect(per_base: dict, size: str, orient: str) -> np.ndarray:
    if orient == "upright-minus-inverted":
        return _effect(per_base, size, "upright") - _effect(per_base, size, "inverted")
    return per_base[(size, orient, "whole")] - per_base[(size, orient, "part")]
