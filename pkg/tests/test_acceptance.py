"""Acceptance gate: every primary criterion at the reference scale.

100 synthetic faces (50 train / 50 test), 1000 templates per tuning size,
shipped default configuration. Each criterion prints one PASS/FAIL line.
"""

import time

import numpy as np
import pytest

from hmaxface.cli import face_set, oval_check
from hmaxface.config import load_config
from hmaxface.experiments import StimulusConfig
from hmaxface.experiments.cfe import run_cfe
from hmaxface.experiments.fie import fie_responses, run_fie_behavioral, run_fie_neural
from hmaxface.experiments.pipeline import learn_banks, prepare_faces, run_experiments
from hmaxface.experiments.wpe import run_wpe
from hmaxface.hmax import HmaxModel, c1_from_image, dissimilarity, load_bank, s1, save_bank
from hmaxface.hmax.templates import s2_response
from hmaxface.stats import bootstrap, wilcoxon_signed_rank
from hmaxface.stimulus import gen_synthetic_faces_with_regions, translate

from test_hmax import SMALL_C1, SMALL_GABOR, direct_c1
from test_stats import enumeration_p

RESULTS = {}


def record(number, title, ok, detail):
    line = f"ACCEPTANCE criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    RESULTS[number] = line
    print("\n" + line)
    return ok


def fmt(row):
    extra = f", p2={row['p_two_sided']:.3g}" if "p_two_sided" in row else ""
    return f"{row['mean']:+.3f} (p={row['p']:.3g}{extra})"


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    cfg = load_config()
    model = HmaxModel(cfg.model)
    fs, _ = face_set(cfg)
    t0 = time.time()
    learned = learn_banks(model, fs.train, cfg.experiments.sizes, cfg.n_templates, cfg.seed)
    banks = {}
    out = tmp_path_factory.mktemp("banks")
    for size, bank in learned.items():  # same float32 round trip as the command line
        save_bank(bank, out / f"{size}.bank")
        banks[size] = load_bank(out / f"{size}.bank")
    learn_s = time.time() - t0
    reports, seconds = {}, {}
    t0 = time.time()
    reports["cfe"] = run_cfe(banks, fs.test, cfg.experiments, model, cfg.stimulus)
    seconds["cfe"] = time.time() - t0 + learn_s
    t0 = time.time()
    resp = fie_responses(banks, fs.test, cfg.experiments.fie_faces, cfg.experiments.sizes, model, cfg.stimulus)
    reports["fie"] = run_fie_behavioral(banks, fs.test, cfg.experiments, model, cfg.stimulus, responses=resp)
    reports["fie-neural"] = run_fie_neural(banks, fs.test, cfg.experiments, model, cfg.stimulus, responses=resp)
    seconds["fie"] = time.time() - t0
    t0 = time.time()
    reports["wpe"] = run_wpe(banks, fs.test, cfg.experiments, fs.test_regions, model, cfg.stimulus)
    seconds["wpe"] = time.time() - t0
    return {"cfg": cfg, "model": model, "faces": fs, "banks": banks, "reports": reports, "seconds": seconds}


def test_criterion_1_cfe_direction(world):
    r = world["reports"]["cfe"]
    large = r.find("large", "upright", "effect")
    small = r.find("small", "upright", "effect")
    inv = [r.find(s, "inverted", "effect") for s in ("large", "small")]
    checks = [large["mean"] > 0 and large["p"] < 0.05,
              small["p"] > 0.05 and small["p_two_sided"] > 0.05,
              all(x["p"] > 0.05 and x["p_two_sided"] > 0.05 for x in inv),
              world["seconds"]["cfe"] < 15 * 60]
    ok = record(1, "CFE large but not small, upright only", all(checks),
                f"large {fmt(large)}, small {fmt(small)}, inverted large {fmt(inv[0])}, "
                f"inverted small {fmt(inv[1])}, runtime {world['seconds']['cfe']:.0f}s")
    assert ok


def test_criterion_2_cfe_single_neuron(world):
    row = world["reports"]["cfe"].find("large", "upright", "single-neuron")
    ok = record(2, "CFE per-template effect, large bank", row["mean"] > 0 and row["p"] < 0.05,
                f"mean {row['mean']:+.4f}, Wilcoxon p={row['p']:.3g}, N={row['n']}, "
                f"positive fraction {row['frac_positive']:.2f}")
    assert ok


def test_criterion_3_fie_behavioral_ordering(world):
    r = world["reports"]["fie"]
    eff = {s: r.find(s, condition="effect")["mean"] for s in ("large", "medium", "small")}
    parts, ok = [], eff["large"] > eff["medium"] > eff["small"]
    for cond in ("effect-difference", "coverage-effect-difference"):
        for pair in ("large-vs-medium", "large-vs-small", "medium-vs-small"):
            row = r.find(pair, condition=cond)
            ok &= row["mean"] > 0 and row["p"] < 0.05
            parts.append(f"{cond} {pair} {fmt(row)}")
    cov = {s: r.find(s, condition="coverage-effect") for s in ("large", "medium", "small")}
    ok &= cov["large"]["mean"] > cov["medium"]["mean"] > cov["small"]["mean"]
    cov_n = "/".join(str(cov[s]["n_templates"]) for s in cov)
    cov_means = "/".join(f"{cov[s]['mean']:.4f}" for s in cov)
    detail = (f"effects L/M/S {eff['large']:.4f}/{eff['medium']:.4f}/{eff['small']:.4f}; "
              f"coverage ({cov_n} templates) {cov_means}; " + "; ".join(parts))
    assert record(3, "behavioral FIE large > medium > small, with coverage control", ok, detail)


def test_criterion_4_neural_fie(world):
    r = world["reports"]["fie-neural"]
    large = r.find("large", condition="effect")
    diff = r.find("large-vs-small", condition="effect-difference")
    band = r.find("large-vs-small", condition="band-effect-difference")
    ok = (large["mean"] > 0 and large["p"] < 0.05 and diff["mean"] > 0 and diff["p"] < 0.05
          and band["mean"] > 0 and band["p"] < 0.05)
    detail = (f"large upright-inverted {fmt(large)}; large-small {fmt(diff)}; band-controlled "
              f"large-small {fmt(band)} with {r.extra['n_equalized']} templates per size "
              f"(in band: {r.extra['n_in_band']})")
    assert record(4, "neural FIE, large > small incl. response-band control", ok, detail)


def test_criterion_5_wpe(world):
    r = world["reports"]["wpe"]
    whole = r.find("large", "upright", "whole")["mean"]
    part = r.find("large", "upright", "part")["mean"]
    eff = r.find("large", "upright", "effect")
    d_up = r.find("large-vs-small", "upright", "effect-difference")
    d_sub = r.find("large-vs-small", "upright-minus-inverted", "effect-difference")
    ok = (whole > part and eff["p"] < 0.05 and d_up["mean"] > 0 and d_up["p"] < 0.05
          and d_sub["mean"] > 0 and d_sub["p"] < 0.05)
    detail = (f"large whole {whole:.3f} vs part {part:.3f}, effect {fmt(eff)}; large-small {fmt(d_up)}; "
              f"inversion-subtracted large-small {fmt(d_sub)}")
    assert record(5, "WPE whole > part, large > small", ok, detail)


def test_criterion_6_geometry(world):
    extent, ok = oval_check(world["cfg"], world["model"], world["faces"])
    assert record(6, "face oval 17x22 +/- 1 C1 units at band 7", ok, f"measured {extent[0]}x{extent[1]}")


def property_checks(world):
    """Each property suite item at full scale; returns {name: (ok, detail)}."""
    out = {}
    model, fs, banks = world["model"], world["faces"], world["banks"]
    rng = np.random.default_rng(0)

    face = fs.test[0]
    base = s1(face, model.config.gabor, scales=[10, 11, 12, 13, 14, 15])
    moved = s1(1.5 * face + 0.2, model.config.gabor, scales=[10, 11, 12, 13, 14, 15])
    err = max(float(np.max(np.abs(a - b))) for a, b in zip(base.layers, moved.layers))
    out["S1 affine invariance"] = (err <= 1e-6, f"max |diff| {err:.1e}")

    err = 0.0
    for shape in ((32, 32), (24, 30)):
        img = rng.random(shape)
        got = c1_from_image(img, SMALL_GABOR, SMALL_C1)
        err = max(err, max(float(np.max(np.abs(got.layer(b) - direct_c1(img, SMALL_GABOR, SMALL_C1, b))))
                           for b in (1, 2)))
    out["C1 brute force"] = (err <= 1e-10, f"max |diff| {err:.1e}")

    worst = 1.0
    for size, bank in banks.items():
        by_image = {}
        for t in bank.templates():
            by_image.setdefault(t.source[0], []).append(t)
        for img_idx, temps in list(by_image.items())[:10]:
            cmap = model.c1(fs.train[img_idx], bands=[bank.band])
            for t in temps:
                worst = min(worst, float(s2_response(cmap, t, bank.sigma)[t.source[1], t.source[2]]))
    out["S2 self-match"] = (worst == 1.0, f"min self response {worst!r}")

    c2 = model.c2_matrix(fs.test[:10], banks)
    lo = min(float(v.min()) for v in c2.values())
    hi = max(float(v.max()) for v in c2.values())
    out["C2 range"] = (lo > 0 and hi <= 1, f"[{lo:.3g}, {hi:.3g}]")

    rel = 0.0
    for dr, dc in ((0, 1), (1, 0), (2, 0), (0, 2), (2, 2), (-2, -1)):
        shifted = model.c2_matrix([translate(f, dr, dc, world["cfg"].stimulus.background) for f in fs.test[:10]],
                                  banks)
        rel = max(rel, max(float(np.max(np.abs(shifted[s] - c2[s]) / c2[s])) for s in banks))
    out["C2 translation stability"] = (rel < 0.05, f"max relative change {rel:.3f} over shifts <= 2 px")

    ok = True
    for _ in range(200):
        a, b, c = rng.random((3, 20))
        ok &= dissimilarity(a, a) == 0 and dissimilarity(a, b) == dissimilarity(b, a) > 0
        ok &= dissimilarity(a, c) <= dissimilarity(a, b) + dissimilarity(b, c) + 1e-12
    out["dissimilarity axioms"] = (ok, "200 random triples")

    bad = 0
    for _ in range(100):
        n = int(rng.integers(1, 11))
        d = rng.integers(-5, 6, size=n).astype(float)
        d[0] = d[0] or 1.0
        bad += wilcoxon_signed_rank(d) != pytest.approx(enumeration_p(d), abs=1e-12)
    out["Wilcoxon exact oracle"] = (bad == 0, f"{100 - bad}/100 cases agree")

    x = rng.normal(0, 1, size=40)
    res = bootstrap(x, np.mean, n_runs=10_000, seed=1)
    closed = x.std(ddof=1) / np.sqrt(x.size)
    out["bootstrap SEM"] = (abs(res.sem - closed) / closed < 0.10, f"{res.sem:.4f} vs closed form {closed:.4f}")

    raw, regions = gen_synthetic_faces_with_regions(24, 5)
    stim = StimulusConfig()
    runs = []
    for _ in range(2):
        small = prepare_faces(raw, stim, regions)
        sb = learn_banks(model, small.train, ("large", "small"), 30, 3)
        cfg = world["cfg"].experiments.__class__(cfe_faces=6, wpe_faces=4, fie_faces=8, sizes=("large", "small"),
                                                 cfe_boot_runs=100, wpe_boot_runs=100, fie_boot_runs=100,
                                                 coverage_subsets={"large": 10}, response_band=(0.3, 0.99),
                                                 seed=3)
        reps = run_experiments(["cfe", "fie", "fie-neural", "wpe"], sb, small, cfg, model, stim)
        runs.append({k: (v.rows, v.trials) for k, v in reps.items()})
    out["end-to-end reproducibility"] = (runs[0] == runs[1], "two identical seeded runs")
    return out


def test_criterion_7_property_suites(world):
    checks = property_checks(world)
    failed = [k for k, (ok, _) in checks.items() if not ok]
    detail = "; ".join(f"{k}: {'ok' if ok else 'FAILED'} ({d})" for k, (ok, d) in checks.items())
    assert record(7, "property suites", not failed, detail), f"failing: {failed}"
