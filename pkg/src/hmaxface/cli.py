"""Command-line interface.

    hmaxface gen-faces --count 100 --out faces/
    hmaxface learn --size all
    hmaxface run all --emit-plot
    hmaxface verify

Exit codes: 0 success, 1 runtime failure (including failed checks under
--strict and by `verify`), 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, config_summary, load_config
from .experiments.common import ExperimentError, ExperimentReport
from .experiments.pipeline import EXPERIMENTS, FaceSet, learn_banks, prepare_faces, run_experiments
from .hmax.layers import ModelError, oval_extent
from .hmax.model import HmaxModel
from .hmax.storage import C2CacheDir, load_bank, save_bank, verify_bank
from .hmax.templates import SIZE_CLASSES, TemplateBank
from .stats import RNG_ALGORITHM
from .stimulus.io import ImageLoadError, image_files, load_images, write_pgm
from .stimulus.synthetic import gen_synthetic_faces_with_regions
from .stimulus.transforms import Region, StimulusError, invert

log = logging.getLogger("hmaxface")

OVAL_TARGET = (17, 22)
OVAL_TOLERANCE = 1


class UsageError(Exception):
    pass


class CheckFailed(Exception):
    pass


# ---------- inputs ----------

def raw_faces(cfg: RunConfig) -> tuple[list[np.ndarray], list[Region] | None, dict]:
    """Original-resolution faces, their eye regions (if known), and a provenance record."""
    if cfg.faces_dir:
        files = image_files(cfg.faces_dir)
        faces = load_images(cfg.faces_dir)
        regions = None
        manifest = Path(cfg.faces_dir) / "manifest.json"
        if cfg.eye_regions:
            spec = json.loads(Path(cfg.eye_regions).read_text())
        elif manifest.exists():
            by_name = {e["file"]: e["eye_region"] for e in json.loads(manifest.read_text())["faces"]}
            spec = [by_name[f.name] for f in files] if all(f.name in by_name for f in files) else None
        else:
            spec = None
        if spec is not None:
            if len(spec) != len(faces):
                raise UsageError(f"{cfg.eye_regions}: {len(spec)} eye regions for {len(faces)} faces")
            regions = [Region(**r) for r in spec]
        return faces, regions, {"source": "directory", "path": cfg.faces_dir,
                                "files": [f.name for f in files]}
    syn = cfg.synthetic
    faces, regions = gen_synthetic_faces_with_regions(syn.count, cfg.seed, syn.canvas, syn.style)
    return faces, regions, {"source": "synthetic", "seed": cfg.seed, "count": syn.count,
                            "canvas": list(syn.canvas)}


def face_set(cfg: RunConfig) -> tuple[FaceSet, dict]:
    faces, regions, info = raw_faces(cfg)
    return prepare_faces(faces, cfg.stimulus, regions), info


def bank_path(out: Path, size: str) -> Path:
    return out / "banks" / f"{size}.bank"


def stored_banks(cfg: RunConfig, model: HmaxModel, sizes) -> dict[str, TemplateBank]:
    """Banks saved by `learn`; every missing or mismatched size is reported at once."""
    out = Path(cfg.out_dir)
    banks, missing = {}, []
    for size in sizes:
        path = bank_path(out, size)
        if not path.exists():
            missing.append(f"{path} (missing)")
            continue
        bank = load_bank(path)
        try:
            model.check_bank(bank)
        except ModelError as exc:
            missing.append(f"{path} ({exc})")
            continue
        banks[size] = bank
    if missing:
        raise UsageError("template banks unavailable; run `learn` (or pass --learn):\n  "
                         + "\n  ".join(missing))
    return banks


def get_banks(cfg: RunConfig, model: HmaxModel, fs: FaceSet, sizes, n: int | None = None,
              relearn: bool = False) -> dict[str, TemplateBank]:
    """Banks from <out>/banks when they match the config, learned (and saved) otherwise.

    Banks are always used as read back from disk (float32 patches), so a run
    that learns and a run that reloads see identical templates.
    """
    out = Path(cfg.out_dir)
    n = cfg.n_templates if n is None else n
    banks = {}
    for size in sizes:
        path = bank_path(out, size)
        if path.exists() and not relearn:
            bank = load_bank(path)
            if (bank.config_hash == model.config.hash and bank.band == model.config.band
                    and len(bank) == n and bank.sigma == model.config.sigma):
                banks[size] = bank
                continue
            log.info("stored %s bank does not match the config; relearning", size)
        t0 = time.time()
        learned = learn_banks(model, fs.train, [size], n, cfg.seed)[size]
        save_bank(learned, path)
        banks[size] = load_bank(path)
        log.info("learned %d %s templates in %.1fs -> %s", n, size, time.time() - t0, path)
    return banks


# ---------- outputs ----------

REPORT_COLUMNS = ("experiment", "size", "orientation", "condition", "mean", "sem", "p", "p_kind", "n",
                  "test")


def write_report(report: ExperimentReport, directory: Path, extra: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "report.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, REPORT_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for row in report.rows:
            w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in REPORT_COLUMNS})
    with open(directory / "trials.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, report.trial_columns)
        w.writeheader()
        w.writerows(report.trials)
    doc = report.as_dict()
    doc.update(extra)
    (directory / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable))


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, tuple)):
        return list(obj)
    return str(obj)


def summary_lines(report: ExperimentReport) -> list[str]:
    lines = [f"{'size':<16} {'orientation':<24} {'condition':<28} {'mean':>9} {'sem':>8} {'p':>9}  note"]
    for r in report.rows:
        sem = "" if r["sem"] is None else f"{r['sem']:.4f}"
        p = "" if r["p"] is None else ("<=" if r.get("p_floored") else "") + f"{r['p']:.3g}"
        note = f"templates={r['n_templates']}" if "n_templates" in r else ""
        lines.append(f"{r['size']:<16} {r['orientation']:<24} {r['condition']:<28} "
                     f"{r['mean']:>9.4f} {sem:>8} {p:>9}  {note}".rstrip())
    return lines


def plot_report(report: ExperimentReport, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = [r for r in report.rows
            if r["condition"] in ("effect", "band-effect", "coverage-effect")
            and r["size"] in SIZE_CLASSES]
    groups = sorted({(r["orientation"], r["condition"]) for r in rows})
    sizes = [s for s in ("large", "medium", "small") if any(r["size"] == s for r in rows)]
    fig, ax = plt.subplots(figsize=(1.6 + 1.4 * len(groups), 3.2))
    width = 0.8 / max(len(sizes), 1)
    for i, size in enumerate(sizes):
        vals, errs = [], []
        for g in groups:
            hit = [r for r in rows if r["size"] == size and (r["orientation"], r["condition"]) == g]
            vals.append(hit[0]["mean"] if hit else np.nan)
            errs.append(hit[0]["sem"] or 0.0 if hit else 0.0)
        ax.bar(np.arange(len(groups)) + i * width, vals, width, yerr=errs, capsize=2, label=size)
    ax.set_xticks(np.arange(len(groups)) + width * (len(sizes) - 1) / 2)
    ax.set_xticklabels([f"{o}\n{c}" for o, c in groups], fontsize=7)
    ax.axhline(0, color="k", lw=0.6)
    ax.set_ylabel("effect")
    ax.set_title(report.experiment)
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# ---------- commands ----------

def cmd_gen_faces(args, cfg: RunConfig) -> int:
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    out = Path(args.out or Path(cfg.out_dir) / "faces")
    out.mkdir(parents=True, exist_ok=True)
    syn = cfg.synthetic
    faces, regions = gen_synthetic_faces_with_regions(args.count, cfg.seed, syn.canvas, syn.style)
    width = max(3, len(str(args.count - 1)))
    entries = []
    for i, (img, reg) in enumerate(zip(faces, regions)):
        name = f"face_{i:0{width}d}.pgm"
        write_pgm(out / name, img)
        entries.append({"id": i, "file": name, "eye_region": reg.as_dict()})
    manifest = {"seed": cfg.seed, "config_digest": cfg.digest, "count": args.count, "canvas": list(syn.canvas),
                "style": syn.style.__dict__, "faces": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (out / "eye_regions.json").write_text(json.dumps([e["eye_region"] for e in entries]) + "\n")
    print(f"wrote {args.count} faces to {out}")
    return 0


def cmd_prep(args, cfg: RunConfig) -> int:
    fs, info = face_set(cfg)
    out = Path(cfg.out_dir) / "prepared"
    out.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(out / "faces.npz", train=np.stack(fs.train), test=np.stack(fs.test))
    if info["source"] == "directory":
        names = [Path(f).stem for f in info["files"]]
    else:
        names = [f"face_{i:03d}" for i in range(info["count"])]
    test_names = names[1::2]
    # derived stimuli are named <base>__<transform-chain>.pgm
    for name, img in list(zip(test_names, fs.test))[:args.previews]:
        write_pgm(out / f"{name}__prep.pgm", img)
        write_pgm(out / f"{name}__prep__invert.pgm", invert(img))
    shape = fs.test[0].shape
    print(f"{len(fs.train)} training and {len(fs.test)} test faces of {shape[0]}x{shape[1]} "
          f"({info['source']}) -> {out}")
    return 0


def oval_check(cfg: RunConfig, model: HmaxModel, fs: FaceSet) -> tuple[tuple[int, int], bool]:
    shape = fs.test[0].shape
    cmap = model.c1(fs.test[0], bands=[model.config.band])
    extent = oval_extent(cmap, cfg.stimulus.oval(shape), model.config.band)
    ok = all(abs(a - b) <= OVAL_TOLERANCE for a, b in zip(extent, OVAL_TARGET))
    return extent, ok


def cmd_learn(args, cfg: RunConfig) -> int:
    model = HmaxModel(cfg.model)
    fs, _ = face_set(cfg)
    extent, ok = oval_check(cfg, model, fs)
    msg = (f"face oval spans {extent[0]}x{extent[1]} C1 units at band {model.config.band} "
           f"(target {OVAL_TARGET[0]}x{OVAL_TARGET[1]} +/- {OVAL_TOLERANCE})")
    if not ok:
        if args.strict:
            raise CheckFailed(msg)
        log.warning(msg)
    else:
        print(msg)
    sizes = list(SIZE_CLASSES) if args.size == "all" else [args.size]
    banks = get_banks(cfg, model, fs, sizes, args.n, relearn=True)
    for size, bank in banks.items():
        print(f"{size:<7} {len(bank)} templates  k={bank.k}  band={bank.band}  hash={bank.hash}")
    return 0


def cmd_extract(args, cfg: RunConfig) -> int:
    from .experiments.fie import fie_responses
    model = HmaxModel(cfg.model)
    fs, _ = face_set(cfg)
    banks = stored_banks(cfg, model, cfg.experiments.sizes)
    cache = C2CacheDir(Path(cfg.out_dir) / "cache")
    n = min(len(fs.test), cfg.experiments.fie_faces)
    resp = fie_responses(banks, fs.test, n, cfg.experiments.sizes, model, cfg.stimulus, cache)
    cache.flush()
    for size, r in resp.items():
        print(f"{size:<7} upright mean C2 {r['upright'].mean():.4f}  inverted {r['inverted'].mean():.4f}")
    return 0


def cmd_run(args, cfg: RunConfig) -> int:
    names = list(EXPERIMENTS) if args.experiment == "all" else [args.experiment]
    model = HmaxModel(cfg.model)
    fs, info = face_set(cfg)
    if args.learn:
        banks = get_banks(cfg, model, fs, cfg.experiments.sizes)
    else:
        banks = stored_banks(cfg, model, cfg.experiments.sizes)
    cache = C2CacheDir(Path(cfg.out_dir) / "cache") if args.cache else None
    out = Path(cfg.out_dir)
    extra = {"config": config_summary(cfg), "faces": info, "rng": RNG_ALGORITHM,
             "banks": {s: {"hash": b.hash, "n_templates": len(b)} for s, b in banks.items()}}
    for name in names:
        t0 = time.time()
        report = run_experiments([name], banks, fs, cfg.experiments, model, cfg.stimulus, cache)[name]
        if cache is not None:
            cache.flush()
        report.config = extra["config"]
        directory = out / name
        write_report(report, directory, {k: v for k, v in extra.items() if k != "config"})
        if args.emit_plot:
            plot_report(report, directory / "effects.svg")
        print(f"== {name} ({time.time() - t0:.1f}s) -> {directory}")
        print("\n".join(summary_lines(report)))
    return 0


def cmd_verify(args, cfg: RunConfig) -> int:
    directory = Path(args.banks or Path(cfg.out_dir) / "banks")
    files = sorted(directory.glob("*.bank"))
    if not files:
        raise UsageError(f"no .bank files in {directory}")
    model = HmaxModel(cfg.model)
    problems = []
    for f in files:
        found = verify_bank(f)
        if not found:
            bank = load_bank(f)
            try:
                model.check_bank(bank)
            except ModelError as exc:
                found.append(f"{f}: {exc}")
        problems += found
        print(f"{f.name}: {'OK' if not found else 'FAILED'}")
    for p in problems:
        print("  " + p)
    if problems:
        raise CheckFailed(f"{len(problems)} problem(s) found")
    return 0


def cmd_calibrate(args, cfg: RunConfig) -> int:
    """Mean C2 response of a template bank to upright test faces for several tuning widths."""
    from dataclasses import replace
    fs, _ = face_set(cfg)
    base = HmaxModel(cfg.model)
    n_faces = min(args.faces_used, len(fs.test))
    bank = learn_banks(base, fs.train, [args.size], args.n, cfg.seed)[args.size]
    lo, hi = cfg.experiments.response_band
    print(f"{'sigma':>7} {'mean':>7} {'in band':>8}")
    for sigma in args.sigma:
        model = HmaxModel(replace(cfg.model, sigma=sigma))
        b = TemplateBank(bank.size_class, bank.band, bank.patches, bank.sources, sigma, bank.config_hash)
        resp = model.c2_matrix(fs.test[:n_faces], {"b": b})["b"].mean(axis=0)
        inside = int(np.sum((resp >= lo) & (resp <= hi)))
        print(f"{sigma:>7.3f} {resp.mean():>7.4f} {inside:>8}")
    return 0


# ---------- entry point ----------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file overriding the shipped defaults")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides paths.out_dir)")
    common.add_argument("--faces", help="directory of face images (default: synthetic faces)")
    common.add_argument("--sizes", help="comma-separated tuning sizes, e.g. large,small")
    common.add_argument("--strict", action="store_true", help="turn calibration warnings into failures")
    common.add_argument("--emit-plot", action="store_true", help="write an SVG effect plot per experiment")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hmaxface", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-faces", parents=[common], help="write synthetic faces as PGM + manifest")
    g.add_argument("--count", type=int, default=100)
    g.set_defaults(func=cmd_gen_faces)

    pr = sub.add_parser("prep", parents=[common], help="preprocess faces and split train/test")
    pr.add_argument("--previews", type=int, default=4, help="test faces to also write as PGM")
    pr.set_defaults(func=cmd_prep)

    le = sub.add_parser("learn", parents=[common], help="learn template banks from training faces")
    le.add_argument("--size", choices=[*SIZE_CLASSES, "all"], default="all")
    le.add_argument("--n", type=int, help="templates per bank (default: model.n_templates)")
    le.add_argument("--band", type=int, help="C1 band to learn at (default: model.band)")
    le.set_defaults(func=cmd_learn)

    ex = sub.add_parser("extract", parents=[common], help="cache C2 responses of the test faces")
    ex.set_defaults(func=cmd_extract)

    ru = sub.add_parser("run", parents=[common], help="run experiments and write reports")
    ru.add_argument("experiment", choices=[*EXPERIMENTS, "all"])
    ru.add_argument("--cache", action="store_true", help="reuse/store C2 rows under <out>/cache")
    ru.add_argument("--learn", action="store_true", help="learn banks that are missing or stale")
    ru.set_defaults(func=cmd_run)

    ve = sub.add_parser("verify", parents=[common], help="re-check bank files against their sidecars")
    ve.add_argument("--banks", help="directory of .bank files (default: <out>/banks)")
    ve.set_defaults(func=cmd_verify)

    ca = sub.add_parser("calibrate", parents=[common], help="mean template response for several sigmas")
    ca.add_argument("--size", choices=list(SIZE_CLASSES), default="large")
    ca.add_argument("--n", type=int, default=300)
    ca.add_argument("--faces-used", type=int, default=20)
    ca.add_argument("--sigma", type=float, nargs="+", default=[0.08, 0.10, 0.12, 0.15, 0.2, 0.5])
    ca.set_defaults(func=cmd_calibrate)
    return p


def resolve_config(args) -> RunConfig:
    over: dict = {}
    if args.seed is not None:
        over["seed"] = args.seed
    paths = {}
    if args.out:
        paths["out_dir"] = args.out
    if args.faces:
        paths["faces_dir"] = args.faces
    if paths:
        over["paths"] = paths
    model = {}
    if getattr(args, "band", None) is not None:
        model["band"] = args.band
    if getattr(args, "n", None) is not None and args.command == "learn":
        model["n_templates"] = args.n
    if args.sizes:
        model["sizes"] = [s.strip() for s in args.sizes.split(",") if s.strip()]
    if model:
        over["model"] = model
    return load_config(args.config, over)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ConfigError, ImageLoadError, StimulusError, ModelError, ExperimentError,
            FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
