"""Command-line front end: ``sketchseg augment | transport | eval | scale-analysis``.

Exit codes: 0 success, 2 bad configuration, 3 I/O failure, 4 empty result.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .augment import AugmentConfig, augment_sketch, variant_distortion
from .errors import EmptySketch, UnsupportedFormat
from .metrics import (
    LowessConfig,
    MetricsReport,
    SizeFilter,
    aggregate,
    bin_points,
    eval_sample,
    filter_by_size,
    lowess_fit,
    records_from_csv,
    records_to_csv,
    saliency_suite,
)
from .plotting import eval_figure, save_figure, scale_analysis_figure
from .raster import GrayRaster, binarize, load_gray, save_gray, save_mask
from .skeleton import MIN_BLOCK_SIZE
from .transport import (
    FeatureMatrix,
    Marginals,
    ScoreStack,
    SinkhornConfig,
    cosine_scores,
    cost_from_scores,
    extract_patch_features,
    mpt_aggregate,
    sinkhorn,
    stroke_pooled_features,
    upsample_scoremap,
)

log = logging.getLogger("sketchseg")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_EMPTY = 0, 2, 3, 4


class ConfigError(Exception):
    pass


class EmptyResult(Exception):
    pass


# ---------------------------------------------------------------------------
# option plumbing

# (dest, type, default, help) per command; defaults live here, not in argparse,
# so that a JSON config can sit between the two.
COMMON = [
    ("seed", int, 0, "base seed (unsigned 64-bit)"),
    ("threads", str, "1", "worker threads, or 'auto'"),
    ("out", str, "out", "output directory"),
]
OPTIONS = {
    "augment": [
        ("input", str, None, "directory of sketch PNGs"),
        ("variants", int, 5, "variants per sketch"),
        ("perturb_k", float, 10.0, "displacement step K"),
        ("perturb_c", int, 10, "row bucket size C"),
        ("block_size", int, 32, "tiling block edge in pixels"),
        ("thickness", int, 3, "pen width used to redraw strokes"),
        ("threshold", int, 128, "binarization threshold"),
        ("min_pixels", int, 10, "smallest skeleton component that is fitted"),
        ("interval", int, 10, "skeleton sampling interval"),
    ],
    "transport": [
        ("image", str, None, "image PNG"),
        ("sketches", list, None, "one or more sketch PNGs"),
        ("epsilon", float, 0.05, "entropy regularization"),
        ("max_iter", int, 50, "Sinkhorn iteration cap"),
        ("tolerance", float, 1e-4, "stopping tolerance on the column potential"),
        ("grid", int, 16, "feature grid cells per side"),
        ("threshold", int, 128, "sketch binarization threshold"),
    ],
    "eval": [
        ("pred", str, None, "directory of predicted mask PNGs"),
        ("gt", str, None, "directory of ground-truth mask PNGs"),
        ("threshold", int, 128, "mask binarization threshold"),
    ],
    "scale-analysis": [
        ("csv", str, None, "per-sample CSV written by 'eval'"),
        ("frac", float, 0.2, "LOWESS neighborhood fraction"),
        ("bin_size", int, 2000, "bin width in pixels"),
        ("samples_per_bin", int, 1, "points kept per bin"),
        ("size_filter", list, None, "list of [min_px, max_px|null, min_iou] (config only)"),
    ],
}
POSITIONAL = {"augment": ["input"], "transport": ["image", "sketches"], "eval": ["pred", "gt"], "scale-analysis": ["csv"]}
CONFIG_ONLY = {"size_filter"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sketchseg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in OPTIONS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file of option values; flags win")
        for dest, typ, _default, hlp in COMMON + opts:
            if dest in CONFIG_ONLY:
                continue
            if dest in POSITIONAL[name]:
                nargs = "*" if typ is list else "?"
                p.add_argument(dest, nargs=nargs, default=None, help=hlp)
                continue
            flag = "--" + dest.replace("_", "-")
            p.add_argument(flag, dest=dest, type=str if dest == "threads" else typ, default=None, help=hlp)
    return parser


def _coerce(dest: str, typ, value):
    if typ is list:
        if not isinstance(value, list):
            raise ConfigError(f"{dest}: expected a list")
        return value
    if typ is int and (isinstance(value, bool) or not isinstance(value, int)):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(f"{dest}: expected an integer, got {value!r}")
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{dest}: expected a number, got {value!r}")
        return float(value)
    if typ is str and not isinstance(value, str):
        if dest == "threads" and isinstance(value, int):
            return str(value)
        raise ConfigError(f"{dest}: expected a string, got {value!r}")
    return value


def resolve_options(args: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then the JSON config, then explicit flags."""
    table = COMMON + OPTIONS[args.command]
    opts = {dest: default for dest, _t, default, _h in table}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        types = {dest: typ for dest, typ, _d, _h in table}
        for key, value in cfg.items():
            dest = key.replace("-", "_")
            if dest not in types:
                raise ConfigError(f"unknown config key {key!r} for '{args.command}'")
            opts[dest] = _coerce(dest, types[dest], value)
    for dest, _t, _d, _h in table:
        value = getattr(args, dest, None)
        if value is not None and value != []:
            opts[dest] = value

    for dest in POSITIONAL[args.command]:
        if not opts.get(dest):
            raise ConfigError(f"missing required input '{dest}'")
    seed = opts["seed"]
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    opts["threads"] = _threads(opts["threads"])
    return opts


def _threads(value: str) -> int:
    if str(value) == "auto":
        return os.cpu_count() or 1
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"threads must be a positive integer or 'auto', got {value!r}") from None
    if n < 1:
        raise ConfigError("threads must be positive")
    return n


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _num(x: float) -> str:
    return repr(float(x))


def _out_dir(opts) -> Path:
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _list_pngs(directory: str) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() == ".png" and p.is_file())


# ---------------------------------------------------------------------------
# augment


def file_seed(seed: int, name: str) -> int:
    """Per-file seed so results do not depend on scheduling or file count."""
    ss = np.random.SeedSequence([seed, zlib.crc32(name.encode("utf-8"))])
    return int(ss.generate_state(1, np.uint64)[0])


def _augment_config(opts) -> AugmentConfig:
    if opts["block_size"] < MIN_BLOCK_SIZE:
        raise ConfigError(f"block_size must be at least {MIN_BLOCK_SIZE}")
    if opts["variants"] < 1:
        raise ConfigError("variants must be positive")
    if opts["perturb_c"] < 1 or opts["perturb_k"] < 0:
        raise ConfigError("perturb_c must be positive and perturb_k nonnegative")
    try:
        return AugmentConfig.with_seed(
            opts["seed"],
            C=opts["perturb_c"],
            K_step=opts["perturb_k"],
            num_variants=opts["variants"],
            binarize_threshold=opts["threshold"],
            block_size=opts["block_size"],
            min_component_pixels=opts["min_pixels"],
            sample_interval=opts["interval"],
            render_thickness=opts["thickness"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _augment_one(path: Path, base: AugmentConfig, out: Path) -> dict:
    entry: dict[str, Any] = {"input": path.name}
    try:
        img = load_gray(path)
    except (UnsupportedFormat, OSError) as exc:
        entry.update(status="unreadable", error=str(exc), variants=[])
        return entry
    seed = file_seed(base.perturb.seed, path.name)
    cfg = AugmentConfig.with_seed(
        seed,
        **{k: v for k, v in asdict(base).items() if k != "perturb"},
        C=base.perturb.C,
        K_step=base.perturb.K_step,
        num_variants=base.perturb.num_variants,
    )
    original = binarize(img, cfg.binarize_threshold)
    entry["file_seed"] = seed
    try:
        variants = augment_sketch(original, cfg)
    except EmptySketch as exc:
        entry.update(status="empty_sketch", error=str(exc), variants=[])
        return entry
    records = []
    for i, var in enumerate(variants, start=1):
        name = f"{path.stem}_v{i}.png"
        save_mask(var, out / name)
        records.append({"file": name, "distortion_iou": variant_distortion(original, var)})
    entry.update(status="ok", variants=records)
    return entry


def cmd_augment(opts) -> int:
    cfg = _augment_config(opts)
    files = _list_pngs(opts["input"])
    out = _out_dir(opts)
    with ThreadPoolExecutor(max_workers=opts["threads"]) as pool:
        entries = list(pool.map(lambda p: _augment_one(p, cfg, out), files))
    manifest = {
        "command": "augment",
        "input": str(opts["input"]),
        "seed": opts["seed"],
        "config": {
            "variants": opts["variants"],
            "perturb_k": opts["perturb_k"],
            "perturb_c": opts["perturb_c"],
            "block_size": opts["block_size"],
            "thickness": opts["thickness"],
            "threshold": opts["threshold"],
            "min_pixels": opts["min_pixels"],
            "interval": opts["interval"],
        },
        "files": entries,
    }
    _write_json(out / "manifest.json", manifest)
    bad = [e["input"] for e in entries if e["status"] == "unreadable"]
    for e in entries:
        if e["status"] != "ok":
            log.warning("%s: %s", e["input"], e.get("error", e["status"]))
    return EXIT_IO if bad else EXIT_OK


# ---------------------------------------------------------------------------
# transport


def _scaled(f: FeatureMatrix) -> FeatureMatrix:
    # intensity components to [0, 1] so they are commensurate with the positions
    v = f.values.copy()
    v[:, :2] /= 255.0
    return FeatureMatrix(v)


def cmd_transport(opts) -> int:
    sk_cfg = SinkhornConfig(epsilon=opts["epsilon"], max_iter=opts["max_iter"], tolerance=opts["tolerance"])
    grid = (opts["grid"], opts["grid"])
    image = load_gray(opts["image"])
    sketches = [load_gray(p) for p in opts["sketches"]]
    for path, sk in zip(opts["sketches"], sketches):
        if sk.shape != image.shape:
            raise ConfigError(f"{path}: sketch size {sk.shape} differs from image {image.shape}")
    try:
        feats = extract_patch_features(image, grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    prompts = np.vstack(
        [stroke_pooled_features(feats, binarize(sk, opts["threshold"]), grid).values for sk in sketches]
    )
    feats, prompts = _scaled(feats), _scaled(FeatureMatrix(prompts))
    scores = cosine_scores(feats, prompts)
    cost = cost_from_scores(scores)
    plan = sinkhorn(cost, Marginals.uniform(cost.n, cost.m), sk_cfg)
    agg = mpt_aggregate(plan, ScoreStack(scores, num_prompts=len(sketches)))
    maps = upsample_scoremap(agg.reshape(grid[0], grid[1], len(sketches)), image.shape)

    out = _out_dir(opts)
    names = []
    for k in range(maps.shape[2]):
        m = maps[:, :, k]
        lo, hi = m.min(), m.max()
        norm = (m - lo) / (hi - lo) if hi > lo else np.zeros_like(m)
        name = f"heatmap_p{k + 1}.png"
        save_gray(GrayRaster(np.rint(norm * 255)), out / name)
        names.append(name)
    report = {
        "command": "transport",
        "image": str(opts["image"]),
        "sketches": [str(s) for s in opts["sketches"]],
        "grid": list(grid),
        "epsilon": sk_cfg.epsilon,
        "max_iter": sk_cfg.max_iter,
        "tolerance": sk_cfg.tolerance,
        "achieved_cost": plan.achieved_cost,
        "iterations_used": plan.iterations_used,
        "converged": plan.converged,
        "row_error": plan.row_error,
        "col_error": plan.col_error,
        "marginal_error": plan.marginal_error,
        "heatmaps": names,
        "aggregated_score_range": [[float(agg[:, k].min()), float(agg[:, k].max())] for k in range(agg.shape[1])],
    }
    _write_json(out / "transport.json", report)
    if not plan.converged:
        log.warning("Sinkhorn stopped at max_iter=%d without meeting tolerance", sk_cfg.max_iter)
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _eval_pair(pred_path: Path, gt_path: Path, threshold: int):
    pred_img, gt_img = load_gray(pred_path), load_gray(gt_path)
    if pred_img.shape != gt_img.shape:
        raise ConfigError(f"{pred_path.name}: prediction {pred_img.shape} vs ground truth {gt_img.shape}")
    gt = binarize(gt_img, threshold)
    record = eval_sample(binarize(pred_img, threshold), gt, pred_path.stem)
    suite = saliency_suite(pred_img.pixels / 255.0, gt)
    return record, suite


def cmd_eval(opts) -> int:
    preds = {p.name: p for p in _list_pngs(opts["pred"])}
    gts = {p.name: p for p in _list_pngs(opts["gt"])}
    matched = sorted(preds.keys() & gts.keys())
    unmatched = sorted(preds.keys() ^ gts.keys())
    for name in unmatched:
        log.warning("no counterpart for %s; skipped", name)
    if not matched:
        raise EmptyResult("no prediction/ground-truth pairs matched by filename")

    with ThreadPoolExecutor(max_workers=opts["threads"]) as pool:
        results = list(pool.map(lambda n: _eval_pair(preds[n], gts[n], opts["threshold"]), matched))
    records = [r for r, _ in results]
    suites = np.array([s for _, s in results])
    base = aggregate(records)
    s_m, e_m, wf, mae = (float(v) for v in suites.mean(axis=0))
    report = MetricsReport(base.oiou, base.miou, base.p_at, base.count, s_m, e_m, wf, mae)

    out = _out_dir(opts)
    (out / "per_sample.csv").write_text(records_to_csv(records), encoding="utf-8", newline="")
    summary = report.to_dict()
    summary.update(command="eval", unmatched=unmatched, threshold=opts["threshold"])
    _write_json(out / "summary.json", summary)
    save_figure(eval_figure([r.iou for r in records], report.p_at), out / "eval.png")
    return EXIT_OK


# ---------------------------------------------------------------------------
# scale analysis


def _size_filter(raw) -> SizeFilter | None:
    if raw is None:
        return None
    ranges = []
    for item in raw:
        if not (isinstance(item, list) and len(item) == 3):
            raise ConfigError("size_filter entries must be [min_px, max_px|null, min_iou]")
        lo, hi, iou = item
        ranges.append((int(lo), None if hi is None else int(hi), float(iou)))
    return SizeFilter(tuple(ranges))


def cmd_scale_analysis(opts) -> int:
    try:
        cfg = LowessConfig(frac=opts["frac"], bin_size=opts["bin_size"], samples_per_bin=opts["samples_per_bin"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    size_filter = _size_filter(opts["size_filter"])
    text = Path(opts["csv"]).read_text(encoding="utf-8")
    try:
        records = records_from_csv(text)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{opts['csv']}: malformed per-sample CSV ({exc})") from exc
    records = filter_by_size(records, size_filter)
    if not records:
        raise EmptyResult("no samples to analyse")

    raw = np.array([(r.gt_pixels, r.iou) for r in records], dtype=float)
    binned = bin_points(raw, cfg)
    if len(np.unique(binned[:, 0])) < 2:
        # a single distinct size: the smooth is flat at the mean IoU
        curve = np.array([[x, binned[:, 1].mean()] for x in np.unique(binned[:, 0])])
        degenerate = True
    else:
        curve = lowess_fit(raw, cfg)
        degenerate = False

    out = _out_dir(opts)
    _write_csv(out / "scatter.csv", ["gt_pixels", "iou"], [[_num(x), _num(y)] for x, y in binned])
    _write_csv(out / "lowess.csv", ["gt_pixels", "fitted_iou"], [[_num(x), _num(y)] for x, y in curve])
    _write_json(
        out / "scale_analysis.json",
        {
            "command": "scale-analysis",
            "csv": Path(opts["csv"]).name,
            "frac": cfg.frac,
            "bin_size": cfg.bin_size,
            "samples_per_bin": cfg.samples_per_bin,
            "size_filter": None if size_filter is None else [list(r) for r in size_filter.ranges],
            "records": len(records),
            "binned_points": int(len(binned)),
            "degenerate": degenerate,
        },
    )
    save_figure(scale_analysis_figure(raw, binned, curve, cfg.bin_size, cfg.frac), out / "scale_analysis.png")
    return EXIT_OK


COMMANDS: dict[str, Callable[[dict], int]] = {
    "augment": cmd_augment,
    "transport": cmd_transport,
    "eval": cmd_eval,
    "scale-analysis": cmd_scale_analysis,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        opts = resolve_options(args)
        return COMMANDS[args.command](opts)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except EmptyResult as exc:
        log.error("%s", exc)
        return EXIT_EMPTY
    except (OSError, UnsupportedFormat) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except ValueError as exc:
        # invariant violations in user-supplied parameters
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
