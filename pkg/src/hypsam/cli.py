"""Command-line entry point: train, infer, refine, eval, plot-pr."""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, parse_overrides
from .data import list_images, load_attributes, load_sample, read_image, write_gray_png
from .errors import (
    BackendUnavailable,
    ConfigInvalid,
    DataError,
    DatasetMissing,
    HypsamError,
    NameMismatch,
    ScorerUnavailable,
)
from .metrics import aggregate, evaluate_pair, format_table, write_report_files

log = logging.getLogger("hypsam")

EXIT_BACKEND = 4


def version_string() -> str:
    """Package version, with ``git describe`` appended when run from a checkout."""
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"], cwd=Path(__file__).parent, capture_output=True,
            text=True, timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+g{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_manifest(out: Path, command: str, cfg: RunConfig, extra: dict | None = None) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_hash": cfg.hash(),
        "seed": cfg.train.seed,
        "version": version_string(),
        "config": cfg.to_ini(),
        **(extra or {}),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_config(args, overrides) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for key, value in parse_overrides(overrides).items():
        cfg.set(key, value)
    return cfg.validate()


def require_root(cfg: RunConfig) -> Path:
    if not cfg.data.root:
        raise ConfigInvalid("data.root is not set (use --data.root DIR or a config file)")
    root = Path(cfg.data.root)
    if not root.is_dir():
        raise DatasetMissing(f"dataset root not found: {root}")
    return root


# ---------------------------------------------------------------------------
# commands


def cmd_train(args, cfg: RunConfig) -> int:
    from .train import train

    require_root(cfg)
    out = Path(args.out)
    write_manifest(out, "train", cfg)
    result = train(cfg, out)
    print(result.checkpoint)
    return 0


def cmd_infer(args, cfg: RunConfig) -> int:
    from .dfnet import load_checkpoint
    from .train import predict_split

    root = require_root(cfg)
    expected = {k.split(".", 1)[1]: cfg.get(k) for k in cfg.explicit if k.startswith("model.")}
    expected.pop("backbone_weights", None)
    if "data.resolution" in cfg.explicit:
        expected["resolution"] = cfg.data.resolution
    model = load_checkpoint(args.checkpoint, expected=expected)
    out = Path(args.out)
    write_manifest(out, "infer", cfg, {"checkpoint": str(args.checkpoint), "split": args.split})
    paths = predict_split(model, root, args.split, out / "maps", size=model.config["resolution"])
    print(f"wrote {len(paths)} maps to {out / 'maps'}")
    return 0


def pipeline_config(cfg: RunConfig):
    from .p2rnet import PipelineConfig, RefineStrategy, SelectorConfig

    p = cfg.p2rnet
    return PipelineConfig(
        selector=SelectorConfig(tau=p.tau, theta=p.theta, logit_scale=p.logit_scale, alpha_order=p.alpha_order),
        threshold=p.bin_thresh,
        min_area=None,
        min_area_frac=p.min_area_frac,
        strategy=RefineStrategy(p.strategy, weight=p.weight, se_radius=p.se_radius),
        refine_coarse=p.refine_input == "coarse",
        use_mask=p.use_mask,
        use_boxes=p.use_boxes,
        use_points=p.use_points,
    )


def copy_through(coarse: dict, maps: Path) -> None:
    maps.mkdir(parents=True, exist_ok=True)
    for path in coarse.values():
        shutil.copyfile(path, maps / path.name)


def cmd_refine(args, cfg: RunConfig) -> int:
    from .p2rnet import run_pipeline
    from .p2rnet.segmenter import build_backend
    from .p2rnet.selector import build_scorer

    root = require_root(cfg)
    coarse = list_images(args.coarse)
    if not coarse:
        raise DataError(f"no coarse maps in {args.coarse}")
    out = Path(args.out)
    maps = out / "maps"
    write_manifest(out, "refine", cfg, {"coarse": str(args.coarse), "split": args.split})
    p = cfg.p2rnet
    try:
        backend = build_backend(p.backend, p.backend_weights or None)
        scorer = build_scorer(p.scorer, p.scorer_weights or None)
    except (BackendUnavailable, ScorerUnavailable) as exc:
        log.warning("%s; copying coarse maps through unchanged", exc)
        copy_through(coarse, maps)
        with (out / "refine_log.jsonl").open("w") as fh:
            for name in coarse:
                fh.write(json.dumps({"name": name, "modality": None, "n_boxes": 0, "strategy": p.strategy,
                                     "fallback": "backend_unavailable"}) + "\n")
        return 0 if args.allow_fallback else EXIT_BACKEND

    pcfg = pipeline_config(cfg)
    maps.mkdir(parents=True, exist_ok=True)
    n_fallback = 0
    with (out / "refine_log.jsonl").open("w") as fh:
        for name, path in coarse.items():
            sample = load_sample(root, args.split, name, require_gt=False)
            cmap = read_image(path, grayscale=True).astype(np.float32) / 255.0
            res = run_pipeline(sample, cmap, pcfg, backend, scorer)
            if res.fallback:
                n_fallback += 1
                shutil.copyfile(path, maps / path.name)
            else:
                write_gray_png(maps / f"{name}.png", res.saliency)
            fh.write(json.dumps({**res.record(name), "strategy": p.strategy}) + "\n")
    print(f"refined {len(coarse) - n_fallback} of {len(coarse)} maps into {maps}")
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    if args.gt:
        gt_dir = Path(args.gt)
        attr_root = gt_dir.parent.parent
    else:
        root = require_root(cfg)
        gt_dir = root / args.split / "GT"
        attr_root = root
    preds = list_images(args.pred)
    gts = list_images(gt_dir)
    missing_preds = sorted(set(gts) - set(preds))
    missing_gts = sorted(set(preds) - set(gts))
    if missing_preds or missing_gts:
        raise NameMismatch(missing_preds, missing_gts)
    tags = load_attributes(attr_root) if (args.attributes or cfg.eval.attributes) else None
    scores = []
    for name in sorted(gts):
        pred = read_image(preds[name], grayscale=True)
        gt = read_image(gts[name], grayscale=True)
        scores.append(evaluate_pair(pred, gt, name=name, attributes=(tags or {}).get(name, frozenset())))
    report = aggregate(scores, tags)
    if not (args.out or cfg.eval.report_dir):
        raise ConfigInvalid("no output directory: pass --out or set eval.report_dir")
    out = Path(args.out or cfg.eval.report_dir)
    write_manifest(out, "eval", cfg, {"pred": str(args.pred), "gt": str(gt_dir)})
    write_report_files(out, report, stem=args.name)
    print(format_table({args.name: report}))
    return 0


def cmd_plot(args, cfg: RunConfig) -> int:
    from .plotting import load_curve, plot_pr

    labels = args.labels or [None] * len(args.reports)
    if len(labels) != len(args.reports):
        raise ConfigInvalid("--labels must match the number of reports")
    curves = [load_curve(p, label or Path(p).parent.name or Path(p).stem) for p, label in zip(args.reports, labels)]
    order = plot_pr(curves, args.out, title=args.title)
    print(f"wrote {args.out} ({', '.join(order)})")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypsam",
        description="RGB-T salient object detection: train, infer, refine, evaluate, plot.",
        epilog="Any config key can be overridden with a dotted flag, e.g. --p2rnet.tau 0.01 --train.epochs 5.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="INI file with [train] [model] [p2rnet] [data] [eval] sections")
        p.set_defaults(func=func)
        return p

    p = add("train", cmd_train, "train the fusion network")
    p.add_argument("--out", required=True)

    p = add("infer", cmd_infer, "write fused saliency maps for a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)

    p = add("refine", cmd_refine, "refine coarse maps with the frozen segmenter")
    p.add_argument("--coarse", required=True, help="directory of 8-bit coarse maps named like the dataset")
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--allow-fallback", action="store_true",
                   help="exit 0 when the segmenter is unavailable and maps are copied through")

    p = add("eval", cmd_eval, "score a prediction directory against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--gt", help="ground-truth directory (default: <data.root>/<split>/GT)")
    p.add_argument("--out", help="report directory (default: eval.report_dir)")
    p.add_argument("--name", default="report")
    p.add_argument("--attributes", action="store_true", help="add the per-attribute table")

    p = add("plot-pr", cmd_plot, "plot precision-recall curves from report files")
    p.add_argument("reports", nargs="+", help="report .json or *_pr.csv files")
    p.add_argument("--labels", nargs="+")
    p.add_argument("--title")
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args, rest)
        return args.func(args, cfg)
    except NameMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except HypsamError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
