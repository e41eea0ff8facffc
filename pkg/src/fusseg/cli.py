"""``fusseg`` command line.

Exit status: 0 on success, 2 on invalid input, 1 on any other failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import BACKGROUND, CLASS_NAMES, DOWNWARD, UPWARD, __version__
from .annotation import AnnotationParams, annotate
from .io import (FoldSpec, FormatError, RunConfig, TernaryLabelMap, read_csv_column, read_json,
                 read_label_map, read_pgm, read_tensor, write_csv, write_json, write_label_map,
                 write_mask, write_tensor)
from .metrics import UndefinedStatistic, evaluate, pearson, wilcoxon_signed_rank

log = logging.getLogger("fusseg")

CLASS_IDS = {"b": BACKGROUND, "d": DOWNWARD, "u": UPWARD}


def _csv_ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _csv_strs(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _out_dir(args) -> Path:
    if not args.out:
        raise ValueError("--out is required")
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def run_config(args) -> RunConfig:
    """RunConfig from ``--config`` JSON, overridden by explicit flags."""
    base = read_json(args.config) if getattr(args, "config", None) else {}
    cfg = RunConfig.from_dict(base)
    overrides = {}
    for flag, key in (("arch", "architecture"), ("loss", "loss"), ("frames", "frames"),
                      ("epochs", "epochs"), ("lr", "lr"), ("batch_size", "batch_size"),
                      ("base_width", "base_width"), ("depth", "depth"), ("alpha", "alpha"),
                      ("beta", "beta"), ("gamma", "gamma")):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[key] = v
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "no_augment", False):
        overrides["augment"] = dict(cfg.augment.__dict__, enabled=False)
    if getattr(args, "average_frames", False):
        overrides["average_frames"] = True
    if getattr(args, "folds", None) is not None or getattr(args, "test_count", None) is not None:
        folds = dict(cfg.folds.__dict__)
        if args.folds is not None:
            folds["K"] = args.folds
        if args.test_count is not None:
            folds["test_count"] = args.test_count
        overrides["folds"] = folds
    if overrides.get("seed") is not None:
        overrides["folds"] = dict(overrides.get("folds", cfg.folds.__dict__), seed=overrides["seed"])
    return cfg.replace(**overrides) if overrides else cfg


# ---------------------------------------------------------------------------
# subcommands


def cmd_phantom(args):
    from .harness.store import write_phantom
    from .phantom import PhantomSpec, make_phantom

    out = _out_dir(args)
    spec = PhantomSpec(hi_shape=(args.height * args.factor, args.width * args.factor),
                       shape=(args.height, args.width), vessel_count=args.vessels,
                       width_range=(args.min_width, args.max_width), noise_sigma=args.noise,
                       seed=args.seed or 0)
    subjects = []
    for i in range(args.start, args.start + args.count):
        p = make_phantom(spec, i, mode=args.mode, T=args.frames)
        write_phantom(out, p, spec, i, args.mode)
        subjects.append(p.subject_id)
        log.info("wrote %s (mixed pixels %.4f)", p.subject_id, p.masks.mixed_fraction)
    write_json(out / "index.json", {"subjects": subjects, "mode": args.mode, "frames": args.frames,
                                    "spec": spec.to_dict(), "fusseg_version": __version__})


def cmd_annotate(args):
    values, meta = read_tensor(args.ulm)
    params = AnnotationParams(tau=args.tau, v_eps=args.v_eps, target_shape=(args.height, args.width),
                              tie_break=args.tie_break, resize=args.resize)
    masks, labels = annotate(values, params)
    prefix = args.out
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    write_mask(f"{prefix}_down.pgm", masks.downward)
    write_mask(f"{prefix}_up.pgm", masks.upward)
    write_label_map(f"{prefix}_labels.pgm", labels)
    print(f"mixed pixel fraction: {masks.mixed_fraction:.5f}")


def cmd_train(args):
    from .harness.store import load_dataset
    from .models.training import train

    cfg = run_config(args)
    data = load_dataset(args.data)
    out = _out_dir(args)
    model = train(data, cfg, progress=lambda e, l: log.info("epoch %d loss %.5f", e + 1, l))
    model.save(out)
    write_csv(out / "loss_curve.csv", ["epoch", "loss"], [(i + 1, l) for i, l in enumerate(model.loss_curve)])


def cmd_predict(args):
    from .harness.store import read_stack
    from .models.training import FusSegModel

    model = FusSegModel.load(args.model)
    stack = read_stack(args.stack)
    soft, hard = model.predict(stack)
    prefix = args.out
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    write_tensor(f"{prefix}_probs.f32", soft.probs, {"classes": list(CLASS_NAMES)})
    write_label_map(f"{prefix}_labels.pgm", hard)
    write_mask(f"{prefix}_down.pgm", hard.labels == DOWNWARD)
    write_mask(f"{prefix}_up.pgm", hard.labels == UPWARD)


def cmd_eval(args):
    report = evaluate(read_label_map(args.pred), read_label_map(args.truth))
    d = report.to_dict()
    if args.report:
        write_json(args.report, d)
    else:
        print(d["macro"])


def _xval_configs(args):
    base = run_config(args)
    archs = _csv_strs(args.archs) if args.archs else [base.architecture]
    losses = _csv_strs(args.losses) if args.losses else [base.loss]
    return base, [base.replace(architecture=a, loss=l) for a in archs for l in losses]


def cmd_xval(args):
    from .harness.experiments import run_xval
    from .harness.store import load_dataset

    base, configs = _xval_configs(args)
    report = run_xval(load_dataset(args.data), configs, base.folds)
    write_json(_out_dir(args) / "report.json", report.to_dict())


def cmd_depth_sweep(args):
    from .harness.experiments import depth_sweep
    from .harness.store import load_dataset

    cfg = run_config(args)
    report, rows = depth_sweep(load_dataset(args.data), _csv_ints(args.depths), cfg, cfg.folds)
    out = _out_dir(args)
    write_json(out / "report.json", report.to_dict())
    write_csv(out / "boxplot.csv", ["depth", "fold", "f1", "jaccard"], rows)


def cmd_cross_condition(args):
    from .harness.experiments import cross_condition
    from .harness.store import load_dataset

    cfg = run_config(args)
    report, row = cross_condition(load_dataset(args.train), load_dataset(args.test), cfg)
    out = _out_dir(args)
    write_json(out / "report.json", {"table": row, "metrics": report.to_dict()})


def _load_mask(path, cls):
    img, maxval = read_pgm(path)
    if maxval == 1:
        return img > 0
    return read_label_map(path).labels == CLASS_IDS[cls]


def cmd_signal(args):
    from .harness.store import read_stack
    from .signal import Roi, extract_signal, percent_change

    stack = read_stack(args.stack)
    mask = _load_mask(args.mask, args.cls)
    roi = Roi.parse(args.roi) if args.roi else None
    series = extract_signal(stack, mask, roi)
    header = ["frame", "time_s", "signal"]
    cols = [series.values]
    if args.pct_baseline:
        header.append("percent_change")
        cols.append(percent_change(series, args.pct_baseline).values)
    rows = [(k, k * series.frame_period_s, *(c[k] for c in cols)) for k in range(len(series))]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(args.out, header, rows)


def cmd_overlay(args):
    from .harness.render import render_overlay
    from .harness.store import read_stack

    render_overlay(read_stack(args.stack), read_label_map(args.labels), args.frame, args.out)


def cmd_errors(args):
    from .harness.render import render_error_maps

    fp, fn = render_error_maps(read_label_map(args.pred), read_label_map(args.truth), CLASS_IDS[args.cls])
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_mask(f"{args.out}_fp.pgm", fp)
    write_mask(f"{args.out}_fn.pgm", fn)
    print(f"class {args.cls}: FP={int(fp.sum())} FN={int(fn.sum())}")


def cmd_stats(args):
    import json

    a = read_csv_column(args.a, args.column)
    b = read_csv_column(args.b, args.column)
    if args.test == "wilcoxon":
        r = wilcoxon_signed_rank(a, b)
        result = {"test": "wilcoxon", "statistic": r.statistic, "pvalue": r.pvalue, "n": r.n,
                  "method": r.method}
    else:
        result = {"test": "pearson", "r": pearson(a, b), "n": len(a)}
    text = json.dumps(result, sort_keys=True)
    if args.out:
        write_json(args.out, result)
    print(text)


# ---------------------------------------------------------------------------
# parser


def _column(v):
    return int(v) if v.isdigit() else v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", help="JSON RunConfig")
    common.add_argument("--out", help="output directory, file or prefix")
    common.add_argument("-v", "--verbose", action="count", default=0)

    train_opts = argparse.ArgumentParser(add_help=False)
    train_opts.add_argument("--arch")
    train_opts.add_argument("--loss")
    train_opts.add_argument("--frames", type=int)
    train_opts.add_argument("--epochs", type=int)
    train_opts.add_argument("--lr", type=float)
    train_opts.add_argument("--batch-size", type=int)
    train_opts.add_argument("--base-width", type=int)
    train_opts.add_argument("--depth", type=int)
    train_opts.add_argument("--alpha", type=float)
    train_opts.add_argument("--beta", type=float)
    train_opts.add_argument("--gamma", type=float)
    train_opts.add_argument("--no-augment", action="store_true")
    train_opts.add_argument("--average-frames", action="store_true")
    train_opts.add_argument("--folds", type=int)
    train_opts.add_argument("--test-count", type=int)

    p = argparse.ArgumentParser(prog="fusseg", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("phantom", parents=[common], help="generate synthetic phantoms")
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--mode", choices=("rest", "stim"), default="rest")
    s.add_argument("--frames", type=int, default=100)
    s.add_argument("--start", type=int, default=0, help="first phantom index")
    s.add_argument("--height", type=int, default=112)
    s.add_argument("--width", type=int, default=128)
    s.add_argument("--factor", type=int, default=10, help="ULM / fUS resolution ratio")
    s.add_argument("--vessels", type=int, default=16)
    s.add_argument("--min-width", type=float, default=10.0)
    s.add_argument("--max-width", type=float, default=20.0)
    s.add_argument("--noise", type=float, default=0.05)
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("annotate", parents=[common], help="ULM velocity map -> masks")
    s.add_argument("--ulm", required=True)
    s.add_argument("--height", type=int, default=112)
    s.add_argument("--width", type=int, default=128)
    s.add_argument("--tau", type=float, default=0.05)
    s.add_argument("--v-eps", type=float, default=0.0)
    s.add_argument("--tie-break", choices=("larger_coverage", "prefer_downward"), default="larger_coverage")
    s.add_argument("--resize", choices=("area", "bilinear"), default="area")
    s.set_defaults(func=cmd_annotate)

    s = sub.add_parser("train", parents=[common, train_opts], help="train a model")
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", parents=[common], help="segment one stack")
    s.add_argument("--model", required=True)
    s.add_argument("--stack", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("eval", parents=[common], help="metrics of a predicted label map")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("xval", parents=[common, train_opts], help="K-fold model/loss comparison")
    s.add_argument("--data", required=True)
    s.add_argument("--archs")
    s.add_argument("--losses")
    s.set_defaults(func=cmd_xval)

    s = sub.add_parser("depth-sweep", parents=[common, train_opts], help="cross-validate several stack depths")
    s.add_argument("--data", required=True)
    s.add_argument("--depths", required=True)
    s.set_defaults(func=cmd_depth_sweep)

    s = sub.add_parser("cross-condition", parents=[common, train_opts], help="train on rest, test on stimulation")
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.set_defaults(func=cmd_cross_condition)

    s = sub.add_parser("signal", parents=[common], help="mean time series under a mask")
    s.add_argument("--stack", required=True)
    s.add_argument("--mask", required=True, help="binary PGM, or a label map with --class")
    s.add_argument("--class", dest="cls", choices=("d", "u", "b"), default="d")
    s.add_argument("--roi", help="r0:r1,c0:c1")
    s.add_argument("--pct-baseline", type=int)
    s.set_defaults(func=cmd_signal)

    s = sub.add_parser("overlay", parents=[common], help="render masks over a frame (PNG)")
    s.add_argument("--stack", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--frame", type=int, default=0)
    s.set_defaults(func=cmd_overlay)

    s = sub.add_parser("errors", parents=[common], help="false positive / negative maps")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--class", dest="cls", choices=("d", "u", "b"), default="d")
    s.set_defaults(func=cmd_errors)

    s = sub.add_parser("stats", parents=[common], help="paired statistics on CSV columns")
    s.add_argument("test", choices=("wilcoxon", "pearson"))
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--column", type=_column, default=0)
    s.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, FormatError, UndefinedStatistic, FileNotFoundError) as exc:
        print(f"fusseg: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("runtime failure")
        print(f"fusseg: failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
