"""Command-line surface.

Subcommands: loss, check, analyze, gradcheck, synth, bench. stdout carries
exactly one machine-parseable JSON document per run; diagnostics go to
stderr. Exit codes: 0 success, 1 internal error or failed gradient check,
2 validation/config error, 3 anomalies found (check).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import version_string
from .analyzer import LabelMap, build_catalog, compare_maps, empirical_stats
from .config import EngineConfig, load_config, parse_losses
from .errors import PhyfeaError, ValidationError
from .fileio import (FIXTURE_KINDS, FixtureSpec, anomaly_report_dict,
                     catalog_dict, gen_fixture, penalty_report_dict,
                     read_catalog, read_label_map, read_tensor, render_json,
                     stats_dict, write_label_map, write_report, write_tensor)
from .loss import compute_penalty
from .tensor import vjp_check

_LABEL_SUFFIXES = (".pgm", ".png")


def _dims(text: str):
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise ValidationError(f"dims must look like 8x8, got {text!r}")


def _engine_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; explicit flags override it")
    p.add_argument("--alpha", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--iterations", type=int, dest="iterations_override",
                   help="override the max(2, max(H,W)/2) sweep budget")
    p.add_argument("--losses", help="opening,dilation | opening | dilation | none")
    p.add_argument("--pair-mode", choices=["all", "infeasible_only"], dest="pair_mode")
    p.add_argument("--connectivity", type=int, choices=[4, 8])
    p.add_argument("--precision", choices=["single", "double"])
    p.add_argument("--bg-tol", type=float, dest="bg_tol")
    p.add_argument("--threshold", type=int, dest="infeasibility_threshold")
    p.add_argument("--workers", type=int)
    p.add_argument("--num-classes", type=int, dest="num_classes")
    p.add_argument("--ignore-value", type=int, dest="ignore_value")


def _resolve_config(args) -> EngineConfig:
    cfg = load_config(args.config) if args.config else EngineConfig()
    overrides = {}
    for name in ("alpha", "epsilon", "iterations_override", "pair_mode",
                 "connectivity", "precision", "bg_tol",
                 "infeasibility_threshold", "workers", "num_classes",
                 "ignore_value"):
        overrides[name] = getattr(args, name, None)
    losses = getattr(args, "losses", None)
    if losses is not None:
        overrides["losses"] = parse_losses(losses)
    return cfg.merged(**overrides).validate()


def _emit(payload: dict):
    print(render_json(payload))


def cmd_loss(args, cfg: EngineConfig) -> int:
    scores = read_tensor(args.tensor)
    if args.ce is not None and args.ce < 0:
        raise ValidationError("--ce must be >= 0")
    catalog = read_catalog(args.catalog) if args.catalog else None
    report = compute_penalty(scores, cfg, with_grad=bool(args.grad_out),
                             cross_entropy=args.ce, catalog=catalog)
    payload = penalty_report_dict(report)
    if args.grad_out:
        write_tensor(args.grad_out, report.grad)
        payload["grad_written"] = str(args.grad_out)
    _emit(payload)
    return 0


def _read_label_pair(path_a, path_b, cfg):
    a = read_label_map(path_a, cfg.num_classes, cfg.ignore_value)
    b = read_label_map(path_b, cfg.num_classes, cfg.ignore_value)
    if cfg.num_classes is None:
        nc = max(a.num_classes, b.num_classes)
        a = LabelMap(a.labels, nc, a.ignore_value)
        b = LabelMap(b.labels, nc, b.ignore_value)
    return a, b


def cmd_check(args, cfg: EngineConfig) -> int:
    gt, pred = _read_label_pair(args.gt, args.pred, cfg)
    report = compare_maps(gt, pred, cfg.connectivity)
    if args.overlay:
        anomaly = np.zeros(pred.dims, dtype=bool)
        for enc in report.enclosures:
            anomaly |= enc.component.mask
        write_report((pred, anomaly), args.overlay, format="overlay_image")
    _emit(anomaly_report_dict(report))
    return 0 if report.clean else 3


def _read_corpus(directory, cfg):
    root = Path(directory)
    if not root.is_dir():
        raise ValidationError(f"{directory} is not a directory")
    paths = sorted(p for p in root.iterdir() if p.suffix.lower() in _LABEL_SUFFIXES)
    if not paths:
        raise ValidationError(f"no label maps (*.pgm, *.png) under {directory}")
    maps = [read_label_map(p, cfg.num_classes, cfg.ignore_value) for p in paths]
    if cfg.num_classes is None:
        nc = max(m.num_classes for m in maps)
        maps = [LabelMap(m.labels, nc, m.ignore_value) for m in maps]
    return maps


def cmd_analyze(args, cfg: EngineConfig) -> int:
    corpus = _read_corpus(args.corpus, cfg)
    if args.against:
        catalog = read_catalog(args.against)
        stats = empirical_stats(corpus, catalog)
    else:
        catalog = build_catalog(corpus, cfg.infeasibility_threshold,
                                cfg.connectivity, corpus_id=str(args.corpus))
        stats = empirical_stats(catalog, catalog)
        if args.catalog_out:
            write_report(catalog, args.catalog_out)
    payload = stats_dict(stats)
    if args.full:
        payload["catalog"] = catalog_dict(catalog)
    _emit(payload)
    return 0


def cmd_gradcheck(args, cfg: EngineConfig) -> int:
    h, w = _dims(args.dims)
    rng = np.random.default_rng(args.seed)
    scores = rng.standard_normal((args.classes, h, w))
    run_cfg = cfg.merged(workers=1)

    def evaluate(values, with_grad):
        rep = compute_penalty(values, run_cfg, with_grad=with_grad)
        return rep.penalty, rep.grad

    def fd_eval(values):
        return compute_penalty(values, run_cfg.merged(precision="double")).penalty

    tol = args.tol if args.tol is not None else (1e-6 if run_cfg.precision == "double" else 1e-3)
    report = vjp_check(evaluate, scores, probes=args.probes, tol=tol,
                       seed=args.seed, fd_eval=fd_eval)
    _emit({
        "max_rel_err": report.max_rel_err,
        "checked": report.checked,
        "skipped": report.skipped,
        "tol": report.tol,
        "passed": report.passed,
        "precision": run_cfg.precision,
        "seed": args.seed,
    })
    return 0 if report.passed else 1


def cmd_synth(args, cfg: EngineConfig) -> int:
    spec = FixtureSpec(kind=args.kind, height=_dims(args.dims)[0],
                       width=_dims(args.dims)[1],
                       classes=tuple(int(c) for c in args.classes.split(",")),
                       gap=args.gap, seed=args.seed, density=args.density,
                       with_scores=bool(args.scores))
    label_map, scores = gen_fixture(spec)
    write_label_map(args.out, label_map)
    if args.scores:
        write_tensor(args.scores, scores)
    _emit({"kind": spec.kind, "label_map": str(args.out),
           "scores": str(args.scores) if args.scores else None,
           "num_classes": label_map.num_classes})
    return 0


def cmd_bench(args, cfg: EngineConfig) -> int:
    h, w = _dims(args.dims)
    rng = np.random.default_rng(args.seed)
    scores = rng.standard_normal((args.classes, h, w))
    t0 = time.perf_counter()
    report = compute_penalty(scores, cfg)
    wall = time.perf_counter() - t0
    iter_stats = {}
    for side, counts in report.iterations_used.items():
        if counts:
            iter_stats[side] = {"max": int(max(counts)),
                                "mean": float(sum(counts)) / len(counts)}
    _emit({
        "channels": args.classes * (args.classes - 1),
        "dims": [h, w],
        "precision": cfg.precision,
        "workers": cfg.resolve_workers(),
        "l_opening": report.l_opening,
        "l_dilation": report.l_dilation,
        "timing": {k: float(v) for k, v in report.timing.items()},
        "wall": wall,
        "iterations": iter_stats,
    })
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phyfea",
        description="Physical-feasibility engine: morphology penalty and label-map analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("loss", help="penalty report for a score tensor")
    p.add_argument("tensor", help="SFT1 file holding (C, H, W) scores")
    p.add_argument("--grad-out", dest="grad_out", help="write gradient as SFT1")
    p.add_argument("--ce", type=float, help="external cross-entropy to fold into total")
    p.add_argument("--catalog", help="catalog JSON for pair_mode=infeasible_only")
    _engine_flags(p)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("check", help="feasibility anomalies of pred vs gt")
    p.add_argument("gt")
    p.add_argument("pred")
    p.add_argument("--overlay", help="write red-on-gray anomaly rendering (PNG)")
    _engine_flags(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("analyze", help="mine a constraint catalog from a corpus")
    p.add_argument("corpus", help="directory of label maps")
    p.add_argument("--catalog-out", dest="catalog_out")
    p.add_argument("--against", help="score the corpus against an existing catalog")
    p.add_argument("--full", action="store_true", help="inline the catalog in stdout JSON")
    _engine_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gradcheck", help="finite-difference check of the penalty gradient")
    p.add_argument("--dims", default="8x8")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--probes", type=int, default=20)
    p.add_argument("--tol", type=float)
    _engine_flags(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate a fixture label map (and scores)")
    p.add_argument("--kind", choices=list(FIXTURE_KINDS), required=True)
    p.add_argument("--dims", default="7x7")
    p.add_argument("--out", required=True)
    p.add_argument("--scores", help="also write a score tensor (SFT1)")
    p.add_argument("--classes", default="0,1,2")
    p.add_argument("--gap", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--density", type=float, default=0.5)
    _engine_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="time the full pair-stack workload")
    p.add_argument("--dims", default="256x256")
    p.add_argument("--classes", type=int, default=19)
    p.add_argument("--seed", type=int, default=0)
    _engine_flags(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--version" in argv:
        precision = "double"
        if "--precision" in argv:
            at = argv.index("--precision")
            if at + 1 < len(argv):
                precision = argv[at + 1]
        print(version_string(precision))
        return 0
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        return args.func(args, cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PhyfeaError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
