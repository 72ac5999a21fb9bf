"""Command-line surface: match, eval, augment, sweep, tune, synth, serve.

Every command that writes files also writes a JSON run manifest next to
its primary output (command, inputs, config, seed, timings, outputs),
so a run can be audited and reproduced later.  All randomness flows
from the --seed flag; matching itself is deterministic.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .augment import apply_spec, identity_spec, sample_spec, spec_to_dict, SWEEP_RANGES
from .config import (
    ConfigError,
    MatcherConfig,
    aligned_d_max,
    load_config,
    save_config,
    tuned_decoder_config,
)
from .evaluation import compute_metrics, evaluate_protocol, metrics_csv, robustness_sweep
from .pipeline import match
from .raster_io import (
    FormatError,
    load_disparity,
    load_image,
    read_calib,
    save_disparity,
)
from .synthetic import export_scene, generate
from .tuning import tune


def _write_manifest(path: str, command: str, args_ns, inputs, outputs, timings=None) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": getattr(args_ns, "config", None),
        "inputs": inputs,
        "seed": getattr(args_ns, "seed", None),
        "timings_ms": timings or {},
        "outputs": outputs,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _matcher_config(args, d_max: int) -> MatcherConfig:
    decoder = tuned_decoder_config()
    strides = None
    if getattr(args, "config", None):
        decoder, strides = load_config(args.config)
    kwargs = dict(d_max=d_max, decoder=decoder)
    if strides is not None:
        kwargs["strides"] = strides
    if hasattr(args, "mode"):
        kwargs["input_mode"] = args.mode
    if getattr(args, "threads", None):
        kwargs["threads"] = args.threads
    cfg = MatcherConfig(**kwargs)
    cfg.validate()
    return cfg


def cmd_match(args) -> int:
    left = load_image(args.left)
    right = load_image(args.right)
    cfg = _matcher_config(args, args.dmax)
    reports = match(left, right, cfg, budget_ms=args.budget_ms)
    outputs = []
    timings = {}
    for rep in reports:
        path = f"{args.out_prefix}-{args.mode}{rep.stage}.pfm"
        save_disparity(path, rep.disparity)
        outputs.append(path)
        timings[f"stage{rep.stage}"] = rep.elapsed_ms
    manifest_path = f"{args.out_prefix}-manifest.json"
    _write_manifest(
        manifest_path, "match", args, [args.left, args.right], outputs, timings
    )
    for path in outputs:
        print(path)
    return 0


def cmd_eval(args) -> int:
    pred = load_disparity(args.pred)
    gt = load_disparity(args.gt)
    taus = tuple(float(t) for t in args.tau.split(","))
    baseline, focal = args.baseline, args.focal
    if args.calib:
        with open(args.calib) as fh:
            calib = read_calib(fh.read())
        baseline = calib["baseline"] if baseline is None else baseline
        focal = calib["focal"] if focal is None else focal
    if baseline is not None and focal is not None:
        report = evaluate_protocol(pred, gt, baseline, focal, taus)
        csv_text = metrics_csv(report.ranges, taus)
    else:
        csv_text = metrics_csv({"All": compute_metrics(pred, gt, taus)}, taus)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv_text)
        _write_manifest(
            f"{args.out}.manifest.json", "eval", args, [args.pred, args.gt], [args.out]
        )
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_augment(args) -> int:
    left = load_image(args.left)
    right = load_image(args.right)
    if args.preset == "identity":
        spec = identity_spec(args.seed)
    elif args.preset == "training":
        spec = sample_spec(args.seed, (left.height, left.width))
    else:  # sweep: same gates, stretched rigid-warp ranges
        spec = sample_spec(args.seed, (left.height, left.width), ranges=SWEEP_RANGES)
    out_l, out_r = apply_spec(left, right, spec)
    paths = {
        "left": f"{args.out_prefix}-left.pfm",
        "right": f"{args.out_prefix}-right.pfm",
        "spec": f"{args.out_prefix}-spec.json",
    }
    from .raster_io import save_image

    save_image(paths["left"], out_l)
    save_image(paths["right"], out_r)
    with open(paths["spec"], "w") as fh:
        json.dump(spec_to_dict(spec), fh, indent=2)
        fh.write("\n")
    _write_manifest(
        f"{args.out_prefix}-manifest.json",
        "augment",
        args,
        [args.left, args.right],
        list(paths.values()),
    )
    for path in paths.values():
        print(path)
    return 0


def cmd_sweep(args) -> int:
    left = load_image(args.left)
    right = load_image(args.right)
    gt = load_disparity(args.gt)
    d_max = args.dmax or aligned_d_max(float(gt.disparity[gt.valid].max()))
    cfg = _matcher_config(args, d_max)

    def run(l, r):
        return match(l, r, cfg)[-1].disparity

    curve = robustness_sweep(run, left, right, gt, args.kind)
    lines = ["param,avgerr"] + [f"{p:g},{a:.6g}" for p, a in curve]
    csv_text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv_text)
        _write_manifest(
            f"{args.out}.manifest.json",
            "sweep",
            args,
            [args.left, args.right, args.gt],
            [args.out],
        )
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_tune(args) -> int:
    with open(args.dataset) as fh:
        entries = json.load(fh)
    if not isinstance(entries, list) or not entries:
        raise ValueError(f"{args.dataset}: expected a nonempty JSON list of scenes")
    base_dir = os.path.dirname(os.path.abspath(args.dataset))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base_dir, p)

    dataset = []
    for entry in entries:
        dataset.append(
            (
                load_image(resolve(entry["left"])),
                load_image(resolve(entry["right"])),
                load_disparity(resolve(entry["gt"])),
            )
        )
    initial = tuned_decoder_config()
    if args.config:
        initial, _ = load_config(args.config)
    t0 = time.perf_counter()
    result = tune(initial, dataset, budget_evals=args.budget)
    elapsed = (time.perf_counter() - t0) * 1000.0
    save_config(args.out, result.config)
    trace_path = args.trace or f"{args.out}.trace.csv"
    with open(trace_path, "w") as fh:
        fh.write("step,evals,param,value,loss\n")
        for i, (evals, param, value, loss) in enumerate(result.steps):
            fh.write(f"{i},{evals},{param},{value},{loss:.9g}\n")
    _write_manifest(
        f"{args.out}.manifest.json",
        "tune",
        args,
        [args.dataset],
        [args.out, trace_path],
        {"total": elapsed},
    )
    print(args.out)
    print(trace_path)
    return 0


def cmd_synth(args) -> int:
    params = {}
    for item in args.param:
        key, _, value = item.partition("=")
        if not _:
            raise ValueError(f"--param expects key=value, got {item!r}")
        params[key] = float(value)
    scene = generate(
        args.kind,
        hw=(args.height, args.width),
        seed=args.seed,
        **params,
    )
    paths = export_scene(scene, args.out_dir, basename=args.basename)
    _write_manifest(
        os.path.join(args.out_dir, f"{args.basename}-manifest.json"),
        "synth",
        args,
        [],
        list(paths.values()),
    )
    for path in paths.values():
        print(path)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anystereo",
        description="Anytime coarse-to-fine stereo matching toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="run the staged matcher on a rectified pair")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("--dmax", type=int, required=True, help="disparity search range in px")
    p.add_argument("--mode", choices=("F", "H", "Q"), default="F")
    p.add_argument("--budget-ms", type=float, default=None, dest="budget_ms")
    p.add_argument("--config", default=None, help="key=value decoder config file")
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="score a disparity prediction against ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--calib", default=None, help="calibration file with baseline/focal")
    p.add_argument("--baseline", type=float, default=None, help="meters")
    p.add_argument("--focal", type=float, default=None, help="pixels")
    p.add_argument("--tau", default="1,2,4", help="bad-pixel thresholds, comma separated")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augment", help="apply a sampled augmentation to a pair")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=("identity", "training", "sweep"), default="training")
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("sweep", help="robustness curve over a perturbation grid")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("gt")
    p.add_argument("--kind", choices=("rotation", "ytrans", "occlusion"), required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--dmax", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("tune", help="search decoder parameters on a scene manifest")
    p.add_argument("dataset", help="JSON list of {left, right, gt} paths")
    p.add_argument("--budget", type=int, default=200, help="objective evaluations")
    p.add_argument("--config", default=None, help="starting config (default: built-in tuned)")
    p.add_argument("--out", required=True, help="tuned config output path")
    p.add_argument("--trace", default=None, help="loss trace CSV (default <out>.trace.csv)")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("synth", help="generate a ground-truthed synthetic scene")
    p.add_argument("--kind", choices=("constant", "plane", "step", "two_plane"), required=True)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--param", action="append", default=[], help="scene parameter key=value")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--basename", default="scene")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
