"""Command-line surface.

Subcommands: gen-dataset, search, evaluate, baseline, render-preview, report.
Exit codes: 0 success, 2 config error, 3 dataset error, 4 detector transport
error, 5 metric undefined (no true positives without attack).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .composite import load_background_pool, synthesize_attack, synthesize_uniform, save_nir_image, sample_background
from .detector import TransportError, parse_detector_spec
from .harness import (ConfigError, DatasetError, ExperimentConfig,
                      evaluate_conditions, gen_dataset, load_dataset,
                      make_baseline, make_scene_source, run_experiment,
                      summarize_records, write_report)
from .mesh import load_mesh, load_scheme
from .metrics import MetricUndefinedError, load_records
from .pattern import load_pattern, save_pattern
from .render import render_segmap, sample_camera
from .search import run_search

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_TRANSPORT = 4
EXIT_METRIC = 5


def _add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="experiment config JSON")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("--detector", default=None, help="override the detector spec")


def _load_config(args) -> ExperimentConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.detector is not None:
        overrides["detector"] = args.detector
    return ExperimentConfig.from_file(args.config, overrides)


def cmd_gen_dataset(args) -> int:
    config = _load_config(args)
    manifest = gen_dataset(config)
    n = len(manifest["entries"])
    n_train = sum(1 for e in manifest["entries"] if e["split"] == "train")
    print(f"generated {n} segment maps ({n_train} train / {n - n_train} test) "
          f"in {config.out_dir / 'dataset'}")
    return EXIT_OK


def cmd_search(args) -> int:
    config = _load_config(args)
    scheme = load_scheme(config.scheme_path)
    if not (config.out_dir / "dataset" / "manifest.json").exists():
        gen_dataset(config)
    manifest, segmaps = load_dataset(config.out_dir / "dataset")
    backgrounds = load_background_pool(config.background_dir)
    train = [segmaps[e["scene_id"]] for e in manifest["entries"]
             if e["split"] == "train"]
    client = parse_detector_spec(config.detector, k=scheme.k)
    source = make_scene_source(train, backgrounds)
    best, history = run_search(config.search, source, client, scheme,
                               out_dir=config.out_dir / "search",
                               resume_from=args.resume)
    print(f"best confidence {history[-1]['c_min']:.4f} after "
          f"{history[-1]['generation']} generations; "
          f"pattern at {config.out_dir / 'search' / 'best_pattern.json'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    scheme = load_scheme(config.scheme_path)
    manifest, segmaps = load_dataset(config.out_dir / "dataset")
    backgrounds = load_background_pool(config.background_dir)
    client = parse_detector_spec(config.detector, k=scheme.k)
    test = [(e["scene_id"], segmaps[e["scene_id"]])
            for e in manifest["entries"] if e["split"] == "test"]

    conditions = {"no_attack": None}
    for spec in args.pattern or []:
        name, _, path = spec.partition("=")
        if not path:
            name, path = Path(spec).stem, spec
        conditions[name] = load_pattern(path, scheme)

    records = evaluate_conditions(config, scheme, test, conditions, client,
                                  backgrounds)
    out = Path(args.records_out) if args.records_out else config.out_dir / "records.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    from .metrics import save_records
    save_records(records, out)
    summaries = summarize_records(load_records(out))
    print(json.dumps(summaries, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_baseline(args) -> int:
    scheme = load_scheme(args.scheme)
    pattern = make_baseline(args.kind, scheme, rng_seed=args.seed or 0)
    save_pattern(pattern, args.out_file)
    print(f"wrote {args.kind} pattern to {args.out_file}")
    return EXIT_OK


def cmd_render_preview(args) -> int:
    config = _load_config(args)
    scheme = load_scheme(config.scheme_path)
    mesh = load_mesh(args.mesh, scheme)
    cam = sample_camera(args.seed or config.seed, config.pose_bounds)
    segmap = render_segmap(mesh, cam)
    backgrounds = load_background_pool(config.background_dir)
    bg = sample_background(config.seed, backgrounds, segmap.image_size)
    if args.pattern:
        image = synthesize_attack(segmap, load_pattern(args.pattern, scheme), bg)
    else:
        image = synthesize_uniform(segmap, config.no_attack_intensity, bg)
    save_nir_image(image, args.out_png)
    print(f"wrote preview to {args.out_png}")
    return EXIT_OK


def cmd_report(args) -> int:
    run_summaries = []
    for run_dir in args.runs:
        records = load_records(Path(run_dir) / "records.jsonl")
        run_summaries.append(summarize_records(records))
    out = Path(args.out or args.runs[0])
    out.mkdir(parents=True, exist_ok=True)
    report = write_report(run_summaries, out)
    print((out / "report.txt").read_text())
    return EXIT_OK


def cmd_run(args) -> int:
    config = _load_config(args)
    report = run_experiment(config)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nirattack",
        description="Black-box binary-pattern attacks on NIR person detectors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="render segment maps and the split manifest")
    _add_common(p)
    p.set_defaults(fn=cmd_gen_dataset)

    p = sub.add_parser("search", help="run the genetic search on the train split")
    _add_common(p)
    p.add_argument("--resume", default=None, help="checkpoint JSON to resume from")
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("evaluate", help="evaluate pattern files on the test split")
    _add_common(p)
    p.add_argument("--pattern", action="append",
                   help="pattern file, or name=path; repeatable")
    p.add_argument("--records-out", default=None)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("baseline", help="emit a stock baseline pattern file")
    p.add_argument("--kind", required=True,
                   choices=["all_black", "all_white", "random"])
    p.add_argument("--scheme", required=True, help="scheme JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-file", required=True)
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("render-preview", help="render one composited frame to PNG")
    _add_common(p)
    p.add_argument("--mesh", required=True)
    p.add_argument("--pattern", default=None)
    p.add_argument("--out-png", required=True)
    p.set_defaults(fn=cmd_render_preview)

    p = sub.add_parser("report", help="aggregate record files into a report")
    p.add_argument("--runs", nargs="+", required=True, help="run directories")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("run", help="full experiment: dataset, search, evaluate, report")
    _add_common(p)
    p.set_defaults(fn=cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except TransportError as exc:
        print(f"detector transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except MetricUndefinedError as exc:
        print(f"metric undefined: {exc}", file=sys.stderr)
        return EXIT_METRIC


if __name__ == "__main__":
    sys.exit(main())
