"""Experiment orchestration: dataset generation, baseline patterns, and the
search -> evaluate -> report pipeline.

An experiment is fully described by one JSON config file; the resolved config
is echoed into the run directory so every artifact is reproducible from
(config, seed). Reported numbers are always recomputed from the persisted
record files, never carried through in memory.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .composite import (NirImage, load_background_pool, sample_background,
                        synthesize_attack, synthesize_uniform)
from .detector import parse_detector_spec
from .mesh import SegmentScheme, load_mesh, load_scheme
from .metrics import (EvalRecord, build_report, load_records,
                      render_report_text, save_records, summarize_condition)
from .pattern import (BinaryPattern, load_pattern, make_pattern, new_random,
                      save_pattern)
from .render import PoseBounds, SegMap, load_segmap, render_segmap, sample_camera, save_segmap
from .search import Scene, SearchConfig, run_search

__all__ = [
    "ConfigError",
    "DatasetError",
    "ExperimentConfig",
    "gen_dataset",
    "load_dataset",
    "make_baseline",
    "make_scene_source",
    "evaluate_conditions",
    "run_experiment",
    "write_report",
]

# Substream roles, disjoint from the search module's.
_POSE, _SPLIT, _EVAL_BG, _BASELINE, _TRAIN_BG = 10, 11, 12, 13, 14


class ConfigError(ValueError):
    """Experiment config missing, unreadable, or inconsistent."""


class DatasetError(RuntimeError):
    """Dataset inputs missing or a scene could not be generated."""


def _substream(seed: int, *path: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class ExperimentConfig:
    scheme_path: Path
    mesh_dir: Path
    background_dir: Path
    out_dir: Path
    pose_bounds: PoseBounds = field(default_factory=PoseBounds)
    poses_per_mesh: int = 25
    search: SearchConfig = field(default_factory=SearchConfig)
    detector: str = "synthetic:random:0"
    train_fraction: float = 0.8
    test_fraction: float = 0.2
    split_mode: str = "pose"          # "pose" | "mesh"
    no_attack_intensity: int = 180    # uniform body intensity for the clean condition
    seed: int = 0

    def __post_init__(self):
        if abs(self.train_fraction + self.test_fraction - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")
        if self.split_mode not in ("pose", "mesh"):
            raise ConfigError(f"unknown split mode {self.split_mode!r}")
        if self.poses_per_mesh < 1:
            raise ConfigError("poses_per_mesh must be >= 1")
        if not 0 <= self.no_attack_intensity <= 255:
            raise ConfigError("no_attack_intensity outside [0,255]")

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict | None = None) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        raw.update(overrides or {})
        base = Path(path).parent
        try:
            cfg = cls(
                scheme_path=_resolve(base, raw["scheme"]),
                mesh_dir=_resolve(base, raw["mesh_dir"]),
                background_dir=_resolve(base, raw["background_dir"]),
                out_dir=_resolve(base, raw["out_dir"]),
                pose_bounds=PoseBounds(**raw.get("pose_bounds", {})),
                poses_per_mesh=int(raw.get("poses_per_mesh", 25)),
                search=SearchConfig(**raw.get("search", {})),
                detector=str(raw.get("detector", "synthetic:random:0")),
                train_fraction=float(raw.get("train_fraction", 0.8)),
                test_fraction=float(raw.get("test_fraction", 0.2)),
                split_mode=str(raw.get("split_mode", "pose")),
                no_attack_intensity=int(raw.get("no_attack_intensity", 180)),
                seed=int(raw.get("seed", 0)),
            )
        except KeyError as exc:
            raise ConfigError(f"config missing required field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc
        for p, what in ((cfg.scheme_path, "scheme"), (cfg.mesh_dir, "mesh_dir"),
                        (cfg.background_dir, "background_dir")):
            if not p.exists():
                raise ConfigError(f"{what} path does not exist: {p}")
        return cfg

    def to_dict(self) -> dict:
        return {
            "scheme": str(self.scheme_path),
            "mesh_dir": str(self.mesh_dir),
            "background_dir": str(self.background_dir),
            "out_dir": str(self.out_dir),
            "pose_bounds": {
                "azimuth_deg": list(self.pose_bounds.azimuth_deg),
                "elevation_deg": list(self.pose_bounds.elevation_deg),
                "distance_m": list(self.pose_bounds.distance_m),
                "image_size": list(self.pose_bounds.image_size),
                "focal": self.pose_bounds.focal,
            },
            "poses_per_mesh": self.poses_per_mesh,
            "search": self.search.to_dict(),
            "detector": self.detector,
            "train_fraction": self.train_fraction,
            "test_fraction": self.test_fraction,
            "split_mode": self.split_mode,
            "no_attack_intensity": self.no_attack_intensity,
            "seed": self.seed,
        }


def _resolve(base: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else (base / path).resolve()


def gen_dataset(config: ExperimentConfig) -> dict:
    """Render |meshes| x poses_per_mesh segment maps and write the split manifest.

    A render with an empty silhouette is re-sampled with a fresh pose up to
    10 times before the scene is reported as failed. Same seed, same inputs:
    byte-identical manifest.
    """
    scheme = load_scheme(config.scheme_path)
    mesh_paths = sorted(config.mesh_dir.glob("*.mesh"))
    if not mesh_paths:
        raise DatasetError(f"no *.mesh files in {config.mesh_dir}")

    seg_dir = config.out_dir / "dataset" / "segmaps"
    seg_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for m, mesh_path in enumerate(mesh_paths):
        mesh = load_mesh(mesh_path, scheme)
        for p in range(config.poses_per_mesh):
            segmap = pose = None
            for attempt in range(10):
                cam = sample_camera(_substream(config.seed, _POSE, m, p, attempt),
                                    config.pose_bounds)
                candidate = render_segmap(mesh, cam)
                if candidate.silhouette_box is not None:
                    segmap, pose = candidate, cam
                    break
            if segmap is None:
                raise DatasetError(
                    f"mesh {mesh_path.name} pose {p}: empty silhouette after 10 samples")
            scene_id = f"{mesh_path.stem}_p{p:02d}"
            save_segmap(segmap, seg_dir / f"{scene_id}.png", pose)
            entries.append({"scene_id": scene_id, "mesh": mesh_path.name,
                            "mesh_index": m, "pose_index": p,
                            "png": f"segmaps/{scene_id}.png"})

    rng = np.random.default_rng(_substream(config.seed, _SPLIT))
    if config.split_mode == "mesh":
        mesh_ids = list(range(len(mesh_paths)))
        rng.shuffle(mesh_ids)
        n_train = int(round(config.train_fraction * len(mesh_ids)))
        train_meshes = set(mesh_ids[:n_train])
        for e in entries:
            e["split"] = "train" if e["mesh_index"] in train_meshes else "test"
    else:
        order = np.arange(len(entries))
        rng.shuffle(order)
        n_train = int(round(config.train_fraction * len(entries)))
        train_idx = set(int(i) for i in order[:n_train])
        for i, e in enumerate(entries):
            e["split"] = "train" if i in train_idx else "test"

    manifest = {
        "seed": config.seed,
        "scheme": scheme.scheme_id,
        "split_mode": config.split_mode,
        "image_size": list(config.pose_bounds.image_size),
        "entries": entries,
    }
    with open(config.out_dir / "dataset" / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_dataset(dataset_dir: str | Path) -> tuple[dict, dict[str, SegMap]]:
    """Load the manifest plus every segment map, keyed by scene id."""
    dataset_dir = Path(dataset_dir)
    manifest_path = dataset_dir / "manifest.json"
    if not manifest_path.exists():
        raise DatasetError(f"no manifest at {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    segmaps = {}
    for e in manifest["entries"]:
        segmaps[e["scene_id"]], _ = load_segmap(dataset_dir / e["png"])
    return manifest, segmaps


def make_baseline(kind: str, scheme: SegmentScheme, rng_seed: int = 0) -> BinaryPattern:
    """Stock comparison patterns: all_black, all_white (head stays black), random."""
    if kind == "all_black":
        return make_pattern(np.zeros(scheme.k, dtype=np.uint8), scheme)
    if kind == "all_white":
        bits = np.ones(scheme.k, dtype=np.uint8)
        bits[scheme.head_id()] = 0
        for i in scheme.forced_black:
            bits[i] = 0
        return make_pattern(bits, scheme)
    if kind == "random":
        return new_random(rng_seed, scheme)
    raise ValueError(f"unknown baseline kind {kind!r}")


def make_scene_source(segmaps: list[SegMap], backgrounds: list[NirImage]):
    """Scene source for the search: fresh (segmap, background) pairs per call."""
    if not segmaps:
        raise DatasetError("no segment maps to sample scenes from")

    def source(seed: int, batch_size: int) -> list[Scene]:
        rng = np.random.default_rng(seed)
        scenes = []
        for _ in range(batch_size):
            sm = segmaps[int(rng.integers(0, len(segmaps)))]
            bg = sample_background(int(rng.integers(0, 2**63)), backgrounds,
                                   sm.image_size)
            scenes.append(Scene(sm, bg))
        return scenes

    return source


def evaluate_conditions(config: ExperimentConfig, scheme: SegmentScheme,
                        test_scenes: list[tuple[str, SegMap]],
                        conditions: dict[str, BinaryPattern | None],
                        client, backgrounds: list[NirImage]) -> list[EvalRecord]:
    """Evaluate every condition on the same test scenes over the same backgrounds.

    A condition maps to a pattern, or to None for the unattacked person
    (uniform body intensity, nothing forced to black)."""
    records = []
    for idx, (scene_id, segmap) in enumerate(test_scenes):
        bg = sample_background(_substream(config.seed, _EVAL_BG, idx),
                               backgrounds, segmap.image_size)
        gt = tuple(float(v) for v in segmap.silhouette_box)
        for name, pattern in conditions.items():
            if pattern is None:
                image = synthesize_uniform(segmap, config.no_attack_intensity, bg)
            else:
                image = synthesize_attack(segmap, pattern, bg)
            detections = tuple(client.detect(image, segmap))
            records.append(EvalRecord(scene_id, gt, detections, name))
    return records


def summarize_records(records: list[EvalRecord]) -> dict[str, dict]:
    """Group persisted records by condition and compute the report metrics."""
    by_condition: dict[str, list[EvalRecord]] = {}
    for r in records:
        by_condition.setdefault(r.condition, []).append(r)
    if "no_attack" not in by_condition:
        raise ValueError("records contain no no_attack condition")
    clean = by_condition["no_attack"]
    summaries = {"no_attack": summarize_condition(clean, None)}
    for name, recs in by_condition.items():
        if name != "no_attack":
            summaries[name] = summarize_condition(recs, clean)
    return summaries


def write_report(run_summaries: list[dict], out_dir: Path) -> dict:
    report = build_report(run_summaries)
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "report.txt", "w") as fh:
        fh.write(render_report_text(report))
    return report


def run_experiment(config: ExperimentConfig) -> dict:
    """Full pipeline: dataset, search on the train split, evaluation of the
    searched pattern plus the three stock baselines and the clean condition
    on the test split, then the report."""
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    scheme = load_scheme(config.scheme_path)
    if not (out / "dataset" / "manifest.json").exists():
        gen_dataset(config)
    manifest, segmaps = load_dataset(out / "dataset")

    backgrounds = load_background_pool(config.background_dir)
    client = parse_detector_spec(config.detector, k=scheme.k)

    train = [(e["scene_id"], segmaps[e["scene_id"]])
             for e in manifest["entries"] if e["split"] == "train"]
    test = [(e["scene_id"], segmaps[e["scene_id"]])
            for e in manifest["entries"] if e["split"] == "test"]
    if not train or not test:
        raise DatasetError(f"degenerate split: {len(train)} train / {len(test)} test")

    source = make_scene_source([sm for _, sm in train], backgrounds)
    best, _history = run_search(config.search, source, client, scheme,
                                out_dir=out / "search")

    conditions: dict[str, BinaryPattern | None] = {
        "no_attack": None,
        "all_black": make_baseline("all_black", scheme),
        "all_white": make_baseline("all_white", scheme),
        "random": make_baseline("random", scheme,
                                _substream(config.seed, _BASELINE)),
        "searched": best,
    }
    for name, pattern in conditions.items():
        if pattern is not None:
            save_pattern(pattern, out / f"pattern_{name}.json")

    records = evaluate_conditions(config, scheme, test, conditions, client,
                                  backgrounds)
    save_records(records, out / "records.jsonl")

    # Report numbers come from re-reading the persisted records.
    summaries = summarize_records(load_records(out / "records.jsonl"))
    report = write_report([summaries], out)
    return report
