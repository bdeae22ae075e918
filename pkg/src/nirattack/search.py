"""Genetic search over binary patterns against a black-box detector.

One generation: evaluate the population's mean detector confidence on a
fresh scene batch, rank fitnesses, select N with replacement proportionally
to rank score, cross consecutive pairs, mutate individuals, re-enforce the
forced-black mask, and carry the elite through unchanged.

Every random draw comes from a substream derived from
(run seed, generation, index, role), so results are independent of
evaluation scheduling and runs are resumable from any checkpoint.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .composite import NirImage, synthesize_attack
from .detector import DetectorClient
from .mesh import SegmentScheme
from .pattern import (BinaryPattern, crossover, make_pattern, mutate,
                      new_random, pattern_to_dict)
from .render import SegMap

__all__ = [
    "Scene",
    "SearchConfig",
    "PopulationState",
    "evaluate_population",
    "rank_scores",
    "select_next",
    "evolve_generation",
    "run_search",
    "load_checkpoint",
]

# Substream roles for seed derivation.
_INIT, _SCENES, _SELECT, _CROSS, _MUTATE = 0, 1, 2, 3, 4


class Scene(NamedTuple):
    segmap: SegMap
    background: NirImage


SceneSource = Callable[[int, int], list[Scene]]  # (seed, batch_size) -> scenes


@dataclass(frozen=True)
class SearchConfig:
    n: int = 1000              # population size
    batch_size: int = 300      # images scored per pattern per generation
    p_cross: float = 0.5
    p_mut: float = 0.01
    generations: int = 100
    seed: int = 0
    elitism: int = 1

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"population size must be >= 2, got {self.n}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        for name in ("p_cross", "p_mut"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {p}")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not 0 <= self.elitism < self.n:
            raise ValueError(f"elitism must be in [0,{self.n}), got {self.elitism}")

    def to_dict(self) -> dict:
        return {"n": self.n, "batch_size": self.batch_size,
                "p_cross": self.p_cross, "p_mut": self.p_mut,
                "generations": self.generations, "seed": self.seed,
                "elitism": self.elitism}


@dataclass
class PopulationState:
    patterns: list[BinaryPattern]
    fitness: np.ndarray | None = None     # (N,) mean confidences, after evaluation
    generation: int = 0
    best: tuple[BinaryPattern, float] | None = field(default=None)

    @property
    def evaluated(self) -> bool:
        return self.fitness is not None


def _substream(seed: int, *path: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def init_population(config: SearchConfig, scheme: SegmentScheme) -> PopulationState:
    patterns = [new_random(_substream(config.seed, 0, _INIT, i), scheme)
                for i in range(config.n)]
    return PopulationState(patterns=patterns, generation=0)


def image_confidence_raw(detections) -> float:
    """Fitness-side per-image reduction: max person confidence, 0 if none.

    Unthresholded on purpose; the 0.25 relevance threshold belongs to the
    metrics module, not the search signal.
    """
    persons = [d.confidence for d in detections if d.label == "person"]
    return max(persons) if persons else 0.0


def evaluate_population(state: PopulationState, scenes: Sequence[Scene],
                        client: DetectorClient) -> PopulationState:
    """Score every pattern on the same scene batch; fitness is the mean of
    per-image max person confidence."""
    if not scenes:
        raise ValueError("scene batch is empty")
    fitness = np.empty(len(state.patterns), dtype=np.float64)
    for i, pattern in enumerate(state.patterns):
        images = [synthesize_attack(sc.segmap, pattern, sc.background)
                  for sc in scenes]
        if hasattr(client, "detect_batch"):
            results = client.detect_batch(images, [sc.segmap for sc in scenes])
        else:
            results = [client.detect(img, sc.segmap)
                       for img, sc in zip(images, scenes)]
        fitness[i] = float(np.mean([image_confidence_raw(dets) for dets in results]))

    best = state.best
    j = int(np.argmin(fitness))
    if best is None or fitness[j] < best[1]:
        best = (state.patterns[j], float(fitness[j]))
    return replace(state, fitness=fitness, best=best)


def rank_scores(fitness: Sequence[float]) -> np.ndarray:
    """Rank score f_i = (c_max - c_i) / (c_max - c_min).

    The lowest-confidence pattern scores 1, the highest 0. When every
    confidence is equal the formula is 0/0; all scores become 1 so selection
    degrades to uniform.
    """
    c = np.asarray(fitness, dtype=np.float64)
    if c.shape[0] < 2:
        raise ValueError("ranking needs at least 2 fitness values")
    c_min, c_max = float(c.min()), float(c.max())
    if c_max == c_min:
        return np.ones_like(c)
    return (c_max - c) / (c_max - c_min)


def select_next(patterns: Sequence[BinaryPattern], f: Sequence[float],
                rng_seed: int) -> list[BinaryPattern]:
    """N independent draws with replacement, probability f_n / sum(f)."""
    f = np.asarray(f, dtype=np.float64)
    total = float(f.sum())
    if total <= 0:
        raise ValueError("rank scores sum to zero")
    rng = np.random.default_rng(rng_seed)
    idx = rng.choice(len(patterns), size=len(patterns), replace=True, p=f / total)
    return [patterns[int(i)] for i in idx]


def evolve_generation(state: PopulationState, config: SearchConfig,
                      scheme: SegmentScheme) -> PopulationState:
    """Produce the next (unevaluated) population from an evaluated one."""
    if not state.evaluated:
        raise ValueError("evolve_generation requires an evaluated state")
    g, seed = state.generation, config.seed

    f = rank_scores(state.fitness)
    selected = select_next(state.patterns, f, _substream(seed, g, _SELECT))

    nxt: list[BinaryPattern] = []
    for j in range(0, len(selected) - 1, 2):
        a, b = selected[j], selected[j + 1]
        rng = np.random.default_rng(_substream(seed, g, _CROSS, j))
        if rng.random() < config.p_cross:
            cut = int(rng.integers(1, scheme.k))
            a, b = crossover(a, b, cut, scheme)
        nxt.extend((a, b))
    if len(selected) % 2 == 1:
        nxt.append(selected[-1])

    for i in range(len(nxt)):
        rng = np.random.default_rng(_substream(seed, g, _MUTATE, i))
        if rng.random() < config.p_mut:
            nxt[i] = mutate(nxt[i], _substream(seed, g, _MUTATE, i, 1), scheme)

    # Constraints hold by construction, but cheap to re-assert after operators.
    nxt = [make_pattern(p.bits, scheme) for p in nxt]

    if config.elitism > 0:
        order = np.argsort(state.fitness, kind="stable")[:config.elitism]
        for slot, src in enumerate(order):
            nxt[slot] = state.patterns[int(src)]

    return PopulationState(patterns=nxt, generation=g + 1, best=state.best)


def _write_checkpoint(state: PopulationState, config: SearchConfig, path: Path) -> None:
    payload = {
        "generation": state.generation,
        "config": config.to_dict(),
        "patterns": [pattern_to_dict(p) for p in state.patterns],
        "fitness": [float(v) for v in state.fitness],
        "best": {"pattern": pattern_to_dict(state.best[0]),
                 "confidence": state.best[1]},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_checkpoint(path: str | Path, scheme: SegmentScheme) -> tuple[PopulationState, SearchConfig]:
    with open(path) as fh:
        raw = json.load(fh)
    config = SearchConfig(**raw["config"])
    patterns = [make_pattern(p["bits"], scheme) for p in raw["patterns"]]
    best = (make_pattern(raw["best"]["pattern"]["bits"], scheme),
            float(raw["best"]["confidence"]))
    state = PopulationState(patterns=patterns,
                            fitness=np.array(raw["fitness"], dtype=np.float64),
                            generation=int(raw["generation"]), best=best)
    return state, config


def run_search(config: SearchConfig, scene_source: SceneSource,
               client: DetectorClient, scheme: SegmentScheme,
               out_dir: str | Path | None = None,
               resume_from: str | Path | None = None,
               ) -> tuple[BinaryPattern, list[dict]]:
    """Run the full search and return the best pattern plus per-generation stats.

    ``generations`` counts evolution steps after the initial population, so a
    zero-generation run still evaluates and reports the random population.
    With ``out_dir`` set, writes config.json, history.csv (deterministic
    columns), timings.csv (wall clock, intentionally separate), checkpoints,
    and best_pattern.json.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "checkpoints").mkdir(exist_ok=True)
        with open(out / "config.json", "w") as fh:
            json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    if resume_from is not None:
        state, ck_config = load_checkpoint(resume_from, scheme)
        if ck_config != config:
            raise ValueError("checkpoint config differs from the requested config")
        if state.generation < config.generations:
            state = evolve_generation(state, config, scheme)
        start_gen = state.generation
        history: list[dict] = []
    else:
        state = init_population(config, scheme)
        start_gen = 0
        history = []

    timings: list[tuple[int, int]] = []
    for g in range(start_gen, config.generations + 1):
        t0 = time.perf_counter()
        scenes = scene_source(_substream(config.seed, g, _SCENES), config.batch_size)
        if len(scenes) < config.batch_size:
            raise ValueError(
                f"scene source yielded {len(scenes)} < batch size {config.batch_size}")
        state = evaluate_population(state, scenes, client)
        row = {
            "generation": g,
            "c_min": float(state.fitness.min()),
            "c_mean": float(state.fitness.mean()),
            "c_max": float(state.fitness.max()),
        }
        history.append(row)
        timings.append((g, int((time.perf_counter() - t0) * 1000)))
        if out is not None:
            _write_checkpoint(state, config, out / "checkpoints" / f"gen_{g}.json")
        if g == config.generations:
            break
        state = evolve_generation(state, config, scheme)

    best_pattern, _best_c = state.best
    if out is not None:
        with open(out / "history.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["generation", "c_min", "c_mean", "c_max"])
            writer.writeheader()
            writer.writerows(history)
        with open(out / "timings.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["generation", "wall_ms"])
            writer.writerows(timings)
        with open(out / "best_pattern.json", "w") as fh:
            json.dump(pattern_to_dict(best_pattern), fh)
            fh.write("\n")
    return best_pattern, history
