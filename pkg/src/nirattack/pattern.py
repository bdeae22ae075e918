"""Binary chromosome algebra: creation, constraint enforcement, crossover, mutation.

A pattern is a K-length 0/1 vector, one bit per body segment (bit 1 renders
as 255, bit 0 as 0). Bits listed in the scheme's forced-black mask are always
0. Patterns are immutable values; every operator takes an explicit seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import SegmentScheme

__all__ = [
    "BinaryPattern",
    "make_pattern",
    "new_random",
    "crossover",
    "mutate",
    "pattern_to_dict",
    "pattern_from_dict",
    "save_pattern",
    "load_pattern",
]


@dataclass(frozen=True)
class BinaryPattern:
    bits: np.ndarray   # (K,) uint8 over {0,1}
    scheme_ref: str

    def __post_init__(self):
        self.bits.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, BinaryPattern):
            return NotImplemented
        return self.scheme_ref == other.scheme_ref and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.scheme_ref, self.bits.tobytes()))

    def __len__(self):
        return self.bits.shape[0]


def _enforce(bits: np.ndarray, scheme: SegmentScheme) -> np.ndarray:
    if scheme.forced_black:
        bits[list(scheme.forced_black)] = 0
    return bits


def make_pattern(bits, scheme: SegmentScheme) -> BinaryPattern:
    """Validate raw bits against the scheme and freeze them into a pattern."""
    arr = np.ascontiguousarray(bits, dtype=np.uint8).reshape(-1)
    if arr.shape[0] != scheme.k:
        raise ValueError(f"pattern length {arr.shape[0]} != scheme K {scheme.k}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("pattern bits must be 0 or 1")
    if any(arr[i] != 0 for i in scheme.forced_black):
        raise ValueError("forced-black bit set to 1")
    return BinaryPattern(arr, scheme.scheme_id)


def new_random(rng_seed: int, scheme: SegmentScheme) -> BinaryPattern:
    """Uniform random free bits, forced-black bits zero. Deterministic per seed."""
    rng = np.random.default_rng(rng_seed)
    bits = rng.integers(0, 2, size=scheme.k, dtype=np.uint8)
    return BinaryPattern(_enforce(bits, scheme), scheme.scheme_id)


def crossover(a: BinaryPattern, b: BinaryPattern, index: int,
              scheme: SegmentScheme) -> tuple[BinaryPattern, BinaryPattern]:
    """Single-point crossover: children exchange tails from ``index`` onward."""
    if a.scheme_ref != b.scheme_ref or a.scheme_ref != scheme.scheme_id:
        raise ValueError(f"scheme mismatch: {a.scheme_ref!r} vs {b.scheme_ref!r} vs {scheme.scheme_id!r}")
    k = scheme.k
    if not 0 < index < k:
        raise ValueError(f"crossover index must be in (0,{k}), got {index}")
    c1 = np.concatenate([a.bits[:index], b.bits[index:]]).astype(np.uint8)
    c2 = np.concatenate([b.bits[:index], a.bits[index:]]).astype(np.uint8)
    return (BinaryPattern(_enforce(c1, scheme), scheme.scheme_id),
            BinaryPattern(_enforce(c2, scheme), scheme.scheme_id))


def mutate(p: BinaryPattern, rng_seed: int, scheme: SegmentScheme) -> BinaryPattern:
    """Flip one uniformly chosen free bit. Forced-black bits are never candidates."""
    free = scheme.free_segments
    if not free:
        raise ValueError("scheme has no free segments to mutate")
    rng = np.random.default_rng(rng_seed)
    i = free[int(rng.integers(0, len(free)))]
    bits = p.bits.copy()
    bits[i] ^= 1
    return BinaryPattern(bits, p.scheme_ref)


def pattern_to_dict(p: BinaryPattern) -> dict:
    return {"scheme": p.scheme_ref, "bits": [int(b) for b in p.bits]}


def pattern_from_dict(raw: dict, scheme: SegmentScheme) -> BinaryPattern:
    if raw.get("scheme") != scheme.scheme_id:
        raise ValueError(f"pattern scheme {raw.get('scheme')!r} != {scheme.scheme_id!r}")
    return make_pattern(raw["bits"], scheme)


def save_pattern(p: BinaryPattern, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(pattern_to_dict(p), fh)
        fh.write("\n")


def load_pattern(path: str | Path, scheme: SegmentScheme) -> BinaryPattern:
    with open(path) as fh:
        return pattern_from_dict(json.load(fh), scheme)
