"""Segment-labeled triangle meshes and the body-segment scheme.

A mesh is the unit of human geometry: vertices in meters, triangle faces,
and one segment label per vertex. The segment scheme fixes the number of
segments K, their names, and which segments are frozen to black.

Mesh file format (plain text, line oriented, `#` starts a comment):

    v x y z     vertex position, floats, meters
    l k         vertex label, one line per vertex, in vertex order
    f i j k     triangle, 0-based vertex indices

Scheme file format (JSON):

    {"id": "...", "k": 31, "names": [...], "forced_black": [0, 16, ...]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "SegmentScheme",
    "LabeledMesh",
    "MeshFormatError",
    "default_scheme",
    "load_scheme",
    "save_scheme",
    "make_mesh",
    "load_mesh",
    "save_mesh",
    "face_label",
    "face_labels",
]


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed or violates an invariant."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
            if line is not None:
                where += f"{line}:"
            where += " "
        super().__init__(where + message)
        self.path = path
        self.line = line


# The 31-part body partition used by the default schemes. The file format
# keeps part ids explicit per dataset, so nothing downstream hard-codes these.
PART_NAMES_31 = (
    "head", "neck", "chest", "back", "abdomen", "pelvis", "waist",
    "left_shoulder", "right_shoulder",
    "left_upper_arm", "right_upper_arm",
    "left_elbow", "right_elbow",
    "left_forearm", "right_forearm",
    "left_wrist", "right_wrist",
    "left_hand", "right_hand",
    "left_hip", "right_hip",
    "left_thigh", "right_thigh",
    "left_knee", "right_knee",
    "left_shin", "right_shin",
    "left_ankle", "right_ankle",
    "left_foot", "right_foot",
)


@dataclass(frozen=True)
class SegmentScheme:
    """Partition of the body into K segments, with a forced-black mask.

    Segments listed in ``forced_black`` are frozen to intensity 0 in every
    pattern (body parts whose NIR appearance cannot be simulated).
    """

    scheme_id: str
    k: int
    names: tuple[str, ...]
    forced_black: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"segment count must be >= 1, got {self.k}")
        if len(self.names) != self.k:
            raise ValueError(f"expected {self.k} names, got {len(self.names)}")
        bad = [i for i in self.forced_black if not (0 <= i < self.k)]
        if bad:
            raise ValueError(f"forced_black ids out of range [0,{self.k}): {sorted(bad)}")
        object.__setattr__(self, "forced_black", frozenset(self.forced_black))
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def free_segments(self) -> tuple[int, ...]:
        """Segment ids whose bit the search may set."""
        return tuple(i for i in range(self.k) if i not in self.forced_black)

    def head_id(self) -> int:
        try:
            return self.names.index("head")
        except ValueError:
            raise ValueError(f"scheme {self.scheme_id!r} has no segment named 'head'") from None


def default_scheme(variant: str = "5black") -> SegmentScheme:
    """The 31-part scheme in its two stock variants.

    ``5black`` freezes head, both hands and both feet; ``1black`` freezes
    only the head.
    """
    names = PART_NAMES_31
    if variant == "5black":
        forced = {names.index(n) for n in
                  ("head", "left_hand", "right_hand", "left_foot", "right_foot")}
    elif variant == "1black":
        forced = {names.index("head")}
    else:
        raise ValueError(f"unknown scheme variant {variant!r}")
    return SegmentScheme(f"person31-{variant}", 31, names, frozenset(forced))


def load_scheme(path: str | Path) -> SegmentScheme:
    with open(path) as fh:
        raw = json.load(fh)
    try:
        return SegmentScheme(
            scheme_id=raw["id"],
            k=int(raw["k"]),
            names=tuple(raw["names"]),
            forced_black=frozenset(int(i) for i in raw.get("forced_black", [])),
        )
    except (KeyError, TypeError) as exc:
        raise MeshFormatError(f"bad scheme file: {exc}", path=path) from exc


def save_scheme(scheme: SegmentScheme, path: str | Path) -> None:
    payload = {
        "id": scheme.scheme_id,
        "k": scheme.k,
        "names": list(scheme.names),
        "forced_black": sorted(scheme.forced_black),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class LabeledMesh:
    """Triangle mesh with one segment label per vertex. Immutable."""

    vertices: np.ndarray      # (V, 3) float64, meters
    faces: np.ndarray         # (F, 3) int64, vertex indices
    vertex_labels: np.ndarray  # (V,) int64, segment ids

    def __post_init__(self):
        for name in ("vertices", "faces", "vertex_labels"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def translated(self, offset) -> "LabeledMesh":
        return LabeledMesh(self.vertices + np.asarray(offset, dtype=np.float64),
                           self.faces.copy(), self.vertex_labels.copy())


def make_mesh(vertices, faces, vertex_labels, scheme: SegmentScheme) -> LabeledMesh:
    """Build and validate a LabeledMesh against a scheme."""
    v = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
    f = np.ascontiguousarray(faces, dtype=np.int64).reshape(-1, 3)
    lab = np.ascontiguousarray(vertex_labels, dtype=np.int64).reshape(-1)
    _validate(v, f, lab, scheme)
    return LabeledMesh(v, f, lab)


def _validate(v, f, lab, scheme, path=None):
    if lab.shape[0] != v.shape[0]:
        raise MeshFormatError(
            f"{lab.shape[0]} labels for {v.shape[0]} vertices", path=path)
    if f.shape[0] < 1:
        raise MeshFormatError("mesh has no faces", path=path)
    if f.size and (f.min() < 0 or f.max() >= v.shape[0]):
        bad = int(np.argwhere((f < 0) | (f >= v.shape[0]))[0, 0])
        raise MeshFormatError(
            f"face {bad} references vertex outside [0,{v.shape[0]})", path=path)
    degen = (f[:, 0] == f[:, 1]) & (f[:, 1] == f[:, 2])
    if degen.any():
        raise MeshFormatError(
            f"face {int(np.argmax(degen))} uses one vertex three times", path=path)
    if lab.size and (lab.min() < 0 or lab.max() >= scheme.k):
        bad = int(np.argwhere((lab < 0) | (lab >= scheme.k))[0, 0])
        raise MeshFormatError(
            f"vertex {bad} label {int(lab[bad])} outside [0,{scheme.k})", path=path)


def load_mesh(path: str | Path, scheme: SegmentScheme) -> LabeledMesh:
    """Parse a labeled-mesh text file and validate it against ``scheme``.

    Errors report the offending line number.
    """
    verts: list[tuple[float, float, float]] = []
    labels: list[int] = []
    faces: list[tuple[int, int, int]] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            kind, args = parts[0], parts[1:]
            try:
                if kind == "v":
                    if len(args) != 3:
                        raise ValueError("expected 3 coordinates")
                    verts.append((float(args[0]), float(args[1]), float(args[2])))
                elif kind == "l":
                    if len(args) != 1:
                        raise ValueError("expected 1 label")
                    labels.append(int(args[0]))
                elif kind == "f":
                    if len(args) != 3:
                        raise ValueError("expected 3 vertex indices")
                    faces.append((int(args[0]), int(args[1]), int(args[2])))
                else:
                    raise ValueError(f"unknown record type {kind!r}")
            except ValueError as exc:
                raise MeshFormatError(str(exc), path=path, line=lineno) from None

    v = np.array(verts, dtype=np.float64).reshape(-1, 3)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    lab = np.array(labels, dtype=np.int64).reshape(-1)
    _validate(v, f, lab, scheme, path=path)
    return LabeledMesh(v, f, lab)


def save_mesh(mesh: LabeledMesh, path: str | Path) -> None:
    """Write the canonical text form: all v lines, then l lines, then f lines.

    Float coordinates use shortest round-trip repr, so load(save(m)) is exact.
    """
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for k in mesh.vertex_labels:
            fh.write(f"l {int(k)}\n")
        for i, j, k in mesh.faces:
            fh.write(f"f {int(i)} {int(j)} {int(k)}\n")


def face_label(mesh: LabeledMesh, face_index: int) -> int:
    """Segment label of a face: majority of its vertex labels, ties to the
    smallest id. Independent of vertex order within the face."""
    if not 0 <= face_index < mesh.n_faces:
        raise IndexError(f"face index {face_index} out of range [0,{mesh.n_faces})")
    a, b, c = mesh.vertex_labels[mesh.faces[face_index]]
    if a == b or a == c:
        return int(a)
    if b == c:
        return int(b)
    return int(min(a, b, c))


def face_labels(mesh: LabeledMesh) -> np.ndarray:
    """Vectorized face_label over every face."""
    lab = mesh.vertex_labels[mesh.faces]  # (F, 3)
    a, b, c = lab[:, 0], lab[:, 1], lab[:, 2]
    out = np.min(lab, axis=1)
    out = np.where(b == c, b, out)
    out = np.where((a == b) | (a == c), a, out)
    return out.astype(np.int64)
