"""Procedural desk-scale assets: segment-striped billboards, blocky humanoids,
and smooth noise backgrounds.

Real runs consume externally prepared labeled meshes and captured NIR frames;
these builders exist so experiments, tests, and demos can run self-contained.
All geometry is in meters with the body centered at the origin, y up.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .composite import NirImage, save_nir_image
from .mesh import LabeledMesh, SegmentScheme, make_mesh

__all__ = [
    "billboard_mesh",
    "humanoid_mesh",
    "make_noise_background",
    "make_background_pool",
    "save_background_pool",
]

_BOX_FACES = np.array([
    [0, 1, 2], [0, 2, 3],  # front
    [5, 4, 7], [5, 7, 6],  # back
    [4, 0, 3], [4, 3, 7],  # left
    [1, 5, 6], [1, 6, 2],  # right
    [3, 2, 6], [3, 6, 7],  # top
    [4, 5, 1], [4, 1, 0],  # bottom
], dtype=np.int64)


def _box(center, half) -> np.ndarray:
    cx, cy, cz = center
    hx, hy, hz = half
    return np.array([
        [cx - hx, cy - hy, cz + hz], [cx + hx, cy - hy, cz + hz],
        [cx + hx, cy + hy, cz + hz], [cx - hx, cy + hy, cz + hz],
        [cx - hx, cy - hy, cz - hz], [cx + hx, cy - hy, cz - hz],
        [cx + hx, cy + hy, cz - hz], [cx - hx, cy + hy, cz - hz],
    ], dtype=np.float64)


def billboard_mesh(scheme: SegmentScheme, width: float = 1.2,
                   height: float = 1.6) -> LabeledMesh:
    """Flat panel of K vertical strips, one segment per strip.

    Every segment is visible from any frontal camera, which makes detector
    responses depend on the pattern alone; the workhorse for search tests.
    """
    k = scheme.k
    xs = np.linspace(-width / 2, width / 2, k + 1)
    verts, labels, faces = [], [], []
    for i in range(k):
        base = len(verts)
        verts += [
            [xs[i], -height / 2, 0.0], [xs[i + 1], -height / 2, 0.0],
            [xs[i + 1], height / 2, 0.0], [xs[i], height / 2, 0.0],
        ]
        labels += [i] * 4
        faces += [[base, base + 1, base + 2], [base, base + 2, base + 3]]
    return make_mesh(np.array(verts), np.array(faces), np.array(labels), scheme)


# (name, center (x, y, z), half sizes (hx, hy, hz)); y up, meters.
_HUMANOID_PARTS = {
    "head":           ((0.00, 0.645, 0.00), (0.090, 0.105, 0.095)),
    "neck":           ((0.00, 0.510, 0.00), (0.045, 0.035, 0.050)),
    "chest":          ((0.00, 0.380, 0.05), (0.170, 0.100, 0.060)),
    "back":           ((0.00, 0.380, -0.06), (0.170, 0.100, 0.050)),
    "abdomen":        ((0.00, 0.220, 0.00), (0.150, 0.065, 0.100)),
    "waist":          ((0.00, 0.120, 0.00), (0.145, 0.040, 0.100)),
    "pelvis":         ((0.00, 0.040, 0.00), (0.155, 0.045, 0.105)),
    "left_shoulder":  ((-0.215, 0.440, 0.00), (0.055, 0.045, 0.055)),
    "right_shoulder": ((0.215, 0.440, 0.00), (0.055, 0.045, 0.055)),
    "left_upper_arm": ((-0.250, 0.330, 0.00), (0.045, 0.075, 0.050)),
    "right_upper_arm": ((0.250, 0.330, 0.00), (0.045, 0.075, 0.050)),
    "left_elbow":     ((-0.255, 0.230, 0.00), (0.042, 0.030, 0.045)),
    "right_elbow":    ((0.255, 0.230, 0.00), (0.042, 0.030, 0.045)),
    "left_forearm":   ((-0.260, 0.115, 0.00), (0.038, 0.085, 0.042)),
    "right_forearm":  ((0.260, 0.115, 0.00), (0.038, 0.085, 0.042)),
    "left_wrist":     ((-0.260, 0.010, 0.00), (0.035, 0.022, 0.038)),
    "right_wrist":    ((0.260, 0.010, 0.00), (0.035, 0.022, 0.038)),
    "left_hand":      ((-0.260, -0.075, 0.00), (0.038, 0.065, 0.030)),
    "right_hand":     ((0.260, -0.075, 0.00), (0.038, 0.065, 0.030)),
    "left_hip":       ((-0.090, -0.045, 0.00), (0.065, 0.045, 0.090)),
    "right_hip":      ((0.090, -0.045, 0.00), (0.065, 0.045, 0.090)),
    "left_thigh":     ((-0.090, -0.210, 0.00), (0.062, 0.125, 0.080)),
    "right_thigh":    ((0.090, -0.210, 0.00), (0.062, 0.125, 0.080)),
    "left_knee":      ((-0.090, -0.370, 0.00), (0.052, 0.038, 0.065)),
    "right_knee":     ((0.090, -0.370, 0.00), (0.052, 0.038, 0.065)),
    "left_shin":      ((-0.090, -0.530, 0.00), (0.045, 0.125, 0.055)),
    "right_shin":     ((0.090, -0.530, 0.00), (0.045, 0.125, 0.055)),
    "left_ankle":     ((-0.090, -0.690, 0.00), (0.040, 0.035, 0.050)),
    "right_ankle":    ((0.090, -0.690, 0.00), (0.040, 0.035, 0.050)),
    "left_foot":      ((-0.090, -0.760, 0.045), (0.048, 0.035, 0.110)),
    "right_foot":     ((0.090, -0.760, 0.045), (0.048, 0.035, 0.110)),
}

_ARM_PARTS = ("shoulder", "upper_arm", "elbow", "forearm", "wrist", "hand")
_LEG_PARTS = ("hip", "thigh", "knee", "shin", "ankle", "foot")


def humanoid_mesh(scheme: SegmentScheme, identity_seed: int = 0,
                  pose_seed: int = 0) -> LabeledMesh:
    """Blocky 31-part humanoid; cuboid per segment.

    identity_seed jitters limb and torso proportions, pose_seed swings arms
    and legs forward/backward, so a (meshes x poses) grid gets distinct
    silhouettes. Requires a scheme using the stock 31 part names.
    """
    id_rng = np.random.default_rng(identity_seed)
    pose_rng = np.random.default_rng(pose_seed)

    width_scale = id_rng.uniform(0.85, 1.15)
    height_scale = id_rng.uniform(0.9, 1.1)
    bulk = id_rng.uniform(0.9, 1.1)

    # Forward/backward swing per limb, radians around the shoulder/hip pivot.
    swing = {
        "left_arm": pose_rng.uniform(-0.5, 0.5),
        "right_arm": pose_rng.uniform(-0.5, 0.5),
        "left_leg": pose_rng.uniform(-0.35, 0.35),
        "right_leg": pose_rng.uniform(-0.35, 0.35),
    }
    pivots = {"left_arm": 0.44, "right_arm": 0.44,
              "left_leg": -0.045, "right_leg": -0.045}

    verts, labels, faces = [], [], []
    for name, (center, half) in _HUMANOID_PARTS.items():
        cx, cy, cz = center
        hx, hy, hz = half
        cx *= width_scale
        cy *= height_scale
        hx *= bulk
        hz *= bulk

        chain = None
        for side in ("left", "right"):
            base = name.removeprefix(f"{side}_")
            if name.startswith(side) and base in _ARM_PARTS:
                chain = f"{side}_arm"
            elif name.startswith(side) and base in _LEG_PARTS:
                chain = f"{side}_leg"
        if chain is not None:
            theta = swing[chain]
            py = pivots[chain] * height_scale
            dy, dz = cy - py, cz
            cy = py + dy * np.cos(theta) - dz * np.sin(theta)
            cz = dy * np.sin(theta) + dz * np.cos(theta)

        base_idx = len(verts)
        verts.extend(_box((cx, cy, cz), (hx, hy, hz)).tolist())
        labels.extend([scheme.names.index(name)] * 8)
        faces.extend((_BOX_FACES + base_idx).tolist())

    return make_mesh(np.array(verts), np.array(faces), np.array(labels), scheme)


def make_noise_background(seed: int, size: tuple[int, int] = (416, 416),
                          base: float = 90.0, amplitude: float = 30.0) -> NirImage:
    """Smooth low-frequency nighttime-ish background with mild grain."""
    rng = np.random.default_rng(seed)
    h, w = size
    coarse = rng.normal(base, amplitude, size=(8, 8))
    smooth = np.asarray(
        Image.fromarray(coarse.astype(np.float32), mode="F").resize((w, h), Image.BILINEAR))
    grain = rng.normal(0, 4.0, size=(h, w))
    pixels = np.clip(np.rint(smooth + grain), 0, 255).astype(np.uint8)
    return NirImage(pixels, "background")


def make_background_pool(n: int, size: tuple[int, int] = (416, 416),
                         seed: int = 0) -> list[NirImage]:
    root = np.random.SeedSequence(seed)
    return [make_noise_background(int(s.generate_state(1)[0]), size)
            for s in root.spawn(n)]


def save_background_pool(pool: list[NirImage], directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(pool):
        p = directory / f"bg_{i:04d}.png"
        save_nir_image(img, p)
        paths.append(p)
    return paths
