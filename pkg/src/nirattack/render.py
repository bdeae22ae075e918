"""Camera sampling and software rasterization of labeled meshes.

Renders a LabeledMesh through a pinhole camera into a per-pixel segment-label
map (SegMap) with hidden-surface removal. Conventions:

* camera frame: +z forward, +x right, +y down (image rows grow with +y);
* a pixel is covered when its center lies inside the projected triangle,
  with the top-left rule deciding shared edges;
* depth test is strictly-nearer-wins, first-drawn keeps ties;
* faces behind the near plane are clipped, not dropped wholesale.

SegMaps persist as single-channel PNGs of label ids (BACKGROUND = 255) plus
a JSON sidecar carrying the silhouette box and the generating pose.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .mesh import LabeledMesh, face_labels

__all__ = [
    "BACKGROUND",
    "CameraPose",
    "PoseBounds",
    "SegMap",
    "sample_camera",
    "render_segmap",
    "compute_silhouette_box",
    "save_segmap",
    "load_segmap",
    "pose_to_dict",
    "pose_from_dict",
]

BACKGROUND = 255          # label sentinel for uncovered pixels
NEAR_PLANE = 1e-4         # meters; geometry closer than this is clipped
_ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera rigid transform plus pinhole intrinsics."""

    rotation: np.ndarray        # (3,3) orthonormal, world -> camera
    translation: np.ndarray     # (3,) meters
    focal: float                # pixels
    principal_point: np.ndarray  # (2,) pixels, (cx, cy)
    image_size: tuple[int, int]  # (H, W)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        pp = np.asarray(self.principal_point, dtype=np.float64).reshape(2)
        if np.abs(r.T @ r - np.eye(3)).max() > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal within 1e-6")
        if not self.focal > 0:
            raise ValueError(f"focal must be > 0, got {self.focal}")
        h, w = self.image_size
        if h <= 0 or w <= 0:
            raise ValueError(f"image size must be positive, got {self.image_size}")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "principal_point", pp)
        object.__setattr__(self, "image_size", (int(h), int(w)))
        r.setflags(write=False)
        t.setflags(write=False)
        pp.setflags(write=False)


@dataclass(frozen=True)
class PoseBounds:
    """Sampling ranges for look-at-origin camera poses."""

    azimuth_deg: tuple[float, float] = (0.0, 360.0)
    elevation_deg: tuple[float, float] = (-10.0, 20.0)
    distance_m: tuple[float, float] = (3.0, 5.0)
    image_size: tuple[int, int] = (416, 416)
    focal: float = 500.0

    def __post_init__(self):
        for name in ("azimuth_deg", "elevation_deg", "distance_m"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is inverted: {lo} > {hi}")
        if self.distance_m[0] <= 0:
            raise ValueError("distance range must be positive")
        if self.focal <= 0:
            raise ValueError("focal must be positive")


def sample_camera(rng_seed: int, bounds: PoseBounds) -> CameraPose:
    """Draw a camera pose looking at the origin. Deterministic per seed."""
    rng = np.random.default_rng(rng_seed)
    az = np.deg2rad(rng.uniform(*bounds.azimuth_deg))
    el = np.deg2rad(rng.uniform(*bounds.elevation_deg))
    d = rng.uniform(*bounds.distance_m)

    eye = d * np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])
    fwd = -eye / np.linalg.norm(eye)                  # toward origin
    up = np.array([0.0, 1.0, 0.0])
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)                       # +y in camera frame
    r = np.stack([right, down, fwd])                  # rows = camera axes
    t = -r @ eye

    h, w = bounds.image_size
    return CameraPose(r, t, bounds.focal, np.array([w / 2.0, h / 2.0]), (h, w))


@dataclass(frozen=True)
class SegMap:
    """Per-pixel segment labels plus the tight box around the silhouette.

    ``silhouette_box`` is (x1, y1, x2, y2) in half-open pixel coordinates,
    or None when no pixel is covered.
    """

    labels: np.ndarray  # (H, W) uint8
    silhouette_box: tuple[int, int, int, int] | None

    def __post_init__(self):
        self.labels.setflags(write=False)

    @property
    def image_size(self) -> tuple[int, int]:
        return self.labels.shape  # (H, W)

    def coverage(self) -> int:
        return int((self.labels != BACKGROUND).sum())


def compute_silhouette_box(labels: np.ndarray) -> tuple[int, int, int, int] | None:
    ys, xs = np.nonzero(labels != BACKGROUND)
    if ys.size == 0:
        return None
    return (int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def _clip_near(tri: np.ndarray) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of one camera-space triangle against z >= NEAR_PLANE."""
    z = tri[:, 2]
    if (z >= NEAR_PLANE).all():
        return [tri]
    if (z < NEAR_PLANE).all():
        return []
    poly = []
    for i in range(3):
        cur, nxt = tri[i], tri[(i + 1) % 3]
        cin, nin = cur[2] >= NEAR_PLANE, nxt[2] >= NEAR_PLANE
        if cin:
            poly.append(cur)
        if cin != nin:
            t = (NEAR_PLANE - cur[2]) / (nxt[2] - cur[2])
            poly.append(cur + t * (nxt - cur))
    if len(poly) < 3:
        return []
    if len(poly) == 3:
        return [np.stack(poly)]
    return [np.stack([poly[0], poly[1], poly[2]]),
            np.stack([poly[0], poly[2], poly[3]])]


def _edge_accepts_zero(dx: float, dy: float) -> bool:
    # Top-left rule for +y-down screen coords with positive doubled area.
    return (dy == 0.0 and dx > 0.0) or dy < 0.0


def _raster_triangle(labels, invz_buf, pts2d, invz, label, h, w):
    a, b, c = pts2d
    area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if area2 == 0.0:
        return
    if area2 < 0.0:
        b, c = c, b
        invz = (invz[0], invz[2], invz[1])
        area2 = -area2

    x0 = max(int(np.ceil(min(a[0], b[0], c[0]) - 0.5)), 0)
    x1 = min(int(np.floor(max(a[0], b[0], c[0]) - 0.5)), w - 1)
    y0 = max(int(np.ceil(min(a[1], b[1], c[1]) - 0.5)), 0)
    y1 = min(int(np.floor(max(a[1], b[1], c[1]) - 0.5)), h - 1)
    if x0 > x1 or y0 > y1:
        return

    px = np.arange(x0, x1 + 1, dtype=np.float64) + 0.5
    py = np.arange(y0, y1 + 1, dtype=np.float64) + 0.5
    gx, gy = np.meshgrid(px, py)

    def edge(p, q):
        d = (q[0] - p[0], q[1] - p[1])
        val = d[0] * (gy - p[1]) - d[1] * (gx - p[0])
        ok = val > 0.0
        if _edge_accepts_zero(*d):
            ok |= val == 0.0
        return val, ok

    w0, ok0 = edge(b, c)
    w1, ok1 = edge(c, a)
    w2, ok2 = edge(a, b)
    covered = ok0 & ok1 & ok2
    if not covered.any():
        return

    iz = (w0 * invz[0] + w1 * invz[1] + w2 * invz[2]) / area2
    window_buf = invz_buf[y0:y1 + 1, x0:x1 + 1]
    win = covered & (iz > window_buf)
    window_buf[win] = iz[win]
    labels[y0:y1 + 1, x0:x1 + 1][win] = label


def render_segmap(mesh: LabeledMesh, camera: CameraPose) -> SegMap:
    """Rasterize the mesh into a segment-label map with depth buffering.

    A mesh entirely outside the frustum yields an all-background map.
    """
    h, w = camera.image_size
    labels = np.full((h, w), BACKGROUND, dtype=np.uint8)
    invz_buf = np.zeros((h, w), dtype=np.float64)

    cam = mesh.vertices @ camera.rotation.T + camera.translation
    flabels = face_labels(mesh)
    f = camera.focal
    cx, cy = camera.principal_point

    for fi in range(mesh.n_faces):
        tri = cam[mesh.faces[fi]]
        for sub in _clip_near(tri):
            z = sub[:, 2]
            sx = f * sub[:, 0] / z + cx
            sy = f * sub[:, 1] / z + cy
            pts2d = [(sx[i], sy[i]) for i in range(3)]
            _raster_triangle(labels, invz_buf, pts2d,
                             (1.0 / z[0], 1.0 / z[1], 1.0 / z[2]),
                             int(flabels[fi]), h, w)

    return SegMap(labels, compute_silhouette_box(labels))


def pose_to_dict(pose: CameraPose) -> dict:
    return {
        "rotation": pose.rotation.tolist(),
        "translation": pose.translation.tolist(),
        "focal": pose.focal,
        "principal_point": pose.principal_point.tolist(),
        "image_size": list(pose.image_size),
    }


def pose_from_dict(raw: dict) -> CameraPose:
    return CameraPose(
        rotation=np.array(raw["rotation"], dtype=np.float64),
        translation=np.array(raw["translation"], dtype=np.float64),
        focal=float(raw["focal"]),
        principal_point=np.array(raw["principal_point"], dtype=np.float64),
        image_size=tuple(raw["image_size"]),
    )


def save_segmap(segmap: SegMap, png_path: str | Path,
                pose: CameraPose | None = None) -> None:
    """Write the label PNG and its JSON sidecar (same stem, .json suffix)."""
    png_path = Path(png_path)
    Image.fromarray(segmap.labels, mode="L").save(png_path)
    sidecar = {
        "silhouette_box": list(segmap.silhouette_box) if segmap.silhouette_box else None,
        "pose": pose_to_dict(pose) if pose is not None else None,
    }
    with open(png_path.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, sort_keys=True)
        fh.write("\n")


def load_segmap(png_path: str | Path) -> tuple[SegMap, CameraPose | None]:
    png_path = Path(png_path)
    labels = np.asarray(Image.open(png_path), dtype=np.uint8)
    with open(png_path.with_suffix(".json")) as fh:
        sidecar = json.load(fh)
    box = tuple(sidecar["silhouette_box"]) if sidecar.get("silhouette_box") else None
    recomputed = compute_silhouette_box(labels)
    if box != recomputed:
        raise ValueError(f"{png_path}: sidecar silhouette box {box} != recomputed {recomputed}")
    pose = pose_from_dict(sidecar["pose"]) if sidecar.get("pose") else None
    return SegMap(labels, recomputed), pose
