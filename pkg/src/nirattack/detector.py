"""The black-box detector boundary.

The search only ever observes detector outputs: boxes and confidences. Two
clients implement that contract:

* SyntheticDetector: a linear-logit oracle over per-segment mean intensities.
  Small enough that GA convergence can be checked against brute force, yet it
  exercises the full image pipeline. It reads the scene's segment map as
  instrumentation, which a remote detector never sees.
* HttpDetector: speaks the shared wire protocol (POST /detect with PNG bytes,
  GET /healthz) to a detector microservice, with retries and bounded
  concurrency. Grayscale frames are replicated to three channels on the wire.

Detections below the wire floor (0.001) are dropped; the attack-relevance
threshold (0.25) is applied downstream in metrics, never here.
"""

from __future__ import annotations

import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from PIL import Image

from .composite import NirImage
from .render import BACKGROUND, SegMap

__all__ = [
    "WIRE_FLOOR",
    "Detection",
    "DetectorClient",
    "SyntheticDetector",
    "HttpDetector",
    "TransportError",
    "MalformedResponseError",
    "synthetic_confidence",
    "segment_mean_intensities",
    "encode_png_rgb",
]

log = logging.getLogger(__name__)

WIRE_FLOOR = 0.001


class TransportError(RuntimeError):
    """Detector endpoint unreachable, timed out, or returned a non-200."""


class MalformedResponseError(RuntimeError):
    """Detector answered 200 but the payload does not parse as detections."""


@dataclass(frozen=True)
class Detection:
    label: str
    confidence: float
    box: tuple[float, float, float, float]  # (x1, y1, x2, y2) pixels

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0,1]")
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise ValueError(f"degenerate box {self.box}")

    def to_dict(self) -> dict:
        return {"label": self.label, "confidence": self.confidence,
                "box": list(self.box)}


def detection_from_dict(raw: dict) -> Detection:
    return Detection(str(raw["label"]), float(raw["confidence"]),
                     tuple(float(v) for v in raw["box"]))


class DetectorClient(Protocol):
    """Observation-only oracle: an image in, detections out, nothing retained."""

    def detect(self, image: NirImage, segmap: SegMap | None = None) -> list[Detection]:
        ...


def segment_mean_intensities(image: NirImage, segmap: SegMap, k: int) -> np.ndarray:
    """Per-segment mean intensity normalized to [0,1]; 0 for absent segments."""
    if image.pixels.shape != segmap.labels.shape:
        raise ValueError(
            f"image {image.pixels.shape} and segmap {segmap.labels.shape} differ")
    labels = segmap.labels
    fg = labels != BACKGROUND
    if fg.any() and int(labels[fg].max()) >= k:
        raise ValueError(f"segment label {int(labels[fg].max())} >= K {k}")
    sums = np.bincount(labels[fg].ravel(),
                       weights=image.pixels[fg].astype(np.float64).ravel(),
                       minlength=k)[:k]
    counts = np.bincount(labels[fg].ravel(), minlength=k)[:k]
    means = np.divide(sums, counts, out=np.zeros(k), where=counts > 0)
    return means / 255.0


def synthetic_confidence(image: NirImage, segmap: SegMap,
                         weights: Sequence[float], bias: float) -> float:
    """Logistic of a linear form over per-segment mean intensities."""
    w = np.asarray(weights, dtype=np.float64)
    s = segment_mean_intensities(image, segmap, w.shape[0])
    logit = float(w @ s + bias)
    return float(1.0 / (1.0 + np.exp(-logit)))


class SyntheticDetector:
    """Desk-scale stand-in oracle: one person detection per frame.

    The reported box is the scene's silhouette box, or the full frame when
    no segment is visible. Without a paired segmap the detector sees no
    segments at all (every mean is zero), so confidence is logistic(bias).
    """

    def __init__(self, weights: Sequence[float], bias: float = 0.0):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    def detect(self, image: NirImage, segmap: SegMap | None = None) -> list[Detection]:
        h, w = image.image_size
        if segmap is None:
            conf = float(1.0 / (1.0 + np.exp(-self.bias)))
            box = (0.0, 0.0, float(w), float(h))
        else:
            conf = synthetic_confidence(image, segmap, self.weights, self.bias)
            if segmap.silhouette_box is not None:
                box = tuple(float(v) for v in segmap.silhouette_box)
            else:
                box = (0.0, 0.0, float(w), float(h))
        if conf < WIRE_FLOOR:
            return []
        return [Detection("person", conf, box)]

    def detect_batch(self, images: Sequence[NirImage],
                     segmaps: Sequence[SegMap] | None = None) -> list[list[Detection]]:
        segs = segmaps if segmaps is not None else [None] * len(images)
        return [self.detect(img, sm) for img, sm in zip(images, segs)]


def encode_png_rgb(image: NirImage) -> bytes:
    """Grayscale replicated to 3 channels, as the wire protocol expects."""
    rgb = np.repeat(image.pixels[:, :, None], 3, axis=2)
    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


class HttpDetector:
    """Client for the detector wire protocol.

    policy="strict" raises on a malformed response; policy="lenient" logs it
    and scores the frame as zero detections. Timeouts are retried up to
    ``retries`` extra attempts. Non-200 responses are transport errors.
    """

    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = 2,
                 policy: str = "strict", max_inflight: int = 8):
        if policy not in ("strict", "lenient"):
            raise ValueError(f"unknown policy {policy!r}")
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.policy = policy
        self.max_inflight = max_inflight

    def _post(self, payload: bytes) -> dict:
        import requests

        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = requests.post(
                    f"{self.endpoint}/detect", data=payload,
                    headers={"Content-Type": "image/png"}, timeout=self.timeout)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_exc = exc
                continue
            if resp.status_code != 200:
                raise TransportError(
                    f"{self.endpoint}/detect returned {resp.status_code}")
            try:
                return resp.json()
            except ValueError as exc:
                raise MalformedResponseError(f"unparseable JSON: {exc}") from exc
        raise TransportError(f"{self.endpoint}/detect unreachable: {last_exc}")

    def detect(self, image: NirImage, segmap: SegMap | None = None) -> list[Detection]:
        del segmap  # remote oracle never sees instrumentation
        h, w = image.image_size
        try:
            body = self._post(encode_png_rgb(image))
            dets = self._parse(body, (h, w))
        except MalformedResponseError:
            if self.policy == "strict":
                raise
            log.warning("lenient policy: malformed response counted as no detections")
            return []
        return dets

    @staticmethod
    def _parse(body: dict, image_size: tuple[int, int]) -> list[Detection]:
        h, w = image_size
        try:
            raw = body["detections"]
            dets = [detection_from_dict(d) for d in raw]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponseError(str(exc)) from exc
        for d in dets:
            x1, y1, x2, y2 = d.box
            if x1 < 0 or y1 < 0 or x2 > w or y2 > h:
                raise MalformedResponseError(f"box {d.box} outside {w}x{h} image")
        dets = [d for d in dets if d.confidence >= WIRE_FLOOR]
        return sorted(dets, key=lambda d: -d.confidence)

    def detect_batch(self, images: Sequence[NirImage],
                     segmaps: Sequence[SegMap] | None = None) -> list[list[Detection]]:
        del segmaps
        if len(images) == 1:
            return [self.detect(images[0])]
        with ThreadPoolExecutor(max_workers=min(self.max_inflight, len(images))) as ex:
            return list(ex.map(self.detect, images))

    def healthz(self) -> bool:
        import requests

        try:
            resp = requests.get(f"{self.endpoint}/healthz", timeout=self.timeout)
        except (requests.Timeout, requests.ConnectionError):
            return False
        return resp.status_code == 200


def parse_detector_spec(spec: str, k: int | None = None):
    """Build a client from a config string.

    ``http(s)://...`` gives an HttpDetector. ``synthetic:<file.json>`` loads
    {"weights": [...], "bias": ...}. ``synthetic:random:<seed>`` draws weights
    uniform in [-3, 3] and bias in [0, 2] for a K-segment scheme.
    """
    if spec.startswith(("http://", "https://")):
        return HttpDetector(spec)
    if spec.startswith("synthetic:random:"):
        if k is None:
            raise ValueError("synthetic:random requires the scheme's K")
        seed = int(spec.rsplit(":", 1)[1])
        rng = np.random.default_rng(seed)
        return SyntheticDetector(rng.uniform(-3, 3, size=k), float(rng.uniform(0, 2)))
    if spec.startswith("synthetic:"):
        with open(spec.split(":", 1)[1]) as fh:
            raw = json.load(fh)
        return SyntheticDetector(raw["weights"], float(raw.get("bias", 0.0)))
    raise ValueError(f"unrecognized detector spec {spec!r}")
