"""Evaluation metrics: Average Confidence, Attack Success Rate, Detection Rate.

Conventions pinned here and used everywhere:

* a detection is attack-relevant when its confidence is >= 0.25;
* a scene counts as a true positive when some person detection is relevant
  and overlaps the ground-truth silhouette box with IoU >= 0.5;
* ASR = (1 - N_a / N_0) * 100, where N_0 counts true-positive scenes without
  attack and N_a counts relevant person detections (not scenes) under attack.
  ASR is never clamped: a pattern that spawns extra detections goes negative,
  which is worth seeing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .detector import Detection, detection_from_dict

__all__ = [
    "CONFIDENCE_THRESHOLD",
    "IOU_THRESHOLD",
    "EvalRecord",
    "MetricUndefinedError",
    "box_iou",
    "image_confidence",
    "average_confidence",
    "attack_success_rate",
    "detection_rate",
    "is_true_positive",
    "save_records",
    "load_records",
    "summarize_condition",
    "build_report",
    "render_report_text",
]

CONFIDENCE_THRESHOLD = 0.25   # official YOLO-style relevance threshold
IOU_THRESHOLD = 0.5           # standard true-positive overlap criterion


class MetricUndefinedError(ValueError):
    """Raised when N_0 = 0 leaves the attack unmeasurable."""


@dataclass(frozen=True)
class EvalRecord:
    scene_id: str
    gt_box: tuple[float, float, float, float]
    detections: tuple[Detection, ...]
    condition: str   # "no_attack" | baseline name | "searched"

    def to_dict(self) -> dict:
        return {"scene_id": self.scene_id, "gt_box": list(self.gt_box),
                "detections": [d.to_dict() for d in self.detections],
                "condition": self.condition}


def record_from_dict(raw: dict) -> EvalRecord:
    return EvalRecord(
        scene_id=str(raw["scene_id"]),
        gt_box=tuple(float(v) for v in raw["gt_box"]),
        detections=tuple(detection_from_dict(d) for d in raw["detections"]),
        condition=str(raw["condition"]),
    )


def box_iou(a: Sequence[float], b: Sequence[float]) -> float:
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union if union > 0 else 0.0


def _relevant_persons(record: EvalRecord) -> list[Detection]:
    return [d for d in record.detections
            if d.label == "person" and d.confidence >= CONFIDENCE_THRESHOLD]


def image_confidence(record: EvalRecord) -> float:
    """Max relevant person confidence in the scene, 0 when nothing passes."""
    persons = _relevant_persons(record)
    return max(d.confidence for d in persons) if persons else 0.0


def average_confidence(records: Iterable[EvalRecord]) -> float:
    values = [image_confidence(r) for r in records]
    if not values:
        raise ValueError("average_confidence over an empty record set")
    return float(np.mean(values))


def is_true_positive(record: EvalRecord) -> bool:
    return any(box_iou(d.box, record.gt_box) >= IOU_THRESHOLD
               for d in _relevant_persons(record))


def attack_success_rate(no_attack: Iterable[EvalRecord],
                        attacked: Iterable[EvalRecord]) -> float:
    """ASR percentage for one attacked condition against the clean baseline."""
    n0 = sum(1 for r in no_attack if is_true_positive(r))
    if n0 == 0:
        raise MetricUndefinedError("no true positives without attack (N_0 = 0)")
    na = sum(len(_relevant_persons(r)) for r in attacked)
    return (1.0 - na / n0) * 100.0


def detection_rate(records: Iterable[EvalRecord]) -> float:
    """Percent of scenes with a true-positive person detection."""
    records = list(records)
    if not records:
        raise ValueError("detection_rate over an empty record set")
    return 100.0 * sum(1 for r in records if is_true_positive(r)) / len(records)


def save_records(records: Iterable[EvalRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True))
            fh.write("\n")


def load_records(path: str | Path) -> list[EvalRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(record_from_dict(json.loads(line)))
    return out


def summarize_condition(records: Sequence[EvalRecord],
                        no_attack: Sequence[EvalRecord] | None) -> dict:
    """Per-condition metrics: AC always; DR for the clean condition, ASR for
    attacked conditions measured against the clean one."""
    summary = {"n_scenes": len(records), "ac": average_confidence(records)}
    if no_attack is None:
        summary["dr"] = detection_rate(records)
    else:
        summary["asr"] = attack_success_rate(no_attack, records)
    return summary


def build_report(runs: Sequence[dict[str, dict]]) -> dict:
    """Aggregate per-run condition summaries into mean +/- stddev.

    ``runs`` is a list of {condition: summary} dicts, one per repeated run.
    Standard deviation is population stddev over repeats (0.0 for one run).
    """
    if not runs:
        raise ValueError("no runs to report")
    conditions: dict[str, dict] = {}
    for cond in runs[0]:
        metrics: dict[str, dict] = {}
        for key in ("ac", "asr", "dr"):
            vals = [run[cond][key] for run in runs if key in run[cond]]
            if vals:
                metrics[key] = {"mean": float(np.mean(vals)),
                                "std": float(np.std(vals))}
        metrics["n_scenes"] = runs[0][cond]["n_scenes"]
        conditions[cond] = metrics
    return {"repeats": len(runs), "conditions": conditions}


def render_report_text(report: dict) -> str:
    """Text table: one row per condition, AC and ASR (or DR) columns."""
    lines = [
        f"repeats: {report['repeats']}",
        f"{'condition':<16} {'AC':>16} {'ASR/DR (%)':>20}",
        "-" * 54,
    ]

    def fmt(metric: dict | None, suffix: str = "") -> str:
        if metric is None:
            return "-"
        return f"{metric['mean']:.3f} +/- {metric['std']:.3f}{suffix}"

    for cond, m in report["conditions"].items():
        rate = m.get("asr") or m.get("dr")
        tag = " (DR)" if "dr" in m else ""
        lines.append(f"{cond:<16} {fmt(m.get('ac')):>16} {fmt(rate) + tag:>20}")
    return "\n".join(lines) + "\n"
