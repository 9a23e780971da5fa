"""Average precision for human-object interaction triplets.

A detection is a true positive when both its human box and its object box
overlap (IoU strictly above the threshold) a not-yet-matched ground truth of
the same category in the same image. Detections are consumed in descending
score order; ties keep input order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DataError, SchemaError
from .matching import BBox, GroundTruthInstance, HoiPrediction, inference_score, iou


@dataclass(frozen=True)
class Detection:
    image_id: object
    human_box: BBox
    object_box: BBox
    category_id: int
    score: float


def detections_from_predictions(preds: Mapping[object, Sequence[HoiPrediction]], gamma: float = 2.0,
                                top_k: int = 1) -> list[Detection]:
    """Expand predictions into scored triplets for their ``top_k`` categories.

    Each triplet score is the category score damped by the box confidence.
    """
    out = []
    for image_id, plist in preds.items():
        for p in plist:
            scores = np.asarray(p.class_scores)
            order = np.argsort(-scores, kind="stable")[:top_k]
            for c in order:
                out.append(Detection(image_id, p.human_box, p.object_box, int(c),
                                     inference_score(float(scores[c]), p.box_score, gamma)))
    return out


def average_precision(recall: np.ndarray, precision: np.ndarray, interpolation: str = "all") -> float:
    if interpolation == "11point":
        ap = 0.0
        for t in np.linspace(0.0, 1.0, 11):
            above = precision[recall >= t]
            ap += (above.max() if above.size else 0.0) / 11.0
        return float(ap)
    if interpolation != "all":
        raise ValueError(f"unknown interpolation {interpolation!r}")
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    idx = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


@dataclass
class EvalReport:
    per_category_ap: dict
    map: float
    num_images: int
    settings: dict
    skipped_categories: list

    def to_json(self) -> dict:
        return {
            "per_category_ap": {str(k): v for k, v in self.per_category_ap.items()},
            "map": self.map,
            "num_images": self.num_images,
            "settings": self.settings,
            "skipped_categories": self.skipped_categories,
        }


def _category_ap(dets: list[Detection], gts: Mapping[object, list[GroundTruthInstance]],
                 num_gt: int, iou_thresh: float, interpolation: str) -> float:
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    used = {img: [False] * len(g) for img, g in gts.items()}
    tp = np.zeros(len(dets))
    for rank, i in enumerate(order):
        d = dets[i]
        best, best_j = -1.0, -1
        for j, g in enumerate(gts.get(d.image_id, [])):
            if used[d.image_id][j]:
                continue
            h, o = iou(d.human_box, g.human_box), iou(d.object_box, g.object_box)
            if h > iou_thresh and o > iou_thresh and min(h, o) > best:
                best, best_j = min(h, o), j
        if best_j >= 0:
            used[d.image_id][best_j] = True
            tp[rank] = 1.0
    if len(dets) == 0:
        return 0.0
    ctp = np.cumsum(tp)
    recall = ctp / num_gt
    precision = ctp / np.arange(1, len(dets) + 1)
    return average_precision(recall, precision, interpolation)


def evaluate_map(detections: Sequence[Detection], gts: Mapping[object, Sequence[GroundTruthInstance]],
                 iou_thresh: float = 0.5, interpolation: str = "all",
                 categories: Optional[Sequence[int]] = None) -> EvalReport:
    """Per-category AP and their mean over categories that have ground truth."""
    by_cat_gt: dict[int, dict] = {}
    for img, insts in gts.items():
        for g in insts:
            by_cat_gt.setdefault(g.category_id, {}).setdefault(img, []).append(g)
    by_cat_det: dict[int, list] = {}
    for d in detections:
        by_cat_det.setdefault(d.category_id, []).append(d)
    cats = sorted(set(categories) if categories is not None else set(by_cat_gt) | set(by_cat_det))
    per_cat = {}
    skipped = []
    for c in cats:
        cat_gts = by_cat_gt.get(c, {})
        num_gt = sum(len(v) for v in cat_gts.values())
        if num_gt == 0:
            skipped.append(c)
            continue
        per_cat[c] = _category_ap(by_cat_det.get(c, []), cat_gts, num_gt, iou_thresh, interpolation)
    m = float(np.mean(list(per_cat.values()))) if per_cat else 0.0
    settings = {"iou_thresh": iou_thresh, "interpolation": interpolation}
    return EvalReport(per_cat, m, len(gts), settings, skipped)


# -- file formats -----------------------------------------------------------

def _box(value, where: str) -> BBox:
    if not isinstance(value, list) or len(value) != 4:
        raise SchemaError(f"{where}: box must be a list of 4 numbers")
    try:
        return BBox.of(value)
    except (TypeError, ValueError, DataError) as exc:
        raise SchemaError(f"{where}: {exc}") from None


def read_detections(path) -> dict[object, list[HoiPrediction]]:
    """JSON-lines detections; errors carry the 1-based line number."""
    out: dict[object, list[HoiPrediction]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"line {lineno}"
            try:
                obj = json.loads(line)
                pred = HoiPrediction(_box(obj["human_box"], where), _box(obj["object_box"], where),
                                     tuple(obj["category_scores"]), float(obj.get("box_score", 1.0)))
                image_id = obj["image_id"]
            except SchemaError:
                raise
            except (ValueError, KeyError, TypeError, DataError) as exc:
                raise SchemaError(f"{where}: {exc!r}", line=lineno) from None
            out.setdefault(image_id, []).append(pred)
    return out


def read_ground_truth(path, with_sizes: bool = False):
    """Returns (per-image instances, categories[, per-image (width, height)]).

    Image sizes come from optional ``width``/``height`` keys on each image.
    """
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except ValueError as exc:
            raise SchemaError(f"ground truth is not valid JSON: {exc}") from None
    try:
        categories = list(obj.get("categories", []))
        known = {int(c["id"]) for c in categories}
        gts: dict[object, list[GroundTruthInstance]] = {}
        sizes = {}
        for i, img in enumerate(obj["images"]):
            if "width" in img and "height" in img:
                sizes[img["image_id"]] = (float(img["width"]), float(img["height"]))
            insts = []
            for j, inst in enumerate(img.get("instances", [])):
                where = f"images[{i}].instances[{j}]"
                cat = int(inst["category_id"])
                if known and cat not in known:
                    raise SchemaError(f"{where}: unknown category {cat}")
                insts.append(GroundTruthInstance(_box(inst["human_box"], where),
                                                 _box(inst["object_box"], where), cat))
            gts[img["image_id"]] = insts
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed ground truth: {exc!r}") from None
    if with_sizes:
        return gts, categories, sizes
    return gts, categories
