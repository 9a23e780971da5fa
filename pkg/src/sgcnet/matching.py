"""Box geometry, the composite matching cost and optimal bipartite assignment."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BadGamma, DataError, InvalidBox, NonFiniteCost, UnknownCategory


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidBox(f"non-finite box {vals}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InvalidBox(f"box needs x1 < x2 and y1 < y2, got {vals}")

    @classmethod
    def of(cls, coords: Sequence[float]) -> "BBox":
        if len(coords) != 4:
            raise InvalidBox(f"box needs 4 coordinates, got {len(coords)}")
        return cls(*(float(c) for c in coords))

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def cxcywh(self, image_size: Optional[tuple] = None) -> np.ndarray:
        w, h = (1.0, 1.0) if image_size is None else image_size
        return np.array([(self.x1 + self.x2) / 2 / w, (self.y1 + self.y2) / 2 / h,
                         (self.x2 - self.x1) / w, (self.y2 - self.y1) / h])

    def tolist(self) -> list:
        return [self.x1, self.y1, self.x2, self.y2]


def _inter_union(a: BBox, b: BBox) -> tuple[float, float]:
    iw = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    ih = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = iw * ih
    return inter, a.area + b.area - inter


def iou(a: BBox, b: BBox) -> float:
    inter, union = _inter_union(a, b)
    return inter / union


def giou_loss(a: BBox, b: BBox) -> float:
    inter, union = _inter_union(a, b)
    enclose = (max(a.x2, b.x2) - min(a.x1, b.x1)) * (max(a.y2, b.y2) - min(a.y1, b.y1))
    giou = inter / union - (enclose - union) / enclose
    return 1.0 - giou


@dataclass(frozen=True)
class HoiPrediction:
    human_box: BBox
    object_box: BBox
    class_scores: tuple
    box_score: float = 1.0

    def __post_init__(self):
        scores = tuple(float(s) for s in self.class_scores)
        if not scores or not all(math.isfinite(s) for s in scores):
            raise DataError("class_scores must be a non-empty list of finite numbers")
        if not 0.0 <= self.box_score <= 1.0:
            raise DataError(f"box_score must lie in [0, 1], got {self.box_score}")
        object.__setattr__(self, "class_scores", scores)


@dataclass(frozen=True)
class GroundTruthInstance:
    human_box: BBox
    object_box: BBox
    category_id: int


@dataclass(frozen=True)
class MatchCostWeights:
    lambda_b: float = 5.0
    lambda_iou: float = 5.0
    lambda_cls: float = 2.0

    def __post_init__(self):
        ws = (self.lambda_b, self.lambda_iou, self.lambda_cls)
        if any(w < 0 for w in ws) or not any(w > 0 for w in ws):
            raise ValueError(f"cost weights must be non-negative and not all zero, got {ws}")


@dataclass(frozen=True)
class CostTerms:
    box: float
    giou: float
    cls: float
    total: float


def _log_softmax(scores: Sequence[float]) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    m = s.max()
    return s - m - np.log(np.exp(s - m).sum())


def match_cost_terms(pred: HoiPrediction, gt: GroundTruthInstance, w: MatchCostWeights,
                     image_size: Optional[tuple] = None) -> CostTerms:
    """Unweighted box-L1, GIoU-loss and classification terms plus the weighted total.

    Boxes are compared in center-size form, divided by ``image_size`` (w, h)
    when given; pass already-normalized boxes otherwise.
    """
    if not 0 <= gt.category_id < len(pred.class_scores):
        raise UnknownCategory(f"category {gt.category_id} outside {len(pred.class_scores)} classes")
    box = 0.0
    g = 0.0
    for p_box, g_box in ((pred.human_box, gt.human_box), (pred.object_box, gt.object_box)):
        box += float(np.abs(p_box.cxcywh(image_size) - g_box.cxcywh(image_size)).sum())
        g += giou_loss(p_box, g_box)
    cls = float(-_log_softmax(pred.class_scores)[gt.category_id])
    total = w.lambda_b * box + w.lambda_iou * g + w.lambda_cls * cls
    return CostTerms(box, g, cls, total)


def match_cost(pred: HoiPrediction, gt: GroundTruthInstance, w: MatchCostWeights,
               image_size: Optional[tuple] = None) -> float:
    return match_cost_terms(pred, gt, w, image_size).total


def cost_matrix(preds: Sequence[HoiPrediction], gts: Sequence[GroundTruthInstance],
                w: MatchCostWeights, image_size: Optional[tuple] = None) -> np.ndarray:
    return np.array([[match_cost(p, g, w, image_size) for g in gts] for p in preds]).reshape(len(preds), len(gts))


@dataclass(frozen=True)
class Assignment:
    pairs: tuple      # (row, col), sorted by row
    total: float


def _solve_wide(c: np.ndarray) -> np.ndarray:
    """Shortest augmenting path with potentials; requires rows <= cols.

    Returns the column assigned to each row.
    """
    n, m = c.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    match_col = np.zeros(m + 1, dtype=np.int64)   # column j -> row (1-based), 0 = free
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match_col[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match_col[j0]
            free = ~used[1:]
            reduced = c[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[match_col[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if match_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match_col[j0] = match_col[j1]
            j0 = j1
    row_to_col = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if match_col[j]:
            row_to_col[match_col[j] - 1] = j - 1
    return row_to_col


def hungarian(costs) -> Assignment:
    """Minimum-cost one-to-one assignment of min(rows, cols) pairs."""
    c = np.asarray(costs, dtype=np.float64)
    if c.ndim != 2:
        raise DataError(f"cost matrix must be 2-D, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise NonFiniteCost("cost matrix contains NaN or Inf")
    if c.size == 0:
        return Assignment((), 0.0)
    if c.shape[0] <= c.shape[1]:
        cols = _solve_wide(c)
        pairs = tuple((i, int(j)) for i, j in enumerate(cols))
    else:
        rows = _solve_wide(c.T)
        pairs = tuple(sorted((int(i), j) for j, i in enumerate(rows)))
    total = float(sum(c[i, j] for i, j in pairs))
    return Assignment(pairs, total)


def match(preds: Sequence[HoiPrediction], gts: Sequence[GroundTruthInstance],
          w: MatchCostWeights = MatchCostWeights(), image_size: Optional[tuple] = None) -> Assignment:
    return hungarian(cost_matrix(preds, gts, w, image_size))


def inference_score(s_hat: float, c_hat: float, gamma: float = 2.0) -> float:
    """Interaction score damped by the box confidence raised to ``gamma``."""
    if not gamma > 1:
        raise BadGamma(f"gamma must be > 1, got {gamma}")
    if not 0.0 <= c_hat <= 1.0:
        raise DataError(f"box score must lie in [0, 1], got {c_hat}")
    return s_hat * c_hat**gamma
