"""Hierarchical scoring of an interaction feature against a class hierarchy."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .embedding import cosine_sim, l2_normalize
from .errors import DimMismatch, EmptyHierarchy
from .hierarchy import ClassEntry, ClassHierarchy


@dataclass(frozen=True)
class ScorerConfig:
    lam: float = 0.5
    tau: float = 0.0
    text_token: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.text_token is not None:
            t = np.asarray(self.text_token, dtype=np.float64)
            if not np.all(np.isfinite(t)):
                raise ValueError("text_token must be finite")
            object.__setattr__(self, "text_token", t)


@dataclass(frozen=True)
class ScoreBreakdown:
    class_id: int
    p: tuple
    u: tuple
    r: float
    base: float
    s: float

    def to_json(self) -> dict:
        return {"class_id": self.class_id, "s": self.s, "base": self.base, "r": self.r,
                "p": list(self.p), "u": list(self.u)}


def level_scores(x, entry: ClassEntry) -> list[float]:
    x = np.asarray(x, dtype=np.float64)
    out = []
    for lv in entry.levels:
        if lv.embedding.shape != x.shape:
            raise DimMismatch(f"query dim {x.shape} vs class {entry.class_id} embedding {lv.embedding.shape}")
        out.append(cosine_sim(lv.embedding, x))
    return out


def evaluator_bits(p: Sequence[float], tau: float = 0.0) -> list[int]:
    """Accept level k+1 only if it beats level k by more than ``tau``."""
    return [int(p[k + 1] > p[k] + tau) for k in range(len(p) - 1)]


def running_average(p: Sequence[float], u: Sequence[int]) -> float:
    if len(u) != len(p) - 1:
        raise ValueError(f"need {len(p) - 1} evaluator bits, got {len(u)}")
    num = p[0]
    den = 1
    gate = 1
    for j in range(1, len(p)):
        gate *= u[j - 1]
        num += p[j] * gate
        den += gate
    return num / den


def fused_score(x, entry: ClassEntry, cfg: ScorerConfig) -> ScoreBreakdown:
    p = level_scores(x, entry)
    u = evaluator_bits(p, cfg.tau)
    r = running_average(p, u)
    base = p[0]
    if cfg.text_token is not None:
        # offset uses the normalized query, matching the cosine terms
        base += float(np.dot(cfg.text_token, l2_normalize(x)))
    s = (1.0 - cfg.lam) * base + cfg.lam * r
    return ScoreBreakdown(entry.class_id, tuple(p), tuple(u), r, base, s)


def classify(x, hierarchy: ClassHierarchy, cfg: ScorerConfig) -> list[tuple[int, ScoreBreakdown]]:
    """All classes ranked by fused score, descending; ties go to the lower class id."""
    if not hierarchy.classes:
        raise EmptyHierarchy("hierarchy has no classes")
    if cfg.text_token is None and hierarchy.text_token is not None:
        cfg = ScorerConfig(cfg.lam, cfg.tau, hierarchy.text_token)
    scored = [fused_score(x, entry, cfg) for entry in hierarchy.classes]
    scored.sort(key=lambda b: (-b.s, b.class_id))
    return [(b.class_id, b) for b in scored]
