"""Recursive group-and-compare construction of per-class description sequences.

Level 1 of every class is its initial (non-comparative) description. Classes
are then clustered by their accumulated description embeddings; every cluster
with at least two members gets one comparative description per class, and the
procedure recurses into each cluster.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .embedding import l2_normalize
from .errors import BadK, DimMismatch, EmptyInput, EncoderError, ProviderError, SchemaError
from .llm import LlmClient, PromptKind, TextEncoder, render_prompt

MAX_KMEANS_ITER = 100


# -- k-means ----------------------------------------------------------------

@dataclass(frozen=True)
class KMeansResult:
    assignments: np.ndarray   # point index -> cluster id
    centroids: np.ndarray     # (K, dim) cluster means
    inertia: float
    iterations: int

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def unit_centroids(self) -> np.ndarray:
        norms = np.linalg.norm(self.centroids, axis=1, keepdims=True)
        return np.where(norms > 0, self.centroids / np.where(norms > 0, norms, 1.0), self.centroids)

    def clusters(self) -> list[list[int]]:
        return [np.flatnonzero(self.assignments == j).tolist() for j in range(self.k)]


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with a chosen center
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(rest))
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((x - x[nxt]) ** 2).sum(axis=1))
    return x[chosen].copy()


def _repair_empty(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray, k: int) -> np.ndarray:
    labels = labels.copy()
    for j in range(k):
        if np.any(labels == j):
            continue
        counts = np.bincount(labels, minlength=k)
        d = ((x - centroids[labels]) ** 2).sum(axis=1)
        d[counts[labels] <= 1] = -1.0  # never empty another cluster
        victim = int(np.argmax(d))
        labels[victim] = j
        centroids[j] = x[victim]
    return labels


def kmeans(points, k: int, seed: int = 0) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding; deterministic given ``seed``."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise DimMismatch(f"points must share one dimension, got array of shape {x.shape}")
    n = x.shape[0]
    if not 1 <= k <= n:
        raise BadK(f"K={k} must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(x, k, rng)
    labels = None
    it = 0
    for it in range(1, MAX_KMEANS_ITER + 1):
        new = np.argmin(_sq_dists(x, centroids), axis=1)
        new = _repair_empty(x, new, centroids, k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centroids = np.stack([x[labels == j].mean(axis=0) for j in range(k)])
    inertia = float(((x - centroids[labels]) ** 2).sum())
    return KMeansResult(labels, centroids, inertia, it)


# -- grouping rules ---------------------------------------------------------

def choose_k(num_classes: int, n: int) -> int:
    k = -(-num_classes // n)
    return max(1, min(k, num_classes))


class Strategy(enum.Enum):
    SUMMARY_COMPARE = "summary_compare"
    DIRECT_COMPARE = "direct_compare"


def select_strategy(group_size: int, n: int) -> Strategy:
    # strictly more than half the threshold; 2g > N avoids fractional N/2
    if 2 * group_size > n:
        return Strategy.SUMMARY_COMPARE
    return Strategy.DIRECT_COMPARE


# -- hierarchy --------------------------------------------------------------

@dataclass(frozen=True)
class Level:
    text: str
    embedding: np.ndarray


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    name: str
    levels: tuple

    @property
    def depth(self) -> int:
        return len(self.levels)

    def embeddings(self) -> np.ndarray:
        return np.stack([lv.embedding for lv in self.levels])


@dataclass(frozen=True)
class LogEntry:
    depth: int
    members: tuple
    parent: Optional[tuple]
    k: Optional[int]
    strategy: str


@dataclass(frozen=True)
class ClassHierarchy:
    classes: tuple
    n: int
    max_depth: int
    build_log: tuple = ()
    text_token: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.classes[0].levels[0].embedding.shape[0]

    def by_id(self, class_id: int) -> ClassEntry:
        for c in self.classes:
            if c.class_id == class_id:
                return c
        raise KeyError(class_id)

    def to_json(self) -> dict:
        out = {
            "N": self.n,
            "max_depth": self.max_depth,
            "classes": [
                {"id": c.class_id, "name": c.name,
                 "levels": [{"text": lv.text, "embedding": lv.embedding.tolist()} for lv in c.levels]}
                for c in self.classes
            ],
            "build_log": [
                {"depth": e.depth, "members": list(e.members),
                 "parent": None if e.parent is None else list(e.parent),
                 "k": e.k, "strategy": e.strategy}
                for e in self.build_log
            ],
        }
        if self.text_token is not None:
            out["text_token"] = np.asarray(self.text_token).tolist()
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    @classmethod
    def from_json(cls, obj: dict) -> "ClassHierarchy":
        try:
            classes = tuple(
                ClassEntry(int(c["id"]), str(c["name"]), tuple(
                    Level(lv["text"], np.asarray(lv["embedding"], dtype=np.float64))
                    for lv in c["levels"]))
                for c in obj["classes"]
            )
            log = tuple(
                LogEntry(int(e["depth"]), tuple(e["members"]),
                         None if e.get("parent") is None else tuple(e["parent"]),
                         e.get("k"), e["strategy"])
                for e in obj.get("build_log", [])
            )
            token = obj.get("text_token")
            return cls(classes, int(obj["N"]), int(obj["max_depth"]), log,
                       None if token is None else np.asarray(token, dtype=np.float64))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed hierarchy file: {exc!r}") from None

    @classmethod
    def load(cls, path) -> "ClassHierarchy":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _cluster_seed(seed: int, depth: int, members: Sequence[int]) -> int:
    ss = np.random.SeedSequence([seed, depth, *members])
    return int(ss.generate_state(1)[0])


class _Builder:
    def __init__(self, names, n, max_depth, seed, llm, encoder):
        self.names = list(names)
        self.n = n
        self.max_depth = max_depth
        self.seed = seed
        self.llm = llm
        self.encoder = encoder
        self.levels = [[] for _ in self.names]
        self.log: list[LogEntry] = []

    def _ask(self, prompts, depth, who):
        try:
            return [r.text for r in self.llm.complete_many(prompts)]
        except ProviderError as exc:
            raise exc.with_context(classes=who, depth=depth)

    def _embed(self, text, depth, who):
        try:
            return self.encoder.encode_answer(text)
        except EncoderError as exc:
            raise exc.with_context(**{"class": who, "depth": depth})

    def _append(self, ids, texts, depth):
        for cid, text in zip(ids, texts):
            emb = self._embed(text, depth, self.names[cid])
            self.levels[cid].append(Level(text, emb))

    def _feature(self, cid: int) -> np.ndarray:
        return l2_normalize(np.mean([lv.embedding for lv in self.levels[cid]], axis=0))

    def _compare(self, cluster, strategy, depth):
        names = [self.names[c] for c in cluster]
        if strategy is Strategy.SUMMARY_COMPARE:
            prompt = render_prompt(PromptKind.SUMMARIZE, {"category list": ", ".join(names)})
            summary = self._ask([prompt], depth, names)[0].strip().rstrip(".?! \n")
            prompts = [render_prompt(PromptKind.SUMMARY_COMPARE,
                                     {"HOI category": nm, "subset description": summary})
                       for nm in names]
        else:
            prompts = [render_prompt(PromptKind.DIRECT_COMPARE,
                                     {"target category": nm,
                                      "other categories": ", ".join(o for o in names if o != nm)})
                       for nm in names]
        self._append(cluster, self._ask(prompts, depth, names), depth)

    def _expand(self, group, depth, compared):
        if len(group) < 2 or depth >= self.max_depth:
            return
        k = choose_k(len(group), self.n)
        feats = np.stack([self._feature(c) for c in group])
        km = kmeans(feats, k, seed=_cluster_seed(self.seed, depth, group))
        clusters = sorted(([group[i] for i in idx] for idx in km.clusters()), key=min)
        for cluster in clusters:
            if len(cluster) == 1:
                self.log.append(LogEntry(depth + 1, tuple(cluster), tuple(group), k, "stop:singleton"))
                continue
            if compared and cluster == list(group):
                self.log.append(LogEntry(depth + 1, tuple(cluster), tuple(group), k, "stop:no_progress"))
                continue
            strategy = select_strategy(len(cluster), self.n)
            self._compare(cluster, strategy, depth + 1)
            self.log.append(LogEntry(depth + 1, tuple(cluster), tuple(group), k, strategy.value))
            self._expand(cluster, depth + 1, True)

    def build(self) -> ClassHierarchy:
        ids = list(range(len(self.names)))
        prompts = [render_prompt(PromptKind.INITIAL, {"HOI category": nm}) for nm in self.names]
        texts = []
        for cid, p in zip(ids, prompts):
            texts.extend(self._ask([p], 1, self.names[cid]))
        self._append(ids, texts, 1)
        self.log.append(LogEntry(1, tuple(ids), None, None, "initial"))
        self._expand(ids, 1, False)
        classes = tuple(ClassEntry(cid, self.names[cid], tuple(self.levels[cid])) for cid in ids)
        return ClassHierarchy(classes, self.n, self.max_depth, tuple(self.log))


def build_hierarchy(names: Sequence[str], n: int = 6, max_depth: int = 3, seed: int = 0,
                    llm=None, encoder: Optional[TextEncoder] = None) -> ClassHierarchy:
    """Build the class hierarchy.

    ``llm`` may be an :class:`LlmClient` or a bare provider (wrapped with an
    in-memory cache). Class ids are positions in ``names``.
    """
    names = list(names)
    if not names:
        raise EmptyInput("class list is empty")
    if len(set(names)) != len(names):
        raise SchemaError("class names must be distinct")
    if n < 1 or max_depth < 1:
        raise ValueError("N and max_depth must be positive")
    if llm is None or encoder is None:
        raise ValueError("build_hierarchy needs an llm and an encoder")
    if not isinstance(llm, LlmClient):
        llm = LlmClient(llm)
    return _Builder(names, n, max_depth, seed, llm, encoder).build()
