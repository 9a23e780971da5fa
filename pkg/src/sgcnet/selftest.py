"""Quick numerical checks behind ``sgcnet self-test``."""
from __future__ import annotations

import itertools
import math

import numpy as np

from . import gsa
from .evaluation import Detection, evaluate_map
from .matching import BBox, GroundTruthInstance, giou_loss, hungarian
from .scoring import evaluator_bits, running_average


def _fd_sigma(stack, params, h=1e-5):
    def z(sig):
        return gsa.aggregate(stack, gsa.GsaParams(params.partition, sig, params.block_weights))
    return (z(params.sigma + h) - z(params.sigma - h)) / (2 * h)


def run_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(seed)
    out = []

    w = gsa.dgw_weights(3, 1.0)
    expected = [math.exp(-2.0), math.exp(-0.5), 1.0]
    out.append(("dgw_weights", bool(np.allclose(w, expected, atol=1e-12)), f"{w.round(8).tolist()}"))

    stack = gsa.LayerFeatureStack(rng.normal(size=(12, 4, 8)))
    params = gsa.GsaParams.from_spec(sigma=1.0)
    grad = gsa.aggregate_grad(stack, params).sigma
    fd = _fd_sigma(stack, params)
    rel = float(np.max(np.abs(grad - fd)) / max(np.max(np.abs(fd)), 1e-12))
    out.append(("aggregate_grad", rel < 1e-5, f"relative error {rel:.2e}"))

    c = rng.uniform(size=(6, 6))
    best = min(sum(c[i, p[i]] for i in range(6)) for p in itertools.permutations(range(6)))
    got = hungarian(c).total
    out.append(("hungarian", abs(got - best) < 1e-12, f"{got:.6f} vs brute force {best:.6f}"))

    p = [0.5, 0.7]
    s = 0.5 * p[0] + 0.5 * running_average(p, evaluator_bits(p, 0.0))
    out.append(("fused_score", abs(s - 0.55) < 1e-12, f"s={s}"))

    g = giou_loss(BBox(0, 0, 1, 1), BBox(2, 0, 3, 1))
    out.append(("giou_loss", abs(g - 4 / 3) < 1e-12, f"{g:.8f}"))

    b = BBox(0, 0, 10, 10)
    rep = evaluate_map([Detection(0, b, b, 0, 0.9)], {0: [GroundTruthInstance(b, b, 0)]})
    out.append(("evaluate_map", rep.map == 1.0, f"mAP={rep.map}"))
    return out
