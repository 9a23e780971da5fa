"""Synthetic class sets, rule-based LLM fixtures and HOI tasks for offline runs.

Class names are ``"<verb> <object>"``. Initial descriptions for classes that
share an object reuse the object's vocabulary, so they cluster by object and
are nearly interchangeable. Comparative descriptions use vocabulary unique to
the verb, which makes the deeper levels discriminative.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding import l2_normalize
from .gsa import LayerFeatureStack, stack_to_json
from .hierarchy import ClassHierarchy, build_hierarchy
from .llm import CallableProvider, LlmClient, TextEncoder

OBJECT_WORDS = {
    "horse": "saddle mane hooves stable reins pasture",
    "bicycle": "pedals spokes handlebar chain wheels frame",
    "cup": "mug ceramic rim saucer coffee beverage",
    "dog": "leash collar paws fur tail puppy",
}
VERBS = {
    "horse": ["ride", "feed", "groom", "lead", "hug", "wash"],
    "bicycle": ["ride", "repair", "push", "park", "carry", "lift"],
    "cup": ["hold", "drink", "fill", "wash", "carry", "stir"],
    "dog": ["walk", "pet", "feed", "train", "hug", "wash"],
}
FILLER = "outdoors daytime scene nearby visible background".split()

_TARGET = re.compile(r"^What features are useful to distinguish (.+?) (?:from|in a photo)")
_LIST = re.compile(r"^Summarize the following interactions with one sentence: (.+)\?$")


def class_names(objects: list[str], per_object: int) -> list[str]:
    return [f"{v} {o}" for o in objects for v in VERBS[o][:per_object]]


def _verb_words(verb: str, obj: str) -> list[str]:
    # pseudo-words unique to the (verb, object) pair
    return [f"{verb}{obj}{suffix}" for suffix in ("pose", "grip", "motion", "contact")]


def rule_response(prompt: str) -> str:
    """Deterministic answer for any prompt the hierarchy builder can issue."""
    m = _LIST.match(prompt)
    if m:
        objs = sorted({name.split()[-1] for name in m.group(1).split(", ")})
        return f"Interactions in which a person handles a {' or '.join(objs)}."
    m = _TARGET.match(prompt)
    if not m:
        raise ValueError(f"unrecognized prompt {prompt!r}")
    verb, obj = m.group(1).rsplit(" ", 1)
    if prompt.endswith(" in a photo?") and " from " not in prompt:
        words = OBJECT_WORDS[obj].split()
        filler = FILLER[len(verb) % len(FILLER)]
        return f"- a {obj} with {words[0]} and {words[1]}\n- {words[2]} {words[3]} {filler}\n- {words[4]} {words[5]}"
    vw = _verb_words(verb, obj)
    return f"- {vw[0]} {vw[1]}\n- {vw[2]} {vw[3]}"


def record_fixture(names, n, max_depth, seed, encoder) -> tuple[dict, ClassHierarchy]:
    """Run the builder against :func:`rule_response` and return the prompt table it used."""
    llm = LlmClient(CallableProvider(rule_response, "rules"))
    hierarchy = build_hierarchy(names, n, max_depth, seed, llm, encoder)
    table = {p: rule_response(p) for p in llm.calls}
    return table, hierarchy


@dataclass
class HoiTask:
    names: list
    fixture: dict
    hierarchy: ClassHierarchy
    stacks: list          # one LayerFeatureStack per image
    ground_truth: dict    # gt-file JSON
    box_scores: list
    image_size: tuple = (640.0, 480.0)


def make_hoi_task(objects=("horse", "bicycle"), per_object=4, instances_per_class=4,
                  dim=64, layers=12, tokens=4, level1_weight=0.6, noise=0.35,
                  n=6, max_depth=3, seed=0) -> HoiTask:
    """Interaction features lean on the deeper, discriminative description of the true class.

    Each image holds one ground-truth pair; its feature stack repeats the
    designed interaction feature across tokens with per-layer noise.
    """
    names = class_names(list(objects), per_object)
    encoder = TextEncoder.stub(dim, seed)
    fixture, hierarchy = record_fixture(names, n, max_depth, seed, encoder)
    rng = np.random.default_rng(seed)
    stacks, images, box_scores = [], [], []
    image_id = 0
    for entry in hierarchy.classes:
        deep = entry.levels[-1].embedding
        for _ in range(instances_per_class):
            target = level1_weight * entry.levels[0].embedding + deep
            target = l2_normalize(target + noise * rng.standard_normal(dim) / np.sqrt(dim) * np.linalg.norm(target))
            feats = target[None, None, :] + 0.05 * rng.standard_normal((layers, tokens, dim))
            stacks.append(LayerFeatureStack(feats))
            x1, y1 = rng.uniform(0, 200, size=2)
            human = [x1, y1, x1 + rng.uniform(80, 200), y1 + rng.uniform(150, 250)]
            ox, oy = rng.uniform(250, 400, size=2)
            obj = [ox, oy, ox + rng.uniform(60, 200), oy + rng.uniform(40, 70)]
            images.append({"image_id": image_id, "instances": [
                {"human_box": human, "object_box": obj, "category_id": entry.class_id}]})
            box_scores.append(float(rng.uniform(0.6, 1.0)))
            image_id += 1
    gt = {"images": images, "categories": [{"id": i, "name": nm} for i, nm in enumerate(names)]}
    return HoiTask(names, fixture, hierarchy, stacks, gt, box_scores)


def write_hoi_task(task: HoiTask, directory) -> dict:
    """Write class list, fixture, stacks and ground truth; returns the paths."""
    d = Path(directory)
    (d / "stacks").mkdir(parents=True, exist_ok=True)
    paths = {"classes": d / "classes.txt", "fixture": d / "fixture.json", "gt": d / "gt.json",
             "stacks": []}
    paths["classes"].write_text("\n".join(task.names) + "\n")
    paths["fixture"].write_text(json.dumps(task.fixture, indent=1, sort_keys=True))
    paths["gt"].write_text(json.dumps(task.ground_truth))
    for i, stack in enumerate(task.stacks):
        p = d / "stacks" / f"{i:04d}.json"
        p.write_text(json.dumps(stack_to_json(stack)))
        paths["stacks"].append(p)
    return paths


def run_cli_pipeline(task: HoiTask, directory, lams=(0.0, 0.5), n=6, max_depth=3, seed=0,
                     dim=64, gamma=2.0) -> dict:
    """aggregate -> build-hierarchy -> score -> eval through the CLI; returns mAP per lambda."""
    from .cli import main

    d = Path(directory)
    paths = write_hoi_task(task, d)
    decoder = {"queries": [[0.0] * dim], "w_q": np.eye(dim).tolist(),
               "w_k": np.eye(dim).tolist(), "w_v": np.eye(dim).tolist()}
    (d / "decoder.json").write_text(json.dumps(decoder))
    queries = []
    for i, sp in enumerate(paths["stacks"]):
        out = d / "stacks" / f"{i:04d}.out.json"
        _check(main(["aggregate", str(sp), "--decoder", str(d / "decoder.json"), "-o", str(out)]))
        queries.append(json.loads(out.read_text())["X"]["data"][0])
    (d / "queries.json").write_text(json.dumps({"queries": queries}))
    _check(main(["build-hierarchy", str(paths["classes"]), "--fixture", str(paths["fixture"]),
                 "-N", str(n), "--max-depth", str(max_depth), "--seed", str(seed), "--dim", str(dim),
                 "--cache-dir", str(d / "cache"), "-o", str(d / "hierarchy.json")]))
    results = {}
    images = task.ground_truth["images"]
    for lam in lams:
        ranked = d / f"scores_{lam}.jsonl"
        _check(main(["score", str(d / "hierarchy.json"), str(d / "queries.json"),
                     "--lambda", str(lam), "-o", str(ranked)]))
        det_lines = []
        for line, img, box_score in zip(ranked.read_text().splitlines(), images, task.box_scores):
            ranking = json.loads(line)["ranking"]
            scores = [0.0] * len(task.names)
            for item in ranking:
                scores[item["class_id"]] = item["s"]
            inst = img["instances"][0]
            det_lines.append(json.dumps({"image_id": img["image_id"], "human_box": inst["human_box"],
                                         "object_box": inst["object_box"], "category_scores": scores,
                                         "box_score": box_score}))
        det_path = d / f"detections_{lam}.jsonl"
        det_path.write_text("\n".join(det_lines) + "\n")
        report = d / f"report_{lam}.json"
        _check(main(["eval", str(det_path), str(paths["gt"]), "--gamma", str(gamma), "-o", str(report)]))
        results[lam] = json.loads(report.read_text())["map"]
    return results


def _check(code: int) -> None:
    if code != 0:
        raise RuntimeError(f"pipeline step exited with code {code}")
