"""Command-line entry point: ``sgcnet {aggregate,build-hierarchy,score,eval,self-test}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 provider error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import gsa
from .config import ConfigError, RunConfig
from .errors import DataError, ProviderError, SchemaError, SgcError
from .evaluation import detections_from_predictions, evaluate_map, read_detections, read_ground_truth
from .hierarchy import ClassHierarchy, build_hierarchy
from .matching import MatchCostWeights, cost_matrix, hungarian
from .llm import FixtureProvider, HttpProvider, LlmClient, ResponseCache, StubProvider, TextEncoder
from .scoring import ScorerConfig, classify

log = logging.getLogger("sgcnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PROVIDER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; CLI flags take precedence over it")
    p.add_argument("--seed", type=int, help="random seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sgcnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("aggregate", help="aggregate a layer feature stack (and optionally decode it)")
    p.add_argument("features", help="feature-stack JSON file")
    p.add_argument("--partition", help=f"layer blocks, e.g. '{gsa.DEFAULT_PARTITION}' (default)")
    p.add_argument("--sigma", type=float, help="Gaussian width of the layer weights (default 1.0)")
    p.add_argument("--block-weights", help="comma-separated per-block weights (default 1,...,1,2)")
    p.add_argument("--aggregation", choices=["dgw", "sum"], help="layer weighting inside blocks (default dgw)")
    p.add_argument("--decoder", help="decoder params JSON {queries,w_q,w_k,w_v}; writes X as well")
    p.add_argument("-o", "--out", required=True, help="output JSON for Z (and X)")
    _common(p)

    p = sub.add_parser("build-hierarchy", help="build the class description hierarchy")
    p.add_argument("classes", help="class list: JSON array of names or one name per line")
    p.add_argument("-N", "--grouping-threshold", dest="n", type=int, help="grouping threshold N (default 6)")
    p.add_argument("--max-depth", type=int, help="maximum levels per class (default 3)")
    p.add_argument("--provider", choices=["fixture", "stub", "http"], help="LLM backend (default fixture)")
    p.add_argument("--fixture", help="prompt->response JSON for the fixture backend")
    p.add_argument("--stub-fallback", action="store_true", default=None,
                   help="answer fixture misses with the deterministic stub")
    p.add_argument("--endpoint", help="base URL of an OpenAI-compatible API (http backend)")
    p.add_argument("--model", help="model name for the http backend (default gpt-3.5-turbo)")
    p.add_argument("--timeout", type=float, help="http deadline in seconds (default 30)")
    p.add_argument("--retries", type=int, help="http retries (default 0)")
    p.add_argument("--max-in-flight", type=int, help="concurrent LLM requests (default 1)")
    p.add_argument("--temperature", type=float, help="passed through to the http backend")
    p.add_argument("--encoder", choices=["stub", "file"], help="text encoder (default stub)")
    p.add_argument("--embeddings", help="description->vector JSON for the file encoder")
    p.add_argument("--dim", type=int, help="stub encoder dimension (default 64)")
    p.add_argument("--cache-dir", help="response cache directory (default $SGC_CACHE_DIR, else in-memory)")
    p.add_argument("-o", "--out", required=True, help="output hierarchy JSON")
    _common(p)

    p = sub.add_parser("score", help="rank classes for query features")
    p.add_argument("hierarchy", help="hierarchy JSON from build-hierarchy")
    p.add_argument("queries", help="query features: JSON list of vectors, {queries: [...]}, or a matrix file")
    p.add_argument("--lambda", dest="lam", type=float, help="weight of the running average (default 0.5)")
    p.add_argument("--tau", type=float, help="evaluator tolerance (default 0.0)")
    p.add_argument("--top", type=int, help="keep only the best TOP classes per query")
    p.add_argument("-o", "--out", help="output JSON lines (default stdout)")
    _common(p)

    p = sub.add_parser("eval", help="mAP of detections against ground truth")
    p.add_argument("detections", help="JSON-lines detections")
    p.add_argument("ground_truth", help="ground-truth JSON")
    p.add_argument("--gamma", type=float, help="box-score exponent, must exceed 1 (default 2.0)")
    p.add_argument("--iou-thresh", type=float, help="IoU threshold for both boxes (default 0.5)")
    p.add_argument("--interpolation", choices=["all", "11point"], help="AP interpolation (default all)")
    p.add_argument("--top-k", type=int, help="categories kept per detection (default 1)")
    p.add_argument("--cost-weights", help="box-L1,GIoU,class weights of the matching cost (default 5,5,2)")
    p.add_argument("-o", "--out", help="output report JSON (default stdout)")
    _common(p)

    p = sub.add_parser("self-test", help="run built-in numerical checks")
    _common(p)
    return parser


_FLAG_KEYS = {
    "aggregate": ("partition", "sigma", "block_weights", "aggregation", "seed"),
    "build-hierarchy": ("n", "max_depth", "provider", "fixture", "stub_fallback", "endpoint", "model",
                        "timeout", "retries", "max_in_flight", "encoder", "embeddings", "dim",
                        "cache_dir", "seed"),
    "score": ("lam", "tau", "seed"),
    "eval": ("gamma", "iou_thresh", "interpolation", "top_k", "seed"),
    "self-test": ("seed",),
}


def resolve_config(args) -> RunConfig:
    file_values = RunConfig.load_file(args.config) if getattr(args, "config", None) else {}
    overrides = {k: getattr(args, k, None) for k in _FLAG_KEYS[args.command]}
    if overrides.get("block_weights") is not None:
        try:
            overrides["block_weights"] = [float(w) for w in overrides["block_weights"].split(",")]
        except ValueError:
            raise ConfigError(f"cannot parse block weights {args.block_weights!r}") from None
    if getattr(args, "cost_weights", None) is not None:
        try:
            overrides["lambda_b"], overrides["lambda_iou"], overrides["lambda_cls"] = (
                float(w) for w in args.cost_weights.split(","))
        except ValueError:
            raise ConfigError(f"--cost-weights needs three numbers, got {args.cost_weights!r}") from None
    if getattr(args, "temperature", None) is not None:
        params = dict(file_values.get("llm_params", {}))
        params["temperature"] = args.temperature
        overrides["llm_params"] = params
    return RunConfig.resolve(file_values, overrides)


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")


def cmd_aggregate(args, cfg: RunConfig) -> int:
    stack = gsa.load_stack(args.features)
    params = gsa.GsaParams.from_spec(cfg.partition, cfg.sigma, cfg.block_weights, cfg.aggregation)
    params.partition.validate(stack.num_layers)
    dec = None
    if args.decoder:
        with open(args.decoder) as fh:
            dec = gsa.decoder_from_json(json.load(fh))
    z = gsa.aggregate(stack, params)
    out = {"Z": gsa.matrix_to_json(z),
           "settings": {"partition": str(params.partition), "sigma": cfg.sigma,
                        "block_weights": list(params.block_weights), "aggregation": cfg.aggregation}}
    if dec is not None:
        out["X"] = gsa.matrix_to_json(gsa.decode(z, dec))
    _write_json(args.out, out)
    return EXIT_OK


def read_class_list(path) -> list[str]:
    text = Path(path).read_text()
    try:
        names = json.loads(text)
        if not isinstance(names, list):
            raise SchemaError("class list JSON must be an array of names")
        names = [str(n) for n in names]
    except ValueError:
        names = [line.strip() for line in text.splitlines() if line.strip()]
    return names


def make_llm(cfg: RunConfig) -> LlmClient:
    if cfg.provider == "fixture":
        if not cfg.fixture:
            raise ConfigError("the fixture provider needs --fixture")
        fallback = StubProvider(cfg.seed) if cfg.stub_fallback else None
        provider = FixtureProvider.from_file(cfg.fixture, fallback)
    elif cfg.provider == "stub":
        provider = StubProvider(cfg.seed)
    else:
        if not cfg.endpoint:
            raise ConfigError("the http provider needs --endpoint")
        provider = HttpProvider(cfg.endpoint, cfg.model, timeout=cfg.timeout, retries=cfg.retries,
                                params=cfg.llm_params)
    return LlmClient(provider, ResponseCache(cfg.cache_dir), cfg.max_in_flight)


def make_encoder(cfg: RunConfig) -> TextEncoder:
    if cfg.encoder == "file":
        if not cfg.embeddings:
            raise ConfigError("the file encoder needs --embeddings")
        return TextEncoder.from_file(cfg.embeddings)
    return TextEncoder.stub(cfg.dim, cfg.seed)


def cmd_build_hierarchy(args, cfg: RunConfig) -> int:
    names = read_class_list(args.classes)
    llm = make_llm(cfg)
    encoder = make_encoder(cfg)
    hierarchy = build_hierarchy(names, cfg.n, cfg.max_depth, cfg.seed, llm, encoder)
    Path(args.out).write_text(hierarchy.dumps() + "\n")
    print(f"llm_calls={len(llm.calls)}", file=sys.stderr)
    return EXIT_OK


def read_queries(path) -> np.ndarray:
    with open(path) as fh:
        obj = json.load(fh)
    if isinstance(obj, dict):
        if "queries" in obj:
            obj = obj["queries"]
        elif "X" in obj:
            obj = obj["X"]["data"]
        elif "Z" in obj:
            obj = obj["Z"]["data"]
        elif "data" in obj:
            obj = obj["data"]
        else:
            raise SchemaError("query file needs 'queries', 'X', 'Z' or 'data'")
    q = np.asarray(obj, dtype=np.float64)
    if q.ndim == 1:
        q = q[None, :]
    if q.ndim != 2:
        raise SchemaError(f"queries must form a matrix, got shape {q.shape}")
    return q


def cmd_score(args, cfg: RunConfig) -> int:
    hierarchy = ClassHierarchy.load(args.hierarchy)
    queries = read_queries(args.queries)
    scorer = ScorerConfig(cfg.lam, cfg.tau)
    lines = []
    for i, x in enumerate(queries):
        try:
            ranked = classify(x, hierarchy, scorer)
        except DataError as exc:
            raise exc.with_context(query=i)
        if args.top:
            ranked = ranked[:args.top]
        lines.append(json.dumps({"query": i, "ranking": [
            dict(b.to_json(), name=hierarchy.by_id(cid).name) for cid, b in ranked]}))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    preds = read_detections(args.detections)
    gts, categories, sizes = read_ground_truth(args.ground_truth, with_sizes=True)
    cat_ids = [int(c["id"]) for c in categories] or None
    dets = detections_from_predictions(preds, cfg.gamma, cfg.top_k)
    report = evaluate_map(dets, gts, cfg.iou_thresh, cfg.interpolation, cat_ids)
    report.settings.update({"gamma": cfg.gamma, "top_k": cfg.top_k})
    out = report.to_json()
    out["matching"] = matching_summary(preds, gts, sizes,
                                       MatchCostWeights(cfg.lambda_b, cfg.lambda_iou, cfg.lambda_cls))
    if args.out:
        _write_json(args.out, out)
    else:
        print(json.dumps(out, indent=1))
    return EXIT_OK


def matching_summary(preds, gts, sizes, weights: MatchCostWeights) -> dict:
    """One-to-one Hungarian matching per image under the composite cost."""
    costs = []
    for image_id, insts in gts.items():
        plist = preds.get(image_id, [])
        if not plist or not insts:
            continue
        c = cost_matrix(plist, insts, weights, sizes.get(image_id))
        a = hungarian(c)
        costs.extend(c[i, j] for i, j in a.pairs)
    return {"weights": {"box": weights.lambda_b, "giou": weights.lambda_iou, "cls": weights.lambda_cls},
            "num_pairs": len(costs), "mean_cost": float(np.mean(costs)) if costs else None}


def cmd_self_test(args, cfg: RunConfig) -> int:
    from .selftest import run_checks

    results = run_checks(cfg.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_DATA


COMMANDS = {
    "aggregate": cmd_aggregate,
    "build-hierarchy": cmd_build_hierarchy,
    "score": cmd_score,
    "eval": cmd_eval,
    "self-test": cmd_self_test,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProviderError as exc:
        print(f"provider error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (SgcError, OSError, ValueError) as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
