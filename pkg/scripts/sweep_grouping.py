"""LLM call counts, depth and strategy mix of the hierarchy build as N varies.

    python3 scripts/sweep_grouping.py --objects horse bicycle cup dog --per-object 6
"""
import argparse
from collections import Counter

from sgcnet.hierarchy import build_hierarchy
from sgcnet.llm import CallableProvider, LlmClient, TextEncoder
from sgcnet.synthetic import class_names, rule_response


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--objects", nargs="+", default=["horse", "bicycle", "cup", "dog"])
    ap.add_argument("--per-object", type=int, default=6)
    ap.add_argument("--ns", type=int, nargs="+", default=[2, 3, 4, 6, 8, 12, 24])
    ap.add_argument("--max-depth", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    names = class_names(args.objects, args.per_object)
    print(f"{len(names)} classes")
    for n in args.ns:
        llm = LlmClient(CallableProvider(rule_response, "rules"))
        h = build_hierarchy(names, n, args.max_depth, args.seed, llm, TextEncoder.stub(64, args.seed))
        depths = Counter(len(c.levels) for c in h.classes)
        strategies = Counter(e.strategy for e in h.build_log)
        print(f"N={n:<3} calls={len(llm.calls):<4} levels={dict(sorted(depths.items()))}  "
              + " ".join(f"{k}={v}" for k, v in sorted(strategies.items())))


if __name__ == "__main__":
    main()
