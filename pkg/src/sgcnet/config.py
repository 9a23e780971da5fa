"""Run configuration with layered precedence: CLI flag > config file > defaults."""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Optional

from .gsa import DEFAULT_PARTITION, BlockPartition

CACHE_ENV = "SGC_CACHE_DIR"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # aggregation
    sigma: float = 1.0
    partition: str = DEFAULT_PARTITION
    block_weights: Optional[list] = None
    aggregation: str = "dgw"
    # hierarchy
    n: int = 6
    max_depth: int = 3
    seed: int = 0
    provider: str = "fixture"
    fixture: Optional[str] = None
    stub_fallback: bool = False
    endpoint: Optional[str] = None
    model: str = "gpt-3.5-turbo"
    timeout: float = 30.0
    retries: int = 0
    max_in_flight: int = 1
    llm_params: dict = field(default_factory=dict)
    encoder: str = "stub"
    embeddings: Optional[str] = None
    dim: int = 64
    cache_dir: Optional[str] = None
    # scoring
    lam: float = 0.5
    tau: float = 0.0
    # matching / evaluation
    gamma: float = 2.0
    lambda_b: float = 5.0
    lambda_iou: float = 5.0
    lambda_cls: float = 2.0
    iou_thresh: float = 0.5
    interpolation: str = "all"
    top_k: int = 1

    @classmethod
    def field_names(cls) -> set:
        return {f.name for f in dataclasses.fields(cls)}

    @classmethod
    def resolve(cls, file_values: Optional[dict] = None, overrides: Optional[dict] = None) -> "RunConfig":
        values = {}
        for source in (file_values or {}, overrides or {}):
            for key, val in source.items():
                if val is None:
                    continue
                if key not in cls.field_names():
                    raise ConfigError(f"unknown config key {key!r}")
                values[key] = val
        cfg = cls(**values)
        if cfg.cache_dir is None:
            cfg.cache_dir = os.environ.get(CACHE_ENV)
        cfg.validate()
        return cfg

    @classmethod
    def load_file(cls, path) -> dict:
        with open(path) as fh:
            try:
                obj = json.load(fh)
            except ValueError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise ConfigError("config file must hold a JSON object")
        # accept "lambda" as an alias since it is the natural name
        if "lambda" in obj:
            obj["lam"] = obj.pop("lambda")
        if "N" in obj:
            obj["n"] = obj.pop("N")
        return obj

    def validate(self) -> None:
        checks = [
            (self.sigma > 0, "sigma must be > 0"),
            (0.0 <= self.lam <= 1.0, "lambda must lie in [0, 1]"),
            (self.tau >= 0, "tau must be >= 0"),
            (self.n >= 1, "N must be >= 1"),
            (self.max_depth >= 1, "max_depth must be >= 1"),
            (self.gamma > 1, "gamma must be > 1"),
            (min(self.lambda_b, self.lambda_iou, self.lambda_cls) >= 0
             and max(self.lambda_b, self.lambda_iou, self.lambda_cls) > 0,
             "cost weights must be non-negative and not all zero"),
            (0.0 <= self.iou_thresh < 1.0, "iou_thresh must lie in [0, 1)"),
            (self.interpolation in ("all", "11point"), "interpolation must be 'all' or '11point'"),
            (self.aggregation in ("dgw", "sum"), "aggregation must be 'dgw' or 'sum'"),
            (self.provider in ("fixture", "stub", "http"), "provider must be fixture, stub or http"),
            (self.encoder in ("stub", "file"), "encoder must be 'stub' or 'file'"),
            (self.dim >= 1, "dim must be >= 1"),
            (self.top_k >= 1, "top_k must be >= 1"),
            (self.max_in_flight >= 1, "max_in_flight must be >= 1"),
            (self.retries >= 0, "retries must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        try:
            partition = BlockPartition.parse(self.partition)
        except Exception as exc:
            raise ConfigError(f"bad partition {self.partition!r}: {exc}") from None
        if self.block_weights is not None and len(self.block_weights) != len(partition):
            raise ConfigError(f"{len(self.block_weights)} block weights for {len(partition)} blocks")
