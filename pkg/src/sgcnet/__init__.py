"""Stratified granular comparison pipeline on precomputed embeddings.

Layer-feature aggregation, LLM-built class hierarchies with hierarchical
scoring, Hungarian matching and HOI mAP evaluation.
"""
from .embedding import cosine_sim, l2_normalize, matvec
from .gsa import (
    BlockPartition,
    DecoderParams,
    GsaParams,
    LayerFeatureStack,
    aggregate,
    aggregate_grad,
    decode,
    dgw_weights,
)
from .hierarchy import ClassHierarchy, build_hierarchy, choose_k, kmeans, select_strategy
from .llm import LlmClient, PromptKind, TextEncoder, render_prompt
from .matching import BBox, giou_loss, hungarian, inference_score, iou, match_cost
from .evaluation import evaluate_map
from .scoring import ScorerConfig, classify, evaluator_bits, fused_score, level_scores, running_average

__version__ = "0.1.0"
