"""Dense vector primitives shared across the pipeline.

Vectors and matrices are plain float64 numpy arrays. Constructors below
validate shape and finiteness once so downstream code can trust them.
"""
from __future__ import annotations

import numpy as np

from .errors import DimMismatch, NonFinite, ZeroVector

ZERO_NORM = 1e-12


def as_vec(data, name: str = "vector") -> np.ndarray:
    v = np.array(data, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimMismatch(f"{name} must be a non-empty 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFinite(f"{name} contains NaN or Inf")
    v.setflags(write=False)
    return v


def as_mat(data, name: str = "matrix") -> np.ndarray:
    m = np.array(data, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
        raise DimMismatch(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFinite(f"{name} contains NaN or Inf")
    m.setflags(write=False)
    return m


def l2_normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm < ZERO_NORM:
        raise ZeroVector("cannot normalize a zero vector")
    return v / norm


def cosine_sim(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"dimension mismatch: {a.shape} vs {b.shape}")
    # dot of unit vectors; clip guards against 1 + ulp
    return float(np.clip(np.dot(l2_normalize(a), l2_normalize(b)), -1.0, 1.0))


def matvec(m, v) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise DimMismatch(f"cannot multiply {m.shape} matrix by {v.shape} vector")
    return m @ v
