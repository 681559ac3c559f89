from __future__ import annotations

import numpy as np


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; zero vectors score 0."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def cosine_many(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Row-wise cosine of ``matrix`` against ``query``."""
    if len(matrix) == 0:
        return np.zeros(0)
    norms = np.linalg.norm(matrix, axis=1) * np.linalg.norm(query)
    dots = matrix @ query
    out = np.zeros(len(matrix))
    ok = norms > 0
    out[ok] = dots[ok] / norms[ok]
    return out


def frozen(arr) -> np.ndarray:
    """Copy to float64 and mark read-only."""
    out = np.array(arr, dtype=np.float64)
    out.setflags(write=False)
    return out
