"""Deterministic, network-free adapters used by tests and the default CLI."""

from __future__ import annotations

import hashlib
import re
from typing import Sequence

import numpy as np

from .base import AdapterContract, AdapterSet, Capability

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def normalize_text(text: str) -> str:
    return " ".join(text.casefold().split())


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.casefold())


def _unit_vector(digest: bytes, dim: int) -> np.ndarray:
    rng = np.random.default_rng(int.from_bytes(digest[:16], "little"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


class StubEmbedder:
    """Hashes normalized input to a pseudo-random unit vector.

    Text and pixel windows live in separate hash namespaces, so a text
    embedding is never accidentally identical to a visual one.
    """

    def __init__(self, dim: int = 64, seed: int = 42):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self._dim = dim
        self.seed = seed
        self.contract = AdapterContract(
            frozenset({Capability.EMBED}), dim=dim, deterministic=True, name="stub-embed"
        )

    @property
    def dim(self) -> int:
        return self._dim

    def _digest(self, kind: bytes, payload: bytes) -> bytes:
        h = hashlib.blake2b(digest_size=32)
        h.update(self.seed.to_bytes(8, "little", signed=True))
        h.update(kind)
        h.update(payload)
        return h.digest()

    def embed_text(self, text: str) -> np.ndarray:
        return _unit_vector(self._digest(b"text:", normalize_text(text).encode("utf-8")), self._dim)

    def embed_visual(self, window: np.ndarray) -> np.ndarray:
        arr = np.ascontiguousarray(window)
        header = f"{arr.dtype.str}{arr.shape}".encode()
        return _unit_vector(self._digest(b"visual:", header + arr.tobytes()), self._dim)


class StubCaptioner:
    """Captions a window with a short lowercase label derived from its bytes."""

    contract = AdapterContract(frozenset({Capability.CAPTION}), deterministic=True, name="stub-caption")

    def __init__(self):
        self.calls = 0

    def caption(self, window: np.ndarray) -> str:
        self.calls += 1
        digest = hashlib.blake2b(np.ascontiguousarray(window).tobytes(), digest_size=4).hexdigest()
        return f"scene {digest}"


class StubExtractor:
    """Uppercase tokens are entities; ``X verb Y`` (upper, lower, upper) is a relation.

    The surface form is the lowercased token and the gloss is the surface
    followed by the line it came from, so distinct entities on one line get
    distinct glosses.
    """

    contract = AdapterContract(
        frozenset({Capability.EXTRACT_ENTITIES}), deterministic=True, name="stub-extract"
    )

    @staticmethod
    def _is_entity(tok: str) -> bool:
        return len(tok) >= 2 and tok.isalpha() and tok.isupper()

    def extract(self, text: str) -> str:
        records: list[str] = []
        seen: set[str] = set()
        for line in text.splitlines():
            toks = line.split()
            for tok in toks:
                if self._is_entity(tok):
                    surface = tok.lower()
                    key = f"{surface}\t{line.strip()}"
                    if key not in seen:
                        seen.add(key)
                        records.append(f"ENTITY\t{surface}\t{surface}: {line.strip()}")
            for a, verb, b in zip(toks, toks[1:], toks[2:]):
                if self._is_entity(a) and self._is_entity(b) and verb.isalpha() and verb.islower():
                    records.append(f"REL\t{a.lower()}\t{verb}\t{b.lower()}")
        return "\n".join(records)


class OverlapScorer:
    """Scores each candidate by the fraction of its tokens found in the evidence."""

    contract = AdapterContract(
        frozenset({Capability.SCORE_CANDIDATES}), deterministic=True, name="stub-overlap"
    )

    def __init__(self, scale: float = 5.0):
        self.scale = scale
        self.calls: list[tuple[str, tuple[str, ...], tuple[str, ...]]] = []

    def score_candidates(
        self, question: str, evidence: Sequence[str], candidates: Sequence[str]
    ) -> list[float]:
        self.calls.append((question, tuple(evidence), tuple(candidates)))
        pool = set()
        for text in evidence:
            pool.update(tokenize(text))
        scores = []
        for cand in candidates:
            toks = tokenize(cand)
            if not toks:
                scores.append(0.0)
                continue
            scores.append(self.scale * sum(t in pool for t in toks) / len(toks))
        return scores


class ConstantScorer:
    """Returns the same score for every candidate, i.e. a uniform posterior."""

    contract = AdapterContract(
        frozenset({Capability.SCORE_CANDIDATES}), deterministic=True, name="stub-uniform"
    )

    def __init__(self):
        self.calls: list[tuple[str, tuple[str, ...], tuple[str, ...]]] = []

    def score_candidates(self, question, evidence, candidates):
        self.calls.append((question, tuple(evidence), tuple(candidates)))
        return [0.0] * len(candidates)


def stub_adapters(dim: int = 64, seed: int = 42, scorer: str = "overlap") -> AdapterSet:
    scorers = {"overlap": OverlapScorer, "uniform": ConstantScorer}
    if scorer not in scorers:
        raise ValueError(f"unknown stub scorer {scorer!r}")
    return AdapterSet(
        embedder=StubEmbedder(dim=dim, seed=seed),
        captioner=StubCaptioner(),
        extractor=StubExtractor(),
        scorer=scorers[scorer](),
    )

