"""Adapter contracts for every model-dependent step of the engine.

The engine never talks to a model directly. Embedding, captioning, entity
extraction, candidate scoring and judging all go through the small
protocols below, so the pipeline runs unchanged on deterministic stubs or on
a remote inference server.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np


class Capability(enum.Enum):
    EMBED = "embed"
    CAPTION = "caption"
    EXTRACT_ENTITIES = "extract_entities"
    SCORE_CANDIDATES = "score_candidates"
    JUDGE = "judge"
    RERANK = "rerank"


@dataclass(frozen=True)
class AdapterContract:
    capabilities: frozenset[Capability]
    dim: int | None = None
    deterministic: bool = False
    name: str = ""

    def __post_init__(self):
        if Capability.EMBED in self.capabilities and not self.dim:
            raise ValueError("EMBED adapters must declare a positive dimension")


@runtime_checkable
class Embedder(Protocol):
    contract: AdapterContract

    @property
    def dim(self) -> int: ...

    def embed_text(self, text: str) -> np.ndarray: ...

    def embed_visual(self, window: np.ndarray) -> np.ndarray: ...


@runtime_checkable
class Captioner(Protocol):
    def caption(self, window: np.ndarray) -> str: ...


@runtime_checkable
class EntityExtractor(Protocol):
    def extract(self, text: str) -> str:
        """Return line records ``ENTITY<TAB>surface<TAB>gloss`` / ``REL<TAB>s<TAB>label<TAB>o``."""
        ...


@runtime_checkable
class CandidateScorer(Protocol):
    def score_candidates(
        self, question: str, evidence: Sequence[str], candidates: Sequence[str]
    ) -> list[float]: ...


@runtime_checkable
class Judge(Protocol):
    def judge(self, state, trace: Sequence) -> float:
        """Task score in [0, 1] for a memory trace written in ``state``."""
        ...


@dataclass
class AdapterSet:
    """The bundle of adapters a pipeline run needs."""

    embedder: Embedder
    captioner: Captioner
    extractor: EntityExtractor
    scorer: CandidateScorer
    extras: dict = field(default_factory=dict)
