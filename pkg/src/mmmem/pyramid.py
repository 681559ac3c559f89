"""End-to-end construction of the three-layer memory pyramid."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

from .adapters.base import AdapterSet
from .episodic import ConsolidationState, Thresholds, cluster_prototypes, consolidate_pass, rule_policy
from .schema import SchemaGraph, build_schema
from .sensory import Clip, SensoryConfig, SensoryItem, SubtitleCue, build_sensory_buffer


@dataclass(frozen=True)
class MemoryPyramid:
    sensory: tuple[SensoryItem, ...]
    episodic: ConsolidationState
    schema: SchemaGraph
    dim: int
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def nodes(self):
        return self.episodic.stream

    def counts(self) -> dict[str, int]:
        return {
            "sensory": len(self.sensory),
            "episodic": len(self.episodic.stream),
            "concepts": len(self.schema.concepts),
        }


def empty_pyramid(dim: int, meta: dict[str, str] | None = None) -> MemoryPyramid:
    return MemoryPyramid((), ConsolidationState(), SchemaGraph(), dim, dict(meta or {}))


def build_pyramid(
    clips: Sequence[Clip],
    adapters: AdapterSet,
    sensory_config: SensoryConfig = SensoryConfig(),
    thresholds: Thresholds = Thresholds(),
    subtitles: Sequence[SubtitleCue] | None = None,
    policy=None,
    k: int | None = None,
    seed: int = 42,
    concept_merge_threshold: float = 0.90,
    max_workers: int | None = None,
    meta: dict[str, str] | None = None,
) -> MemoryPyramid:
    buffer = build_sensory_buffer(
        clips, adapters.embedder, adapters.captioner, sensory_config, subtitles, max_workers
    )
    state = consolidate_pass(buffer, policy or rule_policy(thresholds))
    if state.stream:
        state = replace(state, stream=cluster_prototypes(state, k, seed))
    graph = build_schema(state.stream, adapters.extractor, adapters.embedder, concept_merge_threshold)
    return MemoryPyramid(tuple(buffer), state, graph, adapters.embedder.dim, dict(meta or {}))
