"""Entropy-gated top-down retrieval over a memory pyramid.

Layers are visited symbolic, then episodic, then sensory. After each layer
the answer posterior is recomputed from all evidence gathered so far, and
the walk stops once the posterior entropy (nats) is at most ``gamma`` or has
stopped falling for ``patience`` consecutive steps.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._vec import cosine_many
from .errors import AdapterError, ContractError, DomainError
from .pyramid import MemoryPyramid
from .schema import query_concepts

LAYER_ORDER = ("SYMBOLIC", "EPISODIC", "SENSORY")
# slack for H <= gamma so that gamma = ln N stops on an exactly-uniform posterior
_GAMMA_SLACK = 1e-12


class Layer(enum.Enum):
    SYMBOLIC = "SYMBOLIC"
    EPISODIC = "EPISODIC"
    SENSORY = "SENSORY"


class Decision(enum.Enum):
    STOP = "STOP"
    CONTINUE = "CONTINUE"


@dataclass(frozen=True)
class Query:
    question: str
    candidates: tuple[str, ...]

    def __post_init__(self):
        cands = tuple(self.candidates)
        if len(cands) < 2:
            raise ContractError("a query needs at least two candidates")
        if len(set(cands)) != len(cands):
            raise ContractError("candidates must be distinct")
        object.__setattr__(self, "candidates", cands)


@dataclass(frozen=True)
class Evidence:
    ref: str
    text: str
    score: float
    span_ms: tuple[int, int] | None = None


@dataclass(frozen=True)
class EvidenceBundle:
    layer: Layer
    items: tuple[Evidence, ...]
    step_index: int


@dataclass(frozen=True)
class PosteriorState:
    probs: tuple[float, ...]
    entropy_history: tuple[float, ...]
    evidence: tuple[EvidenceBundle, ...] = ()
    plateau_count: int = 0

    @property
    def entropy(self) -> float:
        return self.entropy_history[-1]

    def evidence_texts(self) -> list[str]:
        return [it.text for b in self.evidence for it in b.items]


@dataclass(frozen=True)
class RetrievalConfig:
    gamma: float = 0.72
    epsilon_h: float = 0.01
    patience: int = 2
    top_k_sym: int = 5
    top_k_epi: int = 2
    top_k_sen: int = 1

    def __post_init__(self):
        if self.gamma < 0 or self.epsilon_h < 0:
            raise ValueError("gamma and epsilon_h must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if min(self.top_k_sym, self.top_k_epi, self.top_k_sen) < 1:
            raise ValueError("top-k values must be >= 1")


@dataclass(frozen=True)
class TraceStep:
    step: int
    layer: Layer
    item_refs: tuple[str, ...]
    probs: tuple[float, ...]
    entropy: float
    decision: Decision


@dataclass(frozen=True)
class AnswerResult:
    answer: str
    index: int
    state: PosteriorState
    steps: tuple[TraceStep, ...] = field(default=())

    @property
    def letter(self) -> str:
        return chr(ord("A") + self.index)


def entropy(probs: Sequence[float]) -> float:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise DomainError("expected a non-empty 1-D distribution")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise DomainError("probabilities must be finite and non-negative")
    if abs(p.sum() - 1.0) > 1e-9:
        raise DomainError(f"probabilities sum to {p.sum()!r}, not 1")
    nz = p[p > 0]
    return float(max(0.0, -(nz * np.log(nz)).sum()))


def softmax(scores: Sequence[float]) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    z = np.exp(s - s.max())
    return z / z.sum()


def _score(scorer, question: str, evidence: list[str], candidates: Sequence[str]) -> np.ndarray:
    try:
        scores = list(scorer.score_candidates(question, evidence, candidates))
    except AdapterError:
        raise
    except Exception as exc:
        raise AdapterError(f"{type(exc).__name__}: {exc}", context="score_candidates") from exc
    if len(scores) != len(candidates):
        raise ContractError(f"scorer returned {len(scores)} scores for {len(candidates)} candidates")
    arr = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ContractError("scorer returned a non-finite score")
    return arr


def initial_posterior(query: Query, scorer) -> PosteriorState:
    """Posterior from the question and candidates alone (no evidence)."""
    probs = softmax(_score(scorer, query.question, [], query.candidates))
    return PosteriorState(tuple(float(p) for p in probs), (entropy(probs),))


def update_posterior(
    state: PosteriorState, query: Query, new_evidence: EvidenceBundle, scorer, epsilon_h: float = 0.01
) -> PosteriorState:
    evidence = state.evidence + (new_evidence,)
    texts = [it.text for b in evidence for it in b.items]
    probs = softmax(_score(scorer, query.question, texts, query.candidates))
    h = entropy(probs)
    # the plateau is measured between retrieval steps; the drop from the
    # zero-evidence posterior H_0 never counts toward it
    first = not state.evidence
    plateau = 0 if first or state.entropy - h >= epsilon_h else state.plateau_count + 1
    return PosteriorState(tuple(float(p) for p in probs), state.entropy_history + (h,), evidence, plateau)


def should_stop(state: PosteriorState, gamma: float = 0.72, patience: int = 2, layers_remain: bool = True) -> Decision:
    if not state.entropy_history:
        raise ContractError("posterior has no entropy history")
    if state.entropy <= gamma + _GAMMA_SLACK or state.plateau_count >= patience or not layers_remain:
        return Decision.STOP
    return Decision.CONTINUE


def _retrieved_refs(bundles: Sequence[EvidenceBundle], prefix: str) -> list[str]:
    return [it.ref[len(prefix):] for b in bundles for it in b.items if it.ref.startswith(prefix)]


def retrieve_layer(
    layer: Layer | str,
    query: Query,
    memory: MemoryPyramid,
    embedder,
    k: int,
    prior: Sequence[EvidenceBundle] = (),
    step_index: int = 0,
) -> EvidenceBundle:
    """Top-k evidence from one layer.

    Episodic search is restricted to nodes grounded by concepts already
    retrieved, and sensory search to the source items of nodes already
    retrieved; either falls back to the whole layer when the restriction is
    empty. A sensory clip scores the max cosine over its eligible items.
    """
    try:
        layer = Layer(layer)
    except ValueError as exc:
        raise ContractError(f"unknown layer {layer!r}") from exc
    if k < 1:
        raise ContractError("k must be >= 1")
    qtext = query.question

    if layer is Layer.SYMBOLIC:
        hits = query_concepts(memory.schema, qtext, embedder, k)
        items = tuple(Evidence(f"concept:{c.id}", c.gloss, s) for c, s in hits)
        return EvidenceBundle(layer, items, step_index)

    qvec = embedder.embed_text(qtext)
    if layer is Layer.EPISODIC:
        nodes = list(memory.episodic.stream)
        pointers = memory.schema.pointers
        allowed = {n for cid in _retrieved_refs(prior, "concept:") for n in pointers.get(cid, ())}
        pool = [n for n in nodes if n.node_id in allowed] or nodes
        if not pool:
            return EvidenceBundle(layer, (), step_index)
        scores = cosine_many(np.stack([embedder.embed_text(n.text) for n in pool]), qvec)
        order = sorted(range(len(pool)), key=lambda i: (-scores[i], pool[i].node_id))[:k]
        items = tuple(
            Evidence(f"node:{pool[i].node_id}", pool[i].text, float(scores[i]), pool[i].span_ms) for i in order
        )
        return EvidenceBundle(layer, items, step_index)

    buffer = memory.sensory
    by_id = {n.node_id: n for n in memory.episodic.stream}
    allowed_items = {
        s for nid in _retrieved_refs(prior, "node:") if int(nid) in by_id for s in by_id[int(nid)].source_items
    }
    idxs = [i for i in range(len(buffer)) if i in allowed_items] or list(range(len(buffer)))
    if not idxs:
        return EvidenceBundle(layer, (), step_index)
    scores = cosine_many(np.stack([buffer[i].visual for i in idxs]), qvec)
    clips: dict[int, list[tuple[int, float]]] = {}
    for i, s in zip(idxs, scores):
        clips.setdefault(buffer[i].clip_id, []).append((i, float(s)))
    ranked = sorted(clips, key=lambda c: (-max(s for _, s in clips[c]), c))[:k]
    items = []
    for cid in ranked:
        members = clips[cid]
        ts = [buffer[i].timestamp_ms for i, _ in members]
        text = " ".join(buffer[i].text_trace for i, _ in members)
        items.append(Evidence(f"clip:{cid}", text, max(s for _, s in members), (min(ts), max(ts))))
    return EvidenceBundle(layer, tuple(items), step_index)


def answer(
    query: Query, memory: MemoryPyramid, embedder, scorer, config: RetrievalConfig = RetrievalConfig()
) -> AnswerResult:
    """Walk the layers top-down and return the most probable candidate.

    At least one layer is always consulted; the stopping rule is checked
    after each posterior update. Ties in the final posterior go to the
    lowest candidate index.
    """
    top_k = {Layer.SYMBOLIC: config.top_k_sym, Layer.EPISODIC: config.top_k_epi, Layer.SENSORY: config.top_k_sen}
    state = initial_posterior(query, scorer)
    steps: list[TraceStep] = []
    layers = [Layer(name) for name in LAYER_ORDER]
    for s, layer in enumerate(layers, start=1):
        bundle = retrieve_layer(layer, query, memory, embedder, top_k[layer], state.evidence, s)
        state = update_posterior(state, query, bundle, scorer, config.epsilon_h)
        decision = should_stop(state, config.gamma, config.patience, layers_remain=s < len(layers))
        steps.append(TraceStep(s, layer, tuple(it.ref for it in bundle.items), state.probs, state.entropy, decision))
        if decision is Decision.STOP:
            break
    best = int(np.argmax(state.probs))  # argmax returns the first maximum
    return AnswerResult(query.candidates[best], best, state, tuple(steps))


def trace_records(result: AnswerResult) -> list[str]:
    """One JSON object per retrieval step: step, layer, items, probs, entropy, decision."""
    return [
        json.dumps(
            {
                "step": st.step,
                "layer": st.layer.value,
                "items": list(st.item_refs),
                "probs": list(st.probs),
                "entropy": st.entropy,
                "decision": st.decision.value,
            },
            separators=(",", ":"),
        )
        for st in result.steps
    ]


def write_trace(path: str | Path, result: AnswerResult) -> None:
    Path(path).write_text("".join(line + "\n" for line in trace_records(result)), encoding="utf-8")
