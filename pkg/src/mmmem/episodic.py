"""Episodic stream: one chronological pass of ADD_NEW / MERGE / DISCARD.

Each sensory item is compared only with the latest node. The transitions are
deterministic, so the action log alone reproduces the stream from the
buffer (see :func:`replay`).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._vec import cosine, frozen
from .errors import ConsolidationError, InvalidActionError, ParseError, ShapeError
from .sensory import SensoryItem


class Action(enum.Enum):
    ADD_NEW = "ADD_NEW"
    MERGE = "MERGE"
    DISCARD = "DISCARD"


@dataclass(frozen=True)
class EpisodicNode:
    node_id: int
    representation: np.ndarray
    text: str
    span_ms: tuple[int, int]
    merged_count: int
    source_items: tuple[int, ...]
    is_prototype: bool = False

    def __post_init__(self):
        object.__setattr__(self, "representation", frozen(self.representation))
        if self.span_ms[0] > self.span_ms[1]:
            raise ValueError(f"node {self.node_id}: span start after end")
        if self.merged_count != len(self.source_items):
            raise ValueError(f"node {self.node_id}: merged_count != number of source items")


@dataclass(frozen=True)
class ConsolidationState:
    stream: tuple[EpisodicNode, ...] = ()
    action_log: tuple[Action, ...] = ()

    @property
    def latest(self) -> EpisodicNode | None:
        # ADD_NEW appends and MERGE only touches the tail, so e* is always the last node
        return self.stream[-1] if self.stream else None


@dataclass(frozen=True)
class Thresholds:
    merge: float = 0.85
    discard: float = 0.30

    def __post_init__(self):
        if not self.discard < self.merge:
            raise ValueError("discard threshold must be below merge threshold")


DecisionFn = Callable[[SensoryItem, "EpisodicNode | None"], Action]


def decide_rule(item: SensoryItem, latest: EpisodicNode | None, thresholds: Thresholds = Thresholds()) -> Action:
    if latest is None:
        return Action.ADD_NEW
    if item.visual.shape != latest.representation.shape:
        raise ShapeError(
            f"item dimension {item.visual.shape} != node dimension {latest.representation.shape}"
        )
    sim = cosine(item.visual, latest.representation)
    if sim >= thresholds.merge:
        return Action.MERGE
    if sim <= thresholds.discard:
        return Action.ADD_NEW
    return Action.DISCARD


def rule_policy(thresholds: Thresholds = Thresholds()) -> DecisionFn:
    return lambda item, latest: decide_rule(item, latest, thresholds)


def apply_action(
    state: ConsolidationState, item: SensoryItem, action: Action, item_index: int | None = None
) -> ConsolidationState:
    """Deterministic transition; ``item_index`` is the item's position in the buffer."""
    action = Action(action)
    if item_index is None:
        item_index = len(state.action_log)
    log = state.action_log + (action,)
    if action is Action.DISCARD:
        return ConsolidationState(state.stream, log)
    if action is Action.ADD_NEW:
        node = EpisodicNode(
            node_id=len(state.stream),
            representation=item.visual,
            text=item.text_trace,
            span_ms=(item.timestamp_ms, item.timestamp_ms),
            merged_count=1,
            source_items=(item_index,),
        )
        return ConsolidationState(state.stream + (node,), log)
    latest = state.latest
    if latest is None:
        raise InvalidActionError("MERGE requires a latest node but the stream is empty")
    if item.visual.shape != latest.representation.shape:
        raise ShapeError("MERGE with mismatched dimensions")
    n = latest.merged_count
    rep = (latest.representation * n + item.visual) / (n + 1)
    merged = replace(
        latest,
        representation=rep,
        text=f"{latest.text}\n{item.text_trace}" if latest.text else item.text_trace,
        span_ms=(min(latest.span_ms[0], item.timestamp_ms), max(latest.span_ms[1], item.timestamp_ms)),
        merged_count=n + 1,
        source_items=latest.source_items + (item_index,),
    )
    return ConsolidationState(state.stream[:-1] + (merged,), log)


def consolidate_pass(buffer: Sequence[SensoryItem], policy: DecisionFn | None = None) -> ConsolidationState:
    policy = policy or rule_policy()
    state = ConsolidationState()
    for idx, item in enumerate(buffer):
        try:
            action = Action(policy(item, state.latest))
        except Exception as exc:
            raise ConsolidationError(f"policy failed: {type(exc).__name__}: {exc}", idx) from exc
        state = apply_action(state, item, action, idx)
    return state


def replay(buffer: Sequence[SensoryItem], actions: Sequence[Action]) -> ConsolidationState:
    """Rebuild the stream from a recorded action log."""
    if len(actions) != len(buffer):
        raise ValueError(f"{len(actions)} actions for {len(buffer)} items")
    state = ConsolidationState()
    for idx, (item, action) in enumerate(zip(buffer, actions)):
        state = apply_action(state, item, action, idx)
    return state


def write_action_log(path: str | Path, actions: Sequence[Action]) -> None:
    Path(path).write_text("".join(f"{Action(a).value}\n" for a in actions), encoding="utf-8")


def read_action_log(path: str | Path) -> list[Action]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        try:
            out.append(Action(line.strip()))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: unknown action {line!r}") from exc
    return out


# --- prototypes -----------------------------------------------------------


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[0 if len(points) == 1 else int(rng.integers(len(points)))]]
    for _ in range(1, k):
        d2 = np.min(((points[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        if total <= 0:
            break  # every point coincides with a chosen center
        centers.append(points[int(rng.choice(len(points), p=d2 / total))])
    return np.array(centers)


def kmeans(points: np.ndarray, k: int, seed: int = 42, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding. Returns (centroids, labels).

    Fewer than ``k`` centroids come back when the points have fewer than
    ``k`` distinct locations. Distance ties go to the lowest centroid index.
    """
    points = np.asarray(points, dtype=np.float64)
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, k, rng)
    labels = np.full(len(points), -1)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None]) ** 2).sum(-1)
        new = np.argmin(d2, axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
        for c in range(len(centers)):
            members = points[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    return centers, labels


def cluster_prototypes(state: ConsolidationState, k: int | None = None, seed: int = 42) -> tuple[EpisodicNode, ...]:
    """Flag, per K-means cluster, the node nearest its centroid.

    ``k`` defaults to ceil(sqrt(n)) and is clamped to [1, n].
    """
    nodes = state.stream
    n = len(nodes)
    if n == 0:
        raise ValueError("cannot cluster an empty stream")
    k = math.ceil(math.sqrt(n)) if k is None else k
    k = min(max(k, 1), n)
    points = np.stack([nd.representation for nd in nodes])
    centers, labels = kmeans(points, k, seed)
    chosen = set()
    for c in range(len(centers)):
        members = np.flatnonzero(labels == c)
        if len(members) == 0:
            continue
        d2 = ((points[members] - centers[c]) ** 2).sum(-1)
        chosen.add(int(members[np.argmin(d2)]))  # argmin keeps the first (lowest) index on ties
    return tuple(replace(nd, is_prototype=i in chosen) for i, nd in enumerate(nodes))
