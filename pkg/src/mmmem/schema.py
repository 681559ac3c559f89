"""Symbolic schema: concept prototypes, semantic relations and grounding edges.

Concepts are unified across episodic nodes by normalized surface form and,
failing that, by gloss-embedding similarity. Every concept keeps grounding
edges back to the nodes that mentioned it, so the graph stays an index into
episodic (and through ``source_items``, sensory) evidence.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._vec import cosine, cosine_many, frozen
from .episodic import EpisodicNode
from .errors import AdapterError, ParseError

log = logging.getLogger(__name__)


def normalize_surface(s: str) -> str:
    return " ".join(s.casefold().split())


@dataclass(frozen=True)
class Mention:
    surface: str
    gloss: str
    node_id: int


@dataclass(frozen=True)
class Relation:
    subject: str
    label: str
    obj: str
    node_id: int


@dataclass(frozen=True)
class Extraction:
    mentions: tuple[Mention, ...] = ()
    relations: tuple[Relation, ...] = ()


@dataclass(frozen=True)
class ConceptPrototype:
    id: str
    surface_forms: frozenset[str]
    gloss: str
    embedding: np.ndarray

    def __post_init__(self):
        if not self.surface_forms:
            raise ValueError("a concept needs at least one surface form")
        object.__setattr__(self, "embedding", frozen(self.embedding))


class EdgeKind(enum.Enum):
    SEMANTIC = "SEMANTIC"
    GROUNDING = "GROUNDING"


@dataclass(frozen=True)
class SchemaEdge:
    """SEMANTIC: ``source``/``target`` are concept ids. GROUNDING: ``source`` is a node id."""

    kind: EdgeKind
    source: str | int
    target: str
    label: str = ""


@dataclass(frozen=True)
class SchemaGraph:
    concepts: dict[str, ConceptPrototype] = field(default_factory=dict)
    episodic_refs: frozenset[int] = frozenset()
    edges: tuple[SchemaEdge, ...] = ()

    @property
    def pointers(self) -> dict[str, tuple[int, ...]]:
        out: dict[str, list[int]] = {cid: [] for cid in self.concepts}
        for e in self.edges:
            if e.kind is EdgeKind.GROUNDING:
                out[e.target].append(int(e.source))
        return {cid: tuple(sorted(set(v))) for cid, v in out.items()}

    def validate(self) -> None:
        for e in self.edges:
            if e.target not in self.concepts:
                raise ValueError(f"edge targets unknown concept {e.target!r}")
            if e.kind is EdgeKind.SEMANTIC and e.source not in self.concepts:
                raise ValueError(f"edge from unknown concept {e.source!r}")
            if e.kind is EdgeKind.GROUNDING and e.source not in self.episodic_refs:
                raise ValueError(f"grounding edge from unknown node {e.source!r}")
        orphans = [cid for cid, p in self.pointers.items() if not p]
        if orphans:
            raise ValueError(f"concepts without grounding: {orphans}")


def parse_extraction(text: str, node_id: int, strict: bool = True) -> Extraction:
    """Parse ``ENTITY``/``REL`` line records from an extractor.

    With ``strict=False`` malformed records are logged and skipped.
    """
    mentions, relations = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        ok = (parts[0] == "ENTITY" and len(parts) == 3 and parts[1].strip()) or (
            parts[0] == "REL" and len(parts) == 4 and all(p.strip() for p in parts[1:])
        )
        if not ok:
            if strict:
                raise ParseError(f"node {node_id}, record {lineno}: malformed record {line!r}")
            log.warning("node %s: skipping malformed record %r", node_id, line)
            continue
        if parts[0] == "ENTITY":
            mentions.append(Mention(parts[1], parts[2], node_id))
        else:
            relations.append(Relation(parts[1], parts[2], parts[3], node_id))
    return Extraction(tuple(mentions), tuple(relations))


def extract_entities(node: EpisodicNode, extractor, strict: bool = True) -> Extraction:
    if not node.text.strip():
        return Extraction()
    try:
        raw = extractor.extract(node.text)
    except AdapterError as exc:
        raise AdapterError(str(exc), context=f"node {node.node_id}") from exc
    except Exception as exc:
        raise AdapterError(f"{type(exc).__name__}: {exc}", context=f"node {node.node_id}") from exc
    return parse_extraction(raw, node.node_id, strict=strict)


def unify_prototypes(
    mentions: Sequence[Mention], embedder, merge_threshold: float = 0.90
) -> tuple[dict[str, ConceptPrototype], list[str]]:
    """Group mentions into concepts.

    Equal normalized surfaces always unify. A new surface joins the existing
    concept whose first gloss is most similar, if that cosine reaches
    ``merge_threshold``. Returns the concepts (first-seen order) and the
    concept id assigned to each mention.
    """
    by_surface: dict[str, str] = {}
    anchor: dict[str, np.ndarray] = {}
    surfaces: dict[str, list[str]] = {}
    glosses: dict[str, list[str]] = {}
    assignment: list[str] = []
    for m in mentions:
        key = normalize_surface(m.surface)
        cid = by_surface.get(key)
        if cid is None:
            emb = embedder.embed_text(m.gloss)
            best, best_sim = None, merge_threshold
            for other, vec in anchor.items():
                sim = cosine(emb, vec)
                if sim >= best_sim and (best is None or sim > best_sim):
                    best, best_sim = other, sim
            if best is None:
                cid = key
                anchor[cid] = emb
                surfaces[cid], glosses[cid] = [], []
            else:
                cid = best
            by_surface[key] = cid
        if key not in surfaces[cid]:
            surfaces[cid].append(key)
        if m.gloss not in glosses[cid]:
            glosses[cid].append(m.gloss)
        assignment.append(cid)
    concepts = {}
    for cid in surfaces:
        gloss = "\n".join(glosses[cid])
        concepts[cid] = ConceptPrototype(cid, frozenset(surfaces[cid]), gloss, embedder.embed_text(gloss))
    return concepts, assignment


def build_schema(
    stream: Sequence[EpisodicNode], extractor, embedder, merge_threshold: float = 0.90
) -> SchemaGraph:
    mentions: list[Mention] = []
    relations: list[Relation] = []
    for node in stream:
        ex = extract_entities(node, extractor, strict=False)
        mentions.extend(ex.mentions)
        relations.extend(ex.relations)
    concepts, assignment = unify_prototypes(mentions, embedder, merge_threshold)

    edges: list[SchemaEdge] = []
    seen = set()
    for m, cid in zip(mentions, assignment):
        e = SchemaEdge(EdgeKind.GROUNDING, m.node_id, cid)
        if e not in seen:
            seen.add(e)
            edges.append(e)
    surface_to_id = {}
    for cid, c in concepts.items():
        for s in c.surface_forms:
            surface_to_id.setdefault(s, cid)
    for r in relations:
        src = surface_to_id.get(normalize_surface(r.subject))
        dst = surface_to_id.get(normalize_surface(r.obj))
        if src is None or dst is None:
            continue
        e = SchemaEdge(EdgeKind.SEMANTIC, src, dst, r.label)
        if e not in seen:
            seen.add(e)
            edges.append(e)
    graph = SchemaGraph(concepts, frozenset(n.node_id for n in stream), tuple(edges))
    graph.validate()
    return graph


def query_concepts(graph: SchemaGraph, text: str, embedder, k: int = 5) -> list[tuple[ConceptPrototype, float]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not graph.concepts:
        return []
    ids = list(graph.concepts)
    scores = cosine_many(np.stack([graph.concepts[c].embedding for c in ids]), embedder.embed_text(text))
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))[:k]
    return [(graph.concepts[ids[i]], float(scores[i])) for i in order]


# --- line-delimited export ------------------------------------------------
# concept:      {"kind","id","surface_forms","gloss"}
# edge:         {"kind","type","source","target","label"}
# episodic_ref: {"kind","node"}
# Records appear as all concepts, then edges, then episodic refs, in graph order.


def _dump(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def graph_records(graph: SchemaGraph) -> list[str]:
    lines = []
    for c in graph.concepts.values():
        lines.append(_dump({"kind": "concept", "id": c.id, "surface_forms": sorted(c.surface_forms), "gloss": c.gloss}))
    for e in graph.edges:
        lines.append(_dump({"kind": "edge", "type": e.kind.value, "source": e.source, "target": e.target, "label": e.label}))
    for ref in sorted(graph.episodic_refs):
        lines.append(_dump({"kind": "episodic_ref", "node": ref}))
    return lines


def graph_from_records(lines: Iterable[str], embeddings: Sequence[np.ndarray]) -> SchemaGraph:
    """Inverse of :func:`graph_records`; ``embeddings`` follow concept order."""
    concepts: dict[str, ConceptPrototype] = {}
    edges, refs = [], set()
    emb = iter(embeddings)
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            kind = rec["kind"]
            if kind == "concept":
                concepts[rec["id"]] = ConceptPrototype(rec["id"], frozenset(rec["surface_forms"]), rec["gloss"], next(emb))
            elif kind == "edge":
                edges.append(SchemaEdge(EdgeKind(rec["type"]), rec["source"], rec["target"], rec["label"]))
            elif kind == "episodic_ref":
                refs.add(int(rec["node"]))
            else:
                raise ValueError(f"unknown record kind {kind!r}")
        except (ValueError, KeyError, StopIteration) as exc:
            raise ParseError(f"schema record {lineno}: {exc}") from exc
    if next(emb, None) is not None:
        raise ParseError("more concept embeddings than concept records")
    graph = SchemaGraph(concepts, frozenset(refs), tuple(edges))
    graph.validate()
    return graph


def write_edge_list(path: str | Path, graph: SchemaGraph) -> int:
    """Plain ``source<TAB>target<TAB>type<TAB>label`` lines; grounding sources are ``node:<id>``."""
    rows = []
    for e in graph.edges:
        src = f"node:{e.source}" if e.kind is EdgeKind.GROUNDING else f"concept:{e.source}"
        rows.append(f"{src}\tconcept:{e.target}\t{e.kind.value}\t{e.label}\n")
    Path(path).write_text("".join(rows), encoding="utf-8")
    return len(rows)
