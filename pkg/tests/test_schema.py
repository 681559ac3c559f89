import numpy as np
import pytest

from mmmem.adapters import StubEmbedder, StubExtractor
from mmmem.episodic import Action, replay
from mmmem.errors import AdapterError, ParseError
from mmmem.schema import (
    EdgeKind,
    Mention,
    SchemaEdge,
    SchemaGraph,
    build_schema,
    extract_entities,
    graph_from_records,
    graph_records,
    normalize_surface,
    parse_extraction,
    query_concepts,
    unify_prototypes,
    write_edge_list,
)
from conftest import make_item


class TableEmbedder:
    """Returns fixed vectors for known glosses, a hashed one otherwise."""

    def __init__(self, table, dim=3):
        self.table = table
        self.fallback = StubEmbedder(dim)
        self.dim = dim

    def embed_text(self, text):
        return np.asarray(self.table.get(text, self.fallback.embed_text(text)), dtype=float)


def _stream(texts):
    buf = [make_item([1.0, float(i)], ts=i * 100, text=t) for i, t in enumerate(texts)]
    return replay(buf, [Action.ADD_NEW] * len(buf)).stream


class TestParsing:
    def test_entities_and_relations(self):
        ex = parse_extraction("ENTITY\tKettle\ta pot\nREL\tkettle\tboils\twater\n", 3)
        assert ex.mentions == (Mention("Kettle", "a pot", 3),)
        assert [(r.subject, r.label, r.obj) for r in ex.relations] == [("kettle", "boils", "water")]

    def test_blank_lines_ignored(self):
        assert parse_extraction("\n\n", 0).mentions == ()

    @pytest.mark.parametrize("bad", ["ENTITY\tonly", "REL\ta\tb", "THING\tx\ty", "ENTITY\t \tgloss"])
    def test_malformed_strict(self, bad):
        with pytest.raises(ParseError, match="node 7"):
            parse_extraction(bad, 7)

    def test_malformed_lenient_skips(self):
        ex = parse_extraction("garbage\nENTITY\tcup\ta cup", 0, strict=False)
        assert [m.surface for m in ex.mentions] == ["cup"]

    def test_normalize_surface(self):
        assert normalize_surface("  The   KETTLE ") == "the kettle"


class TestUnification:
    def test_same_surface_unifies(self):
        ms = [Mention("Kettle", "g1", 0), Mention("kettle ", "g2", 1)]
        concepts, assign = unify_prototypes(ms, StubEmbedder(8))
        assert list(concepts) == ["kettle"]
        assert assign == ["kettle", "kettle"]
        assert concepts["kettle"].gloss == "g1\ng2"

    def test_similar_gloss_unifies_distinct_surface(self):
        emb = TableEmbedder({"pot for water": [1, 0, 0], "water pot": [0.95, np.sqrt(1 - 0.95**2), 0]})
        ms = [Mention("kettle", "pot for water", 0), Mention("boiler", "water pot", 1)]
        concepts, assign = unify_prototypes(ms, emb, merge_threshold=0.90)
        assert assign == ["kettle", "kettle"]
        assert concepts["kettle"].surface_forms == frozenset({"kettle", "boiler"})

    def test_dissimilar_gloss_stays_separate(self):
        emb = TableEmbedder({"a": [1, 0, 0], "b": [0.8, 0.6, 0]})
        _, assign = unify_prototypes([Mention("x", "a", 0), Mention("y", "b", 0)], emb, 0.90)
        assert assign == ["x", "y"]

    def test_threshold_inclusive(self):
        emb = TableEmbedder({"a": [1, 0, 0], "b": [0.9, np.sqrt(1 - 0.81), 0]})
        _, assign = unify_prototypes([Mention("x", "a", 0), Mention("y", "b", 0)], emb, 0.8999999)
        assert assign == ["x", "x"]


class _FailingExtractor:
    def extract(self, text):
        raise RuntimeError("model timeout")


class TestBuild:
    def test_fixture_graph(self, fixture_pyramid):
        g = fixture_pyramid.schema
        assert set(g.concepts) == {"kettle", "toast"}
        assert g.pointers == {"kettle": (0,), "toast": (1,)}
        assert all(e.kind is EdgeKind.GROUNDING for e in g.edges)

    def test_relation_becomes_semantic_edge(self):
        stream = _stream(["KETTLE near STOVE"])
        g = build_schema(stream, StubExtractor(), StubEmbedder(16))
        sem = [e for e in g.edges if e.kind is EdgeKind.SEMANTIC]
        assert sem == [SchemaEdge(EdgeKind.SEMANTIC, "kettle", "stove", "near")]

    def test_concept_grounded_in_every_mentioning_node(self):
        stream = _stream(["KETTLE on", "the KETTLE again", "nothing here"])
        g = build_schema(stream, StubExtractor(), StubEmbedder(16))
        assert g.pointers["kettle"] == (0, 1)
        assert g.episodic_refs == frozenset({0, 1, 2})

    def test_every_concept_points_to_existing_node(self):
        stream = _stream(["KETTLE and CUP", "TOAST", "CUP of TEA"])
        g = build_schema(stream, StubExtractor(), StubEmbedder(16))
        for cid, ptrs in g.pointers.items():
            assert ptrs and set(ptrs) <= g.episodic_refs

    def test_empty_text_skips_extractor(self):
        stream = _stream([""])
        g = build_schema(stream, _FailingExtractor(), StubEmbedder(8))
        assert g.concepts == {}

    def test_extractor_failure_names_node(self):
        node = _stream(["x"])[0]
        with pytest.raises(AdapterError, match="node 0"):
            extract_entities(node, _FailingExtractor())

    def test_validate_rejects_orphan(self):
        g = SchemaGraph({"a": build_schema(_stream(["AA"]), StubExtractor(), StubEmbedder(4)).concepts["aa"]})
        with pytest.raises(ValueError, match="without grounding"):
            g.validate()

    def test_validate_rejects_dangling_node(self):
        base = build_schema(_stream(["AA"]), StubExtractor(), StubEmbedder(4))
        bad = SchemaGraph(base.concepts, base.episodic_refs, base.edges + (SchemaEdge(EdgeKind.GROUNDING, 9, "aa"),))
        with pytest.raises(ValueError, match="unknown node"):
            bad.validate()


class TestQueryAndExport:
    def test_query_ranks_exact_gloss_first(self, fixture_pyramid, adapters):
        g = fixture_pyramid.schema
        gloss = g.concepts["toast"].gloss
        hits = query_concepts(g, gloss, adapters.embedder, k=5)
        assert hits[0][0].id == "toast"
        assert hits[0][1] == pytest.approx(1.0)
        assert len(hits) == 2

    def test_query_empty_graph(self, adapters):
        assert query_concepts(SchemaGraph(), "x", adapters.embedder) == []

    def test_records_round_trip(self, fixture_pyramid):
        g = fixture_pyramid.schema
        lines = graph_records(g)
        assert lines[0].startswith('{"kind":"concept","id":"kettle"')
        back = graph_from_records(lines, [c.embedding for c in g.concepts.values()])
        assert back.edges == g.edges
        assert back.episodic_refs == g.episodic_refs
        assert {k: (c.surface_forms, c.gloss) for k, c in back.concepts.items()} == {
            k: (c.surface_forms, c.gloss) for k, c in g.concepts.items()
        }

    def test_records_reject_unknown_kind(self):
        with pytest.raises(ParseError, match="record 1"):
            graph_from_records(['{"kind":"blob"}'], [])

    def test_records_embedding_count_mismatch(self, fixture_pyramid):
        g = fixture_pyramid.schema
        with pytest.raises(ParseError):
            graph_from_records(graph_records(g), [c.embedding for c in g.concepts.values()][:1])

    def test_edge_list(self, tmp_path, fixture_pyramid):
        n = write_edge_list(tmp_path / "e.tsv", fixture_pyramid.schema)
        assert n == 2
        assert (tmp_path / "e.tsv").read_text().splitlines()[0] == "node:0\tconcept:kettle\tGROUNDING\t"
