import json
import threading
import time

import httpx
import numpy as np
import pytest

from mmmem.adapters import (
    AdapterContract,
    Capability,
    Embedder,
    OverlapScorer,
    RemoteCaptioner,
    RemoteClient,
    RemoteConfig,
    RemoteExtractor,
    RemoteScorer,
    StubCaptioner,
    StubEmbedder,
    StubExtractor,
    parse_choice_letter,
    parse_scores,
    stub_adapters,
)
from mmmem.errors import ProtocolError, RetryExhaustedError
from mmmem.schema import parse_extraction


def reply(text, status=200):
    return httpx.Response(status, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


def client_for(handler, **cfg):
    config = RemoteConfig(base_url="http://model.test/v1", model="m", **cfg)
    return RemoteClient(config, transport=httpx.MockTransport(handler), sleep=lambda s: None)


class TestStubs:
    def test_embedder_deterministic_unit(self):
        e = StubEmbedder(32, seed=1)
        v = e.embed_text("Hello  World")
        assert v.shape == (32,)
        assert np.linalg.norm(v) == pytest.approx(1.0)
        assert np.array_equal(v, StubEmbedder(32, seed=1).embed_text("hello world"))
        assert not np.array_equal(v, StubEmbedder(32, seed=2).embed_text("hello world"))

    def test_embedder_pinned_similarity(self):
        e = StubEmbedder(64, seed=42)
        sim = float(e.embed_text("the kettle boils") @ e.embed_text("toast pops up"))
        assert sim == pytest.approx(-0.10760881957949561, abs=1e-12)

    def test_text_and_visual_namespaces(self):
        e = StubEmbedder(16)
        arr = np.frombuffer(b"abc", dtype=np.uint8)
        assert not np.array_equal(e.embed_visual(arr), e.embed_text("abc"))

    def test_embedder_satisfies_protocol(self):
        assert isinstance(StubEmbedder(8), Embedder)

    def test_embed_contract_requires_dim(self):
        with pytest.raises(ValueError):
            AdapterContract(frozenset({Capability.EMBED}))

    def test_captioner_counts(self):
        c = StubCaptioner()
        assert c.caption(np.zeros(3)) == c.caption(np.zeros(3))
        assert c.calls == 2

    def test_extractor_records_parse(self):
        out = StubExtractor().extract("KETTLE heats WATER\nplain words")
        ex = parse_extraction(out, 0)
        assert [m.surface for m in ex.mentions] == ["kettle", "water"]
        assert [(r.subject, r.label, r.obj) for r in ex.relations] == [("kettle", "heats", "water")]

    def test_overlap_scorer(self):
        s = OverlapScorer(scale=2.0)
        assert s.score_candidates("q", ["the kettle"], ["kettle", "red cup", "the cup"]) == [2.0, 0.0, 1.0]

    def test_stub_set(self):
        with pytest.raises(ValueError):
            stub_adapters(scorer="nope")


class TestParsers:
    @pytest.mark.parametrize("text, idx", [("B", 1), ("The answer is C.", 2), ("(A)", 0), ("D\n", 3)])
    def test_letters(self, text, idx):
        assert parse_choice_letter(text, 4) == idx

    def test_letter_outside_range(self):
        with pytest.raises(ProtocolError):
            parse_choice_letter("E", 4)

    def test_letter_inside_word_ignored(self):
        with pytest.raises(ProtocolError):
            parse_choice_letter("Definitely", 2)

    def test_scores(self):
        assert parse_scores("0.1\n2\n-3e-1\n.5", 4) == [0.1, 2.0, -0.3, 0.5]

    def test_score_count_mismatch(self):
        with pytest.raises(ProtocolError) as info:
            parse_scores("1 2 3", 4)
        assert info.value.raw == "1 2 3"


class TestRemoteClient:
    def test_request_shape_and_caption(self):
        seen = {}

        def handler(req):
            seen["url"] = str(req.url)
            seen["auth"] = req.headers.get("authorization")
            seen["body"] = json.loads(req.content)
            return reply("a kettle on a stove")

        cap = RemoteCaptioner(client_for(handler, api_key="k"))
        assert cap.caption(np.zeros((2, 2, 3))) == "a kettle on a stove"
        assert seen["url"] == "http://model.test/v1/chat/completions"
        assert seen["auth"] == "Bearer k"
        assert seen["body"]["model"] == "m"
        assert seen["body"]["temperature"] == 0.0
        assert seen["body"]["messages"][0]["role"] == "user"

    def test_three_scores_for_four_candidates(self):
        sc = RemoteScorer(client_for(lambda r: reply("0.1\n0.2\n0.7")), mode="scores")
        with pytest.raises(ProtocolError) as info:
            sc.score_candidates("q", [], ["a", "b", "c", "d"])
        assert info.value.raw.count("0.7") == 1

    def test_scores_not_rescaled(self):
        sc = RemoteScorer(client_for(lambda r: reply("3\n-1")), mode="scores")
        assert sc.score_candidates("q", ["e"], ["a", "b"]) == [3.0, -1.0]
        assert sc.last_raw == "3\n-1"

    def test_letter_mode(self):
        sc = RemoteScorer(client_for(lambda r: reply("B")))
        assert sc.score_candidates("q", [], ["a", "b", "c"]) == [0.0, 1.0, 0.0]

    def test_retries_then_succeeds(self):
        calls = []

        def handler(req):
            calls.append(1)
            return reply("ok") if len(calls) == 3 else httpx.Response(503)

        client = client_for(handler, max_retries=3)
        assert client.chat("hi") == "ok"
        assert client.attempts == 3

    def test_retry_exhaustion(self):
        sleeps = []
        config = RemoteConfig(base_url="http://x", model="m", max_retries=2, backoff_s=0.1)
        client = RemoteClient(config, httpx.MockTransport(lambda r: httpx.Response(500)), sleep=sleeps.append)
        with pytest.raises(RetryExhaustedError) as info:
            client.chat("hi")
        assert len(info.value.attempts) == 3
        assert sleeps == pytest.approx([0.1, 0.2])

    def test_timeout_is_retried(self):
        calls = []

        def handler(req):
            calls.append(1)
            if len(calls) == 1:
                raise httpx.ReadTimeout("slow", request=req)
            return reply("fine")

        assert client_for(handler).chat("x") == "fine"

    def test_client_error_not_retried(self):
        calls = []

        def handler(req):
            calls.append(1)
            return httpx.Response(400, text="bad request")

        with pytest.raises(ProtocolError):
            client_for(handler).chat("x")
        assert len(calls) == 1

    def test_malformed_body(self):
        with pytest.raises(ProtocolError):
            client_for(lambda r: httpx.Response(200, json={"nope": 1})).chat("x")

    def test_extractor(self):
        ex = RemoteExtractor(client_for(lambda r: reply("ENTITY\tcup\ta cup")))
        assert parse_extraction(ex.extract("CUP"), 0).mentions[0].surface == "cup"

    def test_in_flight_cap(self):
        lock = threading.Lock()
        state = {"now": 0, "peak": 0}

        def handler(req):
            with lock:
                state["now"] += 1
                state["peak"] = max(state["peak"], state["now"])
            time.sleep(0.02)
            with lock:
                state["now"] -= 1
            return reply("x")

        client = client_for(handler, max_in_flight=2)
        threads = [threading.Thread(target=client.chat, args=("p",)) for _ in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert state["peak"] <= 2

    def test_from_env(self, monkeypatch):
        monkeypatch.setenv("MMMEM_BASE_URL", "http://env.test")
        monkeypatch.setenv("MMMEM_MODEL", "mm")
        cfg = RemoteConfig.from_env()
        assert (cfg.base_url, cfg.model) == ("http://env.test", "mm")

    def test_from_env_missing(self, monkeypatch):
        monkeypatch.delenv("MMMEM_BASE_URL", raising=False)
        with pytest.raises(ValueError):
            RemoteConfig.from_env()
