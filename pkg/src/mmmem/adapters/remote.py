"""Client for a chat-completions style inference server.

Requests are ``POST {base_url}/chat/completions`` with a JSON body of
``model``, ``messages`` and ``temperature``; the reply text is read from
``choices[0].message.content``. Replies are parsed per capability but never
rescaled, and the raw body rides along on every result.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import httpx

from ..errors import ProtocolError, RetryExhaustedError, TransportError
from .base import AdapterContract, Capability

DEFAULT_TEMPLATES = {
    "caption": "Describe the visible content of this video segment in one sentence.\n{prompt}",
    "extract_entities": (
        "List the entities in the text below. Output one record per line, either\n"
        "ENTITY<TAB>surface<TAB>gloss or REL<TAB>subject<TAB>label<TAB>object.\n\n{text}"
    ),
    "score_candidates": (
        "Question: {question}\nEvidence:\n{evidence}\nCandidates:\n{candidates}\n"
        "For each candidate, output one line with a single number: your confidence score."
    ),
    "answer_letter": (
        "Question: {question}\nEvidence:\n{evidence}\nOptions:\n{candidates}\n"
        "Respond only with the corresponding letter (A-{last})."
    ),
    "judge": (
        "Question: {question}\nMemory trace: {trace}\nReference answer: {answer}\n"
        "Output a single number between 0 and 1 for how well the trace supports the answer."
    ),
}

_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")


@dataclass(frozen=True)
class RemoteConfig:
    base_url: str
    model: str
    api_key: str = ""
    timeout_ms: int = 30_000
    max_retries: int = 3
    temperature: float = 0.0
    max_in_flight: int = 4
    backoff_s: float = 0.5
    templates: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    @classmethod
    def from_env(cls, **overrides) -> "RemoteConfig":
        base = os.environ.get("MMMEM_BASE_URL", "")
        if not base and "base_url" not in overrides:
            raise ValueError("MMMEM_BASE_URL is not set")
        kwargs: dict[str, Any] = {
            "base_url": base,
            "model": os.environ.get("MMMEM_MODEL", "default"),
            "api_key": os.environ.get("MMMEM_API_KEY", ""),
        }
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass(frozen=True)
class RemoteResult:
    value: Any
    raw: str


def letter_for(index: int) -> str:
    return chr(ord("A") + index)


def parse_choice_letter(text: str, n_choices: int) -> int:
    """Index of the first standalone option letter in ``text``."""
    valid = "".join(letter_for(i) for i in range(n_choices))
    m = re.search(rf"(?<![A-Za-z])([{valid}])(?![A-Za-z])", text)
    if m is None:
        raise ProtocolError(f"no option letter among {valid!r} in reply", raw=text)
    return ord(m.group(1)) - ord("A")


def parse_scores(text: str, n_candidates: int) -> list[float]:
    values = [float(x) for x in _NUMBER_RE.findall(text)]
    if len(values) != n_candidates:
        raise ProtocolError(
            f"expected {n_candidates} scores, got {len(values)}", raw=text
        )
    return values


class RemoteClient:
    def __init__(
        self,
        config: RemoteConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(config.max_in_flight)
        headers = {"Content-Type": "application/json"}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._http = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            headers=headers,
            timeout=config.timeout_ms / 1000.0,
            transport=transport,
        )
        self.attempts = 0

    def close(self) -> None:
        self._http.close()

    def _post_once(self, body: dict) -> str:
        self.attempts += 1
        try:
            with self._gate:
                resp = self._http.post("/chat/completions", json=body)
        except httpx.TimeoutException as exc:
            raise TransportError(f"timeout: {exc}") from exc
        except httpx.TransportError as exc:
            raise TransportError(str(exc)) from exc
        raw = resp.text
        if resp.status_code >= 500:
            raise TransportError(f"server error {resp.status_code}")
        if resp.status_code >= 400:
            raise ProtocolError(f"HTTP {resp.status_code}", raw=raw)
        try:
            content = json.loads(raw)["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed response body ({exc})", raw=raw) from exc
        if not isinstance(content, str):
            raise ProtocolError("message content is not a string", raw=raw)
        return content

    def chat(self, prompt: str) -> str:
        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        }
        failures: list[BaseException] = []
        for attempt in range(self.config.max_retries + 1):
            try:
                return self._post_once(body)
            except TransportError as exc:
                failures.append(exc)
                if attempt < self.config.max_retries:
                    self._sleep(self.config.backoff_s * (2 ** attempt))
        raise RetryExhaustedError(failures)

    def remote_call(self, capability: Capability | str, payload: dict) -> RemoteResult:
        kind = capability.value if isinstance(capability, Capability) else capability
        tpl = self.config.templates
        if kind == "caption":
            raw = self.chat(tpl["caption"].format(prompt=payload.get("prompt", "")))
            return RemoteResult(raw.strip(), raw)
        if kind == "extract_entities":
            raw = self.chat(tpl["extract_entities"].format(text=payload["text"]))
            return RemoteResult(raw, raw)
        if kind in ("score_candidates", "answer_letter"):
            cands = list(payload["candidates"])
            prompt = tpl[kind].format(
                question=payload["question"],
                evidence="\n".join(payload.get("evidence", ())) or "(none)",
                candidates="\n".join(f"{letter_for(i)}. {c}" for i, c in enumerate(cands)),
                last=letter_for(len(cands) - 1),
            )
            raw = self.chat(prompt)
            if kind == "answer_letter":
                return RemoteResult(parse_choice_letter(raw, len(cands)), raw)
            return RemoteResult(parse_scores(raw, len(cands)), raw)
        if kind == "judge":
            raw = self.chat(tpl["judge"].format(**payload))
            return RemoteResult(parse_scores(raw, 1)[0], raw)
        raise ValueError(f"unsupported capability {kind!r}")


class RemoteCaptioner:
    contract = AdapterContract(frozenset({Capability.CAPTION}), name="remote-caption")

    def __init__(self, client: RemoteClient):
        self.client = client

    def caption(self, window) -> str:
        shape = "x".join(str(s) for s in getattr(window, "shape", ()))
        return self.client.remote_call(Capability.CAPTION, {"prompt": f"window shape {shape}"}).value


class RemoteExtractor:
    contract = AdapterContract(frozenset({Capability.EXTRACT_ENTITIES}), name="remote-extract")

    def __init__(self, client: RemoteClient):
        self.client = client

    def extract(self, text: str) -> str:
        return self.client.remote_call(Capability.EXTRACT_ENTITIES, {"text": text}).value


class RemoteScorer:
    """Candidate scorer backed by the server.

    ``mode="scores"`` asks for one number per candidate. ``mode="letter"``
    asks for a single option letter and reports score 1 for that option and
    0 elsewhere. The last raw reply is kept on ``last_raw``.
    """

    contract = AdapterContract(frozenset({Capability.SCORE_CANDIDATES}), name="remote-score")

    def __init__(self, client: RemoteClient, mode: str = "letter"):
        if mode not in ("letter", "scores"):
            raise ValueError(f"unknown mode {mode!r}")
        self.client = client
        self.mode = mode
        self.last_raw = ""

    def score_candidates(self, question: str, evidence: Sequence[str], candidates: Sequence[str]):
        payload = {"question": question, "evidence": list(evidence), "candidates": list(candidates)}
        if self.mode == "scores":
            res = self.client.remote_call(Capability.SCORE_CANDIDATES, payload)
            self.last_raw = res.raw
            return res.value
        res = self.client.remote_call("answer_letter", payload)
        self.last_raw = res.raw
        return [1.0 if i == res.value else 0.0 for i in range(len(candidates))]
