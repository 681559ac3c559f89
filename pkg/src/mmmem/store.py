"""Immutable on-disk snapshots of a memory pyramid.

Layout of a snapshot directory::

    manifest                          key=value lines (version, dim, counts, meta, digests)
    sensory.emb episodic.emb concept.emb   "MMEM" float32 embedding blobs
    sensory.rec episodic.rec schema.rec    UTF-8 JSON lines
    actions.log                       one action per line

Vectors are stored as float32, so a loaded pyramid equals the saved one up
to float32 rounding, and saving a loaded pyramid reproduces the files byte
for byte.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .episodic import Action, ConsolidationState, EpisodicNode
from .errors import ConsistencyError, CorruptionError
from .pyramid import MemoryPyramid
from .schema import graph_from_records, graph_records
from .sensory import SensoryItem

FORMAT_VERSION = 1
BLOB_MAGIC = b"MMEM"
BLOB_VERSION = 1
_BLOB_HEADER = struct.Struct("<4sIIQ")
BLOB_FILES = ("sensory.emb", "episodic.emb", "concept.emb")
RECORD_FILES = ("sensory.rec", "episodic.rec", "schema.rec", "actions.log")
ALL_FILES = BLOB_FILES + RECORD_FILES

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class Manifest:
    format_version: int
    dim: int
    counts: dict[str, int]
    meta: dict[str, str]
    digests: dict[str, str]

    def text(self) -> str:
        lines = [f"format_version={self.format_version}", f"dim={self.dim}"]
        lines += [f"count.{k}={v}" for k, v in self.counts.items()]
        lines += [f"meta.{k}={v}" for k, v in sorted(self.meta.items())]
        lines += [f"digest.{k}={v}" for k, v in self.digests.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str, path: str = "manifest") -> "Manifest":
        kv: dict[str, str] = {}
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CorruptionError(f"malformed manifest line {line!r}", path)
            kv[key] = value
        try:
            version = int(kv.pop("format_version"))
            dim = int(kv.pop("dim"))
        except (KeyError, ValueError) as exc:
            raise CorruptionError(f"missing or bad field ({exc})", path) from exc
        sections: dict[str, dict[str, str]] = {"count": {}, "meta": {}, "digest": {}}
        for key, value in kv.items():
            head, _, rest = key.partition(".")
            if head not in sections or not rest:
                raise CorruptionError(f"unknown manifest key {key!r}", path)
            sections[head][rest] = value
        try:
            counts = {k: int(v) for k, v in sections["count"].items()}
        except ValueError as exc:
            raise CorruptionError(f"bad count ({exc})", path) from exc
        return cls(version, dim, counts, sections["meta"], sections["digest"])


def encode_blob(vectors: Sequence[np.ndarray], dim: int) -> bytes:
    arr = np.asarray(vectors, dtype="<f4").reshape(len(vectors), dim) if len(vectors) else np.zeros((0, dim), "<f4")
    return _BLOB_HEADER.pack(BLOB_MAGIC, BLOB_VERSION, dim, len(arr)) + arr.tobytes()


def decode_blob(data: bytes, path: str = "") -> np.ndarray:
    if len(data) < _BLOB_HEADER.size:
        raise CorruptionError("truncated embedding header", path)
    magic, version, dim, count = _BLOB_HEADER.unpack_from(data)
    if magic != BLOB_MAGIC:
        raise CorruptionError(f"bad magic {magic!r}", path)
    if version != BLOB_VERSION:
        raise CorruptionError(f"unsupported blob version {version}", path)
    if len(data) - _BLOB_HEADER.size != count * dim * 4:
        raise CorruptionError(f"payload is {len(data) - _BLOB_HEADER.size} bytes, expected {count * dim * 4}", path)
    return np.frombuffer(data, dtype="<f4", offset=_BLOB_HEADER.size).reshape(count, dim).astype(np.float64)


def _jsonl(rows: list[dict]) -> bytes:
    return "".join(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n" for r in rows).encode("utf-8")


def _serialize(p: MemoryPyramid) -> dict[str, bytes]:
    nodes = p.episodic.stream
    return {
        "sensory.emb": encode_blob([it.visual for it in p.sensory], p.dim),
        "episodic.emb": encode_blob([n.representation for n in nodes], p.dim),
        "concept.emb": encode_blob([c.embedding for c in p.schema.concepts.values()], p.dim),
        "sensory.rec": _jsonl([
            {"clip_id": it.clip_id, "timestamp_ms": it.timestamp_ms, "window": list(it.window), "text": it.text_trace}
            for it in p.sensory
        ]),
        "episodic.rec": _jsonl([
            {
                "id": n.node_id,
                "text": n.text,
                "span": list(n.span_ms),
                "merged_count": n.merged_count,
                "source_items": list(n.source_items),
                "is_prototype": n.is_prototype,
            }
            for n in nodes
        ]),
        "schema.rec": "".join(line + "\n" for line in graph_records(p.schema)).encode("utf-8"),
        "actions.log": "".join(a.value + "\n" for a in p.episodic.action_log).encode("utf-8"),
    }


def _atomic_write(path: Path, data: bytes, pending: list[Path]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    pending.append(tmp)
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    pending.remove(tmp)


def save_memory(pyramid: MemoryPyramid, directory: str | Path) -> Manifest:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payloads = _serialize(pyramid)
    manifest = Manifest(
        FORMAT_VERSION,
        pyramid.dim,
        pyramid.counts(),
        {k: str(v) for k, v in pyramid.meta.items()},
        {name: f"{fnv1a64(payloads[name]):016x}" for name in ALL_FILES},
    )
    pending: list[Path] = []
    try:
        for name in ALL_FILES:
            _atomic_write(directory / name, payloads[name], pending)
        _atomic_write(directory / "manifest", manifest.text().encode("utf-8"), pending)
    except OSError as exc:
        raise OSError(f"{exc.filename or directory}: {exc.strerror or exc}") from exc
    finally:
        for tmp in pending:
            tmp.unlink(missing_ok=True)
    return manifest


def _lines(data: bytes, path: str) -> list[str]:
    try:
        return data.decode("utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise CorruptionError(f"not UTF-8 ({exc})", path) from exc


def load_memory(directory: str | Path) -> MemoryPyramid:
    directory = Path(directory)
    mpath = directory / "manifest"
    if not mpath.exists():
        raise CorruptionError("manifest missing", str(mpath))
    manifest = Manifest.parse(mpath.read_text(encoding="utf-8"), str(mpath))
    if manifest.format_version != FORMAT_VERSION:
        raise CorruptionError(f"unsupported format version {manifest.format_version}", str(mpath))

    raw: dict[str, bytes] = {}
    for name in ALL_FILES:
        path = directory / name
        if not path.exists():
            raise CorruptionError("file missing", str(path))
        data = path.read_bytes()
        want = manifest.digests.get(name)
        if want is None or f"{fnv1a64(data):016x}" != want:
            raise CorruptionError("digest mismatch", str(path))
        raw[name] = data

    blobs = {}
    for name in BLOB_FILES:
        path = str(directory / name)
        _, _, dim, _ = _BLOB_HEADER.unpack_from(raw[name]) if len(raw[name]) >= _BLOB_HEADER.size else (0, 0, -1, 0)
        if dim != manifest.dim:
            raise ConsistencyError(f"{path}: blob dimension {dim} != manifest dimension {manifest.dim}")
        blobs[name] = decode_blob(raw[name], path)

    try:
        sens_rows = [json.loads(x) for x in _lines(raw["sensory.rec"], "sensory.rec")]
        sensory = tuple(
            SensoryItem(v, r["text"], r["timestamp_ms"], tuple(r["window"]), r["clip_id"])
            for v, r in zip(blobs["sensory.emb"], sens_rows, strict=True)
        )
        epi_rows = [json.loads(x) for x in _lines(raw["episodic.rec"], "episodic.rec")]
        nodes = tuple(
            EpisodicNode(
                r["id"], v, r["text"], tuple(r["span"]), r["merged_count"], tuple(r["source_items"]), r["is_prototype"]
            )
            for v, r in zip(blobs["episodic.emb"], epi_rows, strict=True)
        )
        actions = tuple(Action(x) for x in _lines(raw["actions.log"], "actions.log") if x)
        schema = graph_from_records(_lines(raw["schema.rec"], "schema.rec"), list(blobs["concept.emb"]))
    except ValueError as exc:  # includes zip(strict=True) length mismatches and JSON errors
        raise ConsistencyError(f"{directory}: records disagree with embeddings ({exc})") from exc
    except KeyError as exc:
        raise CorruptionError(f"record missing field {exc}", str(directory)) from exc

    pyramid = MemoryPyramid(sensory, ConsolidationState(nodes, actions), schema, manifest.dim, dict(manifest.meta))
    if pyramid.counts() != manifest.counts:
        raise ConsistencyError(f"{directory}: layer counts {pyramid.counts()} != manifest {manifest.counts}")
    return pyramid


def digests(directory: str | Path) -> dict[str, str]:
    return Manifest.parse((Path(directory) / "manifest").read_text(encoding="utf-8")).digests
