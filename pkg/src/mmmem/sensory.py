"""Sensory buffer: salient key sub-clips picked from a decoded frame stream.

A clip's inter-frame variation is the mean absolute difference between
consecutive frames. Frames whose variation exceeds ``mean + std`` of the
clip are salient; near-duplicates are thinned greedily by variation with a
minimum frame separation, and each survivor becomes a short window around
the salient frame.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._vec import frozen
from .errors import AdapterError, ParseError, ShapeError, TooShortError

FRAME_MAGIC = b"MMFR"
FRAME_VERSION = 1
_FRAME_HEADER = struct.Struct("<4sIIIIQ")


@dataclass(frozen=True)
class Frame:
    index: int
    timestamp_ms: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.timestamp_ms < 0:
            raise ValueError("timestamp_ms must be non-negative")
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.size == 0:
            raise ShapeError(f"frame pixels must be a non-empty (h, w, c) array, got shape {px.shape}")
        if px.flags.writeable:
            px = px.copy()
            px.setflags(write=False)
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True)
class Clip:
    id: int
    frames: tuple[Frame, ...]
    source_span_ms: tuple[int, int] = field(default=(0, 0))

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("a clip needs at least one frame")
        shape = frames[0].pixels.shape
        for prev, cur in zip(frames, frames[1:]):
            if cur.pixels.shape != shape:
                raise ShapeError(f"frame {cur.index} has shape {cur.pixels.shape}, expected {shape}")
            if cur.timestamp_ms <= prev.timestamp_ms:
                raise ValueError(f"timestamps not strictly increasing at frame {cur.index}")
        object.__setattr__(self, "frames", frames)
        span = (frames[0].timestamp_ms, frames[-1].timestamp_ms)
        given = tuple(self.source_span_ms)
        if given != (0, 0) and not (given[0] <= span[0] and span[1] <= given[1]):
            raise ValueError(f"span {given} does not cover frame timestamps {span}")
        object.__setattr__(self, "source_span_ms", span if given == (0, 0) else given)

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class SaliencyProfile:
    distances: tuple[float | None, ...]
    mean_mu: float
    std_sigma: float

    @property
    def threshold(self) -> float:
        return self.mean_mu + self.std_sigma

    def salient_indices(self) -> list[int]:
        thr = self.threshold
        return [i for i, d in enumerate(self.distances) if d is not None and d > thr]


@dataclass(frozen=True)
class SensoryItem:
    visual: np.ndarray
    text_trace: str
    timestamp_ms: int
    window: tuple[int, int]
    clip_id: int

    def __post_init__(self):
        object.__setattr__(self, "visual", frozen(self.visual))
        object.__setattr__(self, "window", tuple(int(x) for x in self.window))


@dataclass(frozen=True)
class SubtitleCue:
    start_ms: int
    end_ms: int
    text: str


@dataclass(frozen=True)
class SensoryConfig:
    half_width: int = 4
    min_separation: int = 12
    grayscale: bool = False
    clip_length: int = 300

    def __post_init__(self):
        if self.half_width < 0:
            raise ValueError("half_width must be >= 0")
        if self.min_separation < 1:
            raise ValueError("min_separation must be >= 1")
        if self.clip_length < 1:
            raise ValueError("clip_length must be >= 1")


def _as_float(frame: Frame, grayscale: bool) -> np.ndarray:
    px = frame.pixels.astype(np.float64)
    if grayscale:
        px = px.mean(axis=2, keepdims=True)
    return px


def frame_distance(prev: Frame, curr: Frame, grayscale: bool = False) -> float:
    """Mean L1 difference over every pixel-channel position."""
    if prev.pixels.shape != curr.pixels.shape:
        raise ShapeError(f"frame shapes differ: {prev.pixels.shape} vs {curr.pixels.shape}")
    diff = np.abs(_as_float(curr, grayscale) - _as_float(prev, grayscale))
    return float(diff.mean())


def profile_from_distances(distances: Sequence[float | None]) -> SaliencyProfile:
    defined = np.array([d for d in distances if d is not None], dtype=np.float64)
    if defined.size == 0:
        raise TooShortError("need at least one defined distance")
    if np.any(defined < 0):
        raise ValueError("distances must be non-negative")
    return SaliencyProfile(tuple(distances), float(defined.mean()), float(defined.std()))


def saliency_profile(clip: Clip, grayscale: bool = False) -> SaliencyProfile:
    if len(clip.frames) < 2:
        raise TooShortError(f"clip {clip.id} has a single frame; saliency needs two")
    frames = np.stack([_as_float(f, grayscale) for f in clip.frames])
    per_frame = np.abs(np.diff(frames, axis=0)).reshape(len(frames) - 1, -1).mean(axis=1)
    return profile_from_distances((None, *(float(d) for d in per_frame)))


def suppress_duplicates(salient: Mapping[int, float], min_separation: int) -> list[int]:
    """Greedy thinning by descending distance, ties by ascending index.

    An index survives only if it is at least ``min_separation`` frames from
    every index already kept.
    """
    if min_separation < 1:
        raise ValueError("min_separation must be >= 1")
    kept: list[int] = []
    for idx in sorted(salient, key=lambda i: (-salient[i], i)):
        if all(abs(idx - k) >= min_separation for k in kept):
            kept.append(idx)
    return sorted(kept)


def key_indices(clip: Clip, config: SensoryConfig = SensoryConfig()) -> list[int]:
    """Salient, de-duplicated frame indices for one clip; empty if none."""
    if len(clip.frames) < 2:
        return []
    prof = saliency_profile(clip, grayscale=config.grayscale)
    salient = {i: prof.distances[i] for i in prof.salient_indices()}
    return suppress_duplicates(salient, config.min_separation)


def segment_fixed(frames: Sequence[Frame], clip_length: int = 300) -> list[Clip]:
    """Cut a frame sequence into consecutive clips of ``clip_length`` frames."""
    if clip_length < 1:
        raise ValueError("clip_length must be >= 1")
    frames = list(frames)
    return [
        Clip(id=n, frames=tuple(frames[s : s + clip_length]))
        for n, s in enumerate(range(0, len(frames), clip_length))
    ]


def segment_at(frames: Sequence[Frame], starts: Iterable[int]) -> list[Clip]:
    """Cut at the given 0-based frame offsets (e.g. from an external shot detector)."""
    frames = list(frames)
    bounds = sorted({0, *(int(s) for s in starts if 0 < int(s) < len(frames))})
    bounds.append(len(frames))
    return [Clip(id=n, frames=tuple(frames[a:b])) for n, (a, b) in enumerate(zip(bounds, bounds[1:]))]


def subtitle_text(cues: Sequence[SubtitleCue], start_ms: int, end_ms: int) -> str:
    hits = [c.text for c in cues if c.start_ms <= end_ms and c.end_ms >= start_ms]
    return " ".join(hits)


def _clip_items(clip: Clip, config: SensoryConfig, embedder, captioner, subtitles) -> list[SensoryItem]:
    centers = key_indices(clip, config)
    if not centers:
        # static clip: keep one item at the center frame so the clip is represented
        centers = [(len(clip.frames) - 1) // 2]
    items = []
    last = len(clip.frames) - 1
    for i in centers:
        lo, hi = max(0, i - config.half_width), min(last, i + config.half_width)
        window = np.stack([f.pixels for f in clip.frames[lo : hi + 1]])
        text = ""
        if subtitles is not None:
            text = subtitle_text(subtitles, clip.frames[lo].timestamp_ms, clip.frames[hi].timestamp_ms)
        try:
            visual = embedder.embed_visual(window)
            if not text:
                text = captioner.caption(window)
        except AdapterError as exc:
            raise AdapterError(str(exc), context=f"clip {clip.id} index {i}") from exc
        except Exception as exc:
            raise AdapterError(f"{type(exc).__name__}: {exc}", context=f"clip {clip.id} index {i}") from exc
        items.append(
            SensoryItem(
                visual=visual,
                text_trace=text,
                timestamp_ms=clip.frames[i].timestamp_ms,
                window=(lo, hi),
                clip_id=clip.id,
            )
        )
    return items


def build_sensory_buffer(
    clips: Sequence[Clip],
    embedder,
    captioner,
    config: SensoryConfig = SensoryConfig(),
    subtitles: Sequence[SubtitleCue] | None = None,
    max_workers: int | None = None,
) -> list[SensoryItem]:
    """One item per key index across all clips, ordered by timestamp.

    Subtitles take priority for the text trace; the captioner is only called
    for windows no cue overlaps.
    """
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            per_clip = list(pool.map(lambda c: _clip_items(c, config, embedder, captioner, subtitles), clips))
    else:
        per_clip = [_clip_items(c, config, embedder, captioner, subtitles) for c in clips]
    items = [it for group in per_clip for it in group]
    items.sort(key=lambda it: (it.timestamp_ms, it.clip_id, it.window))
    dims = {it.visual.shape for it in items}
    if len(dims) > 1:
        raise ShapeError(f"embedder returned mixed dimensions {sorted(dims)}")
    return items


# --- file formats ---------------------------------------------------------


def write_frame_dump(path: str | Path, frames: Sequence[Frame]) -> None:
    frames = list(frames)
    if not frames:
        raise ValueError("no frames to write")
    h, w, c = frames[0].pixels.shape
    with open(path, "wb") as fh:
        fh.write(_FRAME_HEADER.pack(FRAME_MAGIC, FRAME_VERSION, h, w, c, len(frames)))
        for f in frames:
            if f.pixels.shape != (h, w, c):
                raise ShapeError(f"frame {f.index} has shape {f.pixels.shape}")
            fh.write(struct.pack("<Q", f.timestamp_ms))
            fh.write(np.clip(f.pixels, 0, 255).astype(np.uint8).tobytes())


def read_frame_dump(path: str | Path) -> list[Frame]:
    data = Path(path).read_bytes()
    if len(data) < _FRAME_HEADER.size:
        raise ParseError(f"{path}: file too short for a frame-dump header")
    magic, version, h, w, c, count = _FRAME_HEADER.unpack_from(data)
    if magic != FRAME_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if version != FRAME_VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    if h * w * c == 0:
        raise ParseError(f"{path}: zero-sized frames")
    rec = 8 + h * w * c
    expected = _FRAME_HEADER.size + count * rec
    if len(data) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, found {len(data)}")
    frames = []
    off = _FRAME_HEADER.size
    for n in range(count):
        (ts,) = struct.unpack_from("<Q", data, off)
        px = np.frombuffer(data, dtype=np.uint8, count=h * w * c, offset=off + 8).reshape(h, w, c)
        frames.append(Frame(n, int(ts), px))
        off += rec
    return frames


def read_feature_records(path: str | Path) -> list[Frame]:
    """Per-frame feature records: ``timestamp_ms<TAB>v1,v2,...`` per line.

    Each record becomes a 1x1xD frame, so the saliency pipeline treats a
    feature vector exactly like a one-pixel image with D channels.
    """
    frames = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            ts_s, vec_s = line.split("\t")
            vec = np.array([float(x) for x in vec_s.split(",")], dtype=np.float64)
            ts = int(ts_s)
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: malformed feature record ({exc})") from exc
        if not np.all(np.isfinite(vec)):
            raise ParseError(f"{path}:{lineno}: non-finite feature value")
        frames.append(Frame(len(frames), ts, vec.reshape(1, 1, -1)))
    return frames


def read_subtitles(path: str | Path) -> list[SubtitleCue]:
    cues = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t", 2)
        try:
            start, end, text = int(parts[0]), int(parts[1]), parts[2]
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}:{lineno}: expected start_ms<TAB>end_ms<TAB>text") from exc
        if end < start:
            raise ParseError(f"{path}:{lineno}: cue ends before it starts")
        cues.append(SubtitleCue(start, end, text))
    return cues


def write_subtitles(path: str | Path, cues: Sequence[SubtitleCue]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in cues:
            fh.write(f"{c.start_ms}\t{c.end_ms}\t{c.text}\n")
