"""Synthetic inputs with known ground truth: planted-cut streams and a tiny fixture video."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .sensory import Clip, Frame, SubtitleCue


def plant_cuts(rng: np.random.Generator, n_frames: int, n_cuts: int, min_separation: int) -> list[int]:
    """Random cut indices in [1, n_frames), pairwise at least ``min_separation`` apart."""
    for _ in range(10_000):
        cuts = sorted(int(c) for c in rng.choice(np.arange(1, n_frames), size=n_cuts, replace=False))
        if all(b - a >= min_separation for a, b in zip(cuts, cuts[1:])):
            return cuts
    raise ValueError("could not place cuts; lower n_cuts or min_separation")


def piecewise_frames(
    n_frames: int,
    cuts: Sequence[int],
    rng: np.random.Generator,
    shape: tuple[int, int, int] = (8, 8, 3),
    jump: tuple[int, int] = (60, 100),
    noise: int = 0,
    fps_ms: int = 40,
    start_index: int = 0,
    start_ms: int = 0,
) -> list[Frame]:
    """Frames that are constant between cuts; each cut shifts every value by ``jump``.

    ``jump`` must not exceed 107. ``noise`` adds
    uniform integer jitter in [-noise, noise] per value.
    """
    level = float(rng.integers(100, 156))
    base = rng.integers(-20, 21, size=shape).astype(np.float64)
    cut_set = set(cuts)
    frames = []
    for i in range(n_frames):
        if i in cut_set:
            step = float(rng.integers(jump[0], jump[1] + 1))
            # levels stay in [20, 235] so the +-20 texture never clips; any jump <= 107 fits one way
            level = level + step if level + step <= 235 else level - step
        px = base + level
        if noise:
            px = px + rng.integers(-noise, noise + 1, size=shape)
        frames.append(Frame(start_index + i, start_ms + i * fps_ms, np.clip(px, 0, 255).astype(np.uint8)))
    return frames


def planted_stream(
    seed: int, n_frames: int = 240, n_cuts: int = 4, min_separation: int = 12, noise: int = 0
) -> tuple[Clip, list[int]]:
    rng = np.random.default_rng(seed)
    cuts = plant_cuts(rng, n_frames, n_cuts, min_separation)
    return Clip(0, tuple(piecewise_frames(n_frames, cuts, rng, noise=noise))), cuts


def two_clip_fixture(seed: int = 0, clip_frames: int = 60, cut_at: int = 30) -> tuple[list[Frame], list[SubtitleCue]]:
    """Two clips of ``clip_frames`` frames with one hard cut each, plus subtitles at the cuts.

    Meant to be segmented with ``clip_length=clip_frames``.
    """
    rng = np.random.default_rng(seed)
    frames: list[Frame] = []
    for c in range(2):
        frames += piecewise_frames(clip_frames, [cut_at], rng, start_index=len(frames), start_ms=len(frames) * 40)
    cue_text = ["KETTLE boils water", "TOAST pops up"]
    cues = []
    for c, text in enumerate(cue_text):
        t = (c * clip_frames + cut_at) * 40
        cues.append(SubtitleCue(t - 40, t + 40, text))
    return frames, cues
