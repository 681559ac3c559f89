"""Engine-wide settings, read from a flat ``key=value`` file (``#`` comments)."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

from .episodic import Thresholds
from .grpo import PolicyConfig
from .retrieval import RetrievalConfig
from .sensory import SensoryConfig

INF = math.inf

# key -> (low, high, low_open, high_open)
_RANGES = {
    "gamma": (0.0, INF, False, True),
    "epsilon_h": (0.0, INF, False, True),
    "patience": (1, INF, False, True),
    "top_k_sym": (1, INF, False, True),
    "top_k_epi": (1, INF, False, True),
    "top_k_sen": (1, INF, False, True),
    "beta1": (0.0, INF, False, True),
    "beta2": (0.0, INF, False, True),
    "clip_epsilon": (0.0, 1.0, True, True),
    "kl_penalty_coef": (0.0, INF, False, True),
    "group_size": (2, INF, False, True),
    "learning_rate": (0.0, INF, True, True),
    "epochs": (0, INF, False, True),
    "theta_merge": (-1.0, 1.0, False, False),
    "theta_discard": (-1.0, 1.0, False, False),
    "min_separation": (1, INF, False, True),
    "half_width": (0, INF, False, True),
    "clip_length": (1, INF, False, True),
    "concept_merge_threshold": (-1.0, 1.0, False, False),
    "embed_dim": (1, INF, False, True),
}


def _in_range(v: float, lo: float, hi: float, lo_open: bool, hi_open: bool) -> bool:
    above = v > lo if lo_open else v >= lo
    below = v < hi if hi_open else v <= hi
    return above and below


@dataclass(frozen=True)
class EngineConfig:
    gamma: float = 0.72
    epsilon_h: float = 0.01
    patience: int = 2
    top_k_sym: int = 5
    top_k_epi: int = 2
    top_k_sen: int = 1
    beta1: float = 0.1
    beta2: float = 0.3
    clip_epsilon: float = 0.2
    kl_penalty_coef: float = 0.1
    group_size: int = 8
    learning_rate: float = 2.0
    epochs: int = 150
    theta_merge: float = 0.85
    theta_discard: float = 0.30
    min_separation: int = 12
    half_width: int = 4
    clip_length: int = 300
    grayscale: bool = False
    concept_merge_threshold: float = 0.90
    embed_dim: int = 64
    seed: int = 42

    def __post_init__(self):
        for name, bounds in _RANGES.items():
            v = getattr(self, name)
            if not _in_range(v, *bounds):
                raise ValueError(f"{name}={v} out of range")
        if not self.theta_discard < self.theta_merge:
            raise ValueError("theta_discard must be below theta_merge")

    @classmethod
    def parse(cls, text: str) -> "EngineConfig":
        types = {f.name: f.type for f in fields(cls)}
        values: dict[str, object] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = (s.strip() for s in line.partition("="))
            if not sep:
                raise ValueError(f"line {lineno}: expected key=value")
            if key not in types:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            kind = types[key]
            try:
                if kind == "bool":
                    if raw.lower() not in ("true", "false", "1", "0"):
                        raise ValueError(raw)
                    values[key] = raw.lower() in ("true", "1")
                elif kind == "int":
                    values[key] = int(raw)
                else:
                    values[key] = float(raw)
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {key} expects {kind}, got {raw!r}") from exc
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path) -> "EngineConfig":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def dump(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    def as_meta(self) -> dict[str, str]:
        return {f"config.{f.name}": str(getattr(self, f.name)) for f in fields(self)}

    @property
    def retrieval(self) -> RetrievalConfig:
        return RetrievalConfig(self.gamma, self.epsilon_h, self.patience, self.top_k_sym, self.top_k_epi, self.top_k_sen)

    @property
    def sensory(self) -> SensoryConfig:
        return SensoryConfig(self.half_width, self.min_separation, self.grayscale, self.clip_length)

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(self.theta_merge, self.theta_discard)

    @property
    def policy(self) -> PolicyConfig:
        return PolicyConfig(
            beta1=self.beta1,
            beta2=self.beta2,
            clip_epsilon=self.clip_epsilon,
            group_size=self.group_size,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
        )
