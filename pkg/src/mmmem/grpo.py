"""SIB-GRPO: trace reward, group-relative advantages and the clipped surrogate.

The trainable policy here is a desk-scale stand-in for an MLLM memory
manager: an autoregressive table ``logits[bucket, prev_token, next_token]``
where ``bucket`` is a hash of the state. Token 0 is the end marker; a trace
never contains it. Log-probabilities and the surrogate gradient are exact.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractError, NumericError, ParseError, TrainingError

EOS = 0
CHECKPOINT_MAGIC = b"MMPO"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class PolicyConfig:
    beta1: float = 0.1
    beta2: float = 0.3
    clip_epsilon: float = 0.2
    group_size: int = 8
    learning_rate: float = 2.0
    epochs: int = 150
    states_per_epoch: int = 8
    inner_steps: int = 4

    def __post_init__(self):
        if not 0 < self.clip_epsilon < 1:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValueError("beta1 and beta2 must be non-negative")
        if self.learning_rate <= 0 or self.epochs < 0 or self.states_per_epoch < 1 or self.inner_steps < 1:
            raise ValueError("learning_rate > 0, epochs >= 0, states_per_epoch >= 1, inner_steps >= 1")


@dataclass(frozen=True)
class TraceSample:
    state: object
    trace_tokens: tuple[int, ...]
    logprob_behavior: float
    logprob_reference: float
    logprob_current: float

    def __post_init__(self):
        for name in ("logprob_behavior", "logprob_reference", "logprob_current"):
            if not np.isfinite(getattr(self, name)):
                raise NumericError(f"{name} is not finite")


@dataclass(frozen=True)
class RewardBreakdown:
    task: float
    length_penalty: float
    ratio_penalty: float

    @property
    def total(self) -> float:
        return self.task - self.length_penalty - self.ratio_penalty


def trace_reward(sample: TraceSample, judge, config: PolicyConfig = PolicyConfig()) -> RewardBreakdown:
    """Task score minus ``beta1 * length`` minus ``beta2 * log(pi_old / pi_ref)``."""
    task = float(judge.judge(sample.state, sample.trace_tokens))
    return RewardBreakdown(
        task=task,
        length_penalty=config.beta1 * len(sample.trace_tokens),
        ratio_penalty=config.beta2 * (sample.logprob_behavior - sample.logprob_reference),
    )


def group_advantages(rewards: Sequence[float]) -> np.ndarray:
    r = np.asarray(rewards, dtype=np.float64)
    if r.size < 2:
        raise ContractError("group advantages need at least two samples")
    std = r.std()
    if std == 0:
        return np.zeros_like(r)
    return (r - r.mean()) / (std + 1e-8)


def _clip_terms(logp_cur: np.ndarray, logp_beh: np.ndarray, adv: np.ndarray, eps: float):
    with np.errstate(over="ignore"):
        rho = np.exp(logp_cur - logp_beh)
    bad = np.flatnonzero(~np.isfinite(rho))
    if bad.size:
        raise NumericError(f"non-finite importance ratio for sample {int(bad[0])}")
    unclipped = rho * adv
    clipped = np.clip(rho, 1 - eps, 1 + eps) * adv
    return rho, np.minimum(unclipped, clipped), unclipped <= clipped


def clipped_objective(samples: Sequence[TraceSample], advantages: Sequence[float], clip_epsilon: float = 0.2) -> float:
    """(1/G) sum_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i)."""
    adv = np.asarray(advantages, dtype=np.float64)
    if len(samples) != adv.size:
        raise ContractError("one advantage per sample required")
    cur = np.array([s.logprob_current for s in samples])
    beh = np.array([s.logprob_behavior for s in samples])
    _, terms, _ = _clip_terms(cur, beh, adv, clip_epsilon)
    return float(terms.mean())


# --- toy policy -------------------------------------------------------------


def state_bucket(state, n_buckets: int) -> int:
    return zlib.crc32(repr(state).encode("utf-8")) % n_buckets


@dataclass
class ToyPolicy:
    logits: np.ndarray  # (buckets, vocab, vocab): [bucket, prev (0 = start), next (0 = end)]
    max_len: int = 4

    @classmethod
    def uniform(cls, vocab: int, buckets: int, max_len: int = 4) -> "ToyPolicy":
        if vocab < 2 or buckets < 1 or max_len < 1:
            raise ValueError("vocab >= 2, buckets >= 1, max_len >= 1")
        return cls(np.zeros((buckets, vocab, vocab)), max_len)

    @property
    def vocab(self) -> int:
        return self.logits.shape[1]

    @property
    def buckets(self) -> int:
        return self.logits.shape[0]

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.logits.copy(), self.max_len)

    def probs(self, bucket: int, prev: int) -> np.ndarray:
        row = self.logits[bucket, prev]
        z = np.exp(row - row.max())
        return z / z.sum()

    def _steps(self, trace: Sequence[int]):
        """(prev, next) pairs scored for ``trace``, end marker included unless forced."""
        prev = EOS
        for tok in trace:
            if not 0 < tok < self.vocab:
                raise ContractError(f"token {tok} outside toy vocabulary 1..{self.vocab - 1}")
            yield prev, tok
            prev = tok
        if len(trace) < self.max_len:
            yield prev, EOS

    def logprob(self, state, trace: Sequence[int]) -> float:
        if len(trace) > self.max_len:
            raise ContractError(f"trace longer than max_len={self.max_len}")
        b = state_bucket(state, self.buckets)
        total = 0.0
        for prev, tok in self._steps(trace):
            row = self.logits[b, prev]
            m = row.max()
            total += row[tok] - m - np.log(np.exp(row - m).sum())
        return float(total)

    def grad_logprob(self, state, trace: Sequence[int]) -> np.ndarray:
        g = np.zeros_like(self.logits)
        b = state_bucket(state, self.buckets)
        for prev, tok in self._steps(trace):
            g[b, prev] -= self.probs(b, prev)
            g[b, prev, tok] += 1.0
        return g

    def sample(self, state, rng: np.random.Generator) -> tuple[int, ...]:
        b = state_bucket(state, self.buckets)
        out: list[int] = []
        prev = EOS
        while len(out) < self.max_len:
            tok = int(rng.choice(self.vocab, p=self.probs(b, prev)))
            if tok == EOS:
                break
            out.append(tok)
            prev = tok
        return tuple(out)


def toy_policy_logprob(policy: ToyPolicy, state, trace: Sequence[int]) -> float:
    return policy.logprob(state, trace)


def objective_and_grad(
    policy: ToyPolicy, groups: Sequence[tuple[Sequence[TraceSample], np.ndarray]], clip_epsilon: float
) -> tuple[float, np.ndarray]:
    """Mean clipped surrogate over groups at ``policy`` and its exact gradient.

    A sample contributes A * rho * grad log pi where the unclipped branch
    attains the min, and nothing where the clipped (constant) branch does.
    """
    total = 0.0
    grad = np.zeros_like(policy.logits)
    for samples, adv in groups:
        cur = np.array([policy.logprob(s.state, s.trace_tokens) for s in samples])
        beh = np.array([s.logprob_behavior for s in samples])
        rho, terms, active = _clip_terms(cur, beh, np.asarray(adv), clip_epsilon)
        total += terms.mean()
        for s, r, a, on in zip(samples, rho, adv, active):
            if on and a != 0:
                grad += (a * r / len(samples)) * policy.grad_logprob(s.state, s.trace_tokens)
    n = max(len(groups), 1)
    return total / n, grad / n


# --- planted-keyword task ---------------------------------------------------


@dataclass(frozen=True)
class ToyState:
    """State (window, old memory): the window carries one planted keyword."""

    window: tuple[int, ...]
    memory: tuple[int, ...] = ()


@dataclass(frozen=True)
class KeywordTask:
    """Write a memory trace from which the planted keyword can be looked up.

    The downstream lookup answers with the first keyword token in the trace;
    the judge scores 1 when that answer is the planted keyword.
    """

    states: tuple[ToyState, ...]
    answers: tuple[int, ...]
    keywords: tuple[int, ...]
    vocab: int
    buckets: int

    @classmethod
    def generate(cls, seed: int = 0, n_keywords: int = 4, n_distractors: int = 3,
                 templates_per_keyword: int = 2, buckets: int = 64) -> "KeywordTask":
        rng = np.random.default_rng(seed)
        keywords = tuple(range(1, n_keywords + 1))
        distractors = list(range(n_keywords + 1, n_keywords + n_distractors + 1))
        vocab = n_keywords + n_distractors + 1
        for _ in range(1000):
            states, answers = [], []
            for k in keywords:
                for _ in range(templates_per_keyword):
                    left, right = (int(x) for x in rng.choice(distractors, size=2))
                    states.append(ToyState((left, k, right), (int(rng.choice(distractors)),)))
                    answers.append(k)
            owner: dict[int, int] = {}
            clash = False
            for st, k in zip(states, answers):
                b = state_bucket(st, buckets)
                clash |= owner.setdefault(b, k) != k
            if not clash:
                return cls(tuple(states), tuple(answers), keywords, vocab, buckets)
        raise RuntimeError("could not place task states in distinct buckets")

    def teacher(self, copy_bias: float = 1.0, max_len: int = 3) -> ToyPolicy:
        """Task-agnostic reference: favors echoing tokens seen in the window.

        It knows nothing about which window token is the keyword, only that a
        memory usually restates what was observed.
        """
        p = ToyPolicy.uniform(self.vocab, self.buckets, max_len)
        for st in self.states:
            b = state_bucket(st, self.buckets)
            for tok in set(st.window):
                p.logits[b, :, tok] += copy_bias
        return p

    def answer_of(self, state: ToyState) -> int:
        return self.answers[self.states.index(state)]

    def lookup(self, trace: Sequence[int]) -> int | None:
        return next((t for t in trace if t in self.keywords), None)

    def judge(self, state: ToyState, trace: Sequence[int]) -> float:
        return 1.0 if self.lookup(trace) == self.answer_of(state) else 0.0


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_reward: float  # mean task score of the sampled traces
    mean_total_reward: float
    mean_length: float
    objective: float
    gradient_norm: float

    def record(self) -> str:
        return json.dumps(
            {
                "epoch": self.epoch,
                "mean_reward": self.mean_reward,
                "mean_length": self.mean_length,
                "J": self.objective,
                "gradient_norm": self.gradient_norm,
                "mean_total_reward": self.mean_total_reward,
            },
            separators=(",", ":"),
        )


@dataclass
class TrainingReport:
    epochs: list[EpochStats] = field(default_factory=list)
    policy: ToyPolicy | None = None
    final_mean_reward: float = float("nan")
    final_mean_length: float = float("nan")

    @property
    def reward_curve(self) -> list[float]:
        return [e.mean_reward for e in self.epochs]

    @property
    def length_curve(self) -> list[float]:
        return [e.mean_length for e in self.epochs]

    def write(self, path: str | Path) -> None:
        """Epoch records, then one summary record for the evaluated final policy."""
        lines = [e.record() for e in self.epochs]
        lines.append(json.dumps(
            {"final_mean_reward": self.final_mean_reward, "final_mean_length": self.final_mean_length},
            separators=(",", ":"),
        ))
        Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def evaluate_policy(policy: ToyPolicy, task: KeywordTask, episodes: int = 200, seed: int = 0) -> tuple[float, float]:
    """Mean task score and mean trace length over sampled episodes."""
    rng = np.random.default_rng(seed)
    scores, lengths = [], []
    for _ in range(episodes):
        st = task.states[int(rng.integers(len(task.states)))]
        tr = policy.sample(st, rng)
        scores.append(task.judge(st, tr))
        lengths.append(len(tr))
    return float(np.mean(scores)), float(np.mean(lengths))


def train_toy(
    task: KeywordTask,
    config: PolicyConfig = PolicyConfig(),
    seed: int = 0,
    max_len: int = 3,
    reference: ToyPolicy | None = None,
    eval_episodes: int = 200,
) -> TrainingReport:
    """SIB-GRPO on the toy task, starting from (and anchored to) ``reference``.

    ``reference`` defaults to the task's copy teacher.

    Each epoch snapshots the behavior policy, samples a group of traces for
    each drawn state, scores them, standardizes rewards within each group,
    then takes ``inner_steps`` gradient-ascent steps on the clipped surrogate.
    """
    if config.group_size < 2:
        raise ContractError("group_size must be >= 2")
    rng = np.random.default_rng(seed)
    ref = reference or task.teacher(max_len=max_len)
    policy = ref.copy()
    report = TrainingReport()
    for epoch in range(config.epochs):
        behavior = policy.copy()
        groups = []
        tasks, totals, lengths = [], [], []
        for _ in range(config.states_per_epoch):
            st = task.states[int(rng.integers(len(task.states)))]
            samples, rewards = [], []
            for _ in range(config.group_size):
                tr = behavior.sample(st, rng)
                lp_b = behavior.logprob(st, tr)
                smp = TraceSample(st, tr, lp_b, ref.logprob(st, tr), lp_b)
                rb = trace_reward(smp, task, config)
                samples.append(smp)
                rewards.append(rb.total)
                tasks.append(rb.task)
                totals.append(rb.total)
                lengths.append(len(tr))
            groups.append((samples, group_advantages(rewards)))
        obj, gnorm = 0.0, 0.0
        for step in range(config.inner_steps):
            obj_s, grad = objective_and_grad(policy, groups, config.clip_epsilon)
            if step == 0:
                obj, gnorm = obj_s, float(np.linalg.norm(grad))
            policy.logits += config.learning_rate * grad
            if not np.all(np.isfinite(policy.logits)):
                raise TrainingError("policy parameters diverged", epoch)
        report.epochs.append(
            EpochStats(epoch, float(np.mean(tasks)), float(np.mean(totals)), float(np.mean(lengths)), obj, gnorm)
        )
    report.policy = policy
    if eval_episodes:
        report.final_mean_reward, report.final_mean_length = evaluate_policy(
            policy, task, eval_episodes, seed + 1
        )
    return report


# --- checkpoint -------------------------------------------------------------


def save_checkpoint(path: str | Path, policy: ToyPolicy) -> None:
    header = _CKPT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, policy.vocab, policy.buckets)
    Path(path).write_bytes(header + policy.logits.astype("<f4").tobytes())


def load_checkpoint(path: str | Path, max_len: int = 4) -> ToyPolicy:
    data = Path(path).read_bytes()
    if len(data) < _CKPT_HEADER.size:
        raise ParseError(f"{path}: truncated checkpoint header")
    magic, version, vocab, buckets = _CKPT_HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC or version != CHECKPOINT_VERSION:
        raise ParseError(f"{path}: not a version-{CHECKPOINT_VERSION} policy checkpoint")
    n = buckets * vocab * vocab
    if len(data) != _CKPT_HEADER.size + 4 * n:
        raise ParseError(f"{path}: expected {n} parameters")
    table = np.frombuffer(data, dtype="<f4", offset=_CKPT_HEADER.size).astype(np.float64)
    return ToyPolicy(table.reshape(buckets, vocab, vocab), max_len)
