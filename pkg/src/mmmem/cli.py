"""Command-line entry point: ``mmmem <command> ...``.

Exit codes: 0 success, 1 internal or I/O failure, 2 usage or bad input,
3 adapter or transport failure.
"""

from __future__ import annotations

import argparse
import shutil
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import ib
from .adapters import (
    ConstantScorer,
    OverlapScorer,
    RemoteCaptioner,
    RemoteClient,
    RemoteConfig,
    RemoteExtractor,
    RemoteScorer,
    StubCaptioner,
    StubEmbedder,
    StubExtractor,
)
from .adapters.base import AdapterSet
from .config import EngineConfig
from .errors import AdapterError, ConsistencyError, ContractError, CorruptionError, DomainError, ParseError
from .grpo import KeywordTask, save_checkpoint, train_toy
from .pyramid import build_pyramid
from .retrieval import Query, answer, write_trace
from .schema import EdgeKind, write_edge_list
from .sensory import read_feature_records, read_frame_dump, read_subtitles, segment_fixed
from .store import load_memory, save_memory

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_ADAPTER = 0, 1, 2, 3


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load_config(path: str | None, seed: int | None) -> EngineConfig:
    try:
        cfg = EngineConfig.load(path) if path else EngineConfig()
    except FileNotFoundError as exc:
        raise _Fail(EXIT_USAGE, f"config file not found: {path}") from exc
    except ValueError as exc:
        raise _Fail(EXIT_USAGE, f"{path}: {exc}") from exc
    if seed is not None:
        cfg = EngineConfig(**{**cfg.__dict__, "seed": seed})
    return cfg


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise _Fail(EXIT_USAGE, f"{what} not found: {path}")
    return p


def _remote_client() -> RemoteClient:
    try:
        return RemoteClient(RemoteConfig.from_env())
    except ValueError as exc:
        raise _Fail(EXIT_USAGE, str(exc)) from exc


def cmd_build(args) -> int:
    cfg = _load_config(args.config, args.seed)
    src = _require_file(args.frames or args.features, "input file")
    frames = read_frame_dump(src) if args.frames else read_feature_records(src)
    if not frames:
        raise _Fail(EXIT_USAGE, f"{src}: no frames")
    subs = read_subtitles(_require_file(args.subtitles, "subtitle file")) if args.subtitles else None
    embedder = StubEmbedder(cfg.embed_dim, cfg.seed)
    if args.adapters == "remote":
        client = _remote_client()
        adapters = AdapterSet(embedder, RemoteCaptioner(client), RemoteExtractor(client), OverlapScorer())
    else:
        adapters = AdapterSet(embedder, StubCaptioner(), StubExtractor(), OverlapScorer())
    meta = {"seed": str(cfg.seed), "embed_dim": str(cfg.embed_dim), "adapters": args.adapters, **cfg.as_meta()}
    pyramid = build_pyramid(
        segment_fixed(frames, cfg.clip_length),
        adapters,
        cfg.sensory,
        cfg.thresholds,
        subtitles=subs,
        seed=cfg.seed,
        concept_merge_threshold=cfg.concept_merge_threshold,
        meta=meta,
    )
    save_memory(pyramid, args.out)
    c = pyramid.counts()
    print(f"layer=sensory items={c['sensory']}")
    print(f"layer=episodic nodes={c['episodic']}")
    print(f"layer=symbolic concepts={c['concepts']}")
    print(f"sensory={c['sensory']} episodic={c['episodic']} concepts={c['concepts']}")
    return EXIT_OK


def _load_snapshot(path: str):
    try:
        return load_memory(path)
    except (CorruptionError, ConsistencyError, ParseError) as exc:
        raise _Fail(EXIT_USAGE, f"bad snapshot: {exc}") from exc


def cmd_query(args, parser) -> int:
    if not args.choice or len(args.choice) < 2:
        parser.error("query needs at least two --choice options")
    cfg = _load_config(args.config, None)
    mem = _load_snapshot(args.mem)
    embedder = StubEmbedder(int(mem.meta.get("embed_dim", mem.dim)), int(mem.meta.get("seed", cfg.seed)))
    if args.answerer == "remote":
        scorer = RemoteScorer(_remote_client(), mode="letter")
    elif args.answerer == "uniform":
        scorer = ConstantScorer()
    else:
        scorer = OverlapScorer()
    try:
        query = Query(args.question, tuple(args.choice))
    except ContractError as exc:
        parser.error(str(exc))
    result = answer(query, mem, embedder, scorer, cfg.retrieval)
    if args.trace:
        write_trace(args.trace, result)
    print(
        f"answer_index={result.index} letter={result.letter} steps={len(result.steps)} "
        f"entropy={result.state.entropy:.6f}"
    )
    print(f"answer={result.answer}")
    return EXIT_OK


def _fmt_slack(v: float) -> str:
    return repr(round(v, 12) + 0.0)


def cmd_verify_ib(args) -> int:
    if args.instance_file:
        try:
            instances = [ib.read_instance(_require_file(args.instance_file, "instance file"))]
        except (ParseError, DomainError) as exc:
            raise _Fail(EXIT_USAGE, f"{args.instance_file}: {exc}") from exc
    elif args.builtin == "chain":
        instances = [ib.deterministic_chain()]
    else:
        if args.instances < 1:
            raise _Fail(EXIT_USAGE, "--instances must be >= 1")
        rng = np.random.default_rng(args.seed)
        instances = [ib.random_instance(rng) for _ in range(args.instances)]
    worst_pred, worst_comp = np.inf, np.inf
    for n, inst in enumerate(instances):
        rep = ib.verify_bounds(inst)
        worst_pred = min(worst_pred, rep.slack_pred)
        worst_comp = min(worst_comp, rep.slack_comp)
        if not rep.ok():
            print(f"violation at instance {n}:", file=sys.stderr)
            print(ib.format_instance(inst), end="", file=sys.stderr)
            print("\n".join(rep.lines()), file=sys.stderr)
            print(f"worst_slack_pred={_fmt_slack(worst_pred)} worst_slack_comp={_fmt_slack(worst_comp)}")
            return EXIT_INTERNAL
    print(f"instances={len(instances)} worst_slack_pred={_fmt_slack(worst_pred)} worst_slack_comp={_fmt_slack(worst_comp)}")
    return EXIT_OK


def cmd_train_toy(args) -> int:
    cfg = _load_config(args.config, args.seed)
    task = KeywordTask.generate(cfg.seed)
    report = train_toy(task, cfg.policy, seed=cfg.seed)
    report.write(args.report)
    ckpt = args.checkpoint or f"{args.report}.mmpo"
    save_checkpoint(ckpt, report.policy)
    first = report.epochs[0] if report.epochs else None
    print(
        f"epochs={len(report.epochs)} initial_mean_reward={first.mean_reward if first else float('nan'):.4f} "
        f"final_mean_reward={report.final_mean_reward:.4f} final_mean_length={report.final_mean_length:.4f}"
    )
    print(f"checkpoint={ckpt}")
    return EXIT_OK


def cmd_stats(args) -> int:
    mem = _load_snapshot(args.mem)
    c = mem.counts()
    nodes = mem.episodic.stream
    merge = float(np.mean([n.merged_count for n in nodes])) if nodes else 0.0
    degree = Counter()
    for cid in mem.schema.concepts:
        degree[cid] = 0
    for e in mem.schema.edges:
        degree[e.target] += 1
        if e.kind is EdgeKind.SEMANTIC:
            degree[e.source] += 1
    hist = Counter(degree.values())
    print(f"sensory={c['sensory']} episodic={c['episodic']} concepts={c['concepts']} edges={len(mem.schema.edges)}")
    print(f"mean_merge_factor={merge:.4f} prototypes={sum(n.is_prototype for n in nodes)}")
    print("degree_histogram=" + ",".join(f"{d}:{hist[d]}" for d in sorted(hist)))
    return EXIT_OK


def cmd_export_graph(args) -> int:
    mem = _load_snapshot(args.mem)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(Path(args.mem) / "schema.rec", out / "schema.rec")
    n = write_edge_list(out / "edges.tsv", mem.schema)
    print(f"edges={n} concepts={len(mem.schema.concepts)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmmem", description="Hierarchical multimodal memory engine")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build a memory snapshot from frames or features")
    src = b.add_mutually_exclusive_group(required=True)
    src.add_argument("--frames", help="MMFR frame-dump file")
    src.add_argument("--features", help="per-frame feature records (timestamp_ms<TAB>v1,v2,...)")
    b.add_argument("--subtitles", help="start_ms<TAB>end_ms<TAB>text lines")
    b.add_argument("--out", required=True)
    b.add_argument("--config")
    b.add_argument("--seed", type=int)
    b.add_argument("--adapters", choices=("stub", "remote"), default="stub")

    q = sub.add_parser("query", help="answer a multiple-choice question from a snapshot")
    q.add_argument("--mem", required=True)
    q.add_argument("--question", required=True)
    q.add_argument("--choice", action="append")
    q.add_argument("--trace")
    q.add_argument("--config")
    q.add_argument("--answerer", choices=("overlap", "uniform", "remote"), default="overlap")

    v = sub.add_parser("verify-ib", help="check both variational IB bounds")
    v.add_argument("--instances", type=int, default=500)
    v.add_argument("--seed", type=int, default=7)
    v.add_argument("--instance-file")
    v.add_argument("--builtin", choices=("chain",))

    t = sub.add_parser("train-toy", help="run SIB-GRPO on the planted-keyword toy task")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--report", required=True)
    t.add_argument("--checkpoint")

    s = sub.add_parser("stats", help="print layer counts and graph statistics")
    s.add_argument("--mem", required=True)

    e = sub.add_parser("export-graph", help="export schema records and a plain edge list")
    e.add_argument("--mem", required=True)
    e.add_argument("--out", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "build": cmd_build,
        "query": lambda a: cmd_query(a, parser),
        "verify-ib": cmd_verify_ib,
        "train-toy": cmd_train_toy,
        "stats": cmd_stats,
        "export-graph": cmd_export_graph,
    }
    try:
        return handlers[args.command](args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except AdapterError as exc:
        print(f"adapter error: {exc}", file=sys.stderr)
        return EXIT_ADAPTER
    except (ParseError, ContractError, DomainError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
