import json
import subprocess
import sys

import httpx
import pytest

from mmmem import cli
from mmmem.adapters import RemoteClient, RemoteConfig
from mmmem.ib import deterministic_chain, format_instance
from mmmem.pyramid import empty_pyramid
from mmmem.sensory import write_frame_dump, write_subtitles
from mmmem.store import digests, save_memory
from mmmem.synthetic import two_clip_fixture

CHOICES = ["--choice", "kettle", "--choice", "spoon", "--choice", "plate", "--choice", "cup"]


def kv(line):
    return dict(tok.split("=", 1) for tok in line.split())


@pytest.fixture
def inputs(tmp_path):
    frames, cues = two_clip_fixture()
    write_frame_dump(tmp_path / "video.mmfr", frames)
    write_subtitles(tmp_path / "subs.tsv", cues)
    (tmp_path / "fixture.cfg").write_text("clip_length=60\n")
    return tmp_path


@pytest.fixture
def built(inputs, capsys):
    out = inputs / "mem"
    code = cli.main([
        "build", "--frames", str(inputs / "video.mmfr"), "--subtitles", str(inputs / "subs.tsv"),
        "--config", str(inputs / "fixture.cfg"), "--out", str(out),
    ])
    assert code == 0
    capsys.readouterr()
    return out


class TestBuild:
    def test_counts_line(self, inputs, capsys):
        code = cli.main([
            "build", "--frames", str(inputs / "video.mmfr"), "--subtitles", str(inputs / "subs.tsv"),
            "--config", str(inputs / "fixture.cfg"), "--out", str(inputs / "m"),
        ])
        lines = capsys.readouterr().out.splitlines()
        assert code == 0
        assert "sensory=2 episodic=2 concepts=2" in lines
        assert [ln.split()[0] for ln in lines[:3]] == ["layer=sensory", "layer=episodic", "layer=symbolic"]

    def test_same_seed_same_digests(self, inputs, capsys):
        args = ["build", "--frames", str(inputs / "video.mmfr"), "--config", str(inputs / "fixture.cfg"), "--seed", "3"]
        assert cli.main(args + ["--out", str(inputs / "a")]) == 0
        assert cli.main(args + ["--out", str(inputs / "b")]) == 0
        assert digests(inputs / "a") == digests(inputs / "b")

    def test_missing_file(self, tmp_path, capsys):
        code = cli.main(["build", "--frames", str(tmp_path / "nope.mmfr"), "--out", str(tmp_path / "m")])
        assert code == 2
        assert "nope.mmfr" in capsys.readouterr().err

    def test_bad_format(self, tmp_path, capsys):
        (tmp_path / "junk").write_bytes(b"not a frame dump at all....")
        assert cli.main(["build", "--frames", str(tmp_path / "junk"), "--out", str(tmp_path / "m")]) == 2

    def test_bad_config(self, inputs, capsys):
        (inputs / "bad.cfg").write_text("unknown_key=1\n")
        code = cli.main(["build", "--frames", str(inputs / "video.mmfr"), "--config", str(inputs / "bad.cfg"),
                         "--out", str(inputs / "m")])
        assert code == 2

    def test_features_input(self, tmp_path, capsys):
        rows = [f"{i * 40}\t{'0,0' if i < 10 else '50,50'}" for i in range(20)]
        (tmp_path / "f.tsv").write_text("\n".join(rows) + "\n")
        assert cli.main(["build", "--features", str(tmp_path / "f.tsv"), "--out", str(tmp_path / "m")]) == 0
        assert "sensory=1 episodic=1" in capsys.readouterr().out

    def test_adapter_failure_exit_3(self, inputs, capsys, monkeypatch):
        def failing_client():
            cfg = RemoteConfig(base_url="http://model.test", model="m", max_retries=1)
            return RemoteClient(cfg, httpx.MockTransport(lambda r: httpx.Response(503)), sleep=lambda s: None)

        monkeypatch.setattr(cli, "_remote_client", failing_client)
        code = cli.main(["build", "--frames", str(inputs / "video.mmfr"), "--config", str(inputs / "fixture.cfg"),
                         "--adapters", "remote", "--out", str(inputs / "m")])
        assert code == 3
        assert "clip 0" in capsys.readouterr().err


class TestQuery:
    def test_concentrating_stops_at_symbolic(self, built, tmp_path, capsys):
        code = cli.main(["query", "--mem", str(built), "--question", "What boils?", *CHOICES,
                         "--trace", str(tmp_path / "t.jsonl")])
        out = kv(capsys.readouterr().out.splitlines()[0])
        assert code == 0
        assert out["letter"] == "A" and out["answer_index"] == "0" and out["steps"] == "1"
        rows = [json.loads(x) for x in (tmp_path / "t.jsonl").read_text().splitlines()]
        assert [r["layer"] for r in rows] == ["SYMBOLIC"]

    def test_correct_letter_not_first(self, built, capsys):
        code = cli.main(["query", "--mem", str(built), "--question", "What boils?",
                         "--choice", "spoon", "--choice", "kettle", "--choice", "plate"])
        out = kv(capsys.readouterr().out.splitlines()[0])
        assert code == 0
        assert (out["letter"], out["steps"]) == ("B", "1")

    def test_uniform_runs_three_steps(self, built, tmp_path, capsys):
        code = cli.main(["query", "--mem", str(built), "--question", "What boils?", *CHOICES,
                         "--answerer", "uniform", "--trace", str(tmp_path / "t.jsonl")])
        out = kv(capsys.readouterr().out.splitlines()[0])
        assert code == 0 and out["letter"] == "A" and out["steps"] == "3"
        assert len((tmp_path / "t.jsonl").read_text().splitlines()) == 3

    def test_one_choice(self, built, capsys):
        with pytest.raises(SystemExit) as info:
            cli.main(["query", "--mem", str(built), "--question", "q", "--choice", "only"])
        assert info.value.code == 2
        assert "usage" in capsys.readouterr().err

    def test_bad_snapshot(self, tmp_path, capsys):
        (tmp_path / "m").mkdir()
        code = cli.main(["query", "--mem", str(tmp_path / "m"), "--question", "q", "--choice", "a", "--choice", "b"])
        assert code == 2


class TestVerifyIB:
    def test_random_suite(self, capsys):
        assert cli.main(["verify-ib", "--instances", "500", "--seed", "7"]) == 0
        out = kv(capsys.readouterr().out.strip())
        assert out["instances"] == "500"
        assert float(out["worst_slack_pred"]) >= -1e-9 and float(out["worst_slack_comp"]) >= -1e-9

    def test_chain_builtin(self, capsys):
        assert cli.main(["verify-ib", "--builtin", "chain"]) == 0
        out = kv(capsys.readouterr().out.strip())
        assert (out["instances"], out["worst_slack_pred"], out["worst_slack_comp"]) == ("1", "0.0", "0.0")

    def test_invalid_instance_file(self, tmp_path, capsys):
        (tmp_path / "bad.txt").write_text("1 1 1\n0.7\n1\n1\n1\n")
        assert cli.main(["verify-ib", "--instance-file", str(tmp_path / "bad.txt")]) == 2

    def test_instance_file(self, tmp_path, capsys):
        (tmp_path / "i.txt").write_text(format_instance(deterministic_chain()))
        assert cli.main(["verify-ib", "--instance-file", str(tmp_path / "i.txt")]) == 0

    def test_violation_exit_1(self, monkeypatch, capsys):
        from mmmem import ib

        class Broken:
            slack_pred, slack_comp = -1.0, 0.0

            def ok(self):
                return False

            def lines(self):
                return ["slack_pred=-1.0"]

        monkeypatch.setattr(ib, "verify_bounds", lambda inst: Broken())
        assert cli.main(["verify-ib", "--builtin", "chain"]) == 1
        err = capsys.readouterr().err
        assert "violation at instance 0" in err and "2 2 2" in err


class TestTrainStatsExport:
    def test_train_toy(self, tmp_path, capsys):
        (tmp_path / "c.cfg").write_text("epochs=40\n")
        code = cli.main(["train-toy", "--config", str(tmp_path / "c.cfg"), "--seed", "0",
                         "--report", str(tmp_path / "r.jsonl")])
        assert code == 0
        rows = [json.loads(x) for x in (tmp_path / "r.jsonl").read_text().splitlines()]
        assert rows[-1]["final_mean_reward"] > rows[0]["mean_reward"]
        assert (tmp_path / "r.jsonl.mmpo").read_bytes()[:4] == b"MMPO"

    def test_stats(self, built, capsys):
        assert cli.main(["stats", "--mem", str(built)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert kv(lines[0]) == {"sensory": "2", "episodic": "2", "concepts": "2", "edges": "2"}
        assert lines[1].startswith("mean_merge_factor=1.0000")
        assert lines[2] == "degree_histogram=1:2"

    def test_stats_empty(self, tmp_path, capsys):
        save_memory(empty_pyramid(8), tmp_path / "e")
        assert cli.main(["stats", "--mem", str(tmp_path / "e")]) == 0
        assert kv(capsys.readouterr().out.splitlines()[0]) == {"sensory": "0", "episodic": "0", "concepts": "0", "edges": "0"}

    def test_export_graph(self, built, tmp_path, capsys):
        assert cli.main(["export-graph", "--mem", str(built), "--out", str(tmp_path / "g")]) == 0
        edges = (tmp_path / "g" / "edges.tsv").read_text().splitlines()
        schema = [json.loads(x) for x in (tmp_path / "g" / "schema.rec").read_text().splitlines()]
        assert len(edges) == sum(r["kind"] == "edge" for r in schema) == 2


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "mmmem.cli", "verify-ib", "--builtin", "chain"],
                         capture_output=True, text=True, timeout=60)
    assert res.returncode == 0
    assert "worst_slack_pred=0.0" in res.stdout
