import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mmmem.adapters import stub_adapters  # noqa: E402
from mmmem.pyramid import build_pyramid  # noqa: E402
from mmmem.sensory import Frame, SensoryItem, segment_fixed  # noqa: E402
from mmmem.synthetic import two_clip_fixture  # noqa: E402


def make_frame(index, values, ts=None):
    arr = np.asarray(values, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[..., None]
    return Frame(index, index * 40 if ts is None else ts, arr)


def make_item(vec, ts=0, text="", clip_id=0):
    return SensoryItem(np.asarray(vec, dtype=float), text, ts, (0, 0), clip_id)


@pytest.fixture
def adapters():
    return stub_adapters(dim=64, seed=42)


@pytest.fixture
def fixture_pyramid(adapters):
    frames, cues = two_clip_fixture()
    return build_pyramid(segment_fixed(frames, 60), adapters, subtitles=cues, meta={"seed": "42", "embed_dim": "64"})


@pytest.fixture
def fixture_video():
    return two_clip_fixture()


# --- no network for any test ----------------------------------------------

import socket  # noqa: E402

_real_connect = socket.socket.connect


class NetworkBlocked(RuntimeError):
    pass


def _guarded_connect(self, address):
    if self.family in (socket.AF_INET, socket.AF_INET6):
        raise NetworkBlocked(f"network access attempted: {address!r}")
    return _real_connect(self, address)


@pytest.fixture(autouse=True)
def _no_network(monkeypatch):
    monkeypatch.setattr(socket.socket, "connect", _guarded_connect)
    monkeypatch.setattr(socket, "create_connection", lambda *a, **k: _guarded_connect(socket.socket(), a[0]))


# --- acceptance summary ---------------------------------------------------

ACCEPTANCE: list[str] = []


@pytest.fixture
def accept():
    def record(name: str, ok: bool, detail: str = "") -> None:
        ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
