"""Exact variational information-bottleneck quantities on finite alphabets.

Everything is computed by enumeration in nats. ``verify_bounds`` checks the
two variational inequalities

    I(M;Y) >= L_p + H(Y)        (decoder bound)
    I(X;M) <= L_c               (prior bound)

on a concrete joint p(x, y), encoder p(m|x), decoder q(y|m) and prior r(m).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError

TOL = 1e-12
MAX_X, MAX_Y, MAX_M = 16, 8, 16


def _check_dist(arr: np.ndarray, name: str, axis=None) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError(f"{name}: entries must be finite and non-negative")
    sums = arr.sum() if axis is None else arr.sum(axis=axis)
    if np.any(np.abs(sums - 1.0) > TOL * max(1, arr.size)):
        raise DomainError(f"{name}: does not sum to 1")
    return arr


@dataclass(frozen=True)
class IBInstance:
    joint: np.ndarray  # p(x, y), |X| x |Y|
    encoder: np.ndarray  # p(m | x), |X| x |M|
    decoder: np.ndarray  # q(y | m), |M| x |Y|
    prior: np.ndarray  # r(m), |M|

    def __post_init__(self):
        joint = _check_dist(self.joint, "joint")
        enc = _check_dist(self.encoder, "encoder", axis=1)
        dec = _check_dist(self.decoder, "decoder", axis=1)
        prior = _check_dist(self.prior, "prior")
        if joint.ndim != 2 or enc.ndim != 2 or dec.ndim != 2 or prior.ndim != 1:
            raise DomainError("table ranks must be joint 2, encoder 2, decoder 2, prior 1")
        nx, ny = joint.shape
        if enc.shape[0] != nx or dec.shape != (enc.shape[1], ny) or prior.shape != (enc.shape[1],):
            raise DomainError("table shapes are inconsistent")
        if nx > MAX_X or ny > MAX_Y or enc.shape[1] > MAX_M:
            raise DomainError(f"alphabets limited to |X|<={MAX_X}, |Y|<={MAX_Y}, |M|<={MAX_M}")
        for name, val in (("joint", joint), ("encoder", enc), ("decoder", dec), ("prior", prior)):
            object.__setattr__(self, name, val)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.joint.shape[0], self.joint.shape[1], self.encoder.shape[1]


@dataclass(frozen=True)
class BoundReport:
    i_xm: float
    i_my: float
    l_p: float
    l_c: float
    h_y: float

    @property
    def slack_pred(self) -> float:
        return self.i_my - (self.l_p + self.h_y)

    @property
    def slack_comp(self) -> float:
        return self.l_c - self.i_xm

    def ok(self, tol: float = 1e-9) -> bool:
        return self.slack_pred >= -tol and self.slack_comp >= -tol

    def lines(self) -> list[str]:
        vals = {
            "I_XM": self.i_xm,
            "I_MY": self.i_my,
            "L_p": self.l_p,
            "L_c": self.l_c,
            "H_Y": self.h_y,
            "slack_pred": self.slack_pred,
            "slack_comp": self.slack_comp,
        }
        return [f"{k}={v!r}" for k, v in vals.items()]


def mutual_information(joint) -> float:
    p = _check_dist(joint, "joint")
    if p.ndim != 2:
        raise DomainError("joint must be a 2-D table")
    row = p.sum(axis=1, keepdims=True)
    col = p.sum(axis=0, keepdims=True)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / (row @ col)[mask])))


def entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64).ravel()
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def joint_xm(joint, encoder) -> np.ndarray:
    return np.asarray(joint).sum(axis=1)[:, None] * np.asarray(encoder)


def joint_my(joint, encoder) -> np.ndarray:
    # p(m, y) = sum_x p(x, y) p(m | x)
    return np.asarray(encoder).T @ np.asarray(joint)


def l_p(joint, encoder, decoder) -> float:
    """E_{p(x,y) p(m|x)}[log q(y|m)]; -inf if q is zero on a reachable (m, y)."""
    pmy = joint_my(joint, encoder)
    q = np.asarray(decoder, dtype=np.float64)
    mask = pmy > 0
    if np.any(q[mask] == 0):
        return float("-inf")
    return float(np.sum(pmy[mask] * np.log(q[mask])))


def l_c(px, encoder, prior) -> float:
    """E_{p(x)}[KL(p(m|x) || r(m))]."""
    px = np.asarray(px, dtype=np.float64)
    enc = np.asarray(encoder, dtype=np.float64)
    r = np.asarray(prior, dtype=np.float64)
    total = 0.0
    for x in range(enc.shape[0]):
        if px[x] == 0:
            continue
        for m in range(enc.shape[1]):
            if enc[x, m] == 0:
                continue
            if r[m] == 0:
                raise DomainError(f"prior is zero where the encoder has mass at (x={x}, m={m})")
            total += px[x] * enc[x, m] * np.log(enc[x, m] / r[m])
    return float(total)


def verify_bounds(inst: IBInstance) -> BoundReport:
    return BoundReport(
        i_xm=mutual_information(joint_xm(inst.joint, inst.encoder)),
        i_my=mutual_information(joint_my(inst.joint, inst.encoder)),
        l_p=l_p(inst.joint, inst.encoder, inst.decoder),
        l_c=l_c(inst.joint.sum(axis=1), inst.encoder, inst.prior),
        h_y=entropy(inst.joint.sum(axis=0)),
    )


def ib_objective(inst: IBInstance, beta: float) -> float:
    """beta * L_p - L_c, the quantity maximized by variational IB."""
    return beta * l_p(inst.joint, inst.encoder, inst.decoder) - l_c(
        inst.joint.sum(axis=1), inst.encoder, inst.prior
    )


def optimal_decoder(joint, encoder) -> np.ndarray:
    """q(y|m) = p(y|m); uniform on rows with p(m) = 0."""
    pmy = joint_my(joint, encoder)
    pm = pmy.sum(axis=1, keepdims=True)
    out = np.full_like(pmy, 1.0 / pmy.shape[1])
    nz = pm[:, 0] > 0
    out[nz] = pmy[nz] / pm[nz]
    return out


def optimal_prior(joint, encoder) -> np.ndarray:
    return joint_xm(joint, encoder).sum(axis=0)


def with_optimal_variationals(joint, encoder) -> IBInstance:
    return IBInstance(joint, encoder, optimal_decoder(joint, encoder), optimal_prior(joint, encoder))


def quality_quantity_prior(p_ref, lengths, lam: float) -> np.ndarray:
    """r(m) proportional to p_ref(m) * exp(-lam * len(m)), normalized exactly."""
    p_ref = np.asarray(p_ref, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.float64)
    if p_ref.shape != lengths.shape:
        raise DomainError("p_ref and lengths must align")
    if np.any(p_ref < 0) or np.any(lengths < 0):
        raise DomainError("p_ref and lengths must be non-negative")
    # shift by the minimum length so large lam cannot underflow every weight
    w = p_ref * np.exp(-lam * (lengths - lengths.min()))
    if w.sum() <= 0:
        raise DomainError("prior has no mass")
    return w / w.sum()


def random_instance(rng: np.random.Generator, max_size: int = 8, sizes=None, alpha: float = 1.0) -> IBInstance:
    """Dirichlet-random tables with alphabets in [2, max_size] (or fixed ``sizes``)."""
    if sizes is None:
        nx, ny, nm = (int(rng.integers(2, max_size + 1)) for _ in range(3))
        ny = min(ny, MAX_Y)
    else:
        nx, ny, nm = sizes
    joint = rng.dirichlet(np.full(nx * ny, alpha)).reshape(nx, ny)
    enc = rng.dirichlet(np.full(nm, alpha), size=nx)
    dec = rng.dirichlet(np.full(ny, alpha), size=nm)
    prior = rng.dirichlet(np.full(nm, alpha))
    return IBInstance(joint, enc, dec, prior)


def deterministic_chain() -> IBInstance:
    """X = Y a uniform bit, M = X, with the optimal decoder and prior."""
    joint = np.array([[0.5, 0.0], [0.0, 0.5]])
    return with_optimal_variationals(joint, np.eye(2))


# --- text format ------------------------------------------------------------
# line 1: "|X| |Y| |M|"; then rows of joint (|X|), encoder (|X|), decoder (|M|), prior (1)


def format_instance(inst: IBInstance) -> str:
    nx, ny, nm = inst.sizes
    rows = [f"{nx} {ny} {nm}"]
    for table in (inst.joint, inst.encoder, inst.decoder, inst.prior[None, :]):
        rows.extend(" ".join(repr(float(v)) for v in row) for row in table)
    return "\n".join(rows) + "\n"


def parse_instance(text: str) -> IBInstance:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        nx, ny, nm = (int(t) for t in lines[0].split())
        rows = [[float(t) for t in ln.split()] for ln in lines[1:]]
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed instance header or rows: {exc}") from exc
    if len(rows) != 2 * nx + nm + 1:
        raise ParseError(f"expected {2 * nx + nm + 1} table rows, found {len(rows)}")
    widths = [ny] * nx + [nm] * nx + [ny] * nm + [nm]
    for i, (row, w) in enumerate(zip(rows, widths)):
        if len(row) != w:
            raise ParseError(f"table row {i + 1} has {len(row)} entries, expected {w}")
    joint = np.array(rows[:nx])
    enc = np.array(rows[nx : 2 * nx])
    dec = np.array(rows[2 * nx : 2 * nx + nm])
    prior = np.array(rows[-1])
    return IBInstance(joint, enc, dec, prior)


def read_instance(path: str | Path) -> IBInstance:
    return parse_instance(Path(path).read_text(encoding="utf-8"))


def write_instance(path: str | Path, inst: IBInstance) -> None:
    Path(path).write_text(format_instance(inst), encoding="utf-8")
