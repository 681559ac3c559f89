"""Independent reference computations used to freeze expected values.

Everything here is written with plain loops and the math module so it
shares no code path with the package under test.
"""

from __future__ import annotations

import itertools
import math


def l1_mean(a, b) -> float:
    """Mean absolute difference over nested (h, w, c) lists."""
    total, n = 0.0, 0
    for ra, rb in zip(a, b):
        for pa, pb in zip(ra, rb):
            for ca, cb in zip(pa, pb):
                total += abs(float(ca) - float(cb))
                n += 1
    return total / n


def threshold_indices(distances) -> list[int]:
    """Indices strictly above mean + population std, computed by hand."""
    vals = [d for d in distances if d is not None]
    mu = sum(vals) / len(vals)
    sigma = math.sqrt(sum((d - mu) ** 2 for d in vals) / len(vals))
    return [i for i, d in enumerate(distances) if d is not None and d > mu + sigma]


def best_two_clustering(points) -> list[set[int]]:
    """Exhaustive search over every split of the points into two non-empty groups."""
    n = len(points)
    best, best_cost = None, math.inf
    for mask in range(1, 2 ** n - 1):
        groups = [[i for i in range(n) if mask >> i & 1], [i for i in range(n) if not mask >> i & 1]]
        cost = 0.0
        for g in groups:
            dim = len(points[0])
            c = [sum(points[i][d] for i in g) / len(g) for d in range(dim)]
            cost += sum(sum((points[i][d] - c[d]) ** 2 for d in range(dim)) for i in g)
        if cost < best_cost - 1e-12:
            best, best_cost = [set(g) for g in groups], cost
    return best


def entropy(p) -> float:
    return -sum(x * math.log(x) for x in p if x > 0)


def mutual_information(joint) -> float:
    rows = [sum(r) for r in joint]
    cols = [sum(joint[i][j] for i in range(len(joint))) for j in range(len(joint[0]))]
    mi = 0.0
    for i, r in enumerate(joint):
        for j, p in enumerate(r):
            if p > 0:
                mi += p * math.log(p / (rows[i] * cols[j]))
    return mi


def l_p_bruteforce(joint, enc, dec) -> float:
    total = 0.0
    for x, y, m in itertools.product(range(len(joint)), range(len(joint[0])), range(len(enc[0]))):
        w = joint[x][y] * enc[x][m]
        if w > 0:
            total += w * math.log(dec[m][y])
    return total


def l_c_bruteforce(joint, enc, prior) -> float:
    total = 0.0
    for x in range(len(joint)):
        px = sum(joint[x])
        for m in range(len(enc[0])):
            if enc[x][m] > 0:
                total += px * enc[x][m] * math.log(enc[x][m] / prior[m])
    return total


def softmax(row):
    m = max(row)
    z = [math.exp(v - m) for v in row]
    s = sum(z)
    return [v / s for v in z]


def trace_prob(logits, bucket, trace, max_len, eos=0) -> float:
    """Probability of a whole trace under the toy table, by direct multiplication."""
    p, prev = 1.0, eos
    for tok in trace:
        p *= softmax(list(logits[bucket][prev]))[tok]
        prev = tok
    if len(trace) < max_len:
        p *= softmax(list(logits[bucket][prev]))[eos]
    return p


def stop_marginal(logits, bucket, horizon, vocab, eos=0) -> float:
    """P(end marker emitted within ``horizon`` steps), by forward recursion over prefixes."""
    alive = {eos: 1.0}  # prefix mass keyed by last token (eos = start)
    stopped = 0.0
    for _ in range(horizon + 1):
        nxt: dict[int, float] = {}
        for prev, mass in alive.items():
            probs = softmax(list(logits[bucket][prev]))
            stopped += mass * probs[eos]
            for tok in range(1, vocab):
                nxt[tok] = nxt.get(tok, 0.0) + mass * probs[tok]
        alive = nxt
    return stopped


def central_difference(f, theta, h=1e-6):
    """Gradient of scalar ``f`` at flat list ``theta``."""
    g = []
    for i in range(len(theta)):
        up = list(theta)
        dn = list(theta)
        up[i] += h
        dn[i] -= h
        g.append((f(up) - f(dn)) / (2 * h))
    return g
