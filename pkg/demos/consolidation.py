"""
Consolidating sensory items into episodes
=========================================

Items arrive in time order. Each is compared with the latest episode: close
matches are folded in, clear departures start a new episode, and the
ambiguous middle band is dropped. The action log is enough to rebuild the
stream.
"""

import numpy as np

from mmmem.episodic import cluster_prototypes, consolidate_pass, replay
from mmmem.sensory import SensoryItem

rng = np.random.default_rng(0)
dim = 16
scenes = [rng.normal(size=dim) for _ in range(3)]

buffer = []
for t in range(12):
    base = scenes[t // 4]
    v = base + rng.normal(scale=0.1, size=dim)
    buffer.append(SensoryItem(v / np.linalg.norm(v), f"frame {t}", t * 1000, (0, 0), t // 4))

state = consolidate_pass(buffer)
print("actions:", " ".join(a.value for a in state.action_log))
for node in state.stream:
    print(f"node {node.node_id}: items {node.source_items}, span {node.span_ms}")

# Replaying the log reproduces every node exactly.
again = replay(buffer, state.action_log)
assert all(np.array_equal(a.representation, b.representation) for a, b in zip(state.stream, again.stream))

# A node is the running mean of the items merged into it.
node = state.stream[0]
print("merge error:", np.abs(node.representation - np.mean([buffer[i].visual for i in node.source_items], axis=0)).max())

# Prototypes: one representative node per cluster.
print("prototype flags:", [n.is_prototype for n in cluster_prototypes(state, k=2)])
