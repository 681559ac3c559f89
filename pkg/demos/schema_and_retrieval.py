"""
From episodes to concepts, and back down again
==============================================

Build a full memory from a two-clip video with subtitles, then answer
multiple-choice questions by walking the layers from concepts to episodes to
raw clips, stopping once the answer distribution is confident enough.
"""

from mmmem.adapters import ConstantScorer, stub_adapters
from mmmem.pyramid import build_pyramid
from mmmem.retrieval import Query, answer
from mmmem.sensory import segment_fixed
from mmmem.synthetic import two_clip_fixture

frames, cues = two_clip_fixture()
adapters = stub_adapters(dim=64, seed=42)
memory = build_pyramid(segment_fixed(frames, 60), adapters, subtitles=cues)
print("counts:", memory.counts())

for cid, concept in memory.schema.concepts.items():
    print(f"concept {cid!r} grounded in nodes {memory.schema.pointers[cid]}: {concept.gloss!r}")

q = Query("What boils?", ("spoon", "kettle", "plate", "cup"))

# The overlap scorer finds "kettle" in the concept glosses and stops early.
res = answer(q, memory, adapters.embedder, adapters.scorer)
print(f"\nanswer {res.letter} ({res.answer}) after {len(res.steps)} step(s)")
for s in res.steps:
    print(f"  {s.layer.value:<8} H={s.entropy:.4f} {s.decision.value} {list(s.item_refs)}")

# A scorer that never commits walks every layer and falls back to the first option.
res = answer(q, memory, adapters.embedder, ConstantScorer())
print(f"\nuniform scorer: answer {res.letter} after {len(res.steps)} steps")
for s in res.steps:
    print(f"  {s.layer.value:<8} H={s.entropy:.4f} {s.decision.value}")
