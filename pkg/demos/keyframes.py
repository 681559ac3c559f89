"""
Keyframes from frame differences
================================

A synthetic stream with a few planted hard cuts. Each frame is compared to
the one before it; frames whose change stands out from the rest of the clip
become keyframes, and near-duplicates are thinned so no two keyframes sit
closer than the minimum separation.
"""

import numpy as np

from mmmem.sensory import SensoryConfig, key_indices, saliency_profile
from mmmem.synthetic import planted_stream

clip, cuts = planted_stream(seed=3, n_frames=120, n_cuts=3, noise=2)
print("planted cuts:", cuts)

# The saliency profile holds the mean absolute pixel change per frame.
profile = saliency_profile(clip)
d = np.array([x for x in profile.distances[1:]])
print(f"mean change {profile.mean_mu:.2f}, spread {profile.std_sigma:.2f}, threshold {profile.threshold:.2f}")
print("largest changes at", (np.argsort(d)[::-1][:5] + 1).tolist())

print("selected keyframes:", key_indices(clip))

# A much larger separation merges nearby cuts into the strongest one.
print("with separation 60:", key_indices(clip, SensoryConfig(min_separation=60)))
