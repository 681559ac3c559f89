"""
Training a memory writer with group-relative policy optimization
================================================================

Each state shows a short window with one planted keyword. The policy writes
a short memory trace; a lookup reads the first keyword in the trace and the
judge scores it. Rewards subtract a per-token length cost and a drift term
against the reference policy, are standardized within each group, and drive
a clipped surrogate.
"""

import numpy as np

from mmmem.grpo import KeywordTask, PolicyConfig, ToyPolicy, evaluate_policy, train_toy

task = KeywordTask.generate(seed=0)
print(f"{len(task.states)} states, vocabulary {task.vocab}")

uniform = ToyPolicy.uniform(task.vocab, task.buckets, max_len=3)
print("random policy reward: %.3f" % evaluate_policy(uniform, task, 200)[0])
print("reference policy reward: %.3f" % evaluate_policy(task.teacher(), task, 200)[0])

report = train_toy(task, PolicyConfig(), seed=0)
curve = np.array(report.reward_curve)
print("sampled reward, first/last 10 epochs: %.3f -> %.3f" % (curve[:10].mean(), curve[-10:].mean()))
print("trained policy reward: %.3f, mean trace length %.2f" % (report.final_mean_reward, report.final_mean_length))

# The length cost trades a little accuracy for shorter traces.
for beta1 in (0.0, 0.5):
    rep = train_toy(task, PolicyConfig(beta1=beta1), seed=0)
    print(f"beta1={beta1}: reward {rep.final_mean_reward:.3f}, length {rep.final_mean_length:.2f}")
