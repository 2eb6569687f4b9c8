"""Explore four-rooms without rewards, then learn to reach the far corner.

Three agents share the same budget: one pre-trained with the particle
reward, one with a count bonus and one starting from scratch.  The far
corner needs about twenty well-chosen moves, which a zero-initialised
greedy learner rarely stumbles on.

Run:  python demos/03_pretrain_then_finetune.py [seed]   (about 3 minutes)
"""

import sys

from apt_lab import agent as ag
from apt_lab.environments import far_corner_task, four_rooms
from apt_lab.experiments import coverage

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
env = four_rooms()
task_env = env.with_task(far_corner_task(env))
ft = ag.FinetuneConfig(total_steps=20_000)

scratch = ag.finetune(None, task_env, ft, seed)
print("scratch: episodes to 80% success =", scratch.episodes_to_success_rate())

for source in ("none", "count", "apt"):
    cfg = ag.TrainLoopConfig(total_steps=100_000, reward_source=source, reference="buffer")
    art = ag.pretrain(env, cfg, seed)
    line = f"{source:6s}: coverage {coverage(art.visited, env):.2f}"
    if source != "none":
        res = ag.finetune(art, task_env, ft, seed)
        line += f", episodes to 80% success = {res.episodes_to_success_rate()}"
    print(line)
