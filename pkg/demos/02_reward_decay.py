"""Intrinsic rewards fade once every state has been seen often enough.

The agent explores a 10x10 room with rewards measured against the whole
replay buffer.  When every state has more than k copies in the buffer its
k nearest neighbours are copies of itself, the distance is 0 and the
reward is log(1 + 0) = 0.

Run:  python demos/02_reward_decay.py [total_steps]   (default 50000)
"""

import sys

from apt_lab import experiments as ex

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 50_000
cfg = ex.RunConfig(layout="open_room", width=10, height=10, k=5, total_steps=steps,
                   reference="buffer", epoch_length=max(steps // 20, 1000)).validate()
res = ex.reward_decay_experiment(cfg, seed=0)

print("epoch  mean raw intrinsic reward")
for epoch, mean in res.epochs:
    print(f"{epoch:5d}  {mean:.3e}")
print(f"last/first = {res.ratio:.3g}  ->  {'PASS' if res.passed else 'FAIL'} at threshold {res.threshold}")
print(f"coverage {res.coverage:.2f}")
