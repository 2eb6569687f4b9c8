"""Particle entropy on toy point sets.

Run:  python demos/01_particle_entropy.py
"""

import numpy as np

from apt_lab import EntropyConfig, intrinsic_rewards, particle_entropy
from apt_lab.entropy import hypersphere_volume

# Three particles on a line.  With k=1 each particle looks at its nearest
# neighbour: 0 and 1 are one apart, 3 is two away from 1.
plain = EntropyConfig(k=1, c=1.0, exponent_mode="plain")
print("rewards for {0, 1, 3}:", intrinsic_rewards([0.0, 1.0, 3.0], plain))
print("entropy:", particle_entropy([0.0, 1.0, 3.0], plain))

# Unit-ball volumes, the constant the estimator leaves out
for d in (1, 2, 3):
    print(f"volume of the unit {d}-ball: {hypersphere_volume(1.0, d):.6f}")

# Spread-out samples score higher than a tight cluster
rng = np.random.default_rng(0)
cfg = EntropyConfig(k=5)
uniform = rng.random((1000, 2))
cluster = rng.normal(0.5, 0.01, size=(1000, 2))
print("uniform square:", particle_entropy(uniform, cfg))
print("tight cluster: ", particle_entropy(cluster, cfg))

# Stretching the cloud never lowers any particle's reward
r1 = intrinsic_rewards(cluster, cfg)
r2 = intrinsic_rewards(3.0 * cluster, cfg)
print("all rewards grew under 3x scaling:", bool(np.all(r2 >= r1)))
