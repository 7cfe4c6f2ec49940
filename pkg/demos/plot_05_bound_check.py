"""
Empirical gap against the local SGD bound
=========================================

Run local SGD on a quadratic with identical data on every device and
compare the seed-averaged gap of the averaged iterate with the bound.
"""

import numpy as np

from defl.fl_sim import QuadraticTask, SimConfig, bound_check, sample_stochastic_gradient
from defl.system_model import DeviceProfile, Fleet, WirelessSystem

M = 10
system = WirelessSystem(bandwidth=1e6, noise_power=1e-9, update_bits=1e4)
fleet = Fleet(
    tuple(DeviceProfile(id=m, cycles_per_sample=1e6, samples=100, tx_power=0.1, channel_gain=1e-6, frequency=1e9)
          for m in range(M)),
    system,
)
task = QuadraticTask.make(d=10, M=M, seed=0, noise_sigma_sq=1.0)

for K, b, V in ((200, 1, 1), (200, 4, 2), (400, 16, 4)):
    rep = bound_check(task, SimConfig(fleet=fleet, V=V, H=K // V, b=b), n_seeds=30)
    print(f"K={K} b={b:2d} V={V}: mean gap {rep.mean_gap:.4f} +- {rep.stderr:.4f}, bound {rep.bound:.4g}")

###############################################################################
# Mini-batching divides the gradient noise by b.

w = np.zeros(10)
rng = np.random.default_rng(0)
for b in (1, 4, 16):
    g = np.array([sample_stochastic_gradient(task, 0, w, b, rng) for _ in range(5000)])
    print(f"b={b:2d}: total variance {np.var(g, axis=0).sum():.4f}")
