"""
Where the time goes in one training run
=======================================

Walk through the latency model on the bundled default fleet: per-device
compute and upload time, the round time, and how many rounds are needed.
"""

from defl.config import load_paper_defaults
from defl.delay_model import overall_time, round_time, rounds_to_converge
from defl.system_model import bottleneck_device, fleet_comm_time, fleet_compute_time, uplink_time

cfg = load_paper_defaults()
fleet = cfg.fleet

###############################################################################
# Every device here is identical, so the bottleneck is simply the first one.
# Uploading a 1.66M-parameter model over 20 MHz takes about a third of a
# second.

idx, dev_id, ratio = bottleneck_device(fleet)
print(f"bottleneck: {dev_id}, {ratio:.3e} s per sample")
print(f"upload time: {uplink_time(fleet.devices[0], fleet.system):.4f} s")

###############################################################################
# A round costs one upload plus V local steps of b samples each.

for b, V in ((10, 20), (32, 5), (1024, 1)):
    t_cp = fleet_compute_time(fleet, b)
    T = round_time(fleet_comm_time(fleet), V, t_cp)
    H = rounds_to_converge(cfg.learning(alpha=V / cfg.nu), b)
    print(f"b={b:5d} V={V:3d}: step {t_cp:.4f} s, round {T:.3f} s, H={H:9.2f}, total {overall_time(H, T):8.3f} s")
