"""
Sweeping accuracy, batch size and local error
=============================================

Analytic sweeps around the closed-form plan.
"""

from defl.cli import cmd_sweep
from defl.config import load_paper_defaults

cfg = load_paper_defaults()

for axis, values in (
    ("epsilon", [0.1, 0.03, 0.01, 0.003, 0.001]),
    ("b", [1, 4, 16, 64, 256, 1024]),
    ("theta", [0.05, 0.15, 0.5, 0.9]),
):
    print(f"\n{axis}")
    for row in cmd_sweep(cfg, axis, values):
        print(f"  {row.value:>8g}  b={row.b:>6g}  V={row.V:8.3f}  H={row.H:10.3f}  total={row.overall_time:10.4f} s")

###############################################################################
# Tightening epsilon costs time, a larger batch always helps in this model,
# and a looser local error needs more rounds.
