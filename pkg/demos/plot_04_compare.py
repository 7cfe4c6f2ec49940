"""
Planned operating points against fixed baselines
================================================

Model-level overall time of the planned (b, V) against FedAvg-style
settings, plus simulated time to reach the target gap on a quadratic task.
"""

from defl.cli import cmd_compare, format_compare
from defl.config import load_paper_defaults

cfg = load_paper_defaults()
print(format_compare(cmd_compare(cfg)))

###############################################################################
# The same rows with a short simulation attached. Five seeds keep it quick.

print()
print(format_compare(cmd_compare(cfg, simulate=True, n_seeds=5)))
