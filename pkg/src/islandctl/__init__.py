"""Blackout mitigation for microgrids.

Step one reserves storage energy ahead of a blackout with a chance-constrained
MILP run as model predictive control. Step two keeps an islanded grid balanced
with a distributed request/response protocol built on max- and min-consensus.
"""

__version__ = "0.1.0"
