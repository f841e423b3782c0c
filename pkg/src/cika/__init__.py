"""Causal knowledge-activation workbench.

Interventional capability probes, exact synthetic SCM oracles, causal UCB
search and the end-to-end activation pipeline.
"""

__version__ = "0.1.0"
