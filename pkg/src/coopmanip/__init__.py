"""Distributed Bayesian online estimation for cooperative manipulation.

A team of impedance-controlled agents rigidly grasping a common object
locally estimates the object's mass, center-of-mass offsets, and inertia
from its own state and the shared reference signals. Local Gaussian
estimates are fused across a communication graph with dynamic average
consensus, and every estimate carries a high-probability error bound.
"""

from coopmanip.scenario import RunResult, ScenarioConfig, load_config, run_scenario

__version__ = "0.1.0"

__all__ = ["ScenarioConfig", "RunResult", "load_config", "run_scenario", "__version__"]
