"""Decentralized entropic Wasserstein barycenters by accelerated stochastic dual methods."""

from .config import RunConfig
from .runtime import Trace, build_scenario, run

__all__ = ["RunConfig", "Trace", "build_scenario", "run"]
