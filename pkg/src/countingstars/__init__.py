"""LEO constellation digital twin with collision-free port-aggregated flow counters."""

from .errors import CountingStarsError
from .scenario import Scenario, from_dict, load_scenario, reference_config
from .seeds import cantor_pair, cantor_unpair, min_perfect_modulus
from .sketch import CsNode
from .sim import measure, run, simulate

__version__ = "0.1.0"

__all__ = [
    "CountingStarsError", "CsNode", "Scenario", "cantor_pair", "cantor_unpair", "from_dict",
    "load_scenario", "measure", "min_perfect_modulus", "reference_config", "run", "simulate",
]
