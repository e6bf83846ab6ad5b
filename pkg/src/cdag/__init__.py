"""CDAG ledger and Colosseum election, embedded in a deterministic network simulator."""

from .config import SimConfig
from .ledger import Block, CBlock, LedgerStore, compute_delta
from .metrics import MetricsReport
from .simulation import Simulation, run

__version__ = "0.1.0"

__all__ = ["SimConfig", "Block", "CBlock", "LedgerStore", "compute_delta",
           "MetricsReport", "Simulation", "run", "__version__"]
