"""Reliability-aware multi-modal traversability prediction and veto-based DWA planning."""
from . import core, encoders, fusion, planner, reliability, simworld

__version__ = "0.1.0"
__all__ = ["core", "simworld", "reliability", "encoders", "fusion", "planner", "__version__"]
