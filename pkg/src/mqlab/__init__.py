"""Exact, coupling-based and Monte Carlo analysis of a fixed-price market with
history-driven customers."""

__version__ = "0.1.0"

from .errors import MqlabError  # noqa: E402
from .market import MarketSpec, PriorGrid, TheoremMode, elitist_scenario  # noqa: E402
from .strategies import make_strategy, strategy_from_config  # noqa: E402

__all__ = ["MarketSpec", "MqlabError", "PriorGrid", "TheoremMode", "elitist_scenario", "make_strategy",
           "strategy_from_config", "__version__"]
