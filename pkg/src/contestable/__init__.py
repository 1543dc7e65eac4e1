"""Temporary contestable control: sequential auctions for DAO control rights."""
from .core import Bid, BidRejected, BusinessPlan, DepositSet, required_deposits, validate_bid
from .forfeit import ForfeitParams, forfeit_amount, transitional_forfeit
from .lifecycle import Dao, DaoParams, Status, TransitionError
from .money import SCALE, fmt, to_micros
from .scenario import ConfigError, ScenarioConfig, load_scenario
from .simulate import RunResult, run

__version__ = "0.1.0"

__all__ = [
    "Bid", "BidRejected", "BusinessPlan", "ConfigError", "Dao", "DaoParams", "DepositSet", "ForfeitParams",
    "RunResult", "SCALE", "ScenarioConfig", "Status", "TransitionError", "forfeit_amount", "fmt",
    "load_scenario", "required_deposits", "run", "to_micros", "transitional_forfeit", "validate_bid",
]
