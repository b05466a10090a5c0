"""Profit-driven pricing and clustering for coordinated on-demand transport."""
from .clustering import Allocation, ClusterRoute, InsertionPlan, cluster_formation, epsilon_feasible, insert_best
from .mechanism import FixedRate, MechanismOutcome, OptimizedSweep, Scenario, run_mechanism
from .model import (
    DemandModel, DeviationBreakdown, PassengerRequest, PassengerThresholds, TravelModel, deviation,
    passenger_decide,
)
from .pricing import OfferSet, PricingSolution, expected_profit_maximization, fixed_rate_offers
from .rate_analysis import RateParams, crossover, p_ignore, p_overtime_derived, p_overtime_paper

__version__ = "0.1.0"
