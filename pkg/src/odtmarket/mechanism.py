"""The four-stage negotiation between the provider and its passengers.

1. The provider offers every schedulable passenger a journey and a price.
2. Passengers reject or conditionally accept.
3. Per vehicle, the provider keeps the most profitable subset of accepters and
   prices the rest out at the support bound ``r_u``.
4. Passengers whose price went up decide again; everyone else is bound.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterRoute, route_cost
from .model import DemandModel, PassengerThresholds, TravelModel, passenger_decide
from .pricing import (
    DEFAULT_TOP_M, MAX_ENUMERATION, OfferSet, expected_profit_maximization, fixed_rate_offers,
)


@dataclass(frozen=True)
class OptimizedSweep:
    """Optimise the price rate over a sweep of feasibility levels (``eps_step > 1``: hard constraints only)."""

    eps_step: float = 0.2
    objective: str = "separable"
    top_m: int = DEFAULT_TOP_M
    first_feasible: bool = False
    name: str = "optimized"


@dataclass(frozen=True)
class FixedRate:
    """Charge the mean maximum price rate on hard-constraint clusters."""

    pooling: bool = True
    name: str = "fixed"


@dataclass(frozen=True)
class Scenario:
    requests: tuple
    travel: TravelModel
    model: DemandModel
    n_vehicles: int
    thresholds: dict | None = None  # passenger id -> PassengerThresholds


@dataclass(frozen=True)
class StageTrace:
    stage1_offers: OfferSet
    stage2_responses: dict = field(default_factory=dict)  # id -> bool (conditionally accepts)
    stage3_prices: dict = field(default_factory=dict)  # id -> euros, accepters only
    stage4_decisions: dict = field(default_factory=dict)  # id -> bool (unconditionally accepts)
    breached: frozenset = frozenset()

    def to_dict(self) -> dict:
        offers = self.stage1_offers
        return {
            "stage1": {
                "price_rate": offers.price_rate,
                "epsilon": offers.epsilon,
                "expected_profit": offers.expected_profit,
                "offers": [
                    {
                        "passenger": o.passenger_id,
                        "price": o.price,
                        "distance_km": o.distance_km,
                        "deviation": o.deviation,
                        "accept_prob": o.accept_prob,
                        "marginal_cost": o.marginal_cost,
                        "vehicle": o.cluster_index,
                        "pickup_time": o.pickup_time,
                        "dropoff_time": o.dropoff_time,
                    }
                    for o in offers.offers
                ],
                "unassigned": list(offers.allocation.unassigned),
            },
            "stage2": {str(k): ("accept" if v else "reject") for k, v in self.stage2_responses.items()},
            "stage3": {str(k): v for k, v in self.stage3_prices.items()},
            "stage4": {str(k): ("accept" if v else "reject") for k, v in self.stage4_decisions.items()},
            "breached": sorted(self.breached),
        }


@dataclass(frozen=True)
class MechanismOutcome:
    serviced: frozenset
    realized_profit: float
    efficiency: float
    efficiency_per_meter: float
    final_routes: tuple
    trace: StageTrace

    @property
    def expected_profit(self) -> float:
        return self.trace.stage1_offers.expected_profit

    def to_dict(self) -> dict:
        return {
            "serviced": sorted(self.serviced),
            "realized_profit": self.realized_profit,
            "efficiency": self.efficiency,
            "efficiency_per_meter": self.efficiency_per_meter,
            "expected_profit": self.expected_profit,
            "routes": [
                {
                    "vehicle": r.vehicle_id,
                    "stops": [
                        {"passenger": s.passenger_id, "pickup_time": s.pickup_time, "dropoff_time": s.dropoff_time}
                        for s in r.stops
                    ],
                }
                for r in self.final_routes
            ],
            "trace": self.trace.to_dict(),
        }


def run_stage1(requests, n_vehicles: int, model: DemandModel, travel: TravelModel, policy,
               rng: np.random.Generator) -> OfferSet:
    if isinstance(policy, FixedRate):
        return fixed_rate_offers(requests, n_vehicles, model, travel, rng, pooling=policy.pooling)
    if isinstance(policy, OptimizedSweep):
        sol = expected_profit_maximization(requests, n_vehicles, model, travel, policy.eps_step, rng,
                                           objective=policy.objective, top_m=policy.top_m,
                                           first_feasible=policy.first_feasible)
        return sol.offers
    raise TypeError(f"unknown policy {policy!r}")


def run_stage2(offers: OfferSet, thresholds: dict) -> dict:
    """Conditional acceptance per offered passenger."""
    return {
        o.passenger_id: passenger_decide(thresholds[o.passenger_id], o.price, o.distance_km, o.deviation)
        for o in offers.offers
    }


def best_subset(route: ClusterRoute, revenue: dict, travel: TravelModel) -> tuple:
    """Subset of the route's passengers maximising revenue minus spliced route cost.

    The visiting order is fixed, so the spliced cost only depends on which
    consecutive kept stops are linked. Dynamic programming over the last kept
    stop gives the exact optimum in O(n^2). Returns ``(kept ids, value)``;
    the empty set (value 0) wins ties.
    """
    stops = route.stops
    n = len(stops)
    if n == 0:
        return (), 0.0
    depot = travel.depot
    own = [revenue[s.passenger_id] - travel.cost(s.request.pickup, s.request.dropoff) for s in stops]
    value = [0.0] * n
    parent = [-1] * n
    for j, s in enumerate(stops):
        best, arg = -travel.cost(depot, s.request.pickup), -1
        for i in range(j):
            cand = value[i] - travel.cost(stops[i].request.dropoff, s.request.pickup)
            if cand > best:
                best, arg = cand, i
        value[j] = best + own[j]
        parent[j] = arg
    total = [value[j] - travel.cost(stops[j].request.dropoff, depot) for j in range(n)]
    last = int(np.argmax(total))
    if total[last] <= 0:
        return (), 0.0
    kept = []
    j = last
    while j >= 0:
        kept.append(stops[j].passenger_id)
        j = parent[j]
    return tuple(reversed(kept)), float(total[last])


def best_subset_bruteforce(route: ClusterRoute, revenue: dict, travel: TravelModel) -> tuple:
    """Reference enumeration over all subsets (at most ``MAX_ENUMERATION`` stops)."""
    stops = route.stops
    n = len(stops)
    if n > MAX_ENUMERATION:
        raise ValueError(f"cluster has {n} accepters, enumeration limited to {MAX_ENUMERATION}")
    best_ids, best_val = (), 0.0
    for mask in range(1, 1 << n):
        kept = [s for k, s in enumerate(stops) if mask >> k & 1]
        val = sum(revenue[s.passenger_id] for s in kept) - route_cost([s.request for s in kept], travel)
        if val > best_val:
            best_ids, best_val = tuple(s.passenger_id for s in kept), val
    return best_ids, best_val


def run_stage3(offers: OfferSet, responses: dict, travel: TravelModel, model: DemandModel):
    """Final prices for every conditional accepter and the routes of the kept passengers.

    Returns ``(prices, kept ids, routes)``. Kept passengers pay their first
    offer; the other accepters are quoted ``r_u`` per km.
    """
    by_id = offers.by_passenger()
    prices, kept_ids, routes = {}, set(), []
    for route in offers.allocation.clusters:
        accepted = route.keep(pid for pid in route.passenger_ids if responses.get(pid, False))
        revenue = {pid: by_id[pid].price for pid in accepted.passenger_ids}
        kept, _ = best_subset(accepted, revenue, travel)
        kept_ids.update(kept)
        for pid in accepted.passenger_ids:
            prices[pid] = by_id[pid].price if pid in kept else model.r_u * by_id[pid].distance_km
        routes.append(accepted.keep(kept))
    return prices, kept_ids, routes


def run_stage4(offers: OfferSet, responses: dict, prices: dict, routes, thresholds: dict,
               travel: TravelModel) -> MechanismOutcome:
    by_id = offers.by_passenger()
    breached = frozenset(pid for pid, price in prices.items() if price > by_id[pid].price)
    decisions = {}
    for pid, price in prices.items():
        if pid in breached:
            o = by_id[pid]
            decisions[pid] = passenger_decide(thresholds[pid], price, o.distance_km, o.deviation)
        else:
            decisions[pid] = True
    # a breached passenger who still accepts has no vehicle in our fleet
    serviced = frozenset(pid for pid, ok in decisions.items() if ok and pid not in breached)
    final_routes = tuple(r.keep(serviced) for r in routes)
    final_routes = tuple(r for r in final_routes if len(r))
    revenue = sum(prices[pid] for pid in serviced)
    cost = sum(r.route_cost(travel) for r in final_routes)
    eff = sum(thresholds[pid].max_price_rate * by_id[pid].distance_km for pid in serviced)
    metres = 1000.0 * sum(by_id[pid].distance_km for pid in serviced)
    trace = StageTrace(offers, dict(responses), dict(prices), decisions, breached)
    return MechanismOutcome(serviced, float(revenue - cost), float(eff),
                            float(eff / metres) if metres > 0 else 0.0, final_routes, trace)


def run_mechanism(scenario: Scenario, policy, rng: np.random.Generator) -> MechanismOutcome:
    """Run all four stages. Thresholds are sampled from ``rng`` unless the scenario fixes them."""
    thresholds = scenario.thresholds
    if thresholds is None:
        thresholds = {req.id: scenario.model.sample_thresholds(rng) for req in scenario.requests}
    if scenario.n_vehicles <= 0:
        offers = OfferSet(0.0, (), 0.0, 0.0)
    else:
        offers = run_stage1(scenario.requests, scenario.n_vehicles, scenario.model, scenario.travel, policy, rng)
    responses = run_stage2(offers, thresholds)
    prices, _, routes = run_stage3(offers, responses, scenario.travel, scenario.model)
    return run_stage4(offers, responses, prices, routes, thresholds, scenario.travel)


def sample_thresholds(requests, model: DemandModel, rng: np.random.Generator) -> dict:
    r, d = model.sample(rng, len(requests))
    return {req.id: PassengerThresholds(float(r[k]), float(d[k])) for k, req in enumerate(requests)}
