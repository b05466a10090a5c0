"""Probabilistically feasible insertion and cluster formation for unit-capacity vehicles.

Each cluster is the ordered list of passengers one vehicle serves, leaving the
depot at time 0 and returning when done. With one seat per vehicle every
passenger rides directly from pickup to dropoff, so a stop is a
(pickup time, dropoff time) pair and consecutive stops must not overlap.
A passenger may only be inserted where the committed times of the passengers
already in the cluster stay untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DemandModel, DeviationBreakdown, PassengerRequest, TravelModel, deviation

# slack for float comparisons of times and probabilities
_TOL = 1e-9


@dataclass(frozen=True)
class Stop:
    request: PassengerRequest
    pickup_time: float
    dropoff_time: float
    deviation: DeviationBreakdown
    marginal_cost: float

    @property
    def passenger_id(self) -> int:
        return self.request.id


@dataclass(frozen=True)
class ClusterRoute:
    vehicle_id: int
    stops: tuple = ()

    def __len__(self):
        return len(self.stops)

    @property
    def passenger_ids(self) -> list:
        return [s.passenger_id for s in self.stops]

    def route_cost(self, travel: TravelModel) -> float:
        return route_cost([s.request for s in self.stops], travel)

    def with_stop(self, position: int, stop: Stop) -> "ClusterRoute":
        stops = self.stops[:position] + (stop,) + self.stops[position:]
        return ClusterRoute(self.vehicle_id, stops)

    def keep(self, passenger_ids) -> "ClusterRoute":
        """Splice out every stop whose passenger is not in ``passenger_ids``."""
        keep = set(passenger_ids)
        return ClusterRoute(self.vehicle_id, tuple(s for s in self.stops if s.passenger_id in keep))

    def check(self, travel: TravelModel) -> None:
        """Raise AssertionError if the schedule violates the unit-capacity timing rules."""
        t = 0.0
        loc = travel.depot
        for s in self.stops:
            req = s.request
            assert s.pickup_time + _TOL >= t + travel.time(loc, req.pickup), "stop overlaps predecessor"
            ride = travel.time(req.pickup, req.dropoff)
            assert abs(s.dropoff_time - (s.pickup_time + ride)) <= _TOL, "dropoff is not pickup + ride"
            t, loc = s.dropoff_time, req.dropoff


def route_cost(requests, travel: TravelModel) -> float:
    """Cost of depot -> p1 -> d1 -> p2 -> d2 ... -> depot (0 for no requests)."""
    if not requests:
        return 0.0
    seq = [travel.depot]
    for req in requests:
        seq += [req.pickup, req.dropoff]
    seq.append(travel.depot)
    return float(sum(travel.cost(u, w) for u, w in zip(seq[:-1], seq[1:])))


@dataclass(frozen=True)
class InsertionPlan:
    cluster_index: int  # == len(allocation.clusters) for a new singleton cluster
    position: int  # 0-based; insert before stops[position]
    pickup_time: float
    dropoff_time: float
    deviation: DeviationBreakdown
    marginal_cost: float


@dataclass(frozen=True)
class Allocation:
    clusters: tuple = ()
    unassigned: tuple = ()
    epsilon: float = 0.0

    @property
    def stops(self) -> list:
        return [s for c in self.clusters for s in c.stops]

    def total_cost(self, travel: TravelModel) -> float:
        return sum(c.route_cost(travel) for c in self.clusters)

    def check(self, travel: TravelModel, model: DemandModel) -> None:
        seen = set()
        for c in self.clusters:
            c.check(travel)
            for s in c.stops:
                assert s.passenger_id not in seen, f"passenger {s.passenger_id} clustered twice"
                seen.add(s.passenger_id)
                assert epsilon_feasible(model, s.deviation.total, self.epsilon)
        assert not seen & set(self.unassigned)


def epsilon_feasible(model: DemandModel, dev: float, epsilon: float) -> bool:
    """Whether a journey with deviation ``dev`` is acceptable with probability >= 1 - epsilon."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if dev <= 0:
        return True
    if epsilon <= 0:
        # continuous deviation law: any positive deviation has survival < 1
        return False
    return float(model.deviation_survival(dev)) >= 1.0 - epsilon - 1e-12


def _neighbors(cluster: ClusterRoute, position: int, travel: TravelModel):
    """(location, ready time) of the predecessor and (location, deadline) of the successor."""
    if position > 0:
        prev = cluster.stops[position - 1]
        prev_loc, ready = prev.request.dropoff, prev.dropoff_time
    else:
        prev_loc, ready = travel.depot, 0.0
    if position < len(cluster.stops):
        nxt = cluster.stops[position]
        next_loc, deadline = nxt.request.pickup, nxt.pickup_time
    else:
        next_loc, deadline = travel.depot, math.inf
    return prev_loc, ready, next_loc, deadline


def best_times_at_position(cluster: ClusterRoute, req: PassengerRequest, position: int, travel: TravelModel):
    """Minimum-deviation pickup/dropoff times for ``req`` inserted before ``stops[position]``.

    Returns ``(pickup_time, dropoff_time, DeviationBreakdown)`` or None when the
    passenger's leg chain does not fit between the neighbours. Among times with
    equal deviation the earliest pickup is chosen.
    """
    if not 0 <= position <= len(cluster.stops):
        raise IndexError(f"position {position} outside 0..{len(cluster.stops)}")
    prev_loc, ready, next_loc, deadline = _neighbors(cluster, position, travel)
    ride = travel.time(req.pickup, req.dropoff)
    lo = ready + travel.time(prev_loc, req.pickup)
    # the return leg to the depot has no deadline
    hi = deadline - travel.time(req.dropoff, next_loc) - ride if math.isfinite(deadline) else math.inf
    if lo > hi + _TOL:
        return None
    hi = max(hi, lo)
    # deviation is convex piecewise linear in the pickup time; its minimisers
    # start at one of these breakpoints
    candidates = {lo}
    for t in (req.earliest_pickup, req.latest_pickup, req.latest_dropoff - ride):
        if lo < t <= hi:
            candidates.add(t)
    if math.isfinite(hi):
        candidates.add(hi)
    best = None
    for t in sorted(candidates):
        dev = deviation(req, t, t + ride)
        if best is None or dev.total < best[2].total - 1e-12:
            best = (t, t + ride, dev)
    return best


def marginal_insertion_cost(cluster: ClusterRoute, req: PassengerRequest, position: int, travel: TravelModel,
                            raw: bool = False) -> float:
    """Net route-cost change of inserting ``req`` before ``stops[position]``.

    With ``raw=True`` returns only the two connecting legs (prev -> pickup and
    dropoff -> next) without the ride leg or the removed prev -> next leg.
    """
    if not 0 <= position <= len(cluster.stops):
        raise IndexError(f"position {position} outside 0..{len(cluster.stops)}")
    prev_loc = cluster.stops[position - 1].request.dropoff if position > 0 else travel.depot
    next_loc = cluster.stops[position].request.pickup if position < len(cluster.stops) else travel.depot
    legs = travel.cost(prev_loc, req.pickup) + travel.cost(req.dropoff, next_loc)
    if raw:
        return legs
    return legs + travel.cost(req.pickup, req.dropoff) - travel.cost(prev_loc, next_loc)


def _scan_cluster(cluster, j, req, epsilon, model, travel, best, first_feasible):
    for pos in range(len(cluster.stops) + 1):
        times = best_times_at_position(cluster, req, pos, travel)
        if times is None:
            continue
        t_p, t_d, dev = times
        if not epsilon_feasible(model, dev.total, epsilon):
            continue
        cost = marginal_insertion_cost(cluster, req, pos, travel)
        if best is None or cost < best.marginal_cost:
            best = InsertionPlan(j, pos, t_p, t_d, dev, cost)
            if first_feasible:
                return best, True
    return best, False


def insert_best(req: PassengerRequest, allocation: Allocation, epsilon: float, model: DemandModel,
                travel: TravelModel, n_vehicles: int, c_best: float = math.inf,
                first_feasible: bool = False) -> InsertionPlan | None:
    """Cheapest feasible insertion of ``req`` over all clusters and a fresh vehicle.

    A plan must keep the existing schedule intact, be epsilon-feasible at its
    minimum-deviation times and strictly beat ``c_best``. Clusters are scanned
    in index order, positions left to right, and a new singleton last, so ties
    go to the lowest cluster index and position. With ``first_feasible`` the
    scan stops at the first qualifying plan.
    """
    best = None
    if math.isfinite(c_best):
        # seed with a sentinel so only strictly cheaper plans are kept
        best = InsertionPlan(-1, -1, math.nan, math.nan, DeviationBreakdown(0.0, 0.0), c_best)
    candidates = list(enumerate(allocation.clusters))
    if len(allocation.clusters) < n_vehicles:
        candidates.append((len(allocation.clusters), ClusterRoute(len(allocation.clusters))))
    for j, cluster in candidates:
        best, done = _scan_cluster(cluster, j, req, epsilon, model, travel, best, first_feasible)
        if done:
            break
    if best is None or best.cluster_index < 0:
        return None
    return best


def apply_insertion(allocation: Allocation, req: PassengerRequest, plan: InsertionPlan) -> Allocation:
    stop = Stop(req, plan.pickup_time, plan.dropoff_time, plan.deviation, plan.marginal_cost)
    clusters = list(allocation.clusters)
    if plan.cluster_index == len(clusters):
        clusters.append(ClusterRoute(plan.cluster_index))
    clusters[plan.cluster_index] = clusters[plan.cluster_index].with_stop(plan.position, stop)
    return Allocation(tuple(clusters), allocation.unassigned, allocation.epsilon)


def cluster_formation(requests, n_vehicles: int, epsilon: float, model: DemandModel, travel: TravelModel,
                      rng: np.random.Generator, first_feasible: bool = False) -> Allocation:
    """Greedy insertion of passengers, taken in random order, into at most ``n_vehicles`` clusters."""
    if n_vehicles < 0:
        raise ValueError("n_vehicles must be non-negative")
    requests = list(requests)
    order = rng.permutation(len(requests)) if requests else []
    alloc = Allocation(epsilon=epsilon)
    unassigned = []
    for idx in order:
        req = requests[idx]
        plan = insert_best(req, alloc, epsilon, model, travel, n_vehicles, first_feasible=first_feasible)
        if plan is None:
            unassigned.append(req.id)
        else:
            alloc = apply_insertion(alloc, req, plan)
    return Allocation(alloc.clusters, tuple(unassigned), epsilon)


def singleton_allocation(requests, n_vehicles: int, model: DemandModel, travel: TravelModel,
                         rng: np.random.Generator) -> Allocation:
    """One passenger per vehicle at zero deviation, first come in random order."""
    requests = list(requests)
    order = rng.permutation(len(requests)) if requests else []
    clusters, unassigned = [], []
    for idx in order:
        req = requests[idx]
        if len(clusters) < n_vehicles:
            times = best_times_at_position(ClusterRoute(len(clusters)), req, 0, travel)
            if times is not None and times[2].total <= 0:
                cost = marginal_insertion_cost(ClusterRoute(len(clusters)), req, 0, travel)
                clusters.append(ClusterRoute(len(clusters), (Stop(req, times[0], times[1], times[2], cost),)))
                continue
        unassigned.append(req.id)
    return Allocation(tuple(clusters), tuple(unassigned), 0.0)
