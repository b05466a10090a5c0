"""Expected-profit pricing on top of a fixed clustering."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clustering import Allocation, cluster_formation, singleton_allocation
from .model import DemandModel, TravelModel

MAX_ENUMERATION = 20
GRID_POINTS = 201
RATE_TOL = 1e-4
EPSILON_START = 0.999
DEFAULT_TOP_M = 12

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _as_arrays(p, c, q):
    p, c, q = (np.asarray(x, dtype=float).ravel() for x in (p, c, q))
    if not (p.shape == c.shape == q.shape):
        raise ValueError("p, c and q must have equal length")
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError("acceptance probabilities must lie in [0, 1]")
    return p, c, q


_MASKS: dict = {}


def _subset_masks(n: int) -> np.ndarray:
    if n not in _MASKS:
        _MASKS[n] = ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(bool)
    return _MASKS[n]


def _enumerate_batch(p, c, q) -> np.ndarray:
    """Subset-sum expectation for each row of (B, n) arrays."""
    n = p.shape[1]
    if n > MAX_ENUMERATION:
        raise ValueError(f"subset enumeration is limited to {MAX_ENUMERATION} passengers, got {n}")
    if n == 0:
        return np.zeros(p.shape[0])
    masks = _subset_masks(n)
    weights = np.ones((p.shape[0], masks.shape[0]))
    for k in range(n):
        weights *= np.where(masks[:, k], q[:, k:k + 1], 1.0 - q[:, k:k + 1])
    values = (p - c) @ masks.T.astype(float)
    return (weights * values).sum(axis=1)


def _enumerate(p, c, q) -> float:
    return float(_enumerate_batch(p[None, :], c[None, :], q[None, :])[0])


def expected_profit_exact(p, c, q) -> float:
    """Expected profit by summing over every subset of accepting passengers."""
    return _enumerate(*_as_arrays(p, c, q))


def expected_profit_separable(p, c, q) -> float:
    """Closed form of the subset sum when each passenger's cost is a constant."""
    p, c, q = _as_arrays(p, c, q)
    return float(np.sum(q * (p - c)))


def expected_profit_truncated(p, c, q, top_m: int = DEFAULT_TOP_M) -> float:
    """Enumerate subsets of the ``top_m`` most valuable passengers only.

    The remaining passengers enter through their marginal expectation
    ``q * (p - c)``, so the result agrees with the separable form up to rounding.
    """
    p, c, q = _as_arrays(p, c, q)
    n = len(p)
    if n == 0:
        return 0.0
    if not 1 <= top_m <= n:
        raise ValueError(f"top_m must lie in 1..{n}")
    contrib = q * (p - c)
    order = np.argsort(-contrib, kind="stable")
    head, tail = order[:top_m], order[top_m:]
    return _enumerate(p[head], c[head], q[head]) + float(contrib[tail].sum())


def golden_section_max(f, lo: float, hi: float, tol: float = RATE_TOL, max_iter: int = 200):
    """Maximise a unimodal scalar function on [lo, hi]; returns (x, f(x))."""
    a, b = lo, hi
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INVPHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INVPHI * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 >= f2 else (x2, f2)


@dataclass(frozen=True)
class Offer:
    passenger_id: int
    price: float
    distance_km: float
    deviation: float
    accept_prob: float
    marginal_cost: float
    cluster_index: int
    pickup_time: float
    dropoff_time: float


@dataclass(frozen=True)
class OfferSet:
    price_rate: float
    offers: tuple
    epsilon: float
    expected_profit: float
    allocation: Allocation = Allocation()

    def __len__(self):
        return len(self.offers)

    def by_passenger(self) -> dict:
        return {o.passenger_id: o for o in self.offers}

    def arrays(self):
        p = np.array([o.price for o in self.offers], dtype=float)
        c = np.array([o.marginal_cost for o in self.offers], dtype=float)
        q = np.array([o.accept_prob for o in self.offers], dtype=float)
        return p, c, q


@dataclass(frozen=True)
class PricingSolution:
    P_opt: float
    r_opt: float
    C_opt: Allocation
    offers: OfferSet


class ProfitObjective:
    """Expected profit as a function of the common price rate for a fixed allocation."""

    def __init__(self, allocation: Allocation, model: DemandModel, objective: str = "separable",
                 top_m: int = DEFAULT_TOP_M):
        if objective not in ("exact", "separable", "truncated"):
            raise ValueError(f"unknown objective {objective!r}")
        stops = allocation.stops
        self.allocation = allocation
        self.model = model
        self.objective = objective
        self.top_m = top_m
        self.distance = np.array([s.request.distance_km for s in stops], dtype=float)
        self.cost = np.array([s.marginal_cost for s in stops], dtype=float)
        self.dev_survival = np.asarray(model.deviation_survival([s.deviation.total for s in stops]), dtype=float)

    def accept_probs(self, rate: float) -> np.ndarray:
        return np.clip(float(self.model.rate_survival(rate)) * self.dev_survival, 0.0, 1.0)

    def __call__(self, rate: float) -> float:
        q = self.accept_probs(rate)
        p = rate * self.distance
        if self.objective == "exact":
            return expected_profit_exact(p, self.cost, q)
        if self.objective == "truncated" and len(p):
            return expected_profit_truncated(p, self.cost, q, min(self.top_m, len(p)))
        return expected_profit_separable(p, self.cost, q)

    def on_grid(self, rates: np.ndarray) -> np.ndarray:
        rates = np.asarray(rates, dtype=float)
        surv = np.asarray(self.model.rate_survival(rates), dtype=float)
        if self.objective == "separable" or len(self.distance) == 0:
            # sum_i q_i (r R_i - c_i) with q_i = S_r(r) S_d(dev_i)
            revenue = rates * float(self.dev_survival @ self.distance)
            cost = float(self.dev_survival @ self.cost)
            return surv * (revenue - cost)
        q = np.clip(surv[:, None] * self.dev_survival[None, :], 0.0, 1.0)
        p = rates[:, None] * self.distance[None, :]
        c = np.broadcast_to(self.cost, p.shape)
        if self.objective == "exact":
            return _enumerate_batch(p, c, q)
        m = min(self.top_m, p.shape[1])
        contrib = q * (p - c)
        order = np.argsort(-contrib, axis=1, kind="stable")
        head, tail = order[:, :m], order[:, m:]
        take = lambda a, idx: np.take_along_axis(a, idx, axis=1)
        return _enumerate_batch(take(p, head), take(c, head), take(q, head)) + take(contrib, tail).sum(axis=1)


def optimize_price_rate(objective: ProfitObjective, extra_rates=()) -> tuple:
    """Grid search over [0, r_u] then golden-section refinement of the best bracket.

    ``extra_rates`` are evaluated alongside the grid. Returns ``(rate, profit)``;
    ties go to the smaller rate.
    """
    r_u = objective.model.r_u
    grid = np.linspace(0.0, r_u, GRID_POINTS)
    values = objective.on_grid(grid)
    k = int(np.argmax(values))  # first maximum -> smallest rate
    best_r, best_v = float(grid[k]), float(values[k])
    lo, hi = float(grid[max(k - 1, 0)]), float(grid[min(k + 1, GRID_POINTS - 1)])
    r_ref, v_ref = golden_section_max(objective, lo, hi)
    candidates = [(best_r, best_v), (float(r_ref), float(v_ref))]
    candidates += [(float(r), float(objective(r))) for r in extra_rates if 0.0 <= r <= r_u]
    best_v = max(v for _, v in candidates)
    best_r = min(r for r, v in candidates if v >= best_v)
    return best_r, best_v


def make_offers(allocation: Allocation, model: DemandModel, rate: float, objective: str = "separable",
                top_m: int = DEFAULT_TOP_M) -> OfferSet:
    offers = []
    for j, cluster in enumerate(allocation.clusters):
        for s in cluster.stops:
            dev = s.deviation.total
            offers.append(Offer(
                passenger_id=s.passenger_id,
                price=rate * s.request.distance_km,
                distance_km=s.request.distance_km,
                deviation=dev,
                accept_prob=float(model.accept_probability(rate, dev)),
                marginal_cost=s.marginal_cost,
                cluster_index=j,
                pickup_time=s.pickup_time,
                dropoff_time=s.dropoff_time,
            ))
    value = ProfitObjective(allocation, model, objective, top_m)(rate)
    return OfferSet(rate, tuple(offers), allocation.epsilon, value, allocation)


def epsilon_schedule(eps_step: float) -> list:
    """Feasibility levels tried by the sweep, largest first, always ending at 0."""
    if eps_step <= 0:
        raise ValueError("eps_step must be positive")
    if eps_step > 1:
        return [0.0]
    levels = []
    k = 0
    while True:
        eps = EPSILON_START - k * eps_step
        if eps <= 1e-12:
            break
        levels.append(round(eps, 12))
        k += 1
    levels.append(0.0)
    return levels


def expected_profit_maximization(requests, n_vehicles: int, model: DemandModel, travel: TravelModel,
                                 eps_step: float, rng: np.random.Generator, objective: str = "separable",
                                 top_m: int = DEFAULT_TOP_M, first_feasible: bool = False) -> PricingSolution:
    """Sweep the feasibility level, cluster, price, and keep the most profitable triple.

    Every level clusters passengers in the same random order (one seed drawn
    from ``rng``), so the hard-constraint pass is identical to a stand-alone
    run with ``eps_step > 1`` on the same generator state.
    """
    seed = int(rng.integers(2 ** 63))
    best = None
    for eps in epsilon_schedule(eps_step):
        alloc = cluster_formation(requests, n_vehicles, eps, model, travel, np.random.default_rng(seed),
                                  first_feasible=first_feasible)
        obj = ProfitObjective(alloc, model, objective, top_m)
        rate, value = optimize_price_rate(obj, extra_rates=(model.expected_max_rate,))
        # later levels are smaller, so >= hands ties to the smaller epsilon
        if best is None or value >= best[0]:
            best = (value, rate, alloc)
    value, rate, alloc = best
    offers = make_offers(alloc, model, rate, objective, top_m)
    return PricingSolution(value, rate, alloc, offers)


def fixed_rate_offers(requests, n_vehicles: int, model: DemandModel, travel: TravelModel,
                      rng: np.random.Generator, pooling: bool = True) -> OfferSet:
    """Baseline: hard-constraint clusters priced at the mean maximum price rate.

    With ``pooling=False`` each vehicle carries at most one passenger.
    """
    seed = int(rng.integers(2 ** 63))
    sub = np.random.default_rng(seed)
    if pooling:
        alloc = cluster_formation(requests, n_vehicles, 0.0, model, travel, sub)
    else:
        alloc = singleton_allocation(requests, n_vehicles, model, travel, sub)
    return make_offers(alloc, model, model.expected_max_rate)
