"""Road network abstraction, passenger requests and the provider's demand model."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special


@dataclass(frozen=True)
class TravelModel:
    """Pairwise distances, travel times and costs between locations.

    Locations are integer indices into the matrices. Travel times are in
    minutes, distances in km, costs in euros.
    """

    distance: np.ndarray
    velocity_kmh: float
    cost_per_km: float
    depot: int = 0
    travel_time: np.ndarray = field(init=False, repr=False)
    travel_cost: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dist = np.array(self.distance, dtype=float)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise ValueError("distance must be a square matrix")
        if np.any(dist < 0) or not np.all(np.isfinite(dist)):
            raise ValueError("distances must be finite and non-negative")
        if self.velocity_kmh <= 0:
            raise ValueError("velocity_kmh must be positive")
        if self.cost_per_km < 0:
            raise ValueError("cost_per_km must be non-negative")
        if not 0 <= self.depot < dist.shape[0]:
            raise ValueError("depot is not a known location")
        np.fill_diagonal(dist, 0.0)
        tt = dist / self.velocity_kmh * 60.0
        tc = dist * self.cost_per_km
        for arr in (dist, tt, tc):
            arr.flags.writeable = False
        object.__setattr__(self, "distance", dist)
        object.__setattr__(self, "travel_time", tt)
        object.__setattr__(self, "travel_cost", tc)

    @classmethod
    def from_points(cls, points, velocity_kmh: float, cost_per_km: float, depot: int = 0) -> "TravelModel":
        """Euclidean travel model over planar points given in km."""
        pts = np.asarray(points, dtype=float)
        diff = pts[:, None, :] - pts[None, :, :]
        return cls(np.sqrt((diff ** 2).sum(axis=-1)), velocity_kmh, cost_per_km, depot)

    @property
    def locations(self) -> range:
        return range(self.distance.shape[0])

    def time(self, u: int, w: int) -> float:
        return float(self.travel_time[u, w])

    def cost(self, u: int, w: int) -> float:
        return float(self.travel_cost[u, w])

    def dist(self, u: int, w: int) -> float:
        return float(self.distance[u, w])


@dataclass(frozen=True)
class PassengerRequest:
    """Public part of a passenger's request. Times are minutes, distance km."""

    id: int
    pickup: int
    dropoff: int
    earliest_pickup: float
    latest_pickup: float
    latest_dropoff: float
    distance_km: float

    def __post_init__(self):
        if self.earliest_pickup > self.latest_pickup:
            raise ValueError(f"request {self.id}: earliest_pickup > latest_pickup")
        if self.latest_dropoff <= self.latest_pickup:
            raise ValueError(f"request {self.id}: latest_dropoff must exceed latest_pickup")
        if self.distance_km <= 0:
            raise ValueError(f"request {self.id}: distance_km must be positive")


@dataclass(frozen=True)
class PassengerThresholds:
    """Private acceptance thresholds: max price rate (euros/km), max deviation (min)."""

    max_price_rate: float
    max_deviation: float


@dataclass(frozen=True)
class DeviationBreakdown:
    pickup_dev: float
    dropoff_dev: float

    @property
    def total(self) -> float:
        return self.pickup_dev + self.dropoff_dev


ZERO_DEVIATION = DeviationBreakdown(0.0, 0.0)


def deviation(req: PassengerRequest, actual_pickup: float, actual_dropoff: float) -> DeviationBreakdown:
    """Deviation of an actual (pickup, dropoff) schedule from the request."""
    if actual_dropoff < actual_pickup:
        raise ValueError("actual_dropoff precedes actual_pickup")
    if actual_pickup < req.earliest_pickup:
        pickup_dev = req.earliest_pickup - actual_pickup
    elif actual_pickup > req.latest_pickup:
        pickup_dev = actual_pickup - req.latest_pickup
    else:
        pickup_dev = 0.0
    dropoff_dev = max(actual_dropoff - req.latest_dropoff, 0.0)
    return DeviationBreakdown(float(pickup_dev), float(dropoff_dev))


@dataclass(frozen=True)
class DemandModel:
    """Independent scaled-Beta laws for the max price rate and max deviation.

    ``r_max ~ r_u * Beta(alpha_r, beta_r)`` and
    ``delta_max ~ delta_u * Beta(alpha_d, beta_d)``.
    """

    alpha_r: float = 1.0
    beta_r: float = 1.0
    r_u: float = 3.0
    alpha_d: float = 3.0
    beta_d: float = 1.0
    delta_u: float = 30.0

    def __post_init__(self):
        for name in ("alpha_r", "beta_r", "r_u", "alpha_d", "beta_d", "delta_u"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")

    def rate_pdf(self, r):
        x = np.asarray(r, dtype=float) / self.r_u
        inside = (x >= 0) & (x <= 1)
        xc = np.clip(x, 0.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            dens = xc ** (self.alpha_r - 1) * (1 - xc) ** (self.beta_r - 1)
        dens = dens / (self.r_u * special.beta(self.alpha_r, self.beta_r))
        return np.where(inside, dens, 0.0)

    def rate_survival(self, r):
        """Pr(r_max >= r)."""
        x = np.clip(np.asarray(r, dtype=float) / self.r_u, 0.0, 1.0)
        return special.betaincc(self.alpha_r, self.beta_r, x)

    def deviation_survival(self, dev):
        """Pr(delta_max >= dev)."""
        x = np.clip(np.asarray(dev, dtype=float) / self.delta_u, 0.0, 1.0)
        return special.betaincc(self.alpha_d, self.beta_d, x)

    def accept_probability(self, rate, dev):
        """Probability an offer at ``rate`` with deviation ``dev`` is accepted."""
        p = self.rate_survival(rate) * self.deviation_survival(dev)
        p = np.clip(p, 0.0, 1.0)
        return float(p) if np.ndim(p) == 0 else p

    def sample(self, rng: np.random.Generator, size=None):
        """Draw ``(r_max, delta_max)`` arrays (or scalars when ``size`` is None)."""
        r = self.r_u * rng.beta(self.alpha_r, self.beta_r, size)
        d = self.delta_u * rng.beta(self.alpha_d, self.beta_d, size)
        return r, d

    def sample_thresholds(self, rng: np.random.Generator) -> PassengerThresholds:
        r, d = self.sample(rng)
        return PassengerThresholds(float(r), float(d))

    @property
    def expected_max_rate(self) -> float:
        return self.r_u * self.alpha_r / (self.alpha_r + self.beta_r)


def threshold_cdf(model: DemandModel, rate: float, dev: float) -> float:
    return model.accept_probability(rate, dev)


def sample_thresholds(model: DemandModel, rng: np.random.Generator) -> PassengerThresholds:
    return model.sample_thresholds(rng)


def expected_max_rate(model: DemandModel) -> float:
    return model.expected_max_rate


def passenger_decide(th: PassengerThresholds, price: float, distance_km: float, dev: float) -> bool:
    """True when the passenger accepts: both strict inequalities must hold."""
    if distance_km <= 0:
        raise ValueError("distance_km must be positive")
    return price / distance_km < th.max_price_rate and dev < th.max_deviation
