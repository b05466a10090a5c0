"""How often to run the mechanism: ignored requests versus overtime passengers.

Units: ``T`` in minutes, ``lam`` per minute, ``zeta`` points per km^2, ``nu``
vehicle speed in km/h. The closed forms are written in terms of the distance
a vehicle covers in one interval, ``d = nu * T / 60`` km.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special


class NoSignChange(ValueError):
    """The bracket does not contain a crossover."""


@dataclass(frozen=True)
class RateParams:
    T: float
    lam: float
    zeta: float
    nu: float = 20.0
    kappa: float = 1.0  # request arrivals per minute; only used to simulate a request stream

    def __post_init__(self):
        for name in ("T", "lam", "zeta", "nu", "kappa"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")

    @property
    def speed_km_per_min(self) -> float:
        return self.nu / 60.0

    @property
    def reach_km(self) -> float:
        """Distance travelled in one interval."""
        return self.speed_km_per_min * self.T

    def with_T(self, T: float) -> "RateParams":
        return RateParams(T, self.lam, self.zeta, self.nu, self.kappa)


def q_function(x):
    """Gaussian upper tail probability."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def nearest_neighbor_pdf(zeta: float, z):
    """Density of the distance from the origin to the nearest point of a planar Poisson process."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("z must be non-negative")
    return np.exp(-zeta * math.pi * z ** 2) * 2.0 * math.pi * zeta * z


def p_ignore(params: RateParams) -> float:
    x = params.lam * params.T
    # expm1 keeps the small-x limit accurate
    return float(1.0 + math.expm1(-x) / x)


def p_overtime_paper(params: RateParams) -> float:
    """The closed form exactly as printed, with its extra exponential term."""
    d, zeta = params.reach_km, params.zeta
    head = (1.0 - 2.0 * math.pi * zeta * d) * math.exp(-math.pi * zeta * d * d)
    return float(head + (0.5 - q_function(d * math.sqrt(2.0 * math.pi * zeta))) / (d * math.sqrt(zeta)))


def p_overtime_derived(params: RateParams) -> float:
    """Probability that the trip to the nearest drop-off runs past the next mechanism run."""
    d, zeta = params.reach_km, params.zeta
    x = d * math.sqrt(2.0 * math.pi * zeta)
    if x < 1e-6:
        # 1/2 - Q(x) ~ x/sqrt(2 pi) - x^3/(6 sqrt(2 pi))
        return float(1.0 - x * x / 6.0)
    return float((0.5 - q_function(x)) / (d * math.sqrt(zeta)))


def p_overtime_quadrature(params: RateParams) -> float:
    """Adaptive quadrature of the conditional overtime probability against the distance law."""
    d, zeta = params.reach_km, params.zeta
    near, _ = integrate.quad(lambda z: z / d * nearest_neighbor_pdf(zeta, z), 0.0, d,
                             epsabs=1e-14, epsrel=1e-13, limit=200)
    far = math.exp(-math.pi * zeta * d * d)  # tail mass of the distance law beyond d
    return float(near + far)


@dataclass(frozen=True)
class Estimate:
    value: float
    half_width: float
    n: int

    @property
    def sigma(self) -> float:
        return self.half_width / 1.96

    def covers(self, x: float, k_sigma: float = 3.0) -> bool:
        return abs(self.value - x) <= k_sigma * max(self.sigma, 1.0 / self.n)


def _binomial(hits: int, n: int) -> Estimate:
    p = hits / n
    return Estimate(p, 1.96 * math.sqrt(p * (1 - p) / n), n)


def _nearest_distances(zeta: float, n: int, rng: np.random.Generator, chunk: int = 200_000) -> np.ndarray:
    """Nearest-point distances from the origin in independent Poisson patterns on a disc."""
    radius = math.sqrt(40.0 / (math.pi * zeta))  # empty-disc probability e^-40
    mean_count = zeta * math.pi * radius ** 2
    out = np.empty(n)
    done = 0
    while done < n:
        m = min(chunk, n - done)
        counts = rng.poisson(mean_count, m)
        counts = np.maximum(counts, 1)
        # points uniform on the disc: only their radii matter
        radii = radius * np.sqrt(rng.random(int(counts.sum())))
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        out[done:done + m] = np.minimum.reduceat(radii, starts)
        done += m
    return out


def mc_rate_oracle(params: RateParams, n_samples: int, rng: np.random.Generator) -> tuple:
    """Simulate both events; returns ``(p_ignore Estimate, p_overtime Estimate)`` with 95% intervals.

    A request arrives uniformly within its interval, wants to be picked up an
    exponential time later and is ignored when that happens before the next
    run. The served passenger's drop-off is the nearest point of a Poisson
    pattern around the pick-up, and the trip is overtime when it ends after
    the next run.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 10^4")
    T = params.T
    a = rng.uniform(0.0, T, n_samples)
    gap = rng.exponential(1.0 / params.lam, n_samples)
    ignored = int(np.count_nonzero(a + gap < T))
    z = _nearest_distances(params.zeta, n_samples, rng)
    overtime = int(np.count_nonzero(a + z / params.speed_km_per_min >= T))
    return _binomial(ignored, n_samples), _binomial(overtime, n_samples)


def request_times(params: RateParams, horizon: float, rng: np.random.Generator) -> np.ndarray:
    """Arrival times of a Poisson request stream with rate ``kappa`` on [0, horizon)."""
    n = rng.poisson(params.kappa * horizon)
    return np.sort(rng.uniform(0.0, horizon, n))


def crossover_gap(params: RateParams, T: float) -> float:
    p = params.with_T(T)
    return p_ignore(p) - p_overtime_derived(p)


def crossover(params: RateParams, bracket=(1e-3, 1e3), tol: float = 1e-6) -> float:
    """Interval length where ignoring and overtime are equally likely (bisection)."""
    lo, hi = map(float, bracket)
    if not 0 < lo < hi:
        raise NoSignChange(f"invalid bracket {bracket!r}")
    g_lo, g_hi = crossover_gap(params, lo), crossover_gap(params, hi)
    if g_lo == 0:
        return lo
    if g_hi == 0:
        return hi
    if (g_lo > 0) == (g_hi > 0):
        raise NoSignChange(f"no sign change on [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        g_mid = crossover_gap(params, mid)
        if g_mid == 0:
            return mid
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def tradeoff_table(lam: float, zeta: float, nu: float, t_min: float, t_max: float, points: int,
                   mc_samples: int = 0, rng: np.random.Generator | None = None) -> list:
    """Rows of (T, closed forms, optional Monte Carlo estimates) for a tradeoff curve."""
    if points < 2:
        raise ValueError("points must be at least 2")
    rows = []
    for T in np.linspace(t_min, t_max, points):
        p = RateParams(float(T), lam, zeta, nu)
        row = {
            "T": float(T),
            "p_ignore": p_ignore(p),
            "p_overtime_paper": p_overtime_paper(p),
            "p_overtime_derived": p_overtime_derived(p),
        }
        if mc_samples:
            ign, ovt = mc_rate_oracle(p, mc_samples, rng if rng is not None else np.random.default_rng(0))
            row.update(mc_ignore=ign.value, mc_ignore_ci=ign.half_width,
                       mc_overtime=ovt.value, mc_overtime_ci=ovt.half_width)
        rows.append(row)
    return rows
