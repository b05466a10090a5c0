"""Scenario generation, Monte Carlo campaigns and report writing."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .mechanism import FixedRate, OptimizedSweep, Scenario, run_mechanism, sample_thresholds
from .model import DemandModel, PassengerRequest, TravelModel

DEMAND_REGIMES = {
    "high": (3.0, 1.0),
    "medium": (1.0, 1.0),
    "low": (1.0, 3.0),
}

METRICS = ("expected_profit", "realized_profit", "efficiency", "efficiency_per_meter", "serviced")
CSV_COLUMNS = ("policy", "n_passengers", "metric", "mean", "ci_low", "ci_high", "n_reps")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    n_passengers: int = 5
    n_vehicles: int = 5
    region_km: float = 10.0
    velocity_kmh: float = 30.0
    cost_per_km: float = 0.4
    r_u: float = 3.0
    delta_u: float = 30.0
    alpha_r: float = 1.0
    beta_r: float = 1.0
    alpha_d: float = 3.0
    beta_d: float = 1.0
    interval_minutes: float = 60.0
    max_pickup_window: float = 10.0
    dropoff_slack: float = 15.0
    eps_step: float = 0.2
    seed: int = 0
    mode: str = "exact"
    top_m: int = 12
    first_feasible: bool = True

    def __post_init__(self):
        if self.n_passengers < 0:
            raise ConfigError("n_passengers must be >= 0")
        if self.n_vehicles < 1:
            raise ConfigError("n_vehicles must be >= 1")
        if self.mode not in ("exact", "large_scale"):
            raise ConfigError(f"mode must be 'exact' or 'large_scale', got {self.mode!r}")
        if self.mode == "exact" and self.n_passengers > 20:
            raise ConfigError("exact mode supports at most 20 passengers")
        if self.top_m < 1:
            raise ConfigError("top_m must be >= 1")
        if self.eps_step <= 0:
            raise ConfigError("eps_step must be positive")
        for name in ("region_km", "velocity_kmh", "r_u", "delta_u", "alpha_r", "beta_r", "alpha_d",
                     "beta_d", "interval_minutes"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("cost_per_km", "max_pickup_window", "dropoff_slack"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def demand_model(self) -> DemandModel:
        return DemandModel(self.alpha_r, self.beta_r, self.r_u, self.alpha_d, self.beta_d, self.delta_u)

    def policies(self) -> dict:
        """Policies compared by a campaign, keyed by report name."""
        large = self.mode == "large_scale"
        objective = "truncated" if large else "separable"
        ff = self.first_feasible and large
        return {
            "optimized": OptimizedSweep(self.eps_step, objective, self.top_m, ff, "optimized"),
            "hard": OptimizedSweep(2.0, objective, self.top_m, ff, "hard"),
            "fixed": FixedRate(pooling=not large),
        }


def _parse_value(kind, raw: str):
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def parse_config(text: str) -> ScenarioConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, unknown keys are errors."""
    kinds = {f.name: f.type for f in fields(ScenarioConfig)}
    kinds = {k: {"int": int, "float": float, "bool": bool, "str": str}.get(v, v) for k, v in kinds.items()}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, raw = line.split("=", 1)
        elif ":" in line:
            key, raw = line.split(":", 1)
        else:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = key.strip(), raw.strip()
        if key not in kinds:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _parse_value(kinds[key], raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return ScenarioConfig(**values)


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(str(exc)) from None


def format_config(cfg: ScenarioConfig) -> str:
    return "".join(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n" for k, v in asdict(cfg).items())


def generate_scenario(cfg: ScenarioConfig, rng: np.random.Generator) -> Scenario:
    """Random requests in a square region with the depot at its centre.

    Pick-up windows open uniformly over the run interval and last up to
    ``max_pickup_window`` minutes; the latest drop-off leaves the direct ride
    time plus ``dropoff_slack`` after the window closes.
    """
    n = cfg.n_passengers
    side = cfg.region_km
    depot = np.array([[side / 2.0, side / 2.0]])
    pickups = rng.uniform(0.0, side, (n, 2))
    dropoffs = rng.uniform(0.0, side, (n, 2))
    points = np.vstack([depot, pickups, dropoffs])
    travel = TravelModel.from_points(points, cfg.velocity_kmh, cfg.cost_per_km, depot=0)
    starts = rng.uniform(0.0, cfg.interval_minutes, n)
    windows = rng.uniform(0.0, cfg.max_pickup_window, n)
    requests = []
    for i in range(n):
        p, d = 1 + i, 1 + n + i
        ride = travel.time(p, d)
        a = float(starts[i])
        b = a + float(windows[i])
        requests.append(PassengerRequest(i, p, d, a, b, b + ride + cfg.dropoff_slack, travel.dist(p, d)))
    model = cfg.demand_model
    thresholds = sample_thresholds(requests, model, rng)
    return Scenario(tuple(requests), travel, model, cfg.n_vehicles, thresholds)


def replication_rngs(seed: int, rep: int):
    """Independent streams for scenario draws and policy randomness of one replication."""
    ss = np.random.SeedSequence([seed, rep])
    scen, pol = ss.spawn(2)
    return np.random.default_rng(scen), pol


def run_replication(cfg: ScenarioConfig, rep: int) -> dict:
    """All policies on one scenario with common random numbers; returns metric values per policy."""
    scen_rng, pol_ss = replication_rngs(cfg.seed, rep)
    scenario = generate_scenario(cfg, scen_rng)
    out = {}
    for name, policy in cfg.policies().items():
        outcome = run_mechanism(scenario, policy, np.random.default_rng(pol_ss))
        out[name] = {
            "expected_profit": outcome.expected_profit,
            "realized_profit": outcome.realized_profit,
            "efficiency": outcome.efficiency,
            "efficiency_per_meter": outcome.efficiency_per_meter,
            "serviced": float(len(outcome.serviced)),
        }
    return out


def _run_chunk(args):
    cfg, reps = args
    return [run_replication(cfg, r) for r in reps]


def worker_count() -> int:
    cap = os.environ.get("ODT_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"ODT_THREADS must be an integer, got {cap!r}") from None
    return n


def run_replications(cfg: ScenarioConfig, n_reps: int, workers: int | None = None) -> list:
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    workers = worker_count() if workers is None else workers
    reps = list(range(n_reps))
    if workers <= 1 or n_reps < 8:
        return [run_replication(cfg, r) for r in reps]
    chunks = [reps[k::workers] for k in range(workers)]
    with ProcessPoolExecutor(workers) as pool:
        parts = list(pool.map(_run_chunk, [(cfg, c) for c in chunks]))
    results = [None] * n_reps
    for chunk, part in zip(chunks, parts):
        for r, res in zip(chunk, part):
            results[r] = res
    return results


@dataclass(frozen=True)
class Summary:
    mean: float
    half_width: float
    n: int

    @property
    def ci(self) -> tuple:
        return self.mean - self.half_width, self.mean + self.half_width

    def overlaps(self, other: "Summary") -> bool:
        lo1, hi1 = self.ci
        lo2, hi2 = other.ci
        return lo1 <= hi2 and lo2 <= hi1


def summarize(values) -> Summary:
    """Mean and 95% normal-approximation confidence half-width."""
    x = np.asarray(values, dtype=float)
    n = len(x)
    if n == 0:
        raise ValueError("no values")
    sd = float(x.std(ddof=1)) if n > 1 else 0.0
    return Summary(float(x.mean()), 1.96 * sd / math.sqrt(n), n)


@dataclass
class ExperimentReport:
    config: ScenarioConfig
    n_reps: int
    raw: dict  # n_passengers -> list of per-replication results

    def values(self, n_passengers: int, policy: str, metric: str) -> np.ndarray:
        return np.array([r[policy][metric] for r in self.raw[n_passengers]])

    def summary(self, n_passengers: int, policy: str, metric: str) -> Summary:
        return summarize(self.values(n_passengers, policy, metric))

    def paired_difference(self, n_passengers: int, a: str, b: str, metric: str = "expected_profit") -> Summary:
        return summarize(self.values(n_passengers, a, metric) - self.values(n_passengers, b, metric))

    @property
    def policies(self) -> list:
        first = next(iter(self.raw.values()))
        return list(first[0].keys())

    def rows(self) -> list:
        rows = []
        for n in sorted(self.raw):
            for policy in self.policies:
                for metric in METRICS:
                    s = self.summary(n, policy, metric)
                    lo, hi = s.ci
                    rows.append((policy, n, metric, s.mean, lo, hi, s.n))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for policy, n, metric, mean, lo, hi, reps in self.rows():
            writer.writerow((policy, n, metric, repr(mean), repr(lo), repr(hi), reps))
        return buf.getvalue()

    def to_json(self) -> dict:
        summaries = {}
        for n in sorted(self.raw):
            per_n = {}
            for policy in self.policies:
                per_n[policy] = {m: asdict(self.summary(n, policy, m)) for m in METRICS}
            per_n["optimized_minus_fixed"] = asdict(self.paired_difference(n, "optimized", "fixed"))
            per_n["optimized_minus_hard"] = asdict(self.paired_difference(n, "optimized", "hard"))
            summaries[str(n)] = per_n
        return {
            "config": asdict(self.config),
            "n_reps": self.n_reps,
            "summaries": summaries,
            "replications": {str(n): self.raw[n] for n in sorted(self.raw)},
        }

    def write(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.csv"), "w", newline="") as fh:
            fh.write(self.to_csv())
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def run_campaign(cfg: ScenarioConfig, n_reps: int, n_values=None, workers: int | None = None) -> ExperimentReport:
    """Replicate every policy ``n_reps`` times for each passenger count in ``n_values``.

    Replication ``k`` uses the same scenario (requests and thresholds) for all
    policies and all passenger counts share the seed stream.
    """
    n_values = [cfg.n_passengers] if n_values is None else list(n_values)
    raw = {}
    for n in n_values:
        raw[n] = run_replications(replace(cfg, n_passengers=n), n_reps, workers)
    return ExperimentReport(cfg, n_reps, raw)


def run_large_scale(cfg: ScenarioConfig, n_reps: int, n_values=None, workers: int | None = None) -> ExperimentReport:
    """Campaign with the truncated objective and first-feasible insertion."""
    if cfg.mode != "large_scale":
        raise ConfigError("run_large_scale needs mode = large_scale")
    return run_campaign(cfg, n_reps, n_values, workers)
