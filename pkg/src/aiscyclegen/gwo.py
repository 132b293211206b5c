"""Grey Wolf Optimization plus grid and random search baselines for hyperparameter tuning."""

from __future__ import annotations

import csv
import itertools
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, HorizonError, ParameterError

TECHNIQUE_NAMES = {"grid": "Grid Search", "random": "Random Search", "gwo": "Grey Wolf Optimization"}
REPORT_COLUMNS = ("technique", "PSNR", "FID", "time")


@dataclass(frozen=True)
class Dimension:
    """One search dimension; log-scale dimensions are searched in log10 space."""

    name: str
    lower: float
    upper: float
    scale: str = "linear"
    integer: bool = False
    values: tuple | None = None  # explicit grid values

    def __post_init__(self):
        if self.scale not in ("linear", "log"):
            raise ConfigError(f"{self.name}: scale must be 'linear' or 'log', got {self.scale!r}")
        if not self.lower < self.upper:
            raise ConfigError(f"{self.name}: lower {self.lower} must be < upper {self.upper}")
        if self.scale == "log" and self.lower <= 0:
            raise ConfigError(f"{self.name}: log-scale bounds must be positive")

    @property
    def search_bounds(self) -> tuple[float, float]:
        if self.scale == "log":
            return math.log10(self.lower), math.log10(self.upper)
        return float(self.lower), float(self.upper)

    def decode(self, z: float) -> float:
        v = 10.0 ** z if self.scale == "log" else z
        v = min(max(v, self.lower), self.upper)
        if self.integer:
            v = float(min(max(round(v), math.ceil(self.lower)), math.floor(self.upper)))
        return v


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple

    def __post_init__(self):
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate dimension names in {names}")
        if not names:
            raise ConfigError("search space needs at least one dimension")

    @classmethod
    def of(cls, *dims: Dimension) -> "SearchSpace":
        return cls(tuple(dims))

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    @property
    def lower(self) -> np.ndarray:
        return np.array([d.search_bounds[0] for d in self.dims])

    @property
    def upper(self) -> np.ndarray:
        return np.array([d.search_bounds[1] for d in self.dims])

    def decode(self, z) -> np.ndarray:
        """Search coordinates to parameter values (exponentiated, clamped, rounded)."""
        return np.array([d.decode(float(zi)) for d, zi in zip(self.dims, z)])

    def as_dict(self, values) -> dict:
        return {d.name: (int(v) if d.integer else float(v)) for d, v in zip(self.dims, values)}

    def sample(self, rng, n: int) -> np.ndarray:
        """``n`` points uniform in search coordinates (log-uniform on log dimensions)."""
        return rng.uniform(self.lower, self.upper, size=(n, len(self.dims)))


@dataclass
class SearchResult:
    best_point: np.ndarray
    best_fitness: float
    trace: list  # best-ever fitness after each iteration (or evaluation)
    table: list = field(default_factory=list)  # (point, fitness) per evaluation
    truncated: bool = False

    @property
    def evaluations(self) -> int:
        return len(self.table)


def _safe(objective, point) -> float:
    value = float(objective(point))
    return value if math.isfinite(value) else math.inf


# ---------------------------------------------------------------- GWO


@dataclass
class WolfPack:
    positions: np.ndarray  # P x D, search coordinates
    fitness: np.ndarray  # P, lower is better
    lower: np.ndarray
    upper: np.ndarray
    t: int
    t_max: int
    single_leader: bool = False

    @property
    def leaders(self) -> tuple[int, int, int]:
        order = np.argsort(self.fitness, kind="stable")
        return int(order[0]), int(order[1]), int(order[2])


def control_parameter(t: int, t_max: int) -> float:
    return 2.0 * (1.0 - t / t_max)


def gwo_candidate(x_leader, x_i, a: float, r1, r2):
    """``X_L - A * |C * X_L - X_i|`` with ``A = 2 a r1 - a`` and ``C = 2 r2``."""
    A = 2.0 * a * r1 - a
    C = 2.0 * r2
    return x_leader - A * np.abs(C * x_leader - x_i)


def gwo_update(pack: WolfPack, rng) -> WolfPack:
    """Move every wolf toward the alpha/beta/delta average (or alpha only), clamped to bounds."""
    if pack.t >= pack.t_max:
        raise HorizonError(f"iteration {pack.t} has reached the horizon t_max={pack.t_max}")
    a = control_parameter(pack.t, pack.t_max)
    X = pack.positions
    leaders = pack.leaders[:1] if pack.single_leader else pack.leaders
    cands = []
    for li in leaders:
        r1 = rng.uniform(size=X.shape)
        r2 = rng.uniform(size=X.shape)
        cands.append(gwo_candidate(X[li][None, :], X, a, r1, r2))
    new = np.clip(np.mean(cands, axis=0), pack.lower, pack.upper)
    return replace(pack, positions=new, t=pack.t + 1)


def gwo_search(objective, space: SearchSpace, pack_size: int = 12, t_max: int = 50, seed: int = 0,
               single_leader: bool = False, max_evaluations: int | None = None) -> SearchResult:
    """Evaluate, rank and update for ``t_max`` rounds; ``objective`` receives decoded values.

    Evaluations total ``pack_size * t_max``.  ``max_evaluations`` stops mid-round and
    flags the result as truncated.
    """
    if pack_size < 4:
        raise ParameterError(f"pack size must be >= 4 (alpha, beta, delta and omegas), got {pack_size}")
    if t_max < 1:
        raise ParameterError(f"t_max must be >= 1, got {t_max}")
    rng = np.random.default_rng(seed)
    pack = WolfPack(space.sample(rng, pack_size), np.full(pack_size, math.inf), space.lower, space.upper,
                    0, t_max, single_leader)
    best_z, best_f = pack.positions[0].copy(), math.inf
    trace, table = [], []
    for it in range(t_max):
        for i in range(pack_size):
            if max_evaluations is not None and len(table) >= max_evaluations:
                return SearchResult(space.decode(best_z), best_f, trace, table, truncated=True)
            point = space.decode(pack.positions[i])
            f = _safe(objective, point)
            pack.fitness[i] = f
            table.append((point, f))
            if f < best_f:
                best_z, best_f = pack.positions[i].copy(), f
        trace.append(best_f)
        if it < t_max - 1:
            pack = gwo_update(pack, rng)
    return SearchResult(space.decode(best_z), best_f, trace, table)


# ---------------------------------------------------------------- baselines


def _running(table) -> tuple[np.ndarray, float, list]:
    best_p, best_f, trace = table[0][0], table[0][1], []
    for p, f in table:
        if f < best_f:
            best_p, best_f = p, f
        trace.append(best_f)
    return best_p, best_f, trace


def grid_points(space: SearchSpace) -> list[np.ndarray]:
    lists = []
    for d in space.dims:
        if d.values is None:
            raise ParameterError(f"dimension {d.name} has no grid values")
        lists.append(tuple(d.values))
    return [np.array(p, dtype=float) for p in itertools.product(*lists)]


def grid_search(objective, space: SearchSpace, max_evaluations: int | None = None) -> SearchResult:
    """Exhaustive evaluation in lexicographic order of the per-dimension value lists."""
    points = grid_points(space)
    if not points:
        raise ParameterError("grid is empty")
    truncated = max_evaluations is not None and len(points) > max_evaluations
    if truncated:
        points = points[:max_evaluations]
    if not points:
        raise ParameterError("evaluation budget allows no grid point")
    table = [(p, _safe(objective, p)) for p in points]
    best_p, best_f, trace = _running(table)
    return SearchResult(best_p, best_f, trace, table, truncated)


def random_search(objective, space: SearchSpace, n: int, seed: int = 0) -> SearchResult:
    """``n`` samples uniform in search coordinates; deterministic per seed."""
    if n < 1:
        raise ParameterError(f"random search needs n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    table = [(space.decode(z), 0.0) for z in space.sample(rng, n)]
    table = [(p, _safe(objective, p)) for p, _ in table]
    best_p, best_f, trace = _running(table)
    return SearchResult(best_p, best_f, trace, table)


# ---------------------------------------------------------------- benchmark functions


def sphere(x) -> float:
    return float(np.sum(np.asarray(x) ** 2))


def rastrigin(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(10.0 * x.size + np.sum(x ** 2 - 10.0 * np.cos(2 * np.pi * x)))


# ---------------------------------------------------------------- training hyperparameters


TUNABLE = ("learning_rate", "lambda_cyc", "lambda_id", "batch_size", "critic_iters")


def default_space(grid_levels: int = 3) -> SearchSpace:
    """Learning rate, cycle weight and batch size with a small default grid."""
    return SearchSpace.of(
        Dimension("learning_rate", 1e-4, 3e-3, "log",
                  values=tuple(np.geomspace(1e-4, 3e-3, grid_levels).tolist())),
        Dimension("lambda_cyc", 0.01, 1.0, "linear", values=tuple(np.linspace(0.01, 1.0, grid_levels).tolist())),
        Dimension("batch_size", 8, 32, "linear", integer=True,
                  values=tuple(np.linspace(8, 32, grid_levels).round().tolist())),
    )


def apply_hyperparameters(config, params: dict):
    """TrainConfig with the tunable fields from ``params`` substituted."""
    unknown = set(params) - set(TUNABLE)
    if unknown:
        raise ConfigError(f"untunable hyperparameters {sorted(unknown)}; allowed: {TUNABLE}")
    w = config.weights
    w = replace(w, **{k: float(v) for k, v in params.items() if k in ("lambda_cyc", "lambda_id")})
    kw = {}
    if "learning_rate" in params:
        kw["learning_rate"] = float(params["learning_rate"])
    for k in ("batch_size", "critic_iters"):
        if k in params:
            kw[k] = int(round(params[k]))
    return replace(config, weights=w, **kw)


@dataclass
class Observation:
    params: dict
    psnr: float
    fid: float


class _BudgetExhausted(Exception):
    pass


@dataclass
class TuneReport:
    technique: str
    best_params: dict
    best_config: object
    psnr: float
    fid: float
    seconds: float
    evaluations: int
    truncated: bool
    observations: list

    def row(self) -> list:
        return [self.technique, self.psnr, self.fid, self.seconds]


def normalized_fitness(observations: list, psnr: float, fid: float) -> float:
    """``FID_norm - PSNR_norm`` with min-max scaling over the observations so far."""
    def scale(v, vals):
        vals = [x for x in vals if math.isfinite(x)]
        if not math.isfinite(v):
            return math.inf if v > 0 else -math.inf
        lo, hi = min(vals, default=v), max(vals, default=v)
        return 0.0 if hi == lo else (v - lo) / (hi - lo)

    f = scale(fid, [o.fid for o in observations])
    p = scale(psnr, [o.psnr for o in observations])
    value = f - p
    return value if math.isfinite(value) else math.inf


def proxy_evaluation(data, config, val_data, gen_config=None, disc_config=None,
                     extractor_seed: int = 0, extractor_k: int = 16) -> tuple[float, float]:
    """Short training run, then validation (PSNR of the S cycle, FID of G(S_val) vs T_val)."""
    from .metrics import random_projection
    from .training import as_network_arrays, train, translation_scores

    model, _ = train(data, config, gen_config, disc_config)
    src, tgt = (as_network_arrays(v) for v in val_data)
    return translation_scores(model, src, tgt, random_projection(extractor_seed, extractor_k))


def tune_training(data, space: SearchSpace, budget: int, method: str = "gwo", seed: int = 0,
                  base_config=None, val_data=None, pack_size: int = 4, gen_config=None,
                  disc_config=None, evaluate=None) -> TuneReport:
    """Search hyperparameters with ``budget`` proxy training runs.

    ``data`` and ``val_data`` are ``(source, target)`` pairs.  ``evaluate(config)``
    may replace the proxy run; it returns ``(psnr, fid)``.  The best configuration
    is chosen by normalized fitness over all observations once the search ends.
    """
    from .training import TrainConfig

    if method not in TECHNIQUE_NAMES:
        raise ParameterError(f"unknown tuning method {method!r}; choose from {sorted(TECHNIQUE_NAMES)}")
    if budget < 1:
        raise ParameterError(f"tuning budget must be >= 1 evaluation, got {budget}")
    for d in space.dims:
        if d.name not in TUNABLE:
            raise ConfigError(f"dimension {d.name!r} is not tunable; allowed: {TUNABLE}")
    base = base_config or TrainConfig(steps=50, seed=seed)
    if evaluate is None:
        if val_data is None:
            raise ParameterError("val_data is required for the default proxy evaluation")

        def evaluate(cfg):
            return proxy_evaluation(data, cfg, val_data, gen_config, disc_config, extractor_seed=seed)

    observations: list[Observation] = []

    def objective(values):
        if len(observations) >= budget:
            raise _BudgetExhausted
        params = space.as_dict(values)
        p, f = evaluate(apply_hyperparameters(base, params))
        obs = Observation(params, float(p), float(f))
        observations.append(obs)
        return normalized_fitness(observations, obs.psnr, obs.fid)

    start = time.perf_counter()
    truncated = False
    try:
        if method == "gwo":
            rounds = max(1, math.ceil(budget / pack_size))
            res = gwo_search(objective, space, pack_size, rounds, seed, max_evaluations=budget)
            truncated = res.truncated
        elif method == "grid":
            res = grid_search(objective, space, max_evaluations=budget)
            truncated = res.truncated
        else:
            random_search(objective, space, budget, seed)
    except _BudgetExhausted:
        truncated = True
    seconds = time.perf_counter() - start
    if not observations:
        raise ParameterError("no evaluation completed within the budget")
    scores = [normalized_fitness(observations, o.psnr, o.fid) for o in observations]
    best = observations[int(np.argmin(scores))]
    return TuneReport(TECHNIQUE_NAMES[method], best.params, apply_hyperparameters(base, best.params),
                      best.psnr, best.fid, seconds, len(observations), truncated, observations)


def write_tune_report(reports: list, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow([r.technique, repr(float(r.psnr)), repr(float(r.fid)), f"{r.seconds:.3f}"])
