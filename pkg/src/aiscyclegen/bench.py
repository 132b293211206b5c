"""Downstream utility: a small 1-D conv regressor trained with and without synthetic data.

Each sequence provides one example: its first ``T - 1`` steps (all features)
are the input and the target feature at the final step is the label.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .errors import AisCycleGenError, ConfigError, ContractError, ParameterError
from .metrics import MetricsReport, RegressionScores, regression_metrics
from .tensor import Tensor

log = logging.getLogger(__name__)

BENCH_COLUMNS = ("model", "MAE", "RMSE", "R2")
ABLATION_COLUMNS = ("configuration", "cnn_layers", "PSNR", "FID")
BASELINE_NAME = "CNN-Reg"
AUGMENTED_NAME = "CNN-Reg + CycleGAN Augmentation"


@dataclass(frozen=True)
class RegressorConfig:
    channels: int = 8
    layers: int = 2
    epochs: int = 150
    learning_rate: float = 3e-3
    batch_size: int = 32


@dataclass(frozen=True)
class BenchProtocol:
    target: str | int = 0
    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.1
    ratio: float = 1.0
    regressor: RegressorConfig = field(default_factory=RegressorConfig)
    seeds: tuple = (0, 1, 2, 3, 4)
    split_seed: int | None = None  # fixed split shared by all seeds; None splits per seed

    def validate(self) -> "BenchProtocol":
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if min(fr) < 0 or not math.isclose(sum(fr), 1.0, abs_tol=1e-9):
            raise ConfigError(f"split fractions must be >= 0 and sum to 1, got {fr}")
        if self.ratio < 0:
            raise ConfigError(f"augmentation ratio must be >= 0, got {self.ratio}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        return self


def split_indices(n: int, protocol: BenchProtocol, seed: int) -> dict[str, np.ndarray]:
    """Random train/val/test index split; every part gets at least one item when n >= 3."""
    perm = np.random.default_rng(seed).permutation(n)
    n_test = max(1, int(round(protocol.test_frac * n)))
    n_val = max(1, int(round(protocol.val_frac * n)))
    n_train = n - n_test - n_val
    if n_train < 2:
        raise ParameterError(f"{n} sequences are too few for a train/val/test split")
    return {"train": perm[:n_train], "val": perm[n_train:n_train + n_val], "test": perm[n_train + n_val:]}


def make_examples(seqs: np.ndarray, target_index: int) -> tuple[np.ndarray, np.ndarray]:
    """``[N, T, d]`` sequences to inputs ``[N, d, T-1]`` and labels ``[N]``."""
    X = np.ascontiguousarray(seqs[:, :-1, :].transpose(0, 2, 1))
    y = seqs[:, -1, target_index]
    return X, y


# ---------------------------------------------------------------- regressor


def init_regressor(d: int, length: int, cfg: RegressorConfig, seed: int, dtype=np.float32) -> dict:
    rng = np.random.default_rng(seed)
    params = {}
    c_in = d
    for i in range(cfg.layers):
        params[f"conv{i}.k"] = rng.standard_normal((cfg.channels, c_in, 3)) / math.sqrt(3 * c_in)
        params[f"conv{i}.b"] = np.zeros(cfg.channels)
        c_in = cfg.channels
    params["fc.W"] = rng.standard_normal((c_in * length, 1)) / math.sqrt(c_in * length)
    params["fc.b"] = np.zeros(1)
    return {k: Tensor(v.astype(dtype), requires_grad=True) for k, v in params.items()}


def regressor_forward(params: dict, X) -> Tensor:
    h = X if isinstance(X, Tensor) else Tensor(np.asarray(X, dtype=params["fc.W"].dtype))
    i = 0
    while f"conv{i}.k" in params:
        h = T.relu(T.conv1d(h, params[f"conv{i}.k"], 1, 1) + T.reshape(params[f"conv{i}.b"], (1, -1, 1)))
        i += 1
    h = T.reshape(h, (h.shape[0], -1))
    return T.reshape(T.dense(h, params["fc.W"], params["fc.b"]), (-1,))


def predict(params: dict, X: np.ndarray) -> np.ndarray:
    with T.no_grad():
        return regressor_forward(params, X).data.astype(np.float64)


def fit_regressor(X, y, X_val, y_val, cfg: RegressorConfig, seed: int) -> dict:
    """Mini-batch Adam on MSE; returns the parameters of the epoch with the lowest validation MSE."""
    from .training import AdamState, adam_step

    params = init_regressor(X.shape[1], X.shape[2], cfg, seed)
    X = X.astype(np.float32)
    y = y.astype(np.float32)
    moments = AdamState.zeros_like({k: t.data for k, t in params.items()})
    rng = np.random.default_rng(seed)
    best = ({k: t.data.copy() for k, t in params.items()}, math.inf)
    names = list(params)
    for _ in range(cfg.epochs):
        perm = rng.permutation(len(X))
        for s in range(0, len(X), cfg.batch_size):
            idx = perm[s:s + cfg.batch_size]
            err = regressor_forward(params, X[idx]) - Tensor(y[idx])
            grads = T.grad(T.mean(err * err), [params[k] for k in names])
            adam_step({k: params[k].data for k in names}, dict(zip(names, grads)), moments, cfg.learning_rate)
        val = float(np.mean((predict(params, X_val) - y_val) ** 2))
        if val < best[1]:
            best = ({k: t.data.copy() for k, t in params.items()}, val)
    for k, arr in best[0].items():
        params[k].data = arr
    return params


# ---------------------------------------------------------------- bench


@dataclass
class SeedResult:
    seed: int
    baseline: MetricsReport
    augmented: MetricsReport
    n_train: int
    n_synthetic: int


@dataclass
class BenchResult:
    runs: list

    def _values(self, arm: str, metric: str) -> np.ndarray:
        return np.array([np.nan if getattr(r, arm).values[metric] is None else getattr(r, arm).values[metric]
                         for r in self.runs], dtype=float)

    def median(self, arm: str, metric: str) -> float:
        return float(np.nanmedian(self._values(arm, metric)))

    def deltas(self) -> dict:
        """Per metric mean and std of baseline - augmented (MAE, RMSE) or augmented - baseline (R2)."""
        out = {}
        for metric in ("MAE", "RMSE", "R2"):
            b, a = self._values("baseline", metric), self._values("augmented", metric)
            d = a - b if metric == "R2" else b - a
            out[metric] = (float(np.nanmean(d)), float(np.nanstd(d))) if not np.all(np.isnan(d)) else (None, None)
        return out

    def table(self) -> list[list]:
        """Table rows (model, MAE, RMSE, R2): mean over seeds for each arm."""
        rows = []
        for name, arm in ((BASELINE_NAME, "baseline"), (AUGMENTED_NAME, "augmented")):
            vals = [self._values(arm, m) for m in ("MAE", "RMSE", "R2")]
            rows.append([name] + [None if np.all(np.isnan(v)) else float(np.nanmean(v)) for v in vals])
        return rows


def _scores_report(scores: RegressionScores, n_real: int, n_gen: int) -> MetricsReport:
    return MetricsReport({"MAE": scores.mae, "RMSE": scores.rmse, "R2": scores.r2}, "", n_real, n_gen)


def _target_index(protocol: BenchProtocol, d: int, feature_names) -> int:
    t = protocol.target
    if isinstance(t, str):
        if feature_names is None or t not in feature_names:
            raise ContractError(f"target {t!r} not among features {feature_names}")
        return list(feature_names).index(t)
    if not 0 <= t < d:
        raise ContractError(f"target index {t} out of range for {d} features")
    return int(t)


def _stack(data) -> np.ndarray:
    if isinstance(data, np.ndarray):
        return data.astype(np.float64)
    return np.stack([getattr(s, "values", s) for s in data]).astype(np.float64)


def run_bench(real_data, generator, protocol: BenchProtocol, source_data=None,
              feature_names=None, splits: dict | None = None) -> BenchResult:
    """Baseline vs augmented regressor on the real test split, repeated per seed.

    ``real_data`` holds sequences of the evaluated domain (N x T x d or
    ``AisSequence`` list).  Synthetic examples are ``generator`` (a trained
    model or its ``g_st`` parameters) applied to ``source_data``; their count is
    ``ratio`` times the real training count.  Both arms share the split and the
    regressor initialization seed.  ``splits`` (train/val/test index arrays)
    overrides the protocol's random split.
    """
    from .model import translate

    protocol.validate()
    real = _stack(real_data)
    if real.ndim != 3:
        raise ContractError(f"real data must be N x T x d, got {real.shape}")
    N, L, d = real.shape
    tidx = _target_index(protocol, d, feature_names)
    g = getattr(generator, "g_st", generator)
    if protocol.ratio > 0:
        if g is None or source_data is None:
            raise ContractError("augmentation needs a generator and source-domain data")
        cfg = g.config
        src = _stack(source_data)
        if (cfg.input_features, cfg.sequence_length) != (d, L) or src.shape[1:] != (L, d):
            raise ContractError(
                f"generator expects T x d = ({cfg.sequence_length}, {cfg.input_features}); "
                f"real data {(L, d)}, source data {src.shape[1:]}")
    runs = []
    for seed in protocol.seeds:
        if splits is not None:
            parts = {k: np.asarray(splits[k], dtype=np.int64) for k in ("train", "val", "test")}
        else:
            parts = split_indices(N, protocol, seed if protocol.split_seed is None else protocol.split_seed)
        X_tr, y_tr = make_examples(real[parts["train"]], tidx)
        X_va, y_va = make_examples(real[parts["val"]], tidx)
        X_te, y_te = make_examples(real[parts["test"]], tidx)
        base = fit_regressor(X_tr, y_tr, X_va, y_va, protocol.regressor, seed)
        s_base = regression_metrics(y_te, predict(base, X_te))
        n_syn = int(round(protocol.ratio * len(X_tr)))
        if n_syn > 0:
            pick = np.random.default_rng(seed + 10_000).choice(len(src), n_syn, replace=n_syn > len(src))
            fake = translate(g, src[pick].transpose(0, 2, 1).astype(g.tensors["embed.W"].dtype))
            X_syn, y_syn = make_examples(fake.transpose(0, 2, 1).astype(np.float64), tidx)
            aug = fit_regressor(np.concatenate([X_tr, X_syn]), np.concatenate([y_tr, y_syn]), X_va, y_va,
                                protocol.regressor, seed)
            s_aug = regression_metrics(y_te, predict(aug, X_te))
        else:
            s_aug = s_base
        runs.append(SeedResult(seed, _scores_report(s_base, len(y_te), 0), _scores_report(s_aug, len(y_te), n_syn),
                               len(X_tr), n_syn))
    return BenchResult(runs)


def write_bench_table(result: BenchResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(BENCH_COLUMNS)
        for row in result.table():
            w.writerow([row[0]] + ["" if v is None else repr(v) for v in row[1:]])


# ---------------------------------------------------------------- ablation


@dataclass
class AblationRow:
    configuration: str
    cnn_layers: int
    psnr: float | None
    fid: float | None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def configuration_name(depth: int, proposed: int = 3) -> str:
    if depth == proposed:
        return "Proposed"
    return "Shallow Generator" if depth < proposed else "Deep Generator"


def run_ablation(data, depths=(1, 2, 3, 5, 7), config=None, gen_config=None, disc_config=None,
                 val_data=None, extractor=None) -> list[AblationRow]:
    """One CycleGAN per generator depth with identical budget and seed; PSNR/FID on ``val_data``.

    A run that raises is recorded as a failure row and the remaining depths still run.
    """
    from .model import DiscriminatorConfig, GeneratorConfig
    from .training import TrainConfig, as_network_arrays, train, translation_scores

    if not depths:
        raise ParameterError("no depths requested")
    config = config or TrainConfig(steps=200)
    source, target = (as_network_arrays(v) for v in data)
    val_s, val_t = (as_network_arrays(v) for v in (val_data or data))
    d, L = source.shape[1], source.shape[2]
    base_g = gen_config or GeneratorConfig(d, L, base_channels=8, seed=config.seed)
    dcfg = disc_config or DiscriminatorConfig(d, L, base_channels=8, seed=config.seed)
    rows = []
    for depth in depths:
        name = configuration_name(depth)
        try:
            gcfg = replace(base_g, num_conv_layers=int(depth))
            model, _ = train((source.transpose(0, 2, 1), target.transpose(0, 2, 1)), config, gcfg, dcfg)
            p, f = translation_scores(model, val_s, val_t, extractor)
            rows.append(AblationRow(name, int(depth), p, f))
        except (AisCycleGenError, FloatingPointError, ValueError) as exc:
            log.warning("ablation depth %s failed: %s", depth, exc)
            rows.append(AblationRow(name, int(depth), None, None, f"{type(exc).__name__}: {exc}"))
    return rows


def write_ablation_table(rows: list[AblationRow], path) -> None:
    """Failed depths keep their row with ``FAILED`` in the metric cells."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ABLATION_COLUMNS)
        for r in rows:
            if r.failed:
                w.writerow([r.configuration, r.cnn_layers, "FAILED", "FAILED"])
            else:
                w.writerow([r.configuration, r.cnn_layers, repr(float(r.psnr)), repr(float(r.fid))])
