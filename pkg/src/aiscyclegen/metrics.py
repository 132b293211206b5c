"""Fidelity and distribution metrics: MSE/PSNR, FID on 1-D embeddings, MMD, W1, regression scores."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, NumericalError, ParameterError

PSNR_INF = math.inf

FID_SHRINKAGE = 1e-6
EIG_TOLERANCE = 1e-8


def _pair(real, gen):
    real = np.asarray(real, dtype=np.float64)
    gen = np.asarray(gen, dtype=np.float64)
    if real.shape != gen.shape:
        raise DimensionError(f"shape mismatch: real {real.shape} vs generated {gen.shape}")
    return real, gen


def mse(real, gen) -> float:
    real, gen = _pair(real, gen)
    return float(np.mean((real - gen) ** 2))


def psnr(real, gen, max_val: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give ``inf``."""
    if max_val <= 0:
        raise ParameterError(f"max_val must be positive, got {max_val}")
    return psnr_from_mse(mse(real, gen), max_val)


def psnr_from_mse(err: float, max_val: float = 1.0) -> float:
    if max_val <= 0:
        raise ParameterError(f"max_val must be positive, got {max_val}")
    if err == 0:
        return PSNR_INF
    return 10.0 * math.log10(max_val ** 2 / err)


# ---------------------------------------------------------------- embeddings


@dataclass(frozen=True)
class Extractor:
    kind: str
    seed: int | None = None
    k: int | None = None
    checkpoint_id: str | None = None

    def describe(self) -> str:
        if self.kind == "random_projection":
            return f"random_projection(seed={self.seed},k={self.k})"
        return f"critic_penultimate({self.checkpoint_id})"


def random_projection(seed: int = 0, k: int = 64) -> Extractor:
    return Extractor("random_projection", seed=seed, k=k)


def critic_penultimate(params, checkpoint_id: str = "in-memory") -> tuple:
    return (Extractor("critic_penultimate", checkpoint_id=checkpoint_id), params)


@dataclass
class FeatureEmbedding:
    matrix: np.ndarray
    extractor: Extractor

    def __post_init__(self):
        if not np.all(np.isfinite(self.matrix)):
            raise NumericalError("embedding contains non-finite entries")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _as_array(sequences) -> np.ndarray:
    if isinstance(sequences, np.ndarray):
        arr = sequences
    else:
        arr = np.stack([getattr(s, "values", s) for s in sequences])
    if arr.ndim != 3:
        raise DimensionError(f"expected N x T x d sequences, got shape {arr.shape}")
    return arr.astype(np.float64)


def feature_embed(sequences, extractor) -> FeatureEmbedding:
    """Embed N x T x d sequences (or ``AisSequence`` objects) with a fixed extractor.

    ``extractor`` is either a random-projection :class:`Extractor` or the
    ``(Extractor, DiscriminatorParams)`` pair returned by :func:`critic_penultimate`.
    """
    arr = _as_array(sequences)
    if isinstance(extractor, tuple):
        desc, params = extractor
        from .model import discriminator_features

        cfg = params.config
        if arr.shape[1:] != (cfg.sequence_length, cfg.input_features):
            raise ContractError(
                f"sequences of shape T x d = {arr.shape[1:]} do not match critic config "
                f"({cfg.sequence_length}, {cfg.input_features})"
            )
        feats = discriminator_features(params, arr.transpose(0, 2, 1))
        return FeatureEmbedding(feats.astype(np.float64), desc)
    if extractor.kind != "random_projection":
        raise ParameterError(f"unknown extractor kind {extractor.kind!r}")
    flat = arr.reshape(arr.shape[0], -1)
    rng = np.random.default_rng(extractor.seed)
    proj = rng.standard_normal((flat.shape[1], extractor.k)) / math.sqrt(flat.shape[1])
    return FeatureEmbedding(np.tanh(flat @ proj), extractor)


def _psd_sqrt(cov):
    w, v = np.linalg.eigh(cov)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def frechet_distance(mu1, cov1, mu2, cov2) -> float:
    """Frechet distance between two Gaussians, via the symmetrized product's eigenvalues."""
    mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
    cov1, cov2 = np.atleast_2d(cov1), np.atleast_2d(cov2)
    root1 = _psd_sqrt(cov1)
    prod = root1 @ cov2 @ root1
    eig = np.linalg.eigvalsh(0.5 * (prod + prod.T))
    tol = EIG_TOLERANCE * max(1.0, float(np.abs(eig).max()))
    if eig.min() < -tol:
        raise NumericalError(f"covariance product has a negative eigenvalue {eig.min():.3e}")
    trace_sqrt = float(np.sqrt(np.clip(eig, 0.0, None)).sum())
    diff = mu1 - mu2
    return float(diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * trace_sqrt)


def fid(emb_real: FeatureEmbedding, emb_gen: FeatureEmbedding) -> float:
    if emb_real.extractor != emb_gen.extractor:
        raise ContractError(
            f"embeddings come from different extractors: {emb_real.extractor.describe()} vs "
            f"{emb_gen.extractor.describe()}"
        )
    a, b = emb_real.matrix, emb_gen.matrix
    k = a.shape[1]
    if min(a.shape[0], b.shape[0]) < 2:
        raise ParameterError("FID needs at least 2 samples per set")
    if min(a.shape[0], b.shape[0]) < k + 1:
        warnings.warn(f"FID with fewer samples than k+1={k + 1}; covariance estimate is rank-deficient",
                      stacklevel=2)
    shrink = FID_SHRINKAGE * np.eye(k)
    cov_a = np.cov(a, rowvar=False).reshape(k, k) + shrink
    cov_b = np.cov(b, rowvar=False).reshape(k, k) + shrink
    return max(0.0, frechet_distance(a.mean(0), cov_a, b.mean(0), cov_b))


# ---------------------------------------------------------------- distribution distances


def _sq_dists(a, b):
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def median_heuristic(X, Y) -> float:
    Z = np.vstack([X, Y])
    d = np.sqrt(_sq_dists(Z, Z))
    iu = np.triu_indices(len(Z), k=1)
    med = float(np.median(d[iu]))
    return med if med > 0 else 1.0


def mmd_rbf(X, Y, bandwidth: float | None = None) -> float:
    """Unbiased MMD^2 with kernel ``exp(-|x - y|^2 / (2 * bandwidth^2))``.

    For equal sample sizes the paired U-statistic is used (cross terms with
    ``i == j`` excluded), which is exactly zero when ``X`` and ``Y`` coincide.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    n, m = len(X), len(Y)
    if n < 2 or m < 2:
        raise ParameterError("unbiased MMD needs at least 2 samples in each set")
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(f"feature dims differ: {X.shape[1]} vs {Y.shape[1]}")
    if bandwidth is None:
        bandwidth = median_heuristic(X, Y)
    if bandwidth <= 0:
        raise ParameterError("bandwidth must be positive")
    gamma = 1.0 / (2.0 * bandwidth ** 2)
    kxx = np.exp(-gamma * _sq_dists(X, X))
    kyy = np.exp(-gamma * _sq_dists(Y, Y))
    kxy = np.exp(-gamma * _sq_dists(X, Y))
    if n == m:
        h = kxx + kyy - kxy - kxy.T
        np.fill_diagonal(h, 0.0)
        return float(h.sum() / (n * (n - 1)))
    term_x = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
    term_y = (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
    return float(term_x + term_y - 2.0 * kxy.mean())


def wasserstein1d(x, y) -> float:
    """W1 between empirical distributions, integrating the quantile-function gap."""
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    y = np.sort(np.asarray(y, dtype=np.float64).ravel())
    if x.size == 0 or y.size == 0:
        raise ParameterError("wasserstein1d needs non-empty samples")
    n, m = len(x), len(y)
    if n == m:
        return float(np.mean(np.abs(x - y)))
    u = np.union1d(np.arange(1, n + 1) / n, np.arange(1, m + 1) / m)
    widths = np.diff(np.concatenate([[0.0], u]))
    mid = u - widths / 2
    ix = np.minimum((mid * n).astype(int), n - 1)
    iy = np.minimum((mid * m).astype(int), m - 1)
    return float(np.sum(widths * np.abs(x[ix] - y[iy])))


# ---------------------------------------------------------------- regression


@dataclass(frozen=True)
class RegressionScores:
    mae: float
    rmse: float
    r2: float | None  # None when y_true is constant

    @property
    def r2_defined(self) -> bool:
        return self.r2 is not None


def regression_metrics(y_true, y_pred) -> RegressionScores:
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.shape != y_pred.shape:
        raise DimensionError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    if y_true.size < 2:
        raise ParameterError("regression metrics need at least 2 samples")
    err = y_true - y_pred
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err ** 2)))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    r2 = None if ss_tot == 0 else 1.0 - float(np.sum(err ** 2)) / ss_tot
    return RegressionScores(mae, rmse, r2)


# ---------------------------------------------------------------- report

UNITS = {"PSNR": "dB", "FID": "", "MMD": "", "W1": "", "MAE": "target units", "RMSE": "target units", "R2": ""}


@dataclass
class MetricsReport:
    values: dict = field(default_factory=dict)
    extractor: str = ""
    n_real: int = 0
    n_gen: int = 0

    def add(self, name: str, value) -> None:
        self.values[name] = value

    def rows(self):
        for name, value in self.values.items():
            yield [name, "" if value is None else repr(float(value)), self.extractor, self.n_real, self.n_gen]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value", "extractor", "n_real", "n_gen"])
            w.writerows(self.rows())

    @classmethod
    def from_csv(cls, path) -> "MetricsReport":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        rep = cls()
        for r in rows:
            rep.values[r["metric"]] = float(r["value"]) if r["value"] else None
            rep.extractor, rep.n_real, rep.n_gen = r["extractor"], int(r["n_real"]), int(r["n_gen"])
        return rep
