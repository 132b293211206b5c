"""Spline imputation, moving-average smoothing, min-max scaling and Spearman analysis."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError, ImputationError, InputError, ParameterError
from .ingest import AisSequence

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- spline


def _solve_tridiagonal(lower, diag, upper, rhs):
    """Thomas algorithm; ``lower[0]`` and ``upper[-1]`` are ignored."""
    n = len(diag)
    c = np.zeros(n)
    d = np.zeros(n)
    c[0] = upper[0] / diag[0]
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i] * c[i - 1]
        c[i] = upper[i] / m if i < n - 1 else 0.0
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m
    x = np.zeros(n)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


class NaturalCubicSpline:
    """Natural cubic spline through ``(t_i, v_i)``, clamped outside the knot range."""

    def __init__(self, t, v):
        t = np.asarray(t, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if t.shape != v.shape or t.ndim != 1:
            raise InputError("knot times and values must be 1-D arrays of equal length")
        if len(t) < 2:
            raise ImputationError(f"need at least 2 observed points, got {len(t)}")
        h = np.diff(t)
        if np.any(h <= 0):
            raise InputError("observed times must be strictly increasing (duplicate or unsorted times)")
        self.t, self.v, self.h = t, v, h
        n = len(t)
        M = np.zeros(n)
        if n > 2:
            slopes = np.diff(v) / h
            rhs = 6.0 * np.diff(slopes)
            diag = 2.0 * (h[:-1] + h[1:])
            M[1:-1] = _solve_tridiagonal(h[:-1], diag, h[1:], rhs)
        self.M = M

    def __call__(self, q):
        q = np.asarray(q, dtype=np.float64)
        t, v, h, M = self.t, self.v, self.h, self.M
        qc = np.clip(q, t[0], t[-1])
        i = np.clip(np.searchsorted(t, qc, side="right") - 1, 0, len(t) - 2)
        hi = h[i]
        a = t[i + 1] - qc
        b = qc - t[i]
        return (M[i] * a ** 3 / (6 * hi) + M[i + 1] * b ** 3 / (6 * hi)
                + (v[i] / hi - M[i] * hi / 6) * a + (v[i + 1] / hi - M[i + 1] * hi / 6) * b)


def cubic_spline_impute(times, values) -> np.ndarray:
    """Fill NaN entries of ``values`` from a natural cubic spline through the observed ones.

    Observed values are returned unchanged; gaps outside the observed time
    range take the nearest boundary value.
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    observed = ~np.isnan(values)
    if observed.all():
        if np.any(np.diff(times) <= 0):
            raise InputError("times must be strictly increasing")
        return values.copy()
    spline = NaturalCubicSpline(times[observed], values[observed])
    out = values.copy()
    out[~observed] = spline(times[~observed])
    return out


# ---------------------------------------------------------------- smoothing


def moving_average(series, n: int = 5, method: str = "sma", sigma: float | None = None) -> np.ndarray:
    """Trailing simple moving average; the first ``n - 1`` outputs average the available prefix.

    ``method="gaussian"`` swaps in a centred Gaussian kernel (``sigma``
    defaults to ``n / 2``) with edge renormalization.
    """
    if n <= 0:
        raise ParameterError(f"window n must be >= 1, got {n}")
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    if method == "sma":
        csum = np.concatenate([[0.0], np.cumsum(x)])
        idx = np.arange(len(x))
        lo = np.maximum(idx - n + 1, 0)
        return (csum[idx + 1] - csum[lo]) / (idx + 1 - lo)
    if method == "gaussian":
        sigma = sigma or n / 2.0
        radius = max(1, int(np.ceil(3 * sigma)))
        offs = np.arange(-radius, radius + 1)
        kern = np.exp(-0.5 * (offs / sigma) ** 2)
        num = np.convolve(x, kern, mode="same")
        den = np.convolve(np.ones_like(x), kern, mode="same")
        return num / den
    raise ParameterError(f"unknown smoothing method {method!r}")


def impute_and_smooth(seq: AisSequence, window: int = 5, method: str = "sma") -> AisSequence:
    """Per-feature spline imputation over the record timestamps, then smoothing.

    A feature with a single observation is filled with that constant; one with
    none raises :class:`ImputationError`.
    """
    out = np.empty_like(seq.values)
    for j, name in enumerate(seq.feature_names):
        col = seq.values[:, j]
        n_obs = int((~np.isnan(col)).sum())
        if n_obs == 0:
            raise ImputationError(f"feature {name!r} has no observations in sequence mmsi={seq.mmsi}")
        if n_obs == 1:
            filled = np.full_like(col, col[~np.isnan(col)][0])
        else:
            filled = cubic_spline_impute(seq.times, col)
        out[:, j] = moving_average(filled, window, method)
    return seq.with_values(out)


# ---------------------------------------------------------------- scaling


@dataclass
class MinMaxScaler:
    x_min: np.ndarray
    x_max: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        self.x_min = np.asarray(self.x_min, dtype=np.float64)
        self.x_max = np.asarray(self.x_max, dtype=np.float64)
        self.feature_names = tuple(self.feature_names)
        if np.any(self.x_max < self.x_min):
            raise ContractError("x_max must be >= x_min for every feature")

    @property
    def span(self) -> np.ndarray:
        return self.x_max - self.x_min

    def _check(self, feature_names):
        if feature_names is not None and tuple(feature_names) != self.feature_names:
            raise ContractError(f"scaler fitted on {self.feature_names}, got {tuple(feature_names)}")

    def transform(self, data, feature_names=None) -> np.ndarray:
        self._check(feature_names)
        data = np.asarray(data, dtype=np.float64)
        span = self.span
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (data - self.x_min) / safe, 0.0)

    def inverse_transform(self, data, feature_names=None) -> np.ndarray:
        self._check(feature_names)
        data = np.asarray(data, dtype=np.float64)
        return np.where(self.span > 0, data * self.span + self.x_min, self.x_min)

    def to_dict(self) -> dict:
        return {"feature_names": list(self.feature_names), "x_min": self.x_min.tolist(), "x_max": self.x_max.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxScaler":
        return cls(np.array(d["x_min"]), np.array(d["x_max"]), tuple(d["feature_names"]))


def minmax_fit_transform(data, feature_names: Sequence[str] | None = None, split: str | None = None):
    """Fit per-feature min/max on ``data`` (last axis = features) and scale to [0, 1].

    Constant features map to 0.  ``split="test"`` is refused so test data can
    never leak into a fitted scaler.
    """
    if split == "test":
        raise ContractError("refusing to fit a scaler on the test split")
    data = np.asarray(data, dtype=np.float64)
    if data.size == 0 or data.ndim < 2:
        raise ParameterError("minmax_fit_transform needs a non-empty N x d (or N x T x d) array")
    flat = data.reshape(-1, data.shape[-1])
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(flat.shape[1]))
    if len(names) != flat.shape[1]:
        raise ContractError(f"{len(names)} feature names for {flat.shape[1]} columns")
    scaler = MinMaxScaler(flat.min(axis=0), flat.max(axis=0), names)
    return scaler.transform(data), scaler


def minmax_inverse(normalized, scaler: MinMaxScaler, feature_names: Sequence[str] | None = None) -> np.ndarray:
    return scaler.inverse_transform(normalized, feature_names)


# ---------------------------------------------------------------- Spearman


@dataclass
class SpearmanMatrix:
    rho: np.ndarray
    feature_names: tuple[str, ...]
    undefined: np.ndarray  # per-feature flag: constant column

    def get(self, a: str, b: str) -> float:
        return float(self.rho[self.feature_names.index(a), self.feature_names.index(b)])


def spearman_rho(x, y) -> float:
    """Spearman's rho via mid-ranks and the Pearson correlation of ranks."""
    rx = rankdata(x)
    ry = rankdata(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    den = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if den == 0:
        return float("nan")
    return float(np.clip((rx * ry).sum() / den, -1.0, 1.0))


def spearman_matrix(data, feature_names: Sequence[str] | None = None) -> SpearmanMatrix:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 3:
        raise ParameterError("spearman_matrix needs an N x d array with N >= 3")
    n, d = data.shape
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(d))
    ranks = np.column_stack([rankdata(data[:, j]) for j in range(d)])
    centered = ranks - ranks.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    undefined = norms == 0
    safe = np.where(undefined, 1.0, norms)
    z = centered / safe
    rho = np.clip(z.T @ z, -1.0, 1.0)
    rho[undefined, :] = 0.0
    rho[:, undefined] = 0.0
    rho = 0.5 * (rho + rho.T)
    np.fill_diagonal(rho, 1.0)
    return SpearmanMatrix(rho, names, undefined)


@dataclass(frozen=True)
class FeatureReportRow:
    feature: str
    rho: float
    decision: str


def feature_report(matrix: SpearmanMatrix, target: str) -> list[FeatureReportRow]:
    """Per-feature correlation with ``target``; every feature is retained (advisory only)."""
    if target not in matrix.feature_names:
        raise ParameterError(f"unknown target feature {target!r}")
    ti = matrix.feature_names.index(target)
    rows = []
    for j, name in enumerate(matrix.feature_names):
        if j == ti:
            continue
        undefined = bool(matrix.undefined[j] or matrix.undefined[ti])
        rows.append(FeatureReportRow(name, float(matrix.rho[ti, j]),
                                     "undefined correlation" if undefined else "retain"))
    return rows


def write_feature_report(matrix: SpearmanMatrix, target: str, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["feature"] + list(matrix.feature_names))
        for i, name in enumerate(matrix.feature_names):
            w.writerow([name] + [f"{v:.6f}" for v in matrix.rho[i]])
        w.writerow([])
        w.writerow(["target", "feature", "rho", "decision"])
        for row in feature_report(matrix, target):
            w.writerow([target, row.feature, f"{row.rho:.6f}", row.decision])
