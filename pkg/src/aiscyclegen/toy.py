"""Synthetic data: two sinusoid regimes for translation experiments and a small AIS-like CSV."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np


def sinusoid_domain(n: int, T: int, d: int, offset: float, amp_range: tuple[float, float],
                    rng: np.random.Generator, noise: float = 0.01) -> np.ndarray:
    """``n`` sequences of shape T x d: ``offset + amp * sin(2 pi f t / T + phase + c pi / 3)``."""
    t = np.arange(T)[None, :, None]
    c = np.arange(d)[None, None, :]
    amp = rng.uniform(*amp_range, size=(n, 1, 1))
    freq = rng.uniform(1.0, 2.0, size=(n, 1, 1))
    phase = rng.uniform(0.0, 2 * np.pi, size=(n, 1, 1))
    x = offset + amp * np.sin(2 * np.pi * freq * t / T + phase + c * np.pi / 3)
    x = x + noise * rng.standard_normal(x.shape)
    return np.clip(x, 0.0, 1.0)


def toy_domains(n: int = 200, T: int = 32, d: int = 3, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Regime A (low offset, small amplitude) and regime B (high offset, large amplitude)."""
    rng = np.random.default_rng(seed)
    source = sinusoid_domain(n, T, d, 0.3, (0.08, 0.12), rng)
    target = sinusoid_domain(n, T, d, 0.6, (0.20, 0.25), rng)
    return source, target


def write_toy_ais_csv(path, n_vessels: int = 12, points_per_vessel: int = 80, seed: int = 0,
                      corrupt_every: int = 0) -> None:
    """Write a NOAA-style AIS CSV with vessels on both sides of longitude -85.

    Vessels steam along noisy great-circle-ish lines at 1-minute cadence with
    occasional dropped Heading values (511).  ``corrupt_every > 0`` injects an
    out-of-range latitude every that many rows.
    """
    rng = np.random.default_rng(seed)
    t0 = datetime(2023, 1, 1, tzinfo=timezone.utc).timestamp()
    rows = []
    for v in range(n_vessels):
        mmsi = 366000000 + v
        west = v % 2 == 0
        lat = rng.uniform(24.0, 29.0)
        lon = rng.uniform(-94.0, -87.0) if west else rng.uniform(-83.0, -80.0)
        sog = rng.uniform(6.0, 14.0) if west else rng.uniform(12.0, 20.0)
        course = rng.uniform(0, 360)
        length = rng.uniform(60, 250) if west else rng.uniform(20, 90)
        width = length / rng.uniform(5.5, 7.5)
        draft = rng.uniform(4, 12) if west else rng.uniform(2, 6)
        for k in range(points_per_vessel):
            course = (course + rng.normal(0, 2.0)) % 360
            sog = max(0.1, sog + rng.normal(0, 0.2))
            step_deg = sog * 1852.0 / 60.0 / 111_000.0
            lat += step_deg * math.cos(math.radians(course))
            lon += step_deg * math.sin(math.radians(course)) / math.cos(math.radians(lat))
            heading = 511 if rng.uniform() < 0.05 else round((course + rng.normal(0, 1.0)) % 360) % 360
            ts = datetime.fromtimestamp(t0 + 60 * k, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%S")
            rows.append([mmsi, ts, f"{lat:.5f}", f"{lon:.5f}", f"{sog:.1f}", f"{course:.1f}",
                         heading, f"{length:.0f}", f"{width:.0f}", f"{draft:.1f}"])
    order = rng.permutation(len(rows))
    rows = [rows[i] for i in order]
    if corrupt_every:
        for i in range(0, len(rows), corrupt_every):
            rows[i][2] = "91.0"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["MMSI", "BaseDateTime", "LAT", "LON", "SOG", "COG", "Heading", "Length", "Width", "Draft"])
        w.writerows(rows)


def toy_train_config(steps: int = 2000, seed: int = 0):
    """Desk-scale optimizer settings used for the two-regime translation task."""
    from .training import TrainConfig

    return TrainConfig(learning_rate=1e-3, batch_size=16, steps=steps, critic_iters=5,
                       adam_beta1=0.5, adam_beta2=0.9, seed=seed)


@dataclass
class ToyResult:
    cycle_l1_start: float
    cycle_l1_end: float
    fid_untranslated: float  # FID(S_test, T_test)
    fid_start: float
    fid_end: float
    history: list
    seconds: float


def toy_experiment(steps: int = 2000, seed: int = 0, n: int = 200, n_train: int = 160,
                   extractor_k: int = 16, callback=None) -> ToyResult:
    """Train on the two sinusoid regimes and score held-out cycle L1 and FID before and after."""
    from .metrics import feature_embed, fid, random_projection
    from .model import DiscriminatorConfig, GeneratorConfig, translate
    from .training import as_network_arrays, cycle_reconstruction_l1, fit, init_state

    S, Tt = toy_domains(n, 32, 3, seed=seed)
    S_tr, S_te, T_tr, T_te = S[:n_train], S[n_train:], Tt[:n_train], Tt[n_train:]
    cfg = toy_train_config(steps, seed)
    g, d = GeneratorConfig(3, 32, base_channels=8, seed=seed), DiscriminatorConfig(3, 32, base_channels=8, seed=seed)
    ext = random_projection(0, extractor_k)
    Xs = as_network_arrays(S_te)
    emb_target = feature_embed(T_te, ext)

    def scores(model):
        fake = translate(model.g_st, Xs).transpose(0, 2, 1)
        return cycle_reconstruction_l1(model, Xs), fid(emb_target, feature_embed(fake, ext))

    t0 = time.perf_counter()
    state = init_state(as_network_arrays(S_tr), as_network_arrays(T_tr), cfg, g, d)
    l1_start, fid_start = scores(state.model)
    state = fit((S_tr, T_tr), cfg, g, d, state=state, callback=callback)
    l1_end, fid_end = scores(state.model)
    return ToyResult(l1_start, l1_end, fid(emb_target, feature_embed(S_te, ext)), fid_start, fid_end,
                     state.history, time.perf_counter() - t0)


def toy_bench(gan_steps: int = 1000, n_target: int = 100, seed: int = 0, seeds=(0, 1, 2, 3, 4)):
    """Augmentation bench on the two regimes with a scarce target domain.

    The first ``n_target`` target sequences form the real pool, split once
    30/10/60 so every seed sees the same held-out test set.  The generator is
    trained on all source sequences and the real training split only.
    """
    from .bench import BenchProtocol, run_bench, split_indices
    from .training import train

    S, Tt = toy_domains(200, 32, 3, seed=seed)
    real = Tt[:n_target]
    protocol = BenchProtocol(target=0, split_seed=seed, train_frac=0.3, val_frac=0.1, test_frac=0.6,
                             seeds=tuple(seeds))
    parts = split_indices(n_target, protocol, seed)
    model, _ = train((S, real[parts["train"]]), toy_train_config(gan_steps, seed))
    return run_bench(real, model, protocol, source_data=S)
