import csv

import numpy as np
import pytest

from aiscyclegen.bench import (
    ABLATION_COLUMNS, BENCH_COLUMNS, AblationRow, BenchProtocol, BenchResult, RegressorConfig, configuration_name,
    fit_regressor, make_examples, predict, run_ablation, run_bench, split_indices, write_ablation_table,
    write_bench_table,
)
from aiscyclegen.errors import ConfigError, ContractError, ParameterError
from aiscyclegen.metrics import random_projection
from aiscyclegen.model import CycleGanModel, DiscriminatorConfig, GeneratorConfig
from aiscyclegen.toy import toy_domains
from aiscyclegen.training import TrainConfig

FAST = RegressorConfig(channels=4, layers=1, epochs=5, batch_size=16)


def small_model(d=3, L=16):
    return CycleGanModel.create(GeneratorConfig(d, L, 4, 2, 1), DiscriminatorConfig(d, L, 4, 2), 0)


def test_split_indices_partition():
    parts = split_indices(20, BenchProtocol(), 0)
    allidx = np.concatenate([parts["train"], parts["val"], parts["test"]])
    assert sorted(allidx.tolist()) == list(range(20)) and len(parts["test"]) == 2
    with pytest.raises(ParameterError):
        split_indices(3, BenchProtocol(), 0)


def test_make_examples_uses_last_step_as_label():
    seqs = np.arange(2 * 4 * 3, dtype=float).reshape(2, 4, 3)
    X, y = make_examples(seqs, 1)
    assert X.shape == (2, 3, 3) and y.tolist() == [seqs[0, -1, 1], seqs[1, -1, 1]]
    assert np.array_equal(X[0, :, 0], seqs[0, 0])


def test_regressor_learns_linear_target():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(200, 2, 6))
    y = X[:, 0, -1] * 0.5 + 0.2
    params = fit_regressor(X[:160], y[:160], X[160:], y[160:], RegressorConfig(epochs=60), 0)
    assert np.mean(np.abs(predict(params, X[160:]) - y[160:])) < 0.05


def test_ratio_zero_gives_zero_deltas(tmp_path):
    real, _ = toy_domains(30, 16, 3, seed=1)
    res = run_bench(real, None, BenchProtocol(ratio=0.0, regressor=FAST, seeds=(0, 1)))
    assert res.deltas() == {"MAE": (0.0, 0.0), "RMSE": (0.0, 0.0), "R2": (0.0, 0.0)}
    write_bench_table(res, tmp_path / "b.csv")
    rows = list(csv.reader((tmp_path / "b.csv").open()))
    assert tuple(rows[0]) == BENCH_COLUMNS
    assert [r[0] for r in rows[1:]] == ["CNN-Reg", "CNN-Reg + CycleGAN Augmentation"]


def test_augmented_arm_uses_synthetic_examples():
    src, real = toy_domains(30, 16, 3, seed=2)
    res = run_bench(real, small_model(), BenchProtocol(ratio=1.0, regressor=FAST, seeds=(0,)), source_data=src)
    run = res.runs[0]
    assert run.n_synthetic == run.n_train and run.augmented.n_gen == run.n_synthetic


def test_deltas_antisymmetric():
    src, real = toy_domains(30, 16, 3, seed=2)
    res = run_bench(real, small_model(), BenchProtocol(ratio=1.0, regressor=FAST, seeds=(0, 1)), source_data=src)
    swapped = BenchResult([type(r)(r.seed, r.augmented, r.baseline, r.n_train, r.n_synthetic) for r in res.runs])
    for m in ("MAE", "RMSE", "R2"):
        assert swapped.deltas()[m][0] == pytest.approx(-res.deltas()[m][0])


def test_bench_contract_errors():
    src, real = toy_domains(20, 16, 3)
    with pytest.raises(ContractError):
        run_bench(real, None, BenchProtocol(regressor=FAST, seeds=(0,)), source_data=src)
    with pytest.raises(ContractError):
        run_bench(real, small_model(L=8), BenchProtocol(regressor=FAST, seeds=(0,)), source_data=src)
    with pytest.raises(ContractError):
        run_bench(real, None, BenchProtocol(target="sog", ratio=0.0, regressor=FAST, seeds=(0,)))
    with pytest.raises(ConfigError):
        run_bench(real, None, BenchProtocol(train_frac=0.9, ratio=0.0))


def test_explicit_splits_respected():
    real, _ = toy_domains(20, 16, 3)
    splits = {"train": np.arange(12), "val": np.arange(12, 15), "test": np.arange(15, 20)}
    res = run_bench(real, None, BenchProtocol(ratio=0.0, regressor=FAST, seeds=(0,)), splits=splits)
    assert res.runs[0].n_train == 12 and res.runs[0].baseline.n_real == 5


# ---------------------------------------------------------------- ablation


def test_configuration_names():
    assert [configuration_name(d) for d in (1, 2, 3, 5)] == [
        "Shallow Generator", "Shallow Generator", "Proposed", "Deep Generator"]


def ablation(depths):
    s, t = toy_domains(12, 16, 3, seed=0)
    cfg = TrainConfig(steps=2, batch_size=4, critic_iters=1, learning_rate=1e-3, seed=0)
    return run_ablation((s, t), depths, cfg, GeneratorConfig(3, 16, 4, 3, 1), DiscriminatorConfig(3, 16, 4, 2),
                        extractor=random_projection(0, 4))


def test_ablation_rows_and_determinism(tmp_path):
    a, b = ablation((1, 3)), ablation((1, 3))
    assert [(r.configuration, r.cnn_layers) for r in a] == [("Shallow Generator", 1), ("Proposed", 3)]
    assert [(r.psnr, r.fid) for r in a] == [(r.psnr, r.fid) for r in b]
    write_ablation_table(a, tmp_path / "a.csv")
    rows = list(csv.reader((tmp_path / "a.csv").open()))
    assert tuple(rows[0]) == ABLATION_COLUMNS and len(rows) == 3


def test_ablation_failure_keeps_row(tmp_path):
    rows = ablation((0, 1))
    assert rows[0].failed and not rows[1].failed
    write_ablation_table(rows, tmp_path / "a.csv")
    assert list(csv.reader((tmp_path / "a.csv").open()))[1][2:] == ["FAILED", "FAILED"]


def test_ablation_needs_depths():
    with pytest.raises(ParameterError):
        run_ablation((np.zeros((4, 16, 3)), np.zeros((4, 16, 3))), ())


def test_failed_row_property():
    assert AblationRow("Proposed", 3, None, None, "boom").failed
