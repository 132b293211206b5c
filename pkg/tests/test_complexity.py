import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiscyclegen.complexity import COLUMNS, ComplexityRecord, append_complexity_row, complexity, count_parameters
from aiscyclegen.errors import ParameterError
from aiscyclegen.model import CycleGanModel, DiscriminatorConfig, GeneratorConfig, load_model, save_model


def test_zero_coefficients():
    assert complexity(ComplexityRecord(10, 2.0, 3.0, 0.0, 0.0)) == 0.0


def test_unit_coefficients():
    assert complexity(ComplexityRecord(10, 2.0, 3.0)) == 23.0


def test_negative_inputs_rejected():
    with pytest.raises(ParameterError):
        complexity(ComplexityRecord(10, -1.0, 3.0))
    with pytest.raises(ParameterError):
        complexity(ComplexityRecord(-1, 1.0, 3.0))


@settings(max_examples=50)
@given(p=st.integers(0, 10**6), tt=st.floats(0, 1e4), to=st.floats(0, 1e4), k=st.floats(0, 10))
def test_linear_in_each_argument(p, tt, to, k):
    base = complexity(ComplexityRecord(p, tt, to))
    assert complexity(ComplexityRecord(p, tt * k, to)) == pytest.approx(base + p * tt * (k - 1), rel=1e-9, abs=1e-6)
    assert complexity(ComplexityRecord(p, tt, to * k)) == pytest.approx(base + to * (k - 1), rel=1e-9, abs=1e-6)


def test_count_empty_and_dense():
    assert count_parameters(None) == 0
    assert count_parameters({}) == 0
    assert count_parameters({"W": np.zeros((7, 3)), "b": np.zeros(3)}) == 7 * 3 + 3


def test_count_toy_model_matches_shapes():
    m = CycleGanModel.create(GeneratorConfig(3, 32, 8, 3, 3), DiscriminatorConfig(3, 32, 8, 3))
    by_shape = sum(int(np.prod(t.shape)) for net in m.networks().values() for t in net.tensors.values())
    assert count_parameters(m) == by_shape
    # batch-norm running statistics are not trainable
    assert count_parameters(m) < sum(a.size for net in m.networks().values() for a in net.state_arrays().values())


def test_count_invariant_under_checkpoint(tmp_path):
    m = CycleGanModel.create(GeneratorConfig(3, 16, 4, 2, 1), DiscriminatorConfig(3, 16, 4, 2))
    save_model(tmp_path / "m.ckpt", m)
    assert count_parameters(load_model(tmp_path / "m.ckpt")) == count_parameters(m)


def test_append_rows(tmp_path):
    path = tmp_path / "complexity.csv"
    append_complexity_row(ComplexityRecord(10, 2.0, 3.0), path)
    append_complexity_row(ComplexityRecord(5, 1.0, 0.0, 2.0), path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == list(COLUMNS) and len(rows) == 3
    assert float(rows[1][-1]) == 23.0 and float(rows[2][-1]) == 10.0
