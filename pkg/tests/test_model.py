import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiqt.errors import InvalidArgumentError
from aiqt.model import (
    ParameterSet,
    TransformModel,
    deep_init,
    fourier_init,
    fsl_model,
    identity_init,
    ladder_size,
    level_offset,
    load_checkpoint,
    save_checkpoint,
    u3_matrix,
)
from conftest import random_model


def test_u3_special_points():
    # alpha=pi/2, beta=0, gamma=pi is the Hadamard gate
    h = u3_matrix(math.pi / 2, 0.0, math.pi)
    ref = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    assert np.max(np.abs(h - ref)) < 1e-15
    assert np.max(np.abs(u3_matrix(0, 0, 0) - np.eye(2))) < 1e-15


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_u3_always_unitary(a, b, g):
    u = u3_matrix(a, b, g)
    assert np.max(np.abs(u.conj().T @ u - np.eye(2))) < 1e-12


def test_u3_rejects_nonfinite():
    with pytest.raises(InvalidArgumentError):
        u3_matrix(float("nan"), 0.0, 0.0)


def test_ladder_packing():
    assert ladder_size(8) == 28
    assert level_offset(1) == 0
    p = fourier_init(4)
    # level L holds angles (-pi/2**L, ..., -pi/2)
    for level in range(1, 4):
        got = p.level_phases(level)
        assert got.shape == (level,)
        expect = [-math.pi / 2 ** (level - r) for r in range(level)]
        assert np.allclose(got, expect)


def test_parameter_set_shape_validation():
    with pytest.raises(InvalidArgumentError):
        ParameterSet(3, np.zeros((2, 3)), np.zeros(3))
    with pytest.raises(InvalidArgumentError):
        ParameterSet(3, np.zeros((3, 3)), np.zeros(2))
    with pytest.raises(InvalidArgumentError):
        ParameterSet(0, np.zeros((0, 3)), np.zeros(0))
    bad = np.zeros((3, 3))
    bad[0, 0] = np.inf
    with pytest.raises(InvalidArgumentError):
        ParameterSet(3, bad, np.zeros(3))


def test_num_parameters():
    assert fourier_init(8).num_parameters == 3 * 8 + 28
    assert deep_init(8, 4).num_parameters == 4 * (3 * 8 + 28)


def test_flatten_set_flat_roundtrip(rng):
    model = random_model(4, 3, rng)
    vec = model.flatten()
    other = deep_init(4, 3)
    other.set_flat(vec)
    assert np.array_equal(other.flatten(), vec)
    with pytest.raises(InvalidArgumentError):
        other.set_flat(vec[:-1])


def test_model_depth_and_block_consistency():
    with pytest.raises(InvalidArgumentError):
        TransformModel([])
    with pytest.raises(InvalidArgumentError):
        TransformModel([fourier_init(3), fourier_init(4)])
    assert fsl_model(5).depth == 1
    assert deep_init(5, 3).depth == 3


def test_deep_init_trailing_blocks_near_identity():
    model = deep_init(6, 4, seed=1)
    assert np.allclose(model.blocks[0].mixers, fourier_init(6).mixers)
    for b in model.blocks[1:]:
        assert np.max(np.abs(b.mixers)) <= 1e-8
        assert np.max(np.abs(b.phases)) <= 1e-8
    # seeded determinism
    again = deep_init(6, 4, seed=1)
    assert np.array_equal(model.flatten(), again.flatten())


def test_checkpoint_roundtrip(tmp_path, rng):
    model = random_model(4, 2, rng)
    path = str(tmp_path / "ckpt.json")
    save_checkpoint(model, path, {"note": "x"})
    loaded, meta = load_checkpoint(path)
    assert meta == {"note": "x"}
    assert loaded.n == 4 and loaded.depth == 2
    assert np.array_equal(loaded.flatten(), model.flatten())  # bit-exact


def test_checkpoint_rejects_bad_version(tmp_path, rng):
    model = random_model(3, 1, rng)
    path = str(tmp_path / "ckpt.json")
    save_checkpoint(model, path)
    doc = json.loads(open(path).read())
    doc["format_version"] = 99
    with open(path, "w") as f:
        json.dump(doc, f)
    with pytest.raises(InvalidArgumentError):
        load_checkpoint(path)


def test_identity_init_zero_angles():
    p = identity_init(5)
    assert np.all(p.mixers == 0.0) and np.all(p.phases == 0.0)
