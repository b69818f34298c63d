import numpy as np
import pytest

from aiqt.butterfly import forward
from aiqt.errors import ResourceLimitError
from aiqt.model import fourier_init, identity_init
from aiqt.oracles import (
    circuit_gates,
    dense_matrix,
    dense_model_matrix,
    dft_matrix,
)
from conftest import random_model, random_parameter_set


def test_dense_matrix_is_unitary(rng):
    for n in (2, 4, 6):
        M = dense_matrix(random_parameter_set(n, rng))
        assert np.max(np.abs(M.conj().T @ M - np.eye(1 << n))) < 1e-12


def test_dense_matrix_matches_butterfly(rng):
    for n in (2, 3, 5):
        p = random_parameter_set(n, rng)
        M = dense_matrix(p)
        x = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
        assert np.max(np.abs(M @ x - forward(x, p))) < 1e-11


def test_dense_matrix_fourier_point():
    for n in (1, 3, 5):
        assert np.max(np.abs(dense_matrix(fourier_init(n)) - dft_matrix(1 << n))) < 1e-12


def test_dense_model_matrix_is_block_product(rng):
    model = random_model(3, 3, rng)
    M = dense_model_matrix(model)
    ref = np.eye(8, dtype=np.complex128)
    for b in model.blocks:
        ref = dense_matrix(b) @ ref
    assert np.max(np.abs(M - ref)) < 1e-12


def test_gate_counts(rng):
    p = random_parameter_set(5, rng)
    gates = list(circuit_gates(p))
    assert sum(g[0] == "u3" for g in gates) == 5
    assert sum(g[0] == "cp" for g in gates) == 10  # n(n-1)/2


def test_identity_point_dense_matrix_is_permutation():
    M = dense_matrix(identity_init(4))
    assert np.all((np.abs(M) < 1e-15) | (np.abs(M - 1) < 1e-15))
    assert np.allclose(M.sum(axis=0), 1.0) and np.allclose(M.sum(axis=1), 1.0)


def test_dense_cost_guard(rng):
    with pytest.raises(ResourceLimitError):
        dense_matrix(random_parameter_set(13, rng))
