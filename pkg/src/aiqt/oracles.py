"""Independent verification oracles for the butterfly transform.

``dft_oracle`` is a dense O(N^2) unitary DFT.  ``dense_matrix`` rebuilds
the block unitary gate by gate from its circuit description (generic 2x2
mixers as single-qubit gates, ladder phases as controlled-phase gates,
plus the bit-reversal permutation) using a plain statevector simulator.
Neither shares code with the butterfly path.

Sign convention: the exponent is ``exp(-2j*pi*j*l/N)``, the one produced
by the negative ladder-angle initialization; the Fourier-equivalence
tests pin it.
"""

from __future__ import annotations

import numpy as np

from .butterfly import bit_reversal_permutation
from .errors import ResourceLimitError
from .model import ParameterSet, TransformModel, u3_matrix

_DENSE_N_LIMIT = 12


def dft_oracle(x) -> np.ndarray:
    """Unitary DFT, y_j = N^{-1/2} sum_l x_l exp(-2j*pi*j*l/N)."""
    x = np.asarray(x, dtype=np.complex128)
    N = x.shape[-1]
    return x @ dft_matrix(N).T


def dft_matrix(N: int) -> np.ndarray:
    j = np.arange(N)
    return np.exp(-2j * np.pi * np.outer(j, j) / N) / np.sqrt(N)


def _apply_single_qubit(mat: np.ndarray, u: np.ndarray, qubit: int, n: int) -> np.ndarray:
    """Apply a 2x2 gate on one qubit to every column of ``mat`` (N x C)."""
    hi = 1 << (n - 1 - qubit)
    lo = 1 << qubit
    r = mat.reshape(hi, 2, lo, -1)
    return np.einsum("ab,xbyc->xayc", u, r).reshape(mat.shape)


def _controlled_phase_diag(n: int, q1: int, q2: int, theta: float) -> np.ndarray:
    idx = np.arange(1 << n)
    both = ((idx >> q1) & 1) & ((idx >> q2) & 1)
    return np.where(both == 1, np.exp(1j * theta), 1.0)


def circuit_gates(p: ParameterSet):
    """Gate list of one block, in application order, before qubit relabeling.

    Yields ("cp", control, target, theta) and ("u3", qubit, (a, b, g));
    the bit-reversal permutation precedes all gates.  Qubit q carries bit
    q of the 0-based vector index.
    """
    for s in range(p.n):
        if s >= 1:
            theta = p.level_phases(s)
            for r in range(s):
                yield ("cp", r, s, float(theta[r]))
        yield ("u3", s, tuple(float(a) for a in p.mixers[s]))


def dense_matrix(p: ParameterSet) -> np.ndarray:
    """N x N unitary of one block, built gate by gate from the circuit."""
    if p.n > _DENSE_N_LIMIT:
        raise ResourceLimitError(
            f"dense_matrix: n={p.n} exceeds the cost guard ({_DENSE_N_LIMIT})"
        )
    n = p.n
    N = 1 << n
    perm = bit_reversal_permutation(n)
    # permutation matrix first: (M x)[i] = x[perm[i]]
    M = np.eye(N, dtype=np.complex128)[perm, :]
    for gate in circuit_gates(p):
        if gate[0] == "cp":
            _, q1, q2, theta = gate
            M = _controlled_phase_diag(n, q1, q2, theta)[:, None] * M
        else:
            _, q, angles = gate
            M = _apply_single_qubit(M, u3_matrix(*angles), q, n)
    return M


def dense_model_matrix(m: TransformModel) -> np.ndarray:
    """Product of block matrices, block 1 applied first."""
    M = dense_matrix(m.blocks[0])
    for b in m.blocks[1:]:
        M = dense_matrix(b) @ M
    return M
