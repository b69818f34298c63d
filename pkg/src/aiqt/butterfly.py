"""O(N log N) evaluation of the trainable butterfly transform.

Layout of one block on ``N = 2**n`` entries:

1. permute the input by bit reversal;
2. for stage ``s = 0 .. n-1``: view the vector as blocks of size
   ``2**(s+1)``; the first half of each block is the even branch, the
   second half the odd branch; multiply odd-branch element ``j`` by
   ``exp(1j * sum_r bit_r(j) * theta_r)`` with ``theta`` the ladder level
   ``L = s`` angles (stage 0 has no phases); mix the two branches with
   the stage's 2x2 mixer.

At the Fourier initialization stage ``s``'s phase vector reduces to the
standard FFT twiddles ``exp(-2j*pi*j/2**(s+1))`` and the whole block is
the unitary DFT in natural index order.

Hot stage kernels exist twice: a numba ``@njit`` version and a pure
numpy version.  ``AIQT_NUMBA=0`` in the environment forces the numpy
path; otherwise numba is used when importable.  ``benchmarks/`` compares
the two.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import InvalidArgumentError
from .model import ParameterSet, TransformModel, u3_matrix

__all__ = [
    "forward",
    "inverse",
    "deep_forward",
    "deep_inverse",
    "stage_phase_vector",
    "active_backend",
]


def _env_wants_numba() -> bool:
    return os.environ.get("AIQT_NUMBA", "1").lower() not in ("0", "false", "off")


try:  # pragma: no cover - import guard
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

_USE_NUMBA = _HAVE_NUMBA and _env_wants_numba()


def active_backend() -> str:
    """Name of the stage-kernel backend in use: 'numba' or 'numpy'."""
    return "numba" if _USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# stage kernels
# ---------------------------------------------------------------------------

def _stage_numpy(v, ph, u, phase_first):
    """Apply one butterfly stage in place on ``v`` of shape (B, N).

    phase_first=True:  out = U @ (even, ph*odd)          (forward stage)
    phase_first=False: (even, odd) = U @ out; odd *= ph  (inverse/adjoint stage)
    """
    B, N = v.shape
    half = ph.shape[0]
    r = v.reshape(B, N // (2 * half), 2, half)
    e = r[:, :, 0, :]
    o = r[:, :, 1, :]
    if phase_first:
        c = o * ph
        t0 = u[0, 0] * e + u[0, 1] * c
        t1 = u[1, 0] * e + u[1, 1] * c
    else:
        t0 = u[0, 0] * e + u[0, 1] * o
        t1 = (u[1, 0] * e + u[1, 1] * o) * ph
    r[:, :, 0, :] = t0
    r[:, :, 1, :] = t1


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _stage_numba(v, ph, u, phase_first):  # pragma: no cover - jitted
        B, N = v.shape
        half = ph.shape[0]
        nblocks = N // (2 * half)
        u00, u01, u10, u11 = u[0, 0], u[0, 1], u[1, 0], u[1, 1]
        for b in range(B):
            for blk in range(nblocks):
                base = blk * 2 * half
                for j in range(half):
                    e = v[b, base + j]
                    o = v[b, base + half + j]
                    if phase_first:
                        c = o * ph[j]
                        v[b, base + j] = u00 * e + u01 * c
                        v[b, base + half + j] = u10 * e + u11 * c
                    else:
                        v[b, base + j] = u00 * e + u01 * o
                        v[b, base + half + j] = (u10 * e + u11 * o) * ph[j]


def _apply_stage(v, ph, u, phase_first):
    if _USE_NUMBA:
        _stage_numba(v, ph, u, phase_first)
    else:
        _stage_numpy(v, ph, u, phase_first)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def bit_reversal_permutation(n: int) -> np.ndarray:
    """perm[i] = bit-reversed i on n bits; the permutation is an involution."""
    N = 1 << n
    perm = np.zeros(N, dtype=np.int64)
    for i in range(N):
        r = 0
        x = i
        for _ in range(n):
            r = (r << 1) | (x & 1)
            x >>= 1
        perm[i] = r
    return perm


_BITREV_CACHE: dict[int, np.ndarray] = {}


def _bitrev(n: int) -> np.ndarray:
    if n not in _BITREV_CACHE:
        _BITREV_CACHE[n] = bit_reversal_permutation(n)
    return _BITREV_CACHE[n]


def stage_phase_vector(p: ParameterSet, stage: int) -> np.ndarray:
    """Odd-branch phase factors of a stage, length ``2**stage``.

    Element ``j`` is ``exp(1j * sum_r bit_r(j) * theta_r)`` with ``theta``
    the ladder level ``L = stage`` angles; built by doubling.
    """
    ph = np.ones(1, dtype=np.complex128)
    if stage == 0:
        return ph
    theta = p.level_phases(stage)
    for r in range(stage):
        ph = np.concatenate([ph, ph * np.exp(1j * theta[r])])
    return ph


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim == 1:
        return x[None, :].copy(), True
    if x.ndim == 2:
        return x.copy(), False
    raise InvalidArgumentError("expected a vector or a (batch, N) array")


def _check_length(N: int, p: ParameterSet) -> None:
    if N != (1 << p.n):
        raise InvalidArgumentError(
            f"input length {N} does not match 2**n = {1 << p.n}"
        )


# ---------------------------------------------------------------------------
# block application (single ParameterSet)
# ---------------------------------------------------------------------------

def _block_forward_inplace(v: np.ndarray, p: ParameterSet, saved: list | None = None):
    """Run one block on batch ``v`` (modified in place after bit reversal).

    Returns the transformed array.  When ``saved`` is a list, the input of
    every stage (post bit reversal) is appended for the backward pass.
    """
    n = p.n
    v = v[:, _bitrev(n)]
    for s in range(n):
        if saved is not None:
            saved.append(v.copy())
        ph = stage_phase_vector(p, s)
        u = u3_matrix(*p.mixers[s])
        _apply_stage(v, ph, u, True)
    return v


def _block_inverse_inplace(v: np.ndarray, p: ParameterSet):
    n = p.n
    for s in range(n - 1, -1, -1):
        ph = np.conj(stage_phase_vector(p, s))
        u = u3_matrix(*p.mixers[s]).conj().T.copy()
        _apply_stage(v, ph, u, False)
    return v[:, _bitrev(n)]


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def forward(x, p: ParameterSet) -> np.ndarray:
    """y = U(p) x.  Accepts a vector or a (batch, N) array."""
    v, single = _as_batch(x)
    _check_length(v.shape[1], p)
    v = _block_forward_inplace(v, p)
    return v[0] if single else v


def inverse(y, p: ParameterSet) -> np.ndarray:
    """x = U(p)^{-1} y, via reversed stages with conjugate-transposed gates."""
    v, single = _as_batch(y)
    _check_length(v.shape[1], p)
    v = _block_inverse_inplace(v, p)
    return v[0] if single else v


def deep_forward(x, m: TransformModel) -> np.ndarray:
    """Apply all blocks, block 1 first."""
    v, single = _as_batch(x)
    _check_length(v.shape[1], m.blocks[0])
    for b in m.blocks:
        v = _block_forward_inplace(v, b)
    return v[0] if single else v


def deep_inverse(y, m: TransformModel) -> np.ndarray:
    """Apply block inverses in reverse order."""
    v, single = _as_batch(y)
    _check_length(v.shape[1], m.blocks[0])
    for b in reversed(m.blocks):
        v = _block_inverse_inplace(v, b)
    return v[0] if single else v


def deep_forward_saved(x: np.ndarray, m: TransformModel):
    """Batch forward that records every stage input, for the backward pass.

    Returns ``(y, saved)`` where ``saved[d]`` is the list of per-stage
    inputs of block ``d`` (each of shape (B, N), post bit reversal).
    """
    v, _ = _as_batch(x)
    _check_length(v.shape[1], m.blocks[0])
    saved: list[list[np.ndarray]] = []
    for b in m.blocks:
        stage_inputs: list[np.ndarray] = []
        v = _block_forward_inplace(v, b, stage_inputs)
        saved.append(stage_inputs)
    return v, saved
