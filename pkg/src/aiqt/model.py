"""Parameter containers for the trainable butterfly transform.

A single block on ``n`` qubits (vector length ``N = 2**n``) owns

* ``mixers`` -- ``n`` triples ``(alpha, beta, gamma)``, one generic 2x2
  unitary per butterfly stage, and
* ``phases`` -- ``n*(n-1)/2`` phase-ladder angles packed level by level:
  level ``L`` (``L = 1 .. n-1``) holds ``L`` angles and feeds the stage
  that merges blocks of size ``2**(L+1)``.

At the Fourier point (all mixers ``(pi/2, 0, pi)``, level ``L`` angles
``(-pi/2**L, ..., -pi/2)``) the block is exactly the unitary DFT with
exponent sign ``exp(-2j*pi*j*l/N)``; at the all-zero point it is the
identity.  See :mod:`aiqt.butterfly` for the evaluation.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

CHECKPOINT_FORMAT_VERSION = 1


def u3_matrix(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Generic 2x2 unitary mixer.

    ``[[cos(a/2), -e^{ig} sin(a/2)], [e^{ib} sin(a/2), e^{i(b+g)} cos(a/2)]]``
    """
    if not (math.isfinite(alpha) and math.isfinite(beta) and math.isfinite(gamma)):
        raise InvalidArgumentError("u3_matrix: angles must be finite")
    c = math.cos(alpha / 2.0)
    s = math.sin(alpha / 2.0)
    eb = complex(math.cos(beta), math.sin(beta))
    eg = complex(math.cos(gamma), math.sin(gamma))
    return np.array([[c, -eg * s], [eb * s, eb * eg * c]], dtype=np.complex128)


def ladder_size(n: int) -> int:
    return n * (n - 1) // 2


def level_offset(level: int) -> int:
    """Start of ladder level ``level`` (1-based) inside the packed phase vector."""
    return level * (level - 1) // 2


@dataclass
class ParameterSet:
    """All trainable angles of one butterfly block."""

    n: int
    mixers: np.ndarray  # shape (n, 3), radians
    phases: np.ndarray  # shape (n*(n-1)/2,), radians, packed by ladder level

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgumentError("ParameterSet: n must be >= 1")
        self.mixers = np.asarray(self.mixers, dtype=np.float64)
        self.phases = np.asarray(self.phases, dtype=np.float64)
        if self.mixers.shape != (self.n, 3):
            raise InvalidArgumentError(
                f"ParameterSet: mixers must have shape ({self.n}, 3)"
            )
        if self.phases.shape != (ladder_size(self.n),):
            raise InvalidArgumentError(
                f"ParameterSet: phases must have length {ladder_size(self.n)}"
            )
        if not (np.all(np.isfinite(self.mixers)) and np.all(np.isfinite(self.phases))):
            raise InvalidArgumentError("ParameterSet: all angles must be finite")

    @property
    def num_parameters(self) -> int:
        return 3 * self.n + ladder_size(self.n)

    def level_phases(self, level: int) -> np.ndarray:
        """Angles of ladder level ``level`` (1-based), length ``level``."""
        off = level_offset(level)
        return self.phases[off : off + level]

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.n, self.mixers.copy(), self.phases.copy())


def fourier_init(n: int) -> ParameterSet:
    """Parameters at which the block equals the unitary DFT (natural order)."""
    if n < 1:
        raise InvalidArgumentError("fourier_init: n must be >= 1")
    mixers = np.tile([math.pi / 2.0, 0.0, math.pi], (n, 1))
    phases = np.empty(ladder_size(n))
    for level in range(1, n):
        off = level_offset(level)
        # level L holds (-pi/2**L, -pi/2**(L-1), ..., -pi/2)
        phases[off : off + level] = [-math.pi / 2 ** (level - r) for r in range(level)]
    return ParameterSet(n, mixers, phases)


def identity_init(n: int) -> ParameterSet:
    """Zero-angle parameters: every gate collapses to the identity.

    The block then reduces to its fixed bit-reversal reordering (the same
    reordering that puts the Fourier point into natural index order; see
    :mod:`aiqt.butterfly`).  Coefficient magnitudes, top-k selections and
    reconstructions are all invariant under that reordering, and two such
    blocks in a row cancel exactly, so this is the neutral starting point
    for the extra blocks of a deep stack.
    """
    if n < 1:
        raise InvalidArgumentError("identity_init: n must be >= 1")
    return ParameterSet(n, np.zeros((n, 3)), np.zeros(ladder_size(n)))


@dataclass
class TransformModel:
    """Depth-``D`` stack of blocks; block ``d = 1`` acts first on the input."""

    blocks: list[ParameterSet] = field(default_factory=list)

    def __post_init__(self):
        if not self.blocks:
            raise InvalidArgumentError("TransformModel: needs at least one block")
        n = self.blocks[0].n
        if any(b.n != n for b in self.blocks):
            raise InvalidArgumentError("TransformModel: all blocks must share n")

    @property
    def n(self) -> int:
        return self.blocks[0].n

    @property
    def depth(self) -> int:
        return len(self.blocks)

    @property
    def num_parameters(self) -> int:
        return sum(b.num_parameters for b in self.blocks)

    def copy(self) -> "TransformModel":
        return TransformModel([b.copy() for b in self.blocks])

    def flatten(self) -> np.ndarray:
        """Pack all angles into one vector: per block, mixers row-major then phases."""
        parts = []
        for b in self.blocks:
            parts.append(b.mixers.ravel())
            parts.append(b.phases)
        return np.concatenate(parts)

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.num_parameters,):
            raise InvalidArgumentError(
                f"set_flat: expected {self.num_parameters} values, got {vec.shape}"
            )
        pos = 0
        for b in self.blocks:
            m = 3 * b.n
            b.mixers = vec[pos : pos + m].reshape(b.n, 3).copy()
            pos += m
            p = ladder_size(b.n)
            b.phases = vec[pos : pos + p].copy()
            pos += p


def fsl_model(n: int) -> TransformModel:
    """The fixed Fourier baseline as a depth-1 model."""
    return TransformModel([fourier_init(n)])


def deep_init(n: int, depth: int, seed: int = 0, noise_scale: float = 1e-8) -> TransformModel:
    """Depth-``depth`` starting point: Fourier first block, near-identity rest.

    The trailing blocks get tiny uniform angle noise (seeded) to break
    symmetry; the scale is small enough that epoch-0 metrics of any depth
    agree with depth 1 to well below 1e-6.
    """
    if depth < 1:
        raise InvalidArgumentError("deep_init: depth must be >= 1")
    rng = np.random.default_rng(seed)
    blocks = [fourier_init(n)]
    for _ in range(depth - 1):
        b = identity_init(n)
        b.mixers += rng.uniform(-noise_scale, noise_scale, b.mixers.shape)
        b.phases += rng.uniform(-noise_scale, noise_scale, b.phases.shape)
        blocks.append(b)
    return TransformModel(blocks)


def _atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(model: TransformModel, path: str, metadata: dict | None = None) -> None:
    """Write the model as JSON; floats keep full double precision."""
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "n": model.n,
        "depth": model.depth,
        "blocks": [
            {"mixers": b.mixers.tolist(), "phases": b.phases.tolist()}
            for b in model.blocks
        ],
        "metadata": dict(metadata or {}),
    }
    _atomic_write_text(path, json.dumps(doc, indent=2))


def load_checkpoint(path: str) -> tuple[TransformModel, dict]:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise InvalidArgumentError(
            f"load_checkpoint: unsupported format_version {doc.get('format_version')!r}"
        )
    n = int(doc["n"])
    blocks = [
        ParameterSet(n, np.array(b["mixers"]), np.array(b["phases"]))
        for b in doc["blocks"]
    ]
    if len(blocks) != int(doc["depth"]):
        raise InvalidArgumentError("load_checkpoint: depth does not match block count")
    return TransformModel(blocks), doc.get("metadata", {})
