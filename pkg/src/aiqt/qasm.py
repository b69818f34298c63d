"""OpenQASM 2.0 export of trained transforms, with round-trip verification.

Emitted gate order per block: for each ladder level the controlled-phase
gates, then the level's generic single-qubit mixer, and a terminal swap
network that realizes the fixed output ordering.  Qubit ``q[i]`` carries
bit ``i`` of the 0-based state index (little-endian); emitting the block
on reversed qubit labels and appending the swaps reproduces exactly the
unitary built by :func:`aiqt.oracles.dense_matrix`.

Before a file is finalized the emitted text is parsed back, simulated
gate by gate, and compared against the dense oracle; export aborts on
disagreement.
"""

from __future__ import annotations

import math
import os
import re
import tempfile

import numpy as np

from .errors import InvalidArgumentError
from .model import ParameterSet, TransformModel
from .oracles import (
    _apply_single_qubit,
    _controlled_phase_diag,
    dense_model_matrix,
)

_VERIFY_TOL = 1e-9


def emit_qasm(model: TransformModel) -> str:
    """OpenQASM 2.0 text for the full block stack, block 1 first."""
    n = model.n
    lines = [
        "OPENQASM 2.0;",
        'include "qelib1.inc";',
        f"qreg q[{n}];",
    ]
    for d, block in enumerate(model.blocks, start=1):
        lines.append(f"// block {d}")
        lines.extend(_block_gates(block))
    return "\n".join(lines) + "\n"


def _block_gates(p: ParameterSet) -> list[str]:
    n = p.n
    out = []
    for s in range(n):
        if s >= 1:
            theta = p.level_phases(s)
            for r in range(s):
                out.append(
                    f"cu1({float(theta[r])!r}) q[{n - 1 - r}],q[{n - 1 - s}];"
                )
        a, b, g = (float(v) for v in p.mixers[s])
        out.append(f"u3({a!r},{b!r},{g!r}) q[{n - 1 - s}];")
    for i in range(n // 2):
        out.append(f"swap q[{i}],q[{n - 1 - i}];")
    return out


_GATE_RE = re.compile(
    r"^(u3|cu1|swap)\s*(?:\(([^)]*)\))?\s+q\[(\d+)\](?:\s*,\s*q\[(\d+)\])?;$"
)


def parse_qasm(text: str) -> tuple[int, list[tuple]]:
    """Parse the subset of OpenQASM 2.0 this package emits.

    Returns (n, gates) with gates as ("u3", q, (a, b, g)),
    ("cu1", q1, q2, theta) or ("swap", q1, q2), in chronological order.
    """
    n = None
    gates = []
    for raw in text.splitlines():
        line = raw.split("//")[0].strip()
        if not line:
            continue
        if line.startswith("OPENQASM") or line.startswith("include"):
            continue
        m = re.match(r"^qreg\s+q\[(\d+)\];$", line)
        if m:
            n = int(m.group(1))
            continue
        m = _GATE_RE.match(line)
        if not m:
            raise InvalidArgumentError(f"parse_qasm: cannot parse line {line!r}")
        name, args, q1, q2 = m.group(1), m.group(2), int(m.group(3)), m.group(4)
        if name == "u3":
            angles = tuple(float(a) for a in args.split(","))
            if len(angles) != 3:
                raise InvalidArgumentError("parse_qasm: u3 needs three angles")
            gates.append(("u3", q1, angles))
        elif name == "cu1":
            gates.append(("cu1", q1, int(q2), float(args)))
        else:
            gates.append(("swap", q1, int(q2)))
    if n is None:
        raise InvalidArgumentError("parse_qasm: missing qreg declaration")
    return n, gates


def unitary_from_qasm(text: str) -> np.ndarray:
    """Rebuild the circuit unitary by straight statevector simulation."""
    n, gates = parse_qasm(text)
    N = 1 << n
    M = np.eye(N, dtype=np.complex128)
    for gate in gates:
        if gate[0] == "u3":
            _, q, (a, b, g) = gate
            c, s = math.cos(a / 2), math.sin(a / 2)
            u = np.array(
                [[c, -np.exp(1j * g) * s],
                 [np.exp(1j * b) * s, np.exp(1j * (b + g)) * c]]
            )
            M = _apply_single_qubit(M, u, q, n)
        elif gate[0] == "cu1":
            _, q1, q2, theta = gate
            M = _controlled_phase_diag(n, q1, q2, theta)[:, None] * M
        else:
            _, q1, q2 = gate
            idx = np.arange(N)
            b1 = (idx >> q1) & 1
            b2 = (idx >> q2) & 1
            swapped = idx ^ ((b1 ^ b2) << q1) ^ ((b1 ^ b2) << q2)
            M = M[swapped, :]
    return M


def verify_qasm(text: str, model: TransformModel, tol: float = _VERIFY_TOL) -> float:
    """Max elementwise deviation between the rebuilt and oracle unitaries."""
    rebuilt = unitary_from_qasm(text)
    reference = dense_model_matrix(model)
    return float(np.max(np.abs(rebuilt - reference)))


def export_qasm(model: TransformModel, path: str, tol: float = _VERIFY_TOL) -> float:
    """Emit, verify, and atomically write; abort on verification failure."""
    text = emit_qasm(model)
    err = verify_qasm(text, model, tol)
    if err > tol:
        raise InvalidArgumentError(
            f"export_qasm: round-trip deviation {err:.3e} exceeds {tol:.1e}; export aborted"
        )
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".qasm")
    with os.fdopen(fd, "w") as f:
        f.write(text)
    os.replace(tmp, path)
    return err
