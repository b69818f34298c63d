"""Sparse amplitude-encoding pipeline around a transform.

Energy profiles, coefficient selection (plain top-k and the baseline's
conjugate-symmetric rule), truncation/normalization, reconstruction, and
all evaluation metrics.  Indices are 0-based everywhere, including file
output: the DC coefficient is index 0 and the Nyquist coefficient is
index N/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .butterfly import deep_forward, deep_inverse
from .errors import DegenerateInputError, InvalidArgumentError
from .model import TransformModel

RULE_TOPK = "plain-topk"
RULE_CONJSYM = "conjugate-symmetric"


@dataclass
class EnergyProfile:
    """Normalized squared magnitudes of a coefficient vector."""

    m: np.ndarray          # length N, nonnegative, sums to 1
    rank_order: np.ndarray  # permutation sorting m descending, ties by lower index

    @property
    def N(self) -> int:
        return self.m.shape[0]


@dataclass
class SelectionMask:
    """Retained index set plus the rule that produced it."""

    kept: np.ndarray  # sorted 0-based indices
    rule: str         # RULE_TOPK or RULE_CONJSYM
    budget: int       # nominal k; |kept| = k (top-k) or k + 2 (conjugate-symmetric)


@dataclass
class ReconstructionReport:
    crmse: float
    fidelity: float
    imag_norm: float
    real_norm: float
    tail_energy: float
    kept_size: int


def energies(y) -> EnergyProfile:
    """m_j = |y_j|^2 / sum_l |y_l|^2, with a descending rank order."""
    y = np.asarray(y, dtype=np.complex128)
    s = float(np.sum(np.abs(y) ** 2))
    if s <= 0.0:
        raise DegenerateInputError("energies: zero vector")
    m = (np.abs(y) ** 2) / s
    order = np.argsort(-m, kind="stable")
    return EnergyProfile(m, order)


def select_topk(profile: EnergyProfile, k: int) -> SelectionMask:
    """Indices of the k largest energies; ties broken by lower index."""
    N = profile.N
    if not 1 <= k <= N:
        raise InvalidArgumentError(f"select_topk: k={k} out of range 1..{N}")
    kept = np.sort(profile.rank_order[:k])
    return SelectionMask(kept, RULE_TOPK, k)


def select_conjugate_symmetric(profile: EnergyProfile, k: int) -> SelectionMask:
    """Pairwise selection that keeps Fourier spectra of real inputs symmetric.

    Indices 0 (DC) and N/2 (Nyquist) are always kept and do not count
    against the budget; the pairs (j, N-j), j = 1..N/2-1, are ranked by
    m_j + m_{N-j} and the top k/2 pairs contribute both members, so
    |kept| = k + 2.
    """
    N = profile.N
    if N % 2 != 0:
        raise InvalidArgumentError("select_conjugate_symmetric: N must be even")
    if k % 2 != 0:
        raise InvalidArgumentError("select_conjugate_symmetric: k must be even")
    if not 0 <= k // 2 <= N // 2 - 1:
        raise InvalidArgumentError(
            f"select_conjugate_symmetric: k={k} exceeds the {N // 2 - 1} available pairs"
        )
    j = np.arange(1, N // 2)
    scores = profile.m[j] + profile.m[N - j]
    top_pairs = j[np.argsort(-scores, kind="stable")[: k // 2]]
    kept = np.concatenate([[0, N // 2], top_pairs, N - top_pairs])
    return SelectionMask(np.sort(kept), RULE_CONJSYM, k)


def select(profile: EnergyProfile, rule: str, k: int) -> SelectionMask:
    if rule == RULE_TOPK:
        return select_topk(profile, k)
    if rule == RULE_CONJSYM:
        return select_conjugate_symmetric(profile, k)
    raise InvalidArgumentError(f"unknown selection rule {rule!r}")


def truncate_normalize(y, mask: SelectionMask) -> np.ndarray:
    """Zero everything outside the mask and renormalize to unit norm."""
    y = np.asarray(y, dtype=np.complex128)
    phi = np.zeros_like(y)
    kept = mask.kept
    norm = np.linalg.norm(y[kept])
    if norm <= 0.0:
        raise DegenerateInputError("truncate_normalize: all retained coefficients are zero")
    phi[kept] = y[kept] / norm
    return phi


def exact_state(x) -> np.ndarray:
    """Unit-norm amplitude vector of a real input."""
    x = np.asarray(x, dtype=np.float64)
    norm = np.linalg.norm(x)
    if norm <= 0.0:
        raise DegenerateInputError("exact_state: zero vector")
    return (x / norm).astype(np.complex128)


def reconstruct(phi, model: TransformModel) -> np.ndarray:
    """Inverse-transform a unit-norm truncated coefficient state."""
    phi = np.asarray(phi, dtype=np.complex128)
    if abs(np.linalg.norm(phi) - 1.0) > 1e-9:
        raise InvalidArgumentError("reconstruct: input state must have unit norm")
    return deep_inverse(phi, model)


def metrics(psi: np.ndarray, psi_tilde: np.ndarray) -> tuple[float, float, float, float]:
    """(cRMSE, fidelity, imag norm, real norm) of a state pair."""
    crmse = float(np.sqrt(np.mean(np.abs(psi_tilde - psi) ** 2)))
    fid = float(np.abs(np.vdot(psi, psi_tilde)) ** 2)
    return (
        crmse,
        fid,
        float(np.linalg.norm(psi_tilde.imag)),
        float(np.linalg.norm(psi_tilde.real)),
    )


def evaluate(x, model: TransformModel, rule: str, k: int) -> ReconstructionReport:
    """Run the full pipeline on one real sample and report all metrics."""
    psi = exact_state(x)
    y = deep_forward(psi, model)
    profile = energies(y)
    mask = select(profile, rule, k)
    phi = truncate_normalize(y, mask)
    psi_tilde = reconstruct(phi, model)
    crmse, fid, inorm, rnorm = metrics(psi, psi_tilde)
    tail = float(1.0 - np.sum(profile.m[mask.kept]))
    return ReconstructionReport(crmse, fid, inorm, rnorm, tail, int(mask.kept.size))


# ---------------------------------------------------------------------------
# batched pipeline (used by training history and dataset evaluation)
# ---------------------------------------------------------------------------

def batch_states(X: np.ndarray) -> np.ndarray:
    """Row-normalize a (S, N) real array into unit-norm states."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms <= 0.0):
        raise DegenerateInputError("batch_states: zero-norm sample")
    return (X / norms).astype(np.complex128)


def batch_masks(m: np.ndarray, rule: str, k: int) -> np.ndarray:
    """Boolean keep-mask per row of an (S, N) energy array."""
    S, N = m.shape
    keep = np.zeros((S, N), dtype=bool)
    if rule == RULE_TOPK:
        if not 1 <= k <= N:
            raise InvalidArgumentError(f"batch_masks: k={k} out of range 1..{N}")
        order = np.argsort(-m, axis=1, kind="stable")[:, :k]
        np.put_along_axis(keep, order, True, axis=1)
    elif rule == RULE_CONJSYM:
        j = np.arange(1, N // 2)
        if N % 2 != 0 or k % 2 != 0 or k // 2 > N // 2 - 1:
            raise InvalidArgumentError("batch_masks: invalid conjugate-symmetric budget")
        scores = m[:, j] + m[:, N - j]
        top = np.argsort(-scores, axis=1, kind="stable")[:, : k // 2] + 1
        rows = np.arange(S)[:, None]
        keep[rows, top] = True
        keep[rows, N - top] = True
        keep[:, 0] = True
        keep[:, N // 2] = True
    else:
        raise InvalidArgumentError(f"unknown selection rule {rule!r}")
    return keep


def batch_pipeline(X: np.ndarray, model: TransformModel, rule: str, k: int) -> dict:
    """Vectorized pipeline over a (S, N) real sample array.

    Returns per-sample arrays: states, coefficients, energies, keep masks,
    reconstructions, and all four metrics plus the hard tail energy.
    """
    psi = batch_states(X)
    y = deep_forward(psi, model)
    m = np.abs(y) ** 2
    m /= np.sum(m, axis=1, keepdims=True)
    keep = batch_masks(m, rule, k)
    yk = np.where(keep, y, 0.0)
    norms = np.linalg.norm(yk, axis=1, keepdims=True)
    if np.any(norms <= 0.0):
        raise DegenerateInputError("batch_pipeline: all retained coefficients are zero")
    phi = yk / norms
    psi_tilde = deep_inverse(phi, model)
    diff = psi_tilde - psi
    return {
        "psi": psi,
        "y": y,
        "m": m,
        "keep": keep,
        "phi": phi,
        "psi_tilde": psi_tilde,
        "crmse": np.sqrt(np.mean(np.abs(diff) ** 2, axis=1)),
        "fidelity": np.abs(np.sum(np.conj(psi) * psi_tilde, axis=1)) ** 2,
        "imag_norm": np.linalg.norm(psi_tilde.imag, axis=1),
        "real_norm": np.linalg.norm(psi_tilde.real, axis=1),
        "tail": 1.0 - np.sum(np.where(keep, m, 0.0), axis=1),
    }


def evaluate_dataset(X: np.ndarray, model: TransformModel, rule: str, k: int,
                     workers: int = 1) -> dict:
    """Unweighted sample means of all pipeline metrics over a dataset.

    With workers > 1 the samples are chunked over a process pool; the
    chunked mean may differ from the serial one below 1e-12.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgumentError("evaluate_dataset: need a nonempty (S, N) array")
    if workers > 1 and X.shape[0] > 1:
        sums = _parallel_metric_sums(X, model, rule, k, workers)
    else:
        sums = _metric_sums((X, model, rule, k))
    S = X.shape[0]
    kept_size = k if rule == RULE_TOPK else k + 2
    return {
        "k": k,
        "rule": rule,
        "depth": model.depth,
        "kept_size": kept_size,
        "mean_crmse": sums["crmse"] / S,
        "mean_fidelity": sums["fidelity"] / S,
        "mean_imag_norm": sums["imag_norm"] / S,
        "mean_real_norm": sums["real_norm"] / S,
        "mean_tail": sums["tail"] / S,
        "n_samples": S,
    }


def _metric_sums(args) -> dict:
    X, model, rule, k = args
    out = batch_pipeline(X, model, rule, k)
    return {key: float(np.sum(out[key])) for key in
            ("crmse", "fidelity", "imag_norm", "real_norm", "tail")}


def _parallel_metric_sums(X, model, rule, k, workers) -> dict:
    from concurrent.futures import ProcessPoolExecutor

    chunks = np.array_split(X, min(workers, X.shape[0]))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_metric_sums, [(c, model, rule, k) for c in chunks]))
    return {key: sum(p[key] for p in parts) for key in parts[0]}


def rank_profile(X: np.ndarray, model: TransformModel) -> tuple[np.ndarray, np.ndarray]:
    """Mean and std of the descending-sorted energy profile, per rank."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgumentError("rank_profile: need a nonempty (S, N) array")
    psi = batch_states(X)
    y = deep_forward(psi, model)
    m = np.abs(y) ** 2
    m /= np.sum(m, axis=1, keepdims=True)
    sorted_m = -np.sort(-m, axis=1)
    return sorted_m.mean(axis=0), sorted_m.std(axis=0)


def sparse_prep_cost(n: int, k: int, depth: int = 1) -> dict:
    """Order-of-magnitude gate budget of the encoding step, plus exact
    per-block transform gate counts (n mixers + n(n-1)/2 controlled phases).
    """
    if n < 2:
        raise InvalidArgumentError("sparse_prep_cost: n must be >= 2")
    if not 1 <= k <= (1 << n):
        raise InvalidArgumentError("sparse_prep_cost: k out of range")
    per_block = n + n * (n - 1) // 2
    return {
        "sparse_prep_estimate": n * k / math.log(n) + n,  # asymptotic, unit constants
        "inverse_transform_estimate": n + n * n,
        "transform_gates_per_block": per_block,
        "transform_gates_total": depth * per_block,
        "estimate_note": "order-of-magnitude only; unit constants",
    }
