"""Tail-loss training of the butterfly transform.

The hard objective is the batch-mean energy outside the top-k coefficient
set.  Selection is non-differentiable, so gradients flow through a
sigmoid soft mask around the k-th largest energy (temperature ``tau``)
with a straight-through contract: reported values use the hard mask, the
backward pass uses the soft surrogate, and the threshold ``t_k`` is
treated as a constant.  A small entropy penalty ``lam * H(m)`` is added
to the objective.

The backward pass is hand-derived reverse mode through the butterfly:
every stage is linear in the data, so the data adjoint runs the stages
with conjugate-transposed gates, and the parameter derivatives come from
the analytic derivatives of the mixer entries and of ``exp(1j*theta)``.
``fd_gradient_oracle`` is the independent central-difference check.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .butterfly import (
    _bitrev,
    deep_forward,
    deep_forward_saved,
    stage_phase_vector,
)
from .encoding import batch_masks, batch_pipeline, batch_states, RULE_TOPK
from .errors import (
    DegenerateInputError,
    InvalidArgumentError,
    NumericFailureError,
    ResourceLimitError,
    TrainingFailureError,
)
from .model import TransformModel, ladder_size, save_checkpoint

_TINY = 1e-300


@dataclass
class LossConfig:
    k: int
    tau: float = 1e-2
    lam: float = 1e-4

    def __post_init__(self):
        if self.tau <= 0:
            raise InvalidArgumentError("LossConfig: tau must be positive")
        if self.lam < 0:
            raise InvalidArgumentError("LossConfig: lam must be nonnegative")
        if self.k < 1:
            raise InvalidArgumentError("LossConfig: k must be >= 1")


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 128
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0   # 0 disables periodic checkpoints
    out_dir: str | None = None


@dataclass
class LossValues:
    """Per-batch objective pieces (all batch means)."""

    hard_tail: float      # energy outside the hard top-k set
    soft_tail: float      # sigmoid-mask surrogate
    entropy: float        # H(m) = -sum m ln m
    objective: float      # straight-through forward value: hard_tail + lam*entropy
    soft_objective: float  # soft_tail + lam*entropy (the differentiated quantity)


def _normalized_energies(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = np.sum(np.abs(y) ** 2, axis=1, keepdims=True)
    if np.any(s <= 0.0):
        raise DegenerateInputError("zero-energy sample in batch")
    return (np.abs(y) ** 2) / s, s


def _threshold(m: np.ndarray, k: int) -> np.ndarray:
    """k-th largest energy per row (the soft-mask pivot)."""
    N = m.shape[1]
    if k >= N:
        return np.min(m, axis=1, keepdims=True)
    return np.partition(m, N - k, axis=1)[:, N - k][:, None]


def _loss_pieces(m: np.ndarray, k: int, tau: float, lam: float,
                 t: np.ndarray | None = None):
    """Soft/hard tail, entropy, soft gates and d(obj)/dm for a batch."""
    B, N = m.shape
    if t is None:
        t = _threshold(m, k)
    g = 1.0 / (1.0 + np.exp(-(m - t) / tau))
    soft_tail = np.sum((1.0 - g) * m, axis=1)
    keep = batch_masks(m, RULE_TOPK, min(k, N))
    hard_tail = 1.0 - np.sum(np.where(keep, m, 0.0), axis=1)
    m_safe = np.maximum(m, _TINY)
    entropy = -np.sum(m * np.log(m_safe), axis=1)
    # d/dm of soft_tail (t frozen) plus the entropy term
    q = (1.0 - g) - m * g * (1.0 - g) / tau + lam * (-np.log(m_safe) - 1.0)
    return hard_tail, soft_tail, entropy, q


def tail_loss(X: np.ndarray, model: TransformModel, cfg: LossConfig) -> float:
    """Hard batch-mean tail energy outside the top-k set (reporting value)."""
    psi = batch_states(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    y = deep_forward(psi, model)
    m, _ = _normalized_energies(y)
    hard, _, _, _ = _loss_pieces(m, cfg.k, cfg.tau, cfg.lam)
    return float(np.mean(hard))


def soft_masked_loss(X: np.ndarray, model: TransformModel, cfg: LossConfig) -> LossValues:
    """All objective pieces; the straight-through forward value is hard."""
    psi = batch_states(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    y = deep_forward(psi, model)
    m, _ = _normalized_energies(y)
    hard, soft, ent, _ = _loss_pieces(m, cfg.k, cfg.tau, cfg.lam)
    return LossValues(
        hard_tail=float(np.mean(hard)),
        soft_tail=float(np.mean(soft)),
        entropy=float(np.mean(ent)),
        objective=float(np.mean(hard) + cfg.lam * np.mean(ent)),
        soft_objective=float(np.mean(soft) + cfg.lam * np.mean(ent)),
    )


def _u3_with_derivatives(alpha, beta, gamma):
    c, s = math.cos(alpha / 2), math.sin(alpha / 2)
    eb = complex(math.cos(beta), math.sin(beta))
    eg = complex(math.cos(gamma), math.sin(gamma))
    u = np.array([[c, -eg * s], [eb * s, eb * eg * c]], dtype=np.complex128)
    du_a = 0.5 * np.array([[-s, -eg * c], [eb * c, -eb * eg * s]], dtype=np.complex128)
    du_b = np.array([[0, 0], [1j * eb * s, 1j * eb * eg * c]], dtype=np.complex128)
    du_g = np.array([[0, -1j * eg * s], [0, 1j * eb * eg * c]], dtype=np.complex128)
    return u, du_a, du_b, du_g


def _block_backward(w: np.ndarray, stage_inputs: list[np.ndarray], p,
                    mix_grad: np.ndarray, phase_grad: np.ndarray) -> np.ndarray:
    """Adjoint of one block; accumulates parameter gradients in place.

    ``w`` is d(loss)/d(conj(output)) of shape (B, N); the return value is
    the same adjoint with respect to the block input.
    """
    n = p.n
    B, N = w.shape
    for s in range(n - 1, -1, -1):
        half = 1 << s
        vin = stage_inputs[s].reshape(B, N // (2 * half), 2, half)
        e = vin[:, :, 0, :]
        o = vin[:, :, 1, :]
        ph = stage_phase_vector(p, s)
        c = o * ph
        wr = w.reshape(B, N // (2 * half), 2, half)
        wt = wr[:, :, 0, :]
        wb = wr[:, :, 1, :]
        u, du_a, du_b, du_g = _u3_with_derivatives(*p.mixers[s])
        wtc = np.conj(wt)
        wbc = np.conj(wb)
        for col, du in enumerate((du_a, du_b, du_g)):
            mix_grad[s, col] += 2.0 * float(np.sum(
                (wtc * (du[0, 0] * e + du[0, 1] * c)
                 + wbc * (du[1, 0] * e + du[1, 1] * c)).real
            ))
        w_po = np.conj(u[0, 1]) * wt + np.conj(u[1, 1]) * wb
        if s >= 1:
            tvec = 2.0 * np.sum((1j * c * np.conj(w_po)).real, axis=(0, 1))
            off = s * (s - 1) // 2
            idx = np.arange(half)
            for r in range(s):
                phase_grad[off + r] += float(tvec[((idx >> r) & 1) == 1].sum())
        w_e = np.conj(u[0, 0]) * wt + np.conj(u[1, 0]) * wb
        w_o = np.conj(ph) * w_po
        new_w = np.empty_like(wr)
        new_w[:, :, 0, :] = w_e
        new_w[:, :, 1, :] = w_o
        w = new_w.reshape(B, N)
    return w[:, _bitrev(n)]


def loss_and_grad(X: np.ndarray, model: TransformModel, cfg: LossConfig,
                  frozen_t: np.ndarray | None = None):
    """Soft-surrogate objective and its exact gradient over all angles."""
    psi = batch_states(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    B, N = psi.shape
    y, saved = deep_forward_saved(psi, model)
    m, s_tot = _normalized_energies(y)
    hard, soft, ent, q = _loss_pieces(m, cfg.k, cfg.tau, cfg.lam, t=frozen_t)
    values = LossValues(
        hard_tail=float(np.mean(hard)),
        soft_tail=float(np.mean(soft)),
        entropy=float(np.mean(ent)),
        objective=float(np.mean(hard) + cfg.lam * np.mean(ent)),
        soft_objective=float(np.mean(soft) + cfg.lam * np.mean(ent)),
    )
    # head: w_j = dL/d(conj y_j) = (y_j / s)(q_j - sum_l q_l m_l), batch-averaged
    qm = np.sum(q * m, axis=1, keepdims=True)
    w = (y / s_tot) * (q - qm) / B
    grads = []
    for d in range(model.depth - 1, -1, -1):
        p = model.blocks[d]
        mix_grad = np.zeros((p.n, 3))
        phase_grad = np.zeros(ladder_size(p.n))
        w = _block_backward(w, saved[d], p, mix_grad, phase_grad)
        grads.append((mix_grad, phase_grad))
    grads.reverse()
    flat = np.concatenate([np.concatenate([mg.ravel(), pg]) for mg, pg in grads])
    if not np.all(np.isfinite(flat)):
        bad = int(np.flatnonzero(~np.isfinite(flat))[0])
        raise NumericFailureError("non-finite gradient entry", parameter_index=bad)
    return values, flat


def backward(X: np.ndarray, model: TransformModel, cfg: LossConfig) -> np.ndarray:
    """Gradient of the soft surrogate objective, flattened like the model."""
    _, grad = loss_and_grad(X, model, cfg)
    return grad


def fd_gradient_oracle(X: np.ndarray, model: TransformModel, cfg: LossConfig,
                       step: float = 1e-5) -> np.ndarray:
    """Central finite differences of the soft surrogate (tests only).

    The soft-mask threshold is frozen at its base-point value per sample,
    matching the straight-through contract of the analytic gradient.
    """
    if model.n > 6 or model.depth > 3:
        raise ResourceLimitError("fd_gradient_oracle: guarded to n <= 6, D <= 3")
    psi = batch_states(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    y0 = deep_forward(psi, model)
    m0, _ = _normalized_energies(y0)
    t0 = _threshold(m0, cfg.k)

    def objective(vec):
        probe = model.copy()
        probe.set_flat(vec)
        y = deep_forward(psi, probe)
        m, _ = _normalized_energies(y)
        _, soft, ent, _ = _loss_pieces(m, cfg.k, cfg.tau, cfg.lam, t=t0)
        return float(np.mean(soft) + cfg.lam * np.mean(ent))

    base = model.flatten()
    grad = np.zeros_like(base)
    for i in range(base.size):
        vp = base.copy()
        vp[i] += step
        vm = base.copy()
        vm[i] -= step
        grad[i] = (objective(vp) - objective(vm)) / (2 * step)
    return grad


def cosine_lr(epoch: int, cfg: TrainConfig) -> float:
    """Cosine decay over the first two thirds of training, then flat minimum."""
    t0 = math.ceil(2 * cfg.epochs / 3)
    if t0 <= 0 or epoch >= t0:
        return cfg.lr_min
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * (1 + math.cos(math.pi * epoch / t0)) / 2


@dataclass
class _AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


def _adam_step(params, grad, state, lr, cfg):
    state.step += 1
    state.m = cfg.beta1 * state.m + (1 - cfg.beta1) * grad
    state.v = cfg.beta2 * state.v + (1 - cfg.beta2) * grad * grad
    mhat = state.m / (1 - cfg.beta1 ** state.step)
    vhat = state.v / (1 - cfg.beta2 ** state.step)
    return params - lr * mhat / (np.sqrt(vhat) + cfg.eps)


def _epoch_metrics(X, model, loss_cfg) -> dict:
    out = batch_pipeline(X, model, RULE_TOPK, loss_cfg.k)
    values = soft_masked_loss(X, model, loss_cfg)
    return {
        "hard_tail_loss": values.hard_tail,
        "soft_loss": values.soft_objective,
        "entropy_term": values.entropy,
        "mean_imag_norm": float(np.mean(out["imag_norm"])),
        "mean_real_norm": float(np.mean(out["real_norm"])),
    }


def train(X: np.ndarray, model: TransformModel, loss_cfg: LossConfig,
          cfg: TrainConfig | None = None):
    """Minibatch Adam on the soft surrogate; deterministic under the seed.

    Returns ``(model, history)``; ``history[e]`` holds the full-training-set
    metrics after ``e`` epochs (``history[0]`` is the starting point).
    Divergence raises :class:`TrainingFailureError` carrying the last
    finite model.
    """
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgumentError("train: need a nonempty (S, N) array")
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    params = model.flatten()
    state = _AdamState(np.zeros_like(params), np.zeros_like(params))
    history = []
    t_start = time.perf_counter()
    row = {"epoch": 0, "lr": cosine_lr(0, cfg)}
    row.update(_epoch_metrics(X, model, loss_cfg))
    row["wall_time_s"] = time.perf_counter() - t_start
    history.append(row)
    last_good = model.copy()
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg)
        order = rng.permutation(X.shape[0])
        for start in range(0, X.shape[0], cfg.batch_size):
            batch = X[order[start : start + cfg.batch_size]]
            try:
                values, grad = loss_and_grad(batch, model, loss_cfg)
            except NumericFailureError as exc:
                raise TrainingFailureError(
                    f"non-finite gradient at epoch {epoch}", last_good, history
                ) from exc
            if not math.isfinite(values.soft_objective):
                raise TrainingFailureError(
                    f"non-finite loss at epoch {epoch}", last_good, history
                )
            params = _adam_step(params, grad, state, lr, cfg)
            model.set_flat(params)
        last_good = model.copy()
        row = {"epoch": epoch + 1, "lr": lr}
        row.update(_epoch_metrics(X, model, loss_cfg))
        row["wall_time_s"] = time.perf_counter() - t_start
        history.append(row)
        if cfg.checkpoint_every and cfg.out_dir and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(
                model, f"{cfg.out_dir}/checkpoint_epoch{epoch + 1:04d}.json",
                {"seed": cfg.seed, "epoch": epoch + 1,
                 "loss": row["hard_tail_loss"]},
            )
    return model, history
