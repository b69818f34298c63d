"""Trainable FFT-like butterfly transforms for sparse amplitude encoding."""

from .butterfly import active_backend, deep_forward, deep_inverse, forward, inverse
from .encoding import (
    RULE_CONJSYM,
    RULE_TOPK,
    energies,
    evaluate,
    evaluate_dataset,
    exact_state,
    rank_profile,
    reconstruct,
    select_conjugate_symmetric,
    select_topk,
    sparse_prep_cost,
    truncate_normalize,
)
from .model import (
    ParameterSet,
    TransformModel,
    deep_init,
    fourier_init,
    fsl_model,
    identity_init,
    load_checkpoint,
    save_checkpoint,
    u3_matrix,
)
from .oracles import dense_matrix, dense_model_matrix, dft_oracle
from .powerlaw import PowerLawFit, fit_power_law
from .qasm import emit_qasm, export_qasm, unitary_from_qasm, verify_qasm
from .training import (
    LossConfig,
    TrainConfig,
    backward,
    fd_gradient_oracle,
    soft_masked_loss,
    tail_loss,
    train,
)

__version__ = "0.1.0"
