"""Simulator and verification toolkit for a quantum-refereed steering game.

The referee hands one player a classical setting and the other a trusted
qubit; a payoff built from the reported correlations is positive only if
the shared resource can steer. This package evaluates that payoff exactly
for honest and for no-steering strategies, samples it at finite
statistics, and calibrates the penalty rate that makes the game sound.
"""

from .game import (
    BinaryPovm,
    CustomLocal,
    GameSpec,
    HonestQuantum,
    LhsDeterministic,
    LocalComponent,
    PayoffEstimate,
    Strategy,
    TallyTable,
    canonical_game,
    estimate_payoff,
    exact_payoff,
    joint_probabilities,
    lhs_best_deterministic,
    partial_bsm_povm,
    simulate_runs,
    singlet_projector_bc,
)
from .states import (
    BellIndex,
    RefereeEnsemble,
    bell_state,
    depolarize_ensemble,
    fidelity_pure,
    referee_ideal,
    referee_state,
    rotate_ensemble,
    werner_from_bell_weights,
    werner_state,
)
from .witness import (
    BootstrapResult,
    CalibrationError,
    CalibrationReport,
    CountRecord,
    average_fidelity,
    bloch_from_counts,
    bootstrap_calibration,
    calibrate,
    channel_covariance_check,
    chsh_werner,
    lhs_bound,
    regime_classify,
    rstar_oracle,
    rstar_printed,
    t_operator,
)

__all__ = [
    "BellIndex",
    "BinaryPovm",
    "BootstrapResult",
    "CalibrationError",
    "CalibrationReport",
    "CountRecord",
    "CustomLocal",
    "GameSpec",
    "HonestQuantum",
    "LhsDeterministic",
    "LocalComponent",
    "PayoffEstimate",
    "RefereeEnsemble",
    "Strategy",
    "TallyTable",
    "average_fidelity",
    "bell_state",
    "bloch_from_counts",
    "bootstrap_calibration",
    "calibrate",
    "canonical_game",
    "channel_covariance_check",
    "chsh_werner",
    "depolarize_ensemble",
    "estimate_payoff",
    "exact_payoff",
    "fidelity_pure",
    "joint_probabilities",
    "lhs_best_deterministic",
    "lhs_bound",
    "partial_bsm_povm",
    "referee_ideal",
    "referee_state",
    "regime_classify",
    "rotate_ensemble",
    "rstar_oracle",
    "rstar_printed",
    "simulate_runs",
    "singlet_projector_bc",
    "t_operator",
    "werner_from_bell_weights",
    "werner_state",
]
