"""Adversarially robust quantum state tomography and identity testing."""

from ._rng import make_rng, mix64
from ._validation import ValidationError
from .adversary import (
    ContractViolation,
    CouplingPlan,
    OutcomeRecord,
    coupling_attack,
    maximal_couple,
    replace_attack,
    spam_attack,
    state_swap_attack,
)
from .core import hs_norm, op_norm, project_to_state, trace_norm, truncate_rank
from .estimate import (
    FilterTomography,
    NaiveTomography,
    RobustConfig,
    SubsetOracleTomography,
    filter_robust_covariance,
    naive_tomography,
    subset_oracle,
)
from .harness import ExperimentConfig, run_experiment
from .measure import Povm, basis_povm, born_distribution, sample_outcomes, sample_uniform_povm
from .qtest import TesterConfig, quantum_identity_test, robust_identity_test

__all__ = [
    "ContractViolation",
    "CouplingPlan",
    "ExperimentConfig",
    "FilterTomography",
    "NaiveTomography",
    "OutcomeRecord",
    "Povm",
    "RobustConfig",
    "SubsetOracleTomography",
    "TesterConfig",
    "ValidationError",
    "basis_povm",
    "born_distribution",
    "coupling_attack",
    "filter_robust_covariance",
    "hs_norm",
    "make_rng",
    "maximal_couple",
    "mix64",
    "naive_tomography",
    "op_norm",
    "project_to_state",
    "quantum_identity_test",
    "replace_attack",
    "robust_identity_test",
    "run_experiment",
    "sample_outcomes",
    "sample_uniform_povm",
    "spam_attack",
    "state_swap_attack",
    "subset_oracle",
    "trace_norm",
    "truncate_rank",
]
