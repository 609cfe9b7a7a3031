"""F-PCSA: mergeable distinct-count sketches over finite fields."""

from .constants import EstimatorConstants, constants_for, phi, psi_moments, nu
from .errors import (
    ConfigurationError,
    DomainError,
    ExperimentError,
    FormatError,
    FpcsaError,
    MergeError,
    ResourceLimitError,
    UsageError,
)
from .field import FieldSpec
from .hashing import HashPlan, assign
from .harness import ExperimentConfig, ExperimentReport, cell_law_check, run_experiment
from .l0 import ExactState, PrimeScheme, exact_l0, mass_discount, scheme_failure_rate, select_prime
from .primes import primes_at_least, primes_first_n
from .sketch import Estimate, Sketch

__all__ = [
    "ConfigurationError", "DomainError", "Estimate", "EstimatorConstants", "ExactState",
    "ExperimentConfig", "ExperimentError", "ExperimentReport", "FieldSpec", "FormatError",
    "FpcsaError", "HashPlan", "MergeError", "PrimeScheme", "ResourceLimitError", "Sketch",
    "UsageError", "assign", "cell_law_check", "constants_for", "exact_l0", "mass_discount",
    "nu", "phi", "primes_at_least", "primes_first_n", "psi_moments", "run_experiment",
    "scheme_failure_rate", "select_prime",
]
