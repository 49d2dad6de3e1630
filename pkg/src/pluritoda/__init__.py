"""Commuting families of Baecklund-type maps for relativistic Toda lattices.

Numerical verification toolkit: leg-function tables for seven lattice
families, the two commuting map families built from them, corner equation
and superposition consistency, discrete 2-form closure, monodromy
invariants with parameter-derivative (spectrality) identities, and local
conservation laws. A CLI (`pluritoda`) drives scripted verification runs.
"""

from .backlund import (
    Boundary,
    Branch,
    BranchSet,
    ChainState,
    MapKind,
    apply_map,
    euler_lagrange_step,
    evolve,
    forward_pair_to_momenta,
    lagrangian_value,
    random_pair_state,
    symplectic_form,
    tangent_map,
)
from .errors import (
    ConfigError,
    DomainCrossing,
    DomainViolation,
    InvalidParams,
    MatchingFailed,
    NoBranch,
    NonConvergence,
    NoRoot,
    PluritodaError,
    PrerequisiteViolated,
)
from .legs import (
    ALL_FAMILIES,
    DensityLegs,
    FamilyId,
    FamilyParams,
    LegFunction,
    LegSet,
    MapLegs,
    antiderivative_pair,
    build_leg_set,
    build_leg_set_normalized,
    cross_leg,
    invert_leg,
    lambda_density_legs,
    map_legs,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_FAMILIES",
    "Boundary",
    "Branch",
    "BranchSet",
    "ChainState",
    "ConfigError",
    "DensityLegs",
    "DomainCrossing",
    "DomainViolation",
    "FamilyId",
    "FamilyParams",
    "InvalidParams",
    "LegFunction",
    "LegSet",
    "MapKind",
    "MapLegs",
    "MatchingFailed",
    "NoBranch",
    "NoRoot",
    "NonConvergence",
    "PluritodaError",
    "PrerequisiteViolated",
    "antiderivative_pair",
    "apply_map",
    "build_leg_set",
    "build_leg_set_normalized",
    "cross_leg",
    "euler_lagrange_step",
    "evolve",
    "forward_pair_to_momenta",
    "invert_leg",
    "lagrangian_value",
    "lambda_density_legs",
    "map_legs",
    "random_pair_state",
    "symplectic_form",
    "tangent_map",
    "__version__",
]
