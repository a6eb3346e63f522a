"""Exactly contractible tensor-network states of finite Abelian gauge theories.

Builders assemble closed-string superposition states on periodic lattices,
a fixed catalog of diagrammatic rewrite rules contracts them exactly, and
the observables layer computes reduced density matrices, entanglement
entropies and correlators, with a brute-force oracle for verification.
"""

from .errors import BudgetExceededError, UnsupportedBoundaryError, ValidationError
from .groups import (
    GroupElement,
    GroupSpec,
    branching_consistency,
    f_symbol,
    fourier_matrix,
    inverse,
    make_group,
    multiply,
    parse_group_literal,
    pentagon_check,
    self_inverse_elements,
)
from .network import (
    GaugeGraph,
    ImpuritySpec,
    LatticeSpec,
    Leg,
    TensorNetwork,
    build_ghz,
    build_lattice_state,
    build_sandwich,
    hexagonal_string_path,
    insert_impurity,
    lattice_graph,
)
from .oracle import amplitude, brute_force_contract, compare_to_pipeline
from .rewrite import RULES, apply_rule_at, contract_exactly, simplify
from .tensors import (
    BasisKet,
    Copy,
    Dense,
    DenseTensor,
    Fourier,
    FourierConj,
    GroupPlus,
    Impurity,
    SubCopy,
    UniformKet,
    bialgebra_condition_check,
    contract_pair,
    equal_up_to_scale,
    materialize,
)

__version__ = "0.1.0"
