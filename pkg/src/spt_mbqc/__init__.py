"""Symmetry-protected plaquette states and measurement-based computation on them."""

from .cohomology import (
    Cochain3,
    Cocycle3,
    PhaseExponent,
    TwoCochain,
    check_cocycle_condition,
    class_invariant,
    coboundary,
    cocycle_to_cochain,
    standard_cocycle,
)
from .groups import FiniteGroup, GroupElement, GroupSpec, enumerate_group, inv, mul
from .lattice import BranchingAssignment, Lattice, builtin, derive_branching, load_lattice, validate
from .mbqc import MeasurementPlan, bonds_to_cluster, reduce_to_bonds, run_circuit, teleport_cz, teleport_single
from .qstate import PauliFrame, SparseState, measure, overlap, plaquette_state
from .routing import RoutingPlan, builtin_plan, compile_plan, route_honeycomb_minor
from .symmetry import site_operator, verify_global_symmetry, verify_linear_rep

__version__ = "0.1.0"
