"""Stability certificates for nonlinear sampled-data loops whose feedback
channel drops packets under a weakly hard real-time constraint."""

from .constraints import (
    Constraint,
    Kind,
    any_n_in_m,
    is_harder,
    max_consecutive_losses,
    no_row_miss,
    parse_constraint,
    row_n_in_m,
    satisfies,
)
from .emulation import EmulationParams, t_max, t_tilde_max
from .graph import WhrtGraph, build_graph, generate_sequence, validate_graph
from .walks import Walk, enumerate_walk_set, walk_cost_bounds
from .systems import ScalarPolySystem, example_system
from .certify import (
    ParameterTable,
    check_assumption2,
    max_certifiable_h,
    max_dropout_bound,
    reference_table,
    search_parameters,
    theorem1_certify,
)

__version__ = "0.1.0"
