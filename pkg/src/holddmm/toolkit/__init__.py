"""Diagnostics, file formats, synthetic phantoms and the command line interface."""

from .diagnostics import (
    GridSpec,
    ScalarField,
    atom_log_jacobians,
    cauchy_green_trace,
    divergence_at_atoms,
    flow_grid,
    log_jacobian_field,
)
