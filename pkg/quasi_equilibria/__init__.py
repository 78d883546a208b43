from . import model, potential, solvers, verify, vi
from .expr import evaluate, fd_gradient, parse_expression
from .model import build_gallery, dump_instance, leader_objective, load_instance
from .solvers import (
    lift_to_profile,
    refine_p_quasi,
    solve_p_implicit,
    solve_p_pessimistic,
    solve_p_quasi,
)
from .verify import (
    certify_nonexistence_on_grid,
    check_nash_b_stationarity,
    verify_global,
    verify_local,
    verify_pessimistic,
)
