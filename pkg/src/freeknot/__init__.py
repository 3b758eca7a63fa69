"""Free-knot tensor-product B-spline spaces with energy-driven knot optimisation."""
from .assembly import (SeparableForm, apply_operator, assemble, assemble_bilinear_1d, assemble_linear_1d,
                       d_assemble_bilinear_dknot, d_assemble_linear_dknot, knot_gradient, load_vector,
                       mass_form, stiffness_form)
from .bspline import (basis_matrix, divided_difference, eval_bspline, eval_divided_difference, eval_dknot,
                      eval_dknot_dx, eval_dx, eval_normalised, local_basis)
from .constraints import FeasibleSet, build_feasible_set, min_slack, project
from .energy_opt import OptimConfig, OptimResult, adam_step, cg_solve, energy, grad_knots, minimise, sweep
from .errors import *  # noqa: F401,F403
from .knots import KnotVector, drop_first, drop_last, insert, joint_min_mesh_size, min_mesh_size, width
from .problems import ProblemSpec, degree_gate, error_metrics, make_problem
from .rates import fitted_slope, uniform_errors
from .space import (MultiPatchSpace, PatchSpec, init_uniform_approx, init_uniform_poisson, realise,
                    realise_grid)

__version__ = "0.1.0"
