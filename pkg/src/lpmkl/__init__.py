"""lp-norm multiple kernel learning with an SMO-style chunking solver.

The hot loops are compiled with numba when it is installed; set
``LPMKL_DISABLE_JIT=1`` before import to use the pure-numpy path.
"""
from ._jit import backend_name
from .bounds import (BoundInputs, case_study_bounds, generalization_bound,
                     l1_rademacher_bound, lp_rademacher_bound, radius_margin_bound)
from .errors import (ConvergenceError, DegenerateKernelError, DegenerateModelError,
                     LpMklError, SingularUpdateError, StallError, ValidationError)
from .experiments import (ExperimentReport, ToyConfig, bayes_error, generate_toy,
                          model_error, run_sparsity_sweep)
from .kernels import (FeatureBlockStack, KernelMatrix, KernelStack, alignment,
                      alignment_matrix, center, linear_kernel, normalize_multiplicative,
                      normalize_spherical, rbf_kernel)
from .mkl import (P_INF, P_ONE, MklConfig, MklModel, TrainingReport, compute_w_norms,
                  dual_objective, duality_gap, predict, predict_labels, primal_objective,
                  train, train_interleaved, train_wrapper, update_theta,
                  update_theta_blocknorm)
from .svm import SolverState, SvmConfig, SvmSolution, solve_dual, solve_matrix

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
