"""Spectral workbench for critical nonlinear Dirac equations on flat spin tori."""

__version__ = "0.1.0"

from .branch import (
    BranchPoint,
    SweepTable,
    branch_sweep,
    gamma_crit,
    minimize_M,
    multiplicity_count,
    nu_window,
    residual_check,
    second_solution,
)
from .clifford import CliffordRep, build_rep, clifford_mul, one_minus_x_mul
from .nonlinearity import Nonlinearity, check_hypotheses, critical_exponent, make_nonlinearity
from .spectral import (
    EigenTable,
    SpectralSplit,
    apply_dirac,
    assemble,
    dual_norm,
    inner_lambda,
    norm_lambda,
    omega_sphere,
    project,
    split,
    weyl_counts,
)
from .testspinor import (
    TestSpinorParams,
    asymptotic_fit,
    build_test_spinor,
    energy_report,
    euclidean_solution,
)
from .torus import SpinorField, TorusGrid, lp_norm, make_grid
from .variational import (
    FiberPoint,
    L_lambda,
    eta_lambda,
    grad_L,
    j_lambda,
    m_lambda,
    mu_lambda,
    nehari_project,
    nu_lambda_k,
    r_lambda,
    s_lambda,
    t_lambda,
)

__all__ = [
    "BranchPoint",
    "CliffordRep",
    "EigenTable",
    "FiberPoint",
    "L_lambda",
    "Nonlinearity",
    "SpectralSplit",
    "SpinorField",
    "SweepTable",
    "TestSpinorParams",
    "TorusGrid",
    "apply_dirac",
    "assemble",
    "asymptotic_fit",
    "branch_sweep",
    "build_rep",
    "build_test_spinor",
    "check_hypotheses",
    "clifford_mul",
    "critical_exponent",
    "dual_norm",
    "energy_report",
    "eta_lambda",
    "euclidean_solution",
    "gamma_crit",
    "grad_L",
    "inner_lambda",
    "j_lambda",
    "lp_norm",
    "m_lambda",
    "make_grid",
    "make_nonlinearity",
    "minimize_M",
    "mu_lambda",
    "multiplicity_count",
    "nehari_project",
    "norm_lambda",
    "nu_lambda_k",
    "nu_window",
    "omega_sphere",
    "one_minus_x_mul",
    "project",
    "r_lambda",
    "residual_check",
    "s_lambda",
    "second_solution",
    "split",
    "t_lambda",
    "weyl_counts",
]
