"""Totally concave least-squares regression.

Shape-constrained regression on the unit cube: totally concave or convex
fits built from hinge-product bases over knot lattices, sign-constrained
least squares with an optional total-weight cap, partially linear
variants, axially concave grid fits, and divided-difference certificates
for the fitted shapes.
"""

from .data_io import (
    DataError,
    Dataset,
    UnitScaler,
    fit_scaler,
    inverse_scale,
    load_csv,
    load_matrix_csv,
    load_model,
    save_model,
    scale_to_unit,
)
from .hinge_basis import (
    BasisTerm,
    DesignMatrix,
    KnotLattice,
    ModelSpec,
    assemble_design,
    build_lattice,
    enumerate_terms,
    eval_term,
)
from .shape_calculus import (
    CertificateReport,
    GridFunction,
    HingeExpansion,
    certify_axial_concavity,
    certify_entire_monotonicity,
    certify_total_concavity,
    default_tolerance,
    discrete_difference,
    divided_difference,
    grid_from_points,
    popoviciu_interpolant,
    vdesign_upper_bound,
)
from .solver import (
    IneqLsProblem,
    IneqSolution,
    MixedLsProblem,
    Solution,
    kkt_report,
    project_capped_simplex,
    solve_ls_linear_ineq,
    solve_mixed_nnls,
)
from .estimators import (
    AcFittedModel,
    CvResult,
    FittedModel,
    certify_fit,
    complexity,
    cross_validate_V,
    default_v_grid,
    fit,
    fit_axially_concave,
    predict,
    predict_axial,
)
from .harness import (
    BaselineSpec,
    ExperimentPlan,
    ExperimentResult,
    fit_baseline,
    rate_sanity,
    run_experiment,
    write_experiment_reports,
)

__version__ = "0.1.0"

__all__ = [
    "AcFittedModel",
    "BaselineSpec",
    "BasisTerm",
    "CertificateReport",
    "CvResult",
    "DataError",
    "Dataset",
    "DesignMatrix",
    "ExperimentPlan",
    "ExperimentResult",
    "FittedModel",
    "GridFunction",
    "HingeExpansion",
    "IneqLsProblem",
    "IneqSolution",
    "KnotLattice",
    "MixedLsProblem",
    "ModelSpec",
    "Solution",
    "UnitScaler",
    "assemble_design",
    "build_lattice",
    "certify_axial_concavity",
    "certify_entire_monotonicity",
    "certify_fit",
    "certify_total_concavity",
    "complexity",
    "cross_validate_V",
    "default_tolerance",
    "default_v_grid",
    "discrete_difference",
    "divided_difference",
    "enumerate_terms",
    "eval_term",
    "fit",
    "fit_axially_concave",
    "fit_baseline",
    "fit_scaler",
    "grid_from_points",
    "inverse_scale",
    "kkt_report",
    "load_csv",
    "load_matrix_csv",
    "load_model",
    "popoviciu_interpolant",
    "predict",
    "predict_axial",
    "project_capped_simplex",
    "rate_sanity",
    "run_experiment",
    "save_model",
    "scale_to_unit",
    "solve_ls_linear_ineq",
    "solve_mixed_nnls",
    "vdesign_upper_bound",
    "write_experiment_reports",
]
