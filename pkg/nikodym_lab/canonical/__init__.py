"""
Canonical Relation

Model maps of a nearly-axial geodesic family and their fold singularities.
"""

from .folds import (
    FOLD,
    NOT_A_FOLD,
    NOT_CLASSIFIABLE,
    FoldReport,
    FoldResult,
    SingularPoint,
    find_singular_locus,
    fold_hessian,
    rank_margin,
    verify_fold_leading_terms,
)
from .model import (
    CallableMap,
    ModelFamily,
    ModelMap,
    TauSeries,
    affine_family,
    constant_family,
    family_from_metric,
    fold_identity_lhs,
    fold_identity_residuals,
    fold_leading_terms,
    p_series,
    predicted_singular_xi1,
    q_series,
    quadratic_family,
    shifted_sine_family,
)

__all__ = [
    "FOLD",
    "NOT_A_FOLD",
    "NOT_CLASSIFIABLE",
    "CallableMap",
    "FoldReport",
    "FoldResult",
    "ModelFamily",
    "ModelMap",
    "SingularPoint",
    "TauSeries",
    "affine_family",
    "constant_family",
    "family_from_metric",
    "find_singular_locus",
    "fold_hessian",
    "fold_identity_lhs",
    "fold_identity_residuals",
    "fold_leading_terms",
    "p_series",
    "predicted_singular_xi1",
    "q_series",
    "quadratic_family",
    "rank_margin",
    "shifted_sine_family",
    "verify_fold_leading_terms",
]
