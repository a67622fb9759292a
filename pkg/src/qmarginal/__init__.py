"""Compatibility of tripartite two-body marginals: classical, biseparable and GME-only cases."""

from .catalog import CATALOG, CatalogEntry
from .compatibility import (
    FeasibilityOutcome,
    candidate_zero3body,
    consistency_check,
    distance_D,
    project_affine,
    solve_feasibility,
    uniqueness_probe,
    verify_witness,
)
from .config import DEFAULT_CONFIG, SolverConfig
from .correlations import (
    classical_global_completion,
    classical_triple_check,
    classicality_bipartite,
    commutator_delta,
    decompose,
    no_classical_global_certificate,
    recompose,
)
from .entanglement import (
    a_finite_check,
    biseparable_completion_cc_qubits,
    birank,
    ppt_check,
    product_in_range,
    pt_invariant_biseparable,
)
from .gme import (
    certify_only_gme,
    d_bs_lower_bound,
    robustness_scan,
    solve_pptmix_marginals,
    verify_pptmix_witness,
)
from .marginals import MarginalTriple
from .operators import DensityMatrix, Operator, ProductBasis

__all__ = [
    "CATALOG",
    "CatalogEntry",
    "DEFAULT_CONFIG",
    "DensityMatrix",
    "FeasibilityOutcome",
    "MarginalTriple",
    "Operator",
    "ProductBasis",
    "SolverConfig",
    "a_finite_check",
    "biseparable_completion_cc_qubits",
    "birank",
    "candidate_zero3body",
    "certify_only_gme",
    "classical_global_completion",
    "classical_triple_check",
    "classicality_bipartite",
    "commutator_delta",
    "consistency_check",
    "d_bs_lower_bound",
    "decompose",
    "distance_D",
    "no_classical_global_certificate",
    "ppt_check",
    "product_in_range",
    "project_affine",
    "pt_invariant_biseparable",
    "recompose",
    "robustness_scan",
    "solve_feasibility",
    "solve_pptmix_marginals",
    "uniqueness_probe",
    "verify_pptmix_witness",
    "verify_witness",
]
