"""Correlation-tensor decomposition, classicality decisions and commutator tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .config import TOL_CLASS, TOL_COMM, TOL_MARGINAL
from .jointdiag import joint_diagonalize
from .marginals import PAIRS, MarginalTriple, PreconditionError, marginal_residual
from .operators import (
    DensityMatrix,
    DimensionError,
    Operator,
    ProductBasis,
    dephase,
    embed_pair,
    hs_norm,
    partial_trace,
    reduce_to,
    tensor,
)

TOL_DECOMP = 1e-11


def _pad(X: Operator, sites: tuple[int, int], dims: tuple[int, int, int]) -> Operator:
    """``X`` on ``sites`` tensored with the normalized identity on the remaining site."""
    rest = ({0, 1, 2} - set(sites)).pop()
    return embed_pair(X, sites, dims) / dims[rest]


@dataclass(frozen=True, eq=False)
class CorrelationDecomposition:
    """Singles, pair correlations and the three-body correlation of a tripartite operator.

    ``pair_corr`` is ordered ``(AB, AC, BC)``.
    """

    singles: tuple[Operator, Operator, Operator]
    pair_corr: tuple[Operator, Operator, Operator]
    triple_corr: Operator

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(s.dims[0] for s in self.singles)

    def invariant_error(self) -> float:
        """Largest operator norm of a partial trace that should vanish."""
        errs = [
            np.linalg.norm(partial_trace(chi, k).mat, 2)
            for chi in self.pair_corr for k in (0, 1)
        ]
        errs += [np.linalg.norm(partial_trace(self.triple_corr, k).mat, 2) for k in range(3)]
        return float(max(errs))


def lower_order_part(
    singles: tuple[Operator, Operator, Operator],
    pair_corr: tuple[Operator, Operator, Operator],
) -> Operator:
    """Recomposition with the three-body correlation set to zero."""
    dims = tuple(s.dims[0] for s in singles)
    out = tensor(*singles)
    for pair, chi in zip(PAIRS, pair_corr):
        out = out + _pad(chi, pair, dims)
    return out


def decompose(rho: Operator) -> CorrelationDecomposition:
    """Split a tripartite operator into product, two-body and three-body parts."""
    if rho.n_sites != 3:
        raise DimensionError(f"expected a tripartite operator, got dims {rho.dims}")
    singles = tuple(reduce_to(rho, [k]) for k in range(3))
    pair_corr = tuple(
        reduce_to(rho, pair) - tensor(singles[pair[0]], singles[pair[1]]) for pair in PAIRS
    )
    triple = rho - lower_order_part(singles, pair_corr)
    return CorrelationDecomposition(singles, pair_corr, triple)


def recompose(d: CorrelationDecomposition) -> Operator:
    err = d.invariant_error()
    if err > TOL_DECOMP:
        raise ValueError(f"correlation terms have nonzero partial traces ({err:.3g})")
    return lower_order_part(d.singles, d.pair_corr) + d.triple_corr


def three_body_array(mat: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    """Orthogonal projection of a matrix onto operators with every partial trace zero.

    Applies ``X -> X - Tr_k(X) x 1_k / d_k`` for each site in turn; the three
    maps commute.
    """
    n = len(dims)
    t = mat.reshape(dims + dims)
    for k, d in enumerate(dims):
        tr = np.trace(t, axis1=k, axis2=k + n) / d
        tr = np.expand_dims(tr, (k, k + n))
        shape = [1] * (2 * n)
        shape[k] = shape[k + n] = d
        t = t - tr * np.eye(d).reshape(shape)
    return t.reshape(mat.shape)


def three_body_part(X: Operator) -> Operator:
    if X.n_sites != 3:
        raise DimensionError("expected a tripartite operator")
    return Operator(three_body_array(X.mat, X.dims), X.dims)


# classicality --------------------------------------------------------------


def conditional_operators(X: Operator, site: int) -> np.ndarray:
    """Hermitian operators ``Tr_rest[X (F_k x 1)]`` on ``site`` for a Hermitian basis ``F_k`` of the rest.

    These are the blocks ``<r|X|r'>`` and their Hermitian combinations.
    """
    d = X.dims[site]
    perm = [site] + [k for k in range(X.n_sites) if k != site]
    n = X.n_sites
    t = X.mat.reshape(X.dims + X.dims).transpose(perm + [p + n for p in perm])
    rest = X.total // d
    blocks = t.reshape(d, rest, d, rest).transpose(1, 3, 0, 2)
    out = []
    for r in range(rest):
        out.append(blocks[r, r])
        for s in range(r + 1, rest):
            out.append(blocks[r, s] + blocks[s, r])
            out.append(1j * (blocks[r, s] - blocks[s, r]))
    return np.array(out)


def site_basis(mats: np.ndarray) -> np.ndarray:
    """Common approximate eigenbasis of a stack of Hermitian operators."""
    V, _ = joint_diagonalize(mats)
    return V


@dataclass(frozen=True, eq=False)
class ClassicalityReport:
    """Outcome of the bipartite classicality decision.

    ``bases`` is set when the state is classical on both sites; ``residual``
    is the HS norm removed by dephasing both sites in the found bases.
    """

    is_cq: bool
    is_cc: bool
    bases: ProductBasis | None
    residual: float
    cq_residual: float

    def to_json(self) -> dict:
        return {
            "is_cq": self.is_cq,
            "is_cc": self.is_cc,
            "residual": self.residual,
            "bases": None if self.bases is None else self.bases.to_json(),
        }


def classicality_bipartite(rho: Operator, tol: float = TOL_CLASS) -> ClassicalityReport:
    """Decide whether a bipartite state is diagonal in some product basis."""
    if rho.n_sites != 2:
        raise DimensionError(f"expected a bipartite state, got dims {rho.dims}")
    Va = site_basis(conditional_operators(rho, 0))
    Vb = site_basis(conditional_operators(rho, 1))
    basis = ProductBasis((Va, Vb))
    cq_res = hs_norm(rho - dephase(rho, basis, [0]))
    res = hs_norm(rho - dephase(rho, basis))
    is_cq = cq_res <= tol
    is_cc = is_cq and res <= tol
    return ClassicalityReport(is_cq, is_cc, basis if is_cc else None, res, cq_res)


@dataclass(frozen=True, eq=False)
class TripleClassicality:
    ab: ClassicalityReport
    ac: ClassicalityReport
    bc: ClassicalityReport

    def __iter__(self) -> Iterator[ClassicalityReport]:
        return iter((self.ab, self.ac, self.bc))

    @property
    def all_cc(self) -> bool:
        return all(r.is_cc for r in self)

    def to_json(self) -> dict:
        return {
            "all_cc": self.all_cc,
            "reports": {name: r.to_json() for name, r in zip(("ab", "ac", "bc"), self)},
        }


def classical_triple_check(E: MarginalTriple, tol: float = TOL_CLASS) -> TripleClassicality:
    return TripleClassicality(*(classicality_bipartite(rho, tol) for rho in E))


# commutators ---------------------------------------------------------------


@dataclass(frozen=True)
class CommutatorReport:
    """HS norms of ``[rho_ij x 1_k, rho_ik x 1_j]`` for pivots ``i = A, B, C``."""

    delta_norms: tuple[float, float, float]

    @property
    def max_norm(self) -> float:
        return max(self.delta_norms)

    def to_json(self) -> dict:
        return {"delta_norms": list(self.delta_norms), "max_norm": self.max_norm}


def commutator_delta(E: MarginalTriple) -> CommutatorReport:
    dims = E.dims
    norms = []
    for pivot in range(3):
        j, k = (s for s in range(3) if s != pivot)
        X = embed_pair(E.pair(pivot, j), tuple(sorted((pivot, j))), dims)
        Y = embed_pair(E.pair(pivot, k), tuple(sorted((pivot, k))), dims)
        norms.append(hs_norm(X @ Y - Y @ X))
    return CommutatorReport(tuple(norms))


def no_classical_global_certificate(
    E: MarginalTriple, tol_comm: float = TOL_COMM, tol: float = TOL_CLASS
) -> bool:
    """True certifies that no fully classical tripartite state has marginals ``E``.

    Only defined for triples whose three pair states are each fully classical.
    """
    if not classical_triple_check(E, tol).all_cc:
        raise PreconditionError("the pair states are not all fully classical")
    return commutator_delta(E).max_norm > tol_comm


def eigengap(X: Operator) -> float:
    """Smallest distance between two eigenvalues (``inf`` in dimension one)."""
    w = np.linalg.eigvalsh(X.mat)
    return float(np.min(np.diff(w))) if len(w) > 1 else float("inf")


def min_single_eigengap(E: MarginalTriple) -> float:
    return min(eigengap(s) for s in E.singles())


def common_basis(E: MarginalTriple) -> ProductBasis:
    """Per-site basis diagonalizing the conditional operators of both pairs containing the site."""
    mats = []
    for site in range(3):
        ops = [
            conditional_operators(E.pair(*pair), pair.index(site))
            for pair in PAIRS if site in pair
        ]
        mats.append(site_basis(np.concatenate(ops)))
    return ProductBasis(tuple(mats))


def classical_global_completion(
    E: MarginalTriple,
    rho: Operator,
    tol_comm: float = TOL_COMM,
    tol: float = TOL_CLASS,
) -> DensityMatrix:
    """Dephase a compatible state in the product basis shared by all three pair states."""
    if not classical_triple_check(E, tol).all_cc:
        raise PreconditionError("the pair states are not all fully classical")
    delta = commutator_delta(E).max_norm
    if delta > tol_comm:
        raise PreconditionError(f"commutators do not vanish (max norm {delta:.3g})")
    res = marginal_residual(rho, E)
    if res > TOL_MARGINAL:
        raise ValueError(f"state marginals differ from the triple by {res:.3g}")
    basis = common_basis(E)
    for pair, pair_state in zip(PAIRS, E):
        sub = ProductBasis(tuple(basis.mats[k] for k in pair))
        if hs_norm(pair_state - dephase(pair_state, sub)) > tol:
            raise PreconditionError("no common product basis diagonalizes all three pair states")
    out = DensityMatrix.from_operator(dephase(rho, basis))
    res = marginal_residual(out, E)
    if res > TOL_MARGINAL:
        raise ValueError(f"dephased state marginals differ from the triple by {res:.3g}")
    return out
