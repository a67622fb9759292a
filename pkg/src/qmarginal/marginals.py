"""The problem input: three two-body reductions of a tripartite system."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .operators import DensityMatrix, DimensionError, Operator, hs_norm, partial_trace, reduce_to

A, B, C = 0, 1, 2
PAIRS = ((A, B), (A, C), (B, C))
SITE_NAMES = "ABC"


class InconsistentTripleError(ValueError):
    """The single-site marginals implied by the three pair states disagree."""


class PreconditionError(ValueError):
    """An operation was called on input outside its documented domain."""


@dataclass(frozen=True, eq=False)
class MarginalTriple:
    """Pair states ``(rho_AB, rho_AC, rho_BC)`` on sites ``A=0, B=1, C=2``."""

    rho_ab: DensityMatrix
    rho_ac: DensityMatrix
    rho_bc: DensityMatrix

    def __post_init__(self) -> None:
        da, db = self.rho_ab.dims
        da2, dc = self.rho_ac.dims
        db2, dc2 = self.rho_bc.dims
        if self.rho_ab.n_sites != 2 or da != da2 or db != db2 or dc != dc2:
            raise DimensionError(
                f"pair dims {self.rho_ab.dims}, {self.rho_ac.dims}, {self.rho_bc.dims} are inconsistent"
            )

    @property
    def dims(self) -> tuple[int, int, int]:
        da, db = self.rho_ab.dims
        return da, db, self.rho_ac.dims[1]

    @classmethod
    def from_state(cls, rho: Operator) -> "MarginalTriple":
        if rho.n_sites != 3:
            raise DimensionError("expected a tripartite state")
        pairs = [DensityMatrix.from_operator(reduce_to(rho, p)) for p in PAIRS]
        return cls(*pairs)

    def pair(self, i: int, j: int) -> DensityMatrix:
        """Pair state on sites ``{i, j}`` with the lower site first."""
        key = tuple(sorted((i, j)))
        return {PAIRS[0]: self.rho_ab, PAIRS[1]: self.rho_ac, PAIRS[2]: self.rho_bc}[key]

    def __iter__(self) -> Iterator[DensityMatrix]:
        return iter((self.rho_ab, self.rho_ac, self.rho_bc))

    def single_estimates(self, site: int) -> tuple[Operator, Operator]:
        """The two single-site marginals of ``site`` implied by its two pairs."""
        out = []
        for pair, rho in zip(PAIRS, self):
            if site in pair:
                out.append(partial_trace(rho, 1 - pair.index(site)))
        return out[0], out[1]

    def single(self, site: int) -> Operator:
        x, y = self.single_estimates(site)
        return (x + y) * 0.5

    def singles(self) -> tuple[Operator, Operator, Operator]:
        return self.single(A), self.single(B), self.single(C)

    def mixed(self, other: "MarginalTriple", p: float) -> "MarginalTriple":
        """``(1-p) * self + p * other`` pairwise."""
        return MarginalTriple(*[
            DensityMatrix.from_operator(x * (1 - p) + y * p) for x, y in zip(self, other)
        ])


def reductions(rho: Operator) -> tuple[Operator, Operator, Operator]:
    return tuple(reduce_to(rho, p) for p in PAIRS)


def marginal_residual(rho: Operator, E: MarginalTriple) -> float:
    """Largest HS distance between a reduction of ``rho`` and the matching pair of ``E``."""
    if rho.dims != E.dims:
        raise DimensionError(f"state dims {rho.dims} do not match triple dims {E.dims}")
    return max(hs_norm(r - e) for r, e in zip(reductions(rho), E))


def min_eigenvalue(X: Operator | np.ndarray) -> float:
    mat = X.mat if isinstance(X, Operator) else X
    return float(np.linalg.eigvalsh(0.5 * (mat + mat.conj().T))[0])
