"""Dense Hermitian operators on ordered finite-dimensional subsystems.

Subsystems are ordered most-to-least significant in the row-major index, so
for dims ``(dA, dB, dC)`` the basis vector ``|a b c>`` sits at index
``a*dB*dC + b*dC + c``.  All site permutations go through :func:`permute_sites`
(and therefore :func:`embed`/:func:`embed_pair`), never through ad hoc
reshapes elsewhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .config import RANK_REL_EPS, TOL_HERM, TOL_PSD, TOL_UNITARY

__all__ = [
    "DimensionError",
    "HermiticityError",
    "Operator",
    "DensityMatrix",
    "ProductBasis",
    "I2",
    "SX",
    "SY",
    "SZ",
    "PAULIS",
    "ket",
    "projector",
    "tensor",
    "partial_trace",
    "reduce_to",
    "partial_transpose",
    "permute_sites",
    "embed",
    "embed_pair",
    "eigh",
    "jacobi_eigh",
    "rank_eps",
    "simplex_projection",
    "project_psd_trace1",
    "hs_inner",
    "hs_norm",
    "dephase",
    "random_unitary",
    "random_hermitian",
    "random_density",
    "random_pure",
    "spin_flip",
]


class DimensionError(ValueError):
    """Subsystem dimensions do not match the requested operation."""


class HermiticityError(ValueError):
    """An operator required to be Hermitian is not."""


def _check_dims(dims: Iterable[int]) -> tuple[int, ...]:
    out = tuple(int(d) for d in dims)
    if not out or any(d < 1 for d in out):
        raise DimensionError(f"invalid subsystem dimensions {out}")
    return out


@dataclass(frozen=True, eq=False)
class Operator:
    """A square complex matrix tagged with its subsystem dimensions.

    The stored matrix is a read-only copy; arithmetic returns new operators.
    """

    mat: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self) -> None:
        dims = _check_dims(self.dims)
        mat = np.array(self.mat, dtype=complex, copy=True)
        total = int(np.prod(dims))
        if mat.shape != (total, total):
            raise DimensionError(f"matrix shape {mat.shape} does not match dims {dims}")
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)
        object.__setattr__(self, "dims", dims)

    @property
    def total(self) -> int:
        return self.mat.shape[0]

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    @property
    def H(self) -> "Operator":
        return Operator(self.mat.conj().T, self.dims)

    def trace(self) -> complex:
        return complex(np.trace(self.mat))

    def herm_error(self) -> float:
        return float(np.max(np.abs(self.mat - self.mat.conj().T), initial=0.0))

    def is_hermitian(self, tol: float = TOL_HERM) -> bool:
        return self.herm_error() <= tol

    def hermitized(self) -> "Operator":
        return Operator(0.5 * (self.mat + self.mat.conj().T), self.dims)

    def _same(self, other: "Operator") -> None:
        if self.dims != other.dims:
            raise DimensionError(f"dims {self.dims} and {other.dims} differ")

    def __add__(self, other: "Operator") -> "Operator":
        self._same(other)
        return Operator(self.mat + other.mat, self.dims)

    def __sub__(self, other: "Operator") -> "Operator":
        self._same(other)
        return Operator(self.mat - other.mat, self.dims)

    def __neg__(self) -> "Operator":
        return Operator(-self.mat, self.dims)

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(scalar * self.mat, self.dims)

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> "Operator":
        return Operator(self.mat / scalar, self.dims)

    def __matmul__(self, other: "Operator") -> "Operator":
        self._same(other)
        return Operator(self.mat @ other.mat, self.dims)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dims={self.dims})"


class DensityMatrix(Operator):
    """An :class:`Operator` that is Hermitian, PSD (to ``TOL_PSD``) and of unit trace."""

    def __post_init__(self) -> None:
        super().__post_init__()
        if not self.is_hermitian():
            raise HermiticityError(f"density matrix not Hermitian (error {self.herm_error():.3g})")
        tr = self.trace()
        if abs(tr - 1.0) > 1e-12:
            raise ValueError(f"density matrix trace {tr} is not 1")
        lam = np.linalg.eigvalsh(self.mat)[0]
        if lam < -TOL_PSD:
            raise ValueError(f"density matrix has eigenvalue {lam:.3g} < -{TOL_PSD}")

    @classmethod
    def from_operator(cls, op: Operator) -> "DensityMatrix":
        return cls(0.5 * (op.mat + op.mat.conj().T), op.dims)


@dataclass(frozen=True, eq=False)
class ProductBasis:
    """Per-site orthonormal bases; column ``i`` of ``mats[k]`` is basis vector ``i`` of site ``k``."""

    mats: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        mats = []
        for m in self.mats:
            m = np.array(m, dtype=complex, copy=True)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise DimensionError("basis matrices must be square")
            err = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
            if err > TOL_UNITARY:
                raise ValueError(f"basis matrix not unitary (error {err:.3g})")
            m.setflags(write=False)
            mats.append(m)
        object.__setattr__(self, "mats", tuple(mats))

    @classmethod
    def computational(cls, dims: Sequence[int]) -> "ProductBasis":
        return cls(tuple(np.eye(d) for d in dims))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(m.shape[0] for m in self.mats)

    def unitary(self) -> np.ndarray:
        return reduce(np.kron, self.mats)

    def to_json(self) -> list:
        return [[[[float(z.real), float(z.imag)] for z in row] for row in m] for m in self.mats]


I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, SX, SY, SZ)


def ket(indices: Sequence[int] | str, dims: Sequence[int] | None = None) -> np.ndarray:
    """Computational basis vector; ``ket("010")`` is the three-qubit ``|010>``."""
    if isinstance(indices, str):
        indices = [int(c) for c in indices]
    dims = tuple(dims) if dims is not None else (2,) * len(indices)
    v = np.zeros(int(np.prod(dims)), dtype=complex)
    v[np.ravel_multi_index(tuple(indices), dims)] = 1.0
    return v


def projector(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def tensor(*ops: Operator) -> Operator:
    """Kronecker product in argument order; dims are concatenated."""
    if not ops:
        raise ValueError("tensor needs at least one operator")
    mat = reduce(np.kron, [op.mat for op in ops])
    dims = sum((op.dims for op in ops), ())
    return Operator(mat, dims)


def _check_site(dims: tuple[int, ...], site: int) -> int:
    if not isinstance(site, (int, np.integer)) or not 0 <= site < len(dims):
        raise DimensionError(f"site {site!r} invalid for dims {dims}")
    return int(site)


def partial_trace(X: Operator, site: int) -> Operator:
    """Trace out one subsystem."""
    n = X.n_sites
    site = _check_site(X.dims, site)
    if n == 1:
        raise DimensionError("cannot trace out the only subsystem")
    t = X.mat.reshape(X.dims + X.dims)
    out = np.trace(t, axis1=site, axis2=site + n)
    dims = X.dims[:site] + X.dims[site + 1:]
    d = int(np.prod(dims))
    return Operator(out.reshape(d, d), dims)


def reduce_to(X: Operator, keep: Sequence[int]) -> Operator:
    """Marginal on the sites in ``keep`` (returned in increasing site order)."""
    keep = sorted({_check_site(X.dims, s) for s in keep})
    out = X
    for s in sorted(set(range(X.n_sites)) - set(keep), reverse=True):
        out = partial_trace(out, s)
    return out


def partial_transpose(X: Operator, sites: int | Iterable[int]) -> Operator:
    """Transpose the indices of the given site(s) in the computational basis."""
    sites = [sites] if isinstance(sites, (int, np.integer)) else list(sites)
    n = X.n_sites
    t = X.mat.reshape(X.dims + X.dims)
    for s in sites:
        s = _check_site(X.dims, s)
        t = np.swapaxes(t, s, s + n)
    return Operator(t.reshape(X.total, X.total), X.dims)


def permute_sites(X: Operator, perm: Sequence[int]) -> Operator:
    """Reorder subsystems: new site ``i`` is old site ``perm[i]``."""
    n = X.n_sites
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(n)):
        raise DimensionError(f"{perm} is not a permutation of {n} sites")
    t = X.mat.reshape(X.dims + X.dims)
    t = np.transpose(t, perm + [p + n for p in perm])
    dims = tuple(X.dims[p] for p in perm)
    return Operator(t.reshape(X.total, X.total), dims)


def embed(X: Operator, sites: Sequence[int], dims: Sequence[int]) -> Operator:
    """Act as ``X`` on ``sites`` (in the order given) and as the identity elsewhere."""
    dims = _check_dims(dims)
    sites = [_check_site(dims, s) for s in sites]
    if len(set(sites)) != len(sites):
        raise DimensionError(f"repeated site in {sites}")
    if tuple(dims[s] for s in sites) != X.dims:
        raise DimensionError(f"operator dims {X.dims} do not match sites {sites} of {dims}")
    rest = [s for s in range(len(dims)) if s not in sites]
    order = sites + rest
    rest_dim = int(np.prod([dims[s] for s in rest])) if rest else 1
    big = Operator(np.kron(X.mat, np.eye(rest_dim)), tuple(dims[s] for s in order))
    return permute_sites(big, [order.index(i) for i in range(len(dims))])


def embed_pair(X: Operator, sites: tuple[int, int], dims: Sequence[int]) -> Operator:
    """Embed a bipartite operator on an ordered pair of sites of a larger layout."""
    if X.n_sites != 2 or len(sites) != 2:
        raise DimensionError("embed_pair expects a bipartite operator and two sites")
    return embed(X, list(sites), dims)


def eigh(X: Operator, tol: float = TOL_HERM) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian operator."""
    if not X.is_hermitian(tol):
        raise HermiticityError(f"eigh requires a Hermitian operator (error {X.herm_error():.3g})")
    return np.linalg.eigh(0.5 * (X.mat + X.mat.conj().T))


def jacobi_eigh(A: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigensolver for a dense complex Hermitian matrix.

    Each rotation first removes the phase of ``A[p, q]`` with a diagonal
    unitary and then applies the classical real Jacobi rotation.  Used as an
    LAPACK-independent reference in the tests.
    """
    A = np.array(A, dtype=complex, copy=True)
    n = A.shape[0]
    V = np.eye(n, dtype=complex)
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                theta = (A[q, q].real - A[p, p].real) / (2.0 * mag)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                G = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
                cols = A[:, [p, q]] @ G
                A[:, [p, q]] = cols
                A[[p, q], :] = G.conj().T @ A[[p, q], :]
                A[p, q] = A[q, p] = 0.0
                V[:, [p, q]] = V[:, [p, q]] @ G
    w = np.real(np.diag(A))
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def rank_eps(X: Operator, eps: float | None = None) -> int:
    """Number of eigenvalues with modulus above ``eps`` (default ``1e-8*max(1, ||X||_2)``)."""
    if eps is None:
        eps = RANK_REL_EPS * max(1.0, hs_norm(X))
    w, _ = eigh(X)
    return int(np.sum(np.abs(w) > eps))


def simplex_projection(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    k = idx[u - css / idx > 0][-1]
    return np.maximum(v - css[k - 1] / k, 0.0)


def _psd_trace1(mat: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    p = simplex_projection(w)
    out = (V * p) @ V.conj().T
    return 0.5 * (out + out.conj().T)


def project_psd_trace1(X: Operator) -> DensityMatrix:
    """Nearest (Hilbert-Schmidt) PSD unit-trace operator to a Hermitian ``X``."""
    if not X.is_hermitian(1e-9):
        raise HermiticityError("projection requires a Hermitian operator")
    return DensityMatrix(_psd_trace1(X.mat), X.dims)


def hs_inner(X: Operator, Y: Operator) -> float:
    """Real part of ``Tr(X^dagger Y)``."""
    X._same(Y)
    return float(np.real(np.vdot(X.mat, Y.mat)))


def hs_norm(X: Operator) -> float:
    return float(np.linalg.norm(X.mat))


def dephase(X: Operator, basis: ProductBasis, sites: Sequence[int] | None = None) -> Operator:
    """Remove coherences in ``basis`` on the given sites (all sites by default).

    Sites not listed are left untouched, so ``dephase(X, b, [0])`` is the
    block dephasing ``sum_i (|a_i><a_i| x 1) X (|a_i><a_i| x 1)``.
    """
    if basis.dims != X.dims:
        raise DimensionError(f"basis dims {basis.dims} do not match operator dims {X.dims}")
    n = X.n_sites
    sites = range(n) if sites is None else [_check_site(X.dims, s) for s in sites]
    mats = [basis.mats[k] if k in sites else np.eye(X.dims[k]) for k in range(n)]
    U = reduce(np.kron, mats)
    t = (U.conj().T @ X.mat @ U).reshape(X.dims + X.dims)
    for k in sites:
        shape = [1] * (2 * n)
        shape[k] = shape[k + n] = X.dims[k]
        t = t * np.eye(X.dims[k]).reshape(shape)
    out = U @ t.reshape(X.total, X.total) @ U.conj().T
    return Operator(out, X.dims)


def spin_flip(X: Operator) -> Operator:
    """Conjugation by ``sigma_y`` on every qubit."""
    if any(d != 2 for d in X.dims):
        raise DimensionError("spin_flip is defined for qubits only")
    Y = reduce(np.kron, [SY] * X.n_sites)
    return Operator(Y @ X.mat @ Y, X.dims)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_unitary(d: int, seed=None) -> np.ndarray:
    """Haar-random unitary via QR with phase correction."""
    rng = _rng(seed)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(dims: Sequence[int], seed=None) -> Operator:
    dims = _check_dims(dims)
    rng = _rng(seed)
    n = int(np.prod(dims))
    g = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2 * n)
    return Operator(g + g.conj().T, dims)


def random_density(dims: Sequence[int], rank: int | None = None, seed=None) -> DensityMatrix:
    """Random state ``G G^dagger / Tr`` from a complex Gaussian ``G`` with ``rank`` columns."""
    dims = _check_dims(dims)
    n = int(np.prod(dims))
    rank = n if rank is None else int(rank)
    if not 1 <= rank <= n:
        raise ValueError(f"rank {rank} outside [1, {n}]")
    rng = _rng(seed)
    g = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    rho = g @ g.conj().T
    rho = rho / np.trace(rho).real
    return DensityMatrix(0.5 * (rho + rho.conj().T), dims)


def random_pure(dims: Sequence[int], seed=None) -> DensityMatrix:
    return random_density(dims, rank=1, seed=seed)
