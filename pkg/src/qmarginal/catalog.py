"""Exact constructors for the reference states and families, with their expected properties.

Every entry bundles the state (or, for the classical family, the triple and
its zero-three-body candidate) with an ``expected`` map that the test suite
re-derives from the analysis modules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .entanglement import family_pair, normal_form
from .marginals import PAIRS, MarginalTriple
from .operators import I2, SX, SY, SZ, DensityMatrix, Operator, embed_pair, ket, projector

TOL_RANGE = 1e-9
RHO_Q_MAX = 1 / np.sqrt(3)

# Local unitaries taking the classical-family candidate with all bases
# {|+>, |->} and parameter p to rho(q) with q = 4p - 1.
X_BASIS = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
FAMILY_TO_RHO_Q = (
    np.diag([1, 1j]),
    np.eye(2, dtype=complex),
    0.5 * np.array([[1 + 1j, 1 - 1j], [1 + 1j, -1 + 1j]]),
)


@dataclass(frozen=True, eq=False)
class CatalogEntry:
    """A named state or triple with its construction parameters and expected properties."""

    name: str
    params: dict
    state: DensityMatrix | None
    expected: dict = field(default_factory=dict)
    triple: MarginalTriple | None = None
    candidate: Operator | None = None

    def __post_init__(self) -> None:
        if self.triple is None:
            if self.state is None:
                raise ValueError("an entry needs a state or a triple")
            object.__setattr__(self, "triple", MarginalTriple.from_state(self.state))


def _qubits(mat: np.ndarray) -> DensityMatrix:
    return DensityMatrix(mat, (2, 2, 2))


def make_ghz() -> CatalogEntry:
    psi = (ket("000") + ket("111")) / np.sqrt(2)
    return CatalogEntry(
        "ghz",
        {},
        _qubits(projector(psi)),
        {"rank": 1, "all_cc": True, "npt_cuts": (0, 1, 2), "compatible": True, "only_gme": False},
    )


def make_rho_q(q: float = RHO_Q_MAX) -> CatalogEntry:
    """``(1 + q (1 x X x X + Y x 1 x Y + Z x Z x 1)) / 8`` for ``|q| <= 1/sqrt(3)``."""
    if abs(q) > RHO_Q_MAX + 1e-15:
        raise ValueError(f"|q| = {abs(q)} exceeds 1/sqrt(3); the operator is not PSD")
    t = lambda a, b, c: np.kron(a, np.kron(b, c))  # noqa: E731
    mat = (t(I2, I2, I2) + q * (t(I2, SX, SX) + t(SY, I2, SY) + t(SZ, SZ, I2))) / 8
    state = _qubits(mat)
    params = {"q": float(q)}
    nf = normal_form(MarginalTriple.from_state(state)) if q != 0 else None
    if nf is not None:
        params["frame"] = nf.frame.mats
    spectrum = sorted([(1 - np.sqrt(3) * q) / 8] * 4 + [(1 + np.sqrt(3) * q) / 8] * 4)
    return CatalogEntry(
        "rho_q",
        params,
        state,
        {"spectrum": tuple(spectrum), "all_cc": True, "pt_invariant": True},
    )


def make_sigma() -> CatalogEntry:
    xi = 0.5 * ket("010") + 0.5 * ket("100") + ket("001") / np.sqrt(2)
    mat = 2 / 3 * projector(xi) + 1 / 3 * projector(ket("111"))
    return CatalogEntry(
        "sigma",
        {},
        _qubits(mat),
        {
            "rank": 2,
            "ppt_pairs": True,
            "birank_ab": (3, 4),
            "birank_ac": (3, 3),
            "birank_bc": (3, 3),
            "only_gme": True,
            "unique_completion": True,
        },
    )


def sigma_pair_states() -> tuple[np.ndarray, np.ndarray]:
    """``sigma_AB`` and ``sigma_BC = sigma_AC`` written out from their defining mixtures."""
    phi = (ket("01") + ket("10")) / np.sqrt(2)
    zeta = np.sqrt(2 / 3) * ket("01") + np.sqrt(1 / 3) * ket("10")
    ab = (projector(phi) + projector(ket("00")) + projector(ket("11"))) / 3
    bc = projector(zeta) / 2 + projector(ket("00")) / 6 + projector(ket("11")) / 3
    return ab, bc


def make_example_main(d: int = 1, weights=None) -> CatalogEntry:
    """``p_1 sigma + sum_{m=2}^{d} p_m |mmm><mmm|`` on three ``(d+1)``-level sites."""
    d = int(d)
    if d < 1:
        raise ValueError("d must be at least 1")
    w = np.array([1.0] if weights is None and d == 1 else weights, dtype=float)
    if w.shape != (d,):
        raise ValueError(f"expected {d} weights, got {w.shape}")
    if w[0] <= 0 or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
        raise ValueError("weights need p_1 > 0, p_m >= 0 and sum 1")
    n = d + 1
    dims = (n, n, n)
    xi = 0.5 * ket("010", dims) + 0.5 * ket("100", dims) + ket("001", dims) / np.sqrt(2)
    sigma = 2 / 3 * projector(xi) + 1 / 3 * projector(ket("111", dims))
    mat = w[0] * sigma
    for m in range(2, d + 1):
        mat = mat + w[m - 1] * projector(ket((m, m, m), dims))
    return CatalogEntry(
        "example_main",
        {"d": d, "weights": tuple(w)},
        DensityMatrix(mat, dims),
        {
            "birank_ab": (d + 2, d + 3),
            "birank_bc": (d + 2, d + 2),
            "rank_b": d + 1,
            "only_gme": True,
        },
    )


def make_prop2(p: float = 0.5) -> CatalogEntry:
    """Pairs ``p|00><00| + (1-p)|aa><aa|`` with ``|a> = |+>``; the state is the unique completion."""
    if not 0 < p < 1:
        raise ValueError("p must lie strictly between 0 and 1")
    a = np.array([1, 1]) / np.sqrt(2)
    aaa = np.kron(a, np.kron(a, a))
    mat = p * projector(ket("000")) + (1 - p) * projector(aaa)
    return CatalogEntry(
        "prop2",
        {"p": float(p)},
        _qubits(mat),
        {"pairs_ppt": True, "pairs_cc": False, "unique_completion": True},
    )


def _real_basis(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.ndim == 0:
        c, s = np.cos(b), np.sin(b)
        return np.array([[c, -s], [s, c]])
    if b.shape != (2, 2) or np.max(np.abs(b.T @ b - np.eye(2))) > 1e-12:
        raise ValueError("a basis must be an angle or a real orthogonal 2x2 matrix")
    return b


def make_classical_family(p: float, q: float, r: float, bases=(0.0, 0.0, 0.0)) -> CatalogEntry:
    """Triple of classical qubit pairs with equal-weight correlations and its candidate.

    ``rho_AB`` is computational, ``rho_BC`` uses ``{b_i}`` on B and
    ``rho_AC`` uses ``{a_i} x {c_i}``.  ``bases`` gives ``(a, b, c)`` as
    rotation angles or real orthogonal matrices (columns are the vectors).
    The candidate ``-1/4 + rho_AB/2 + rho_AC/2 + rho_BC/2`` (each padded with
    the identity) need not be PSD.
    """
    for name, v in zip("pqr", (p, q, r)):
        if not 0 < v < 0.25:
            raise ValueError(f"{name} = {v} must lie in (0, 1/4)")
    a, b, c = (_real_basis(x) for x in bases)
    I = np.eye(2)
    pairs = (family_pair(p, I, I), family_pair(r, a, c), family_pair(q, b, I))
    E = MarginalTriple(*(DensityMatrix(m, (2, 2)) for m in pairs))
    dims = (2, 2, 2)
    cand = -0.25 * np.eye(8) + 0.5 * sum(
        embed_pair(Operator(m, (2, 2)), pair, dims).mat for m, pair in zip(pairs, PAIRS)
    )
    cand_op = Operator(cand, dims)
    params = {"p": p, "q": q, "r": r, "bases": (a, b, c)}
    if all(np.allclose(x, X_BASIS) for x in (a, b, c)) and p == q == r:
        params["to_rho_q"] = FAMILY_TO_RHO_Q
    min_eig = float(np.linalg.eigvalsh(cand)[0])
    return CatalogEntry(
        "classical_family",
        params,
        None,
        {"candidate_psd": min_eig >= -1e-9, "candidate_trace": 1.0, "singles": "I/2"},
        triple=E,
        candidate=cand_op,
    )


def range_residual(rho: np.ndarray, v: np.ndarray, tol: float = 1e-10) -> float:
    """Distance from a unit vector to the range of a PSD matrix."""
    w, U = np.linalg.eigh(rho)
    R = U[:, w > tol * max(1.0, w[-1])]
    v = v / np.linalg.norm(v)
    return float(np.linalg.norm(v - R @ (R.conj().T @ v)))


COROLLARY1_PAIR = (np.array([1.0, 1.0]) / np.sqrt(2), np.array([np.sqrt(1 / 3), np.sqrt(2 / 3)]))


def make_corollary1(weights=(1.0,), pairs=(COROLLARY1_PAIR,)) -> CatalogEntry:
    """``p_1 sigma + sum_i p_i |a_i a_i b_i><...|`` for ``|a_i b_i>`` in the ranges of ``sigma_BC`` and its transpose.

    ``weights[0]`` multiplies sigma; each further weight pairs with one
    ``(a_i, b_i)``.  With one weight no pairs are used.
    """
    w = np.asarray(weights, dtype=float)
    if w[0] <= 0 or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
        raise ValueError("weights need p_1 > 0, p_i >= 0 and sum 1")
    pairs = tuple(pairs)[: len(w) - 1]
    if len(pairs) != len(w) - 1:
        raise ValueError(f"{len(w) - 1} product pairs needed, got {len(pairs)}")
    _, bc = sigma_pair_states()
    bc_pt = bc.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)
    mat = w[0] * make_sigma().state.mat
    residuals = []
    for weight, (a, b) in zip(w[1:], pairs):
        a = np.asarray(a)
        if np.max(np.abs(np.imag(a))) > 0:
            raise ValueError("the first vector of each pair must be real")
        a = a / np.linalg.norm(a)
        b = np.asarray(b) / np.linalg.norm(b)
        ab = np.kron(a, b)
        res = max(range_residual(bc, ab), range_residual(bc_pt, ab))
        if res > TOL_RANGE:
            raise ValueError(f"pair is not in both ranges (residual {res:.3g})")
        residuals.append(res)
        mat = mat + weight * projector(np.kron(a, ab))
    return CatalogEntry(
        "corollary1",
        {"weights": tuple(w), "pairs": pairs, "range_residuals": tuple(residuals)},
        _qubits(mat),
        {"birank_ab": (3, 4), "birank_bc": (3, 3), "only_gme": True},
    )


def make_tau(sigma: Operator | None = None, mixer: Operator | None = None, p: float = 0.0) -> CatalogEntry:
    """``(1 - p) sigma + p mixer``; defaults are sigma and the maximally mixed state."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    sigma = make_sigma().state if sigma is None else sigma
    if mixer is None:
        mixer = Operator(np.eye(sigma.total) / sigma.total, sigma.dims)
    state = DensityMatrix.from_operator(sigma * (1 - p) + mixer * p)
    return CatalogEntry("tau", {"p": float(p)}, state, {})


CATALOG: dict[str, Callable[..., CatalogEntry]] = {
    "ghz": make_ghz,
    "rho_q": make_rho_q,
    "sigma": make_sigma,
    "example_main": make_example_main,
    "prop2": make_prop2,
    "classical_family": make_classical_family,
    "corollary1": make_corollary1,
    "tau": make_tau,
}

