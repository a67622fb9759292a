"""Simultaneous diagonalization of Hermitian matrices by Jacobi rotations.

Complex Givens rotations are chosen pair by pair to minimize the summed
off-diagonal mass of the whole set (Cardoso-Souloumiac angles).  Starting
from the identity, a pair of indices on which every matrix is already
degenerate and decoupled is never rotated, so degenerate blocks keep the
computational orientation.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def off_mass(mats: np.ndarray) -> float:
    """Frobenius norm of all off-diagonal entries of a stack of matrices."""
    mats = np.asarray(mats)
    mask = ~np.eye(mats.shape[-1], dtype=bool)
    return float(np.linalg.norm(mats[..., mask]))


def joint_diagonalize(
    mats: Sequence[np.ndarray] | np.ndarray,
    tol: float = 1e-14,
    max_sweeps: int = 200,
) -> tuple[np.ndarray, float]:
    """Find a unitary ``V`` making every ``V^dagger M_k V`` as diagonal as possible.

    Parameters
    ----------
    mats : sequence of (n, n) Hermitian arrays
    tol : float
        Rotations with ``|sin| <= tol`` are skipped; a sweep without any
        rotation ends the iteration.
    max_sweeps : int

    Returns
    -------
    V : ndarray
        Unitary whose columns are the common (approximate) eigenvectors.
    residual : float
        Off-diagonal Frobenius mass left in the rotated set.
    """
    A = np.array(mats, dtype=complex, copy=True)
    if A.ndim == 2:
        A = A[None]
    k, n, _ = A.shape
    V = np.eye(n, dtype=complex)
    scale = max(float(np.linalg.norm(A)), 1e-300)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                g = np.stack([
                    A[:, p, p] - A[:, q, q],
                    A[:, p, q] + A[:, q, p],
                    1j * (A[:, q, p] - A[:, p, q]),
                ])
                G = np.real(g @ g.conj().T)
                if np.trace(G) <= (1e-15 * scale) ** 2:
                    continue
                _, vecs = np.linalg.eigh(G)
                x, y, z = vecs[:, -1]
                if x < 0:
                    x, y, z = -x, -y, -z
                c = np.sqrt(0.5 + x / 2.0)
                s = 0.5 * (y - 1j * z) / c
                if abs(s) <= tol:
                    continue
                rotated = True
                R = np.array([[c, -np.conj(s)], [s, c]])
                V[:, [p, q]] = V[:, [p, q]] @ R
                A[:, [p, q], :] = np.einsum("ij,kjl->kil", R.conj().T, A[:, [p, q], :])
                A[:, :, [p, q]] = A[:, :, [p, q]] @ R
        if not rotated:
            break
    return V, off_mass(A)
