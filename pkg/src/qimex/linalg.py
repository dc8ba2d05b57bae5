"""Dense complex matrix kernels: Hermitian splitting, matrix exponentials,
the standard tridiagonal difference operators with their analytic spectra,
and block-structured norm bounds.

Everything here is desk-scale (dense, double precision) and pure: no
function mutates its arguments, so all results are safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = [
    "HermitianSplit",
    "hermitian_split",
    "log_norm",
    "matrix_exp",
    "second_derivative_matrix",
    "central_difference_matrix",
    "block_norm_bound",
    "weyl_gap_bound",
    "spectral_norm",
    "max_norm",
]

#: Largest admissible ||A*t||_2 before matrix_exp refuses (overflow guard).
EXP_NORM_CAP = 1e4

_HERM_TOL = 1e-12


def _as_square(A, name="A"):
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A.astype(complex, copy=False)


def spectral_norm(A) -> float:
    """Spectral 2-norm by dense SVD."""
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def max_norm(A) -> float:
    """Maximum entry modulus."""
    return float(np.max(np.abs(A))) if np.asarray(A).size else 0.0


@dataclass(frozen=True)
class HermitianSplit:
    """Decomposition A = herm + 1j*antiherm with both parts Hermitian."""

    herm: np.ndarray
    antiherm: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.herm + 1j * self.antiherm


def hermitian_split(A) -> HermitianSplit:
    """Split a square matrix into Hermitian and anti-Hermitian parts.

    Returns ``HermitianSplit(herm, antiherm)`` with
    ``herm = (A + A^dagger)/2`` and ``antiherm = (A - A^dagger)/(2i)``,
    so that ``A = herm + 1j*antiherm`` exactly.
    """
    A = _as_square(A)
    Ah = A.conj().T
    herm = (A + Ah) / 2.0
    antiherm = (A - Ah) / 2.0j
    return HermitianSplit(herm=herm, antiherm=antiherm)


def log_norm(A) -> float:
    """Logarithmic 2-norm: largest eigenvalue of the Hermitian part.

    Equals lim_{h->0+} (||I + hA||_2 - 1)/h and governs the sharpest bound
    ``||e^{At}||_2 <= e^{log_norm(A) t}``.
    """
    A = _as_square(A)
    return float(np.linalg.eigvalsh((A + A.conj().T) / 2.0)[-1])


def _is_hermitian(A, tol=_HERM_TOL) -> bool:
    scale = max_norm(A)
    if scale == 0.0:
        return True
    return max_norm(A - A.conj().T) <= tol * scale


def matrix_exp(A, t: float = 1.0) -> np.ndarray:
    """Matrix exponential e^{A t}.

    Hermitian inputs are exponentiated through an eigendecomposition;
    skew-Hermitian inputs (A^dagger = -A) use the same path on iA, which
    keeps the result unitary to machine precision.  Everything else falls
    back to scaling-and-squaring with a degree-13 Pade approximant
    (``scipy.linalg.expm``).  Inputs with ``||A t||_2 > 1e4`` are rejected.
    """
    A = _as_square(A)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    n = A.shape[0]
    # 2-norm guard; exact at desk scale, sqrt(|A|_1 |A|_inf) bound above that.
    if n <= 1024:
        nrm = spectral_norm(A)
    else:
        nrm = np.sqrt(np.linalg.norm(A, 1) * np.linalg.norm(A, np.inf))
    if nrm * abs(t) > EXP_NORM_CAP:
        raise ValueError(
            f"matrix_exp refused: ||A t||_2 ~ {nrm * abs(t):.3e} exceeds cap {EXP_NORM_CAP:.0e}"
        )
    if _is_hermitian(A):
        w, V = np.linalg.eigh(A)
        out = (V * np.exp(w * t)) @ V.conj().T
        return out
    if _is_hermitian(1j * A):
        # A = -i H with H Hermitian: e^{At} = V e^{-i w t} V^dagger, unitary.
        w, V = np.linalg.eigh(1j * A)
        return (V * np.exp(-1j * w * t)) @ V.conj().T
    return sla.expm(A * t)


def second_derivative_matrix(N: int):
    """Tridiagonal second-difference operator and its analytic spectrum.

    Returns ``(L, eigs)`` where L has -2 on the diagonal and 1 on both
    off-diagonals, and ``eigs[k-1] = -2 + 2 cos(k pi / (N+1))`` for
    k = 1..N.  All eigenvalues are negative.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    L = np.diag(-2.0 * np.ones(N))
    if N > 1:
        off = np.ones(N - 1)
        L += np.diag(off, 1) + np.diag(off, -1)
    k = np.arange(1, N + 1)
    eigs = -2.0 + 2.0 * np.cos(k * np.pi / (N + 1))
    return L, eigs


def central_difference_matrix(N: int):
    """Skew-symmetric central-difference operator and its analytic spectrum.

    Returns ``(M, eigs)`` with +1 on the superdiagonal, -1 on the
    subdiagonal, and purely imaginary eigenvalues
    ``-2i cos(k pi/(N+1))``, k = 1..N.  ``M.T == -M`` exactly.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    M = np.zeros((N, N))
    if N > 1:
        off = np.ones(N - 1)
        M += np.diag(off, 1) - np.diag(off, -1)
    k = np.arange(1, N + 1)
    eigs = -2.0j * np.cos(k * np.pi / (N + 1))
    return M, eigs


def block_norm_bound(blocks) -> float:
    """Upper bound on the 2-norm of a square block matrix.

    ``blocks`` is an m-by-m grid (sequence of sequences) of equally sized
    square matrices.  The bound sums, over each block diagonal k, the
    largest block 2-norm on that diagonal:

        sum_{k=-(m-1)}^{m-1}  max_{j-i=k} ||A_ij||_2

    which dominates the 2-norm of the assembled matrix.
    """
    m = len(blocks)
    if m == 0 or any(len(row) != m for row in blocks):
        raise ValueError("blocks must form a non-empty square grid")
    shape = np.asarray(blocks[0][0]).shape
    if len(shape) != 2 or shape[0] != shape[1]:
        raise ValueError("blocks must be square matrices")
    for row in blocks:
        for B in row:
            if np.asarray(B).shape != shape:
                raise ValueError("all blocks must have identical square shape")
    total = 0.0
    for k in range(-(m - 1), m):
        best = 0.0
        for i in range(m):
            j = i + k
            if 0 <= j < m:
                best = max(best, spectral_norm(blocks[i][j]))
        total += best
    return total


def weyl_gap_bound(P_list, Q_list) -> float:
    """Certified lower bound on the smallest eigenvalue of the Hermitian
    part of the all-at-once step matrix.

    Returns ``min_j lambda_min((P_j+P_j^dagger)/2) - max_j ||Q_j||_2``.
    The bound follows from eigenvalue perturbation of Hermitian sums
    combined with the block-diagonal structure of the Hermitian part.
    """
    P_list = list(P_list)
    Q_list = list(Q_list)
    if not P_list or not Q_list:
        raise ValueError("P_list and Q_list must be non-empty")
    lam = min(
        float(np.linalg.eigvalsh((_as_square(P, "P") + np.asarray(P).conj().T) / 2.0)[0])
        for P in P_list
    )
    qmax = max(spectral_norm(Q) for Q in Q_list)
    return lam - qmax
