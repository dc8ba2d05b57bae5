"""All-at-once block formulation of the IMEX recursion and its
continuous-time relaxation.

The recursion P_n u_{n+1} = Q_n u_n + b_n over Nt steps is stacked
(newest block first) into one linear system H u = F with H block upper
bidiagonal.  Its solution is reached as the steady state of the linear
flow du/dt = F - H u, which is made homogeneous by adjoining a constant
auxiliary block carrying the source:

    d/dt [u; y] = [[-H, diag(F)/K], [0, 0]] [u; y],   y(0) = K * chi,

where chi is a 0/1 indicator of the auxiliary columns kept (support
compression) and K rescales the source block.  Decay certificates for the
flow are derived from the Hermitian part of H.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .imex import ImexSystem
from .linalg import matrix_exp, weyl_gap_bound

__all__ = [
    "BlockSystem",
    "HomogeneousEmbedding",
    "DecayCertificate",
    "assemble_block_system",
    "steady_state",
    "embed_homogeneous",
    "decay_certificate",
    "richardson_flow_reference",
]

_COND_CAP = 1e12


@dataclass(frozen=True)
class BlockSystem:
    """Stacked system H u = F for u = [u_Nt; ...; u_1].

    Block row k holds P_{Nt-1-k} on the diagonal and -Q_{Nt-1-k} on the
    superdiagonal; F stacks b_{Nt-1}, ..., b_1 and finally Q_0 u_0 + b_0.
    ``steps`` keeps the per-step matrices for certificate computations.
    """

    H: np.ndarray
    F: np.ndarray
    block_dim: int
    Nt: int
    steps: tuple

    @property
    def dim(self) -> int:
        return self.Nt * self.block_dim

    def block(self, k: int) -> slice:
        return slice(k * self.block_dim, (k + 1) * self.block_dim)


@dataclass(frozen=True)
class HomogeneousEmbedding:
    """Homogeneous generator for the relaxation flow with source block.

    ``generator`` is [[-H, C/K], [0, 0]] where C holds diag(F) restricted
    to the support columns selected by ``chi``; ``init`` is [u_0; K*chi]
    restricted the same way (default u_0 = 0).
    """

    generator: np.ndarray
    K: float
    chi: np.ndarray
    init: np.ndarray
    n_phys: int
    support: np.ndarray  # indices of the retained auxiliary columns
    Nt: int = 0
    block_dim: int = 0

    @property
    def n_aux(self) -> int:
        return self.generator.shape[0] - self.n_phys


@dataclass(frozen=True)
class DecayCertificate:
    """Exponential-decay certificate for du/dt = F - H u.

    ``weyl_bound`` is the certified lower bound on the smallest eigenvalue
    of (H+H^dagger)/2 built from per-step quantities; ``lambda_min_H1`` is
    the numerically computed value.  ``T_evol`` is the evolution time that
    provably shrinks the steady-state error below ``delta_ss``; when the
    certified bound is non-positive but the numeric gap is positive, the
    numeric gap is used instead and ``weyl_certified`` is False.
    """

    lambda_min_H1: float
    weyl_bound: float
    T_evol: float
    delta_ss: float
    weyl_certified: bool
    T_evol_numeric: float


def assemble_block_system(sys: ImexSystem, u0) -> BlockSystem:
    """Stack the recursion into H u = F (newest time block first)."""
    u0 = np.asarray(u0, dtype=float)
    N = sys.dim
    if u0.shape != (N,):
        raise ValueError("u0 has wrong length")
    Nt = sys.Nt
    H = np.zeros((Nt * N, Nt * N))
    F = np.zeros(Nt * N)
    for k in range(Nt):
        n = Nt - 1 - k
        P, Q, b = sys.steps[n]
        H[k * N:(k + 1) * N, k * N:(k + 1) * N] = P
        if k + 1 < Nt:
            H[k * N:(k + 1) * N, (k + 1) * N:(k + 2) * N] = -Q
        F[k * N:(k + 1) * N] = b
    P0, Q0, b0 = sys.steps[0]
    F[(Nt - 1) * N:] = Q0 @ u0 + b0
    return BlockSystem(H=H, F=F, block_dim=N, Nt=Nt, steps=sys.steps)


def steady_state(bs: BlockSystem) -> np.ndarray:
    """Direct dense solve H^-1 F; the reconstruction target of the whole
    pipeline.  Refuses condition numbers above 1e12."""
    cond = np.linalg.cond(bs.H)
    if not np.isfinite(cond) or cond > _COND_CAP:
        raise np.linalg.LinAlgError(f"block system too ill-conditioned: cond = {cond:.3e}")
    return np.linalg.solve(bs.H, bs.F)


def embed_homogeneous(bs: BlockSystem, K: float, chi=None, u0_flow=None) -> HomogeneousEmbedding:
    """Adjoin the support-compressed auxiliary block carrying F.

    ``chi`` is a 0/1 vector over the stacked index marking which auxiliary
    columns are kept; it must cover the support of F.  ``None`` selects
    exactly the support of F.  The auxiliary block keeps only the columns
    with chi = 1, so sparse-source problems stay small while a dense F
    pays full width.
    """
    if K <= 0:
        raise ValueError("K must be positive")
    n = bs.dim
    if chi is None:
        chi = (np.abs(bs.F) > 0).astype(float)
    chi = np.asarray(chi, dtype=float)
    if chi.shape != (n,):
        raise ValueError("chi has wrong length")
    if not np.all(np.isin(chi, (0.0, 1.0))):
        raise ValueError("chi must be a 0/1 vector")
    if np.any((np.abs(bs.F) > 0) & (chi == 0.0)):
        raise ValueError("chi fails to cover the support of F")
    support = np.where(chi == 1.0)[0]
    m = support.size
    gen = np.zeros((n + m, n + m))
    gen[:n, :n] = -bs.H
    gen[support, n + np.arange(m)] = bs.F[support] / K
    if u0_flow is None:
        u0_flow = np.zeros(n)
    u0_flow = np.asarray(u0_flow, dtype=float)
    init = np.concatenate([u0_flow, K * np.ones(m)])
    return HomogeneousEmbedding(
        generator=gen, K=float(K), chi=chi, init=init, n_phys=n, support=support,
        Nt=bs.Nt, block_dim=bs.block_dim,
    )


def decay_certificate(bs: BlockSystem, delta_ss: float) -> DecayCertificate:
    """Decay rate and sufficient evolution time for the relaxation flow.

    The flow contracts at rate lambda_min((H+H^dagger)/2); the certified
    per-step bound min_j lambda_min(Herm P_j) - max_j ||Q_j||_2 is used
    for T_evol when positive.  A positive numeric gap with a non-positive
    certified bound downgrades the certificate (``weyl_certified=False``)
    rather than refusing.
    """
    if not 0.0 < delta_ss < 1.0:
        raise ValueError("delta_ss must lie in (0, 1)")
    lam = float(np.linalg.eigvalsh((bs.H + bs.H.T) / 2.0)[0])
    if lam <= 0:
        raise ValueError(
            f"flow is not certified convergent: lambda_min(Herm H) = {lam:.3e} <= 0"
        )
    wb = weyl_gap_bound([P for P, _, _ in bs.steps], [Q for _, Q, _ in bs.steps])
    t_num = float(np.log(1.0 / delta_ss) / lam)
    if wb > 0:
        T = float(np.log(1.0 / delta_ss) / wb)
        certified = True
    else:
        T = t_num
        certified = False
    return DecayCertificate(
        lambda_min_H1=lam,
        weyl_bound=wb,
        T_evol=T,
        delta_ss=delta_ss,
        weyl_certified=certified,
        T_evol_numeric=t_num,
    )


def richardson_flow_reference(emb: HomogeneousEmbedding, t: float, full: bool = False):
    """Exact relaxation-flow state e^{generator*t} init.

    Serves as the oracle for the warped-phase evolution.  Returns the
    physical block unless ``full`` is set.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    state = matrix_exp(emb.generator, t) @ emb.init
    state = np.real_if_close(state, tol=1e6)
    return state if full else state[: emb.n_phys]
