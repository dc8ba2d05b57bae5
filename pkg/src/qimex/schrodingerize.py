"""Warped-phase lift of a linear flow dv/dt = A v into Hermitian
per-mode evolution, and reconstruction of the physical state.

The change of variables w(t, p) = e^{-p} v(t), extended by e^{-|p|} to
p < 0, turns the flow into the transport system

    dw/dt = -A1 dw/dp + i A2 w,        A = A1 + i A2,

with A1, A2 both Hermitian.  On a periodic p-grid with frequencies mu_l,
each Fourier mode evolves under the Hermitian generator

    H_l = mu_l A1 - A2,      c_l(t) = exp(-i H_l t) c_l(0),

which preserves the total mode norm exactly.  The state is recovered from
w via v(t) = e^{p} w(t, p) at any p beyond the spurious-region threshold
p_diamond = max(lambda_max(A1) t, 0).

Two grid-domain artifacts matter in practice and are handled explicitly:

* a p-independent offset sourced by the zero-frequency mode (an O(1/R)
  periodic-domain effect for flows with a source block); since the exact
  signal satisfies w = e^{-p} v on the reconstruction window, the offset
  is separable by a least-squares fit in p and is removed when
  ``detrend=True``;
* transported remnants of the initial profile wrap around the periodic
  domain; the automatic grid sizing widens the domain until every channel
  carrying non-negligible initial content stays clear of the
  reconstruction window for the whole run.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .allatonce import DecayCertificate, HomogeneousEmbedding
from .linalg import HermitianSplit, hermitian_split, matrix_exp

__all__ = [
    "PGrid",
    "SchrodingerizedSystem",
    "PipelineResult",
    "build_grid",
    "warped_initial",
    "from_flow",
    "evolve",
    "reconstruct",
    "materialize_hschr",
    "run_pipeline",
]

NP_CAP = 2 ** 14


@dataclass(frozen=True)
class PGrid:
    """Uniform periodic grid on [Lp, Rp) with Np points (power of two).

    Grid points p_j = Lp + j*dp, j = 0..Np-1, and Fourier frequencies
    mu_l = 2 pi l / (Rp - Lp) for l = -Np/2 .. Np/2-1.  The classical
    normalization mu_l = pi*l is recovered exactly when Rp - Lp = 2.
    ``threshold`` bounds the admissible warped-profile magnitude at the
    endpoints (e^{-|Lp|} and e^{-|Rp|} must stay below it).
    """

    Lp: float
    Rp: float
    Np: int
    threshold: float = 1e-6

    def __post_init__(self):
        if not (self.Lp < 0.0 < self.Rp):
            raise ValueError("need Lp < 0 < Rp")
        if self.Np < 2 or (self.Np & (self.Np - 1)) != 0:
            raise ValueError("Np must be a power of two >= 2")
        if math.exp(-abs(self.Lp)) >= self.threshold or math.exp(-abs(self.Rp)) >= self.threshold:
            raise ValueError(
                "domain too small: warped profile is not negligible at the endpoints"
            )

    @property
    def dp(self) -> float:
        return (self.Rp - self.Lp) / self.Np

    @property
    def points(self) -> np.ndarray:
        return self.Lp + self.dp * np.arange(self.Np)

    @property
    def freqs(self) -> np.ndarray:
        l = np.arange(-self.Np // 2, self.Np // 2)
        return 2.0 * np.pi * l / (self.Rp - self.Lp)


@dataclass(frozen=True)
class SchrodingerizedSystem:
    """Mode-space state of the warped flow.

    ``split`` holds the Hermitian/anti-Hermitian parts of the flow
    generator A, ``modes`` the per-frequency coefficient vectors c_l
    stacked as an (Np, n) array in the frequency ordering of
    ``grid.freqs`` (mode index outer, system index inner).
    """

    split: HermitianSplit
    grid: PGrid
    modes: np.ndarray

    @property
    def dim(self) -> int:
        return self.modes.shape[1]

    def mode_hamiltonian(self, l: int) -> np.ndarray:
        """Hermitian generator mu_l A1 - A2 of mode index l (0-based in
        the ordering of ``grid.freqs``)."""
        return self.grid.freqs[l] * self.split.herm - self.split.antiherm

    def total_mode_norm_sq(self) -> float:
        return float(np.sum(np.abs(self.modes) ** 2))

    def field(self) -> np.ndarray:
        """Warped field w(p_j) on the grid, shape (Np, n)."""
        w = np.fft.ifft(np.fft.ifftshift(self.modes, axes=0), axis=0) * math.sqrt(self.grid.Np)
        if _is_real_system(self):
            w = w.real
        return w


def _is_real_system(sys: SchrodingerizedSystem) -> bool:
    if np.max(np.abs(sys.split.herm.imag)) > 0:
        return False
    # real generator <=> A1 real symmetric and A2 purely imaginary
    return np.max(np.abs(sys.split.antiherm.real)) == 0.0


def warped_initial(v0, grid: PGrid) -> np.ndarray:
    """Sample e^{-|p_j|} v0 on the grid and apply the unitary DFT in j.

    Returns the (Np, n) mode array; the transform is unitary, so the
    total mode norm equals the sampled field norm exactly (Parseval).
    """
    v0 = np.atleast_1d(np.asarray(v0))
    samples = np.exp(-np.abs(grid.points))[:, None] * v0[None, :]
    return np.fft.fftshift(np.fft.fft(samples, axis=0), axes=0) / math.sqrt(grid.Np)


def from_flow(A, v0, grid: PGrid) -> SchrodingerizedSystem:
    """Build the mode-space state of the flow dv/dt = A v from v(0)."""
    return SchrodingerizedSystem(
        split=hermitian_split(A), grid=grid, modes=warped_initial(v0, grid)
    )


def _evolve_modes(sys: SchrodingerizedSystem, ts) -> np.ndarray:
    """Propagate all modes to each time in ts; returns (len(ts), Np, n).

    Each mode is advanced through an eigendecomposition of its Hermitian
    generator, so evaluating extra sample times costs only matrix-vector
    work.  For real generators and conjugate-symmetric initial data the
    negative-frequency modes are conjugates of the positive ones, halving
    the eigendecompositions.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    Np = sys.grid.Np
    n = sys.dim
    mu = sys.grid.freqs
    A1, A2 = sys.split.herm, sys.split.antiherm
    out = np.empty((len(ts), Np, n), dtype=complex)

    real_sym = _is_real_system(sys) and np.allclose(
        sys.modes[1:], np.conj(sys.modes[:0:-1]), rtol=0, atol=1e-12 * (1 + np.max(np.abs(sys.modes)))
    )
    half = Np // 2

    def _advance(l):
        w, V = sla.eigh(mu[l] * A1 - A2, driver="evr")
        d = V.conj().T @ sys.modes[l]
        return np.stack([V @ (np.exp(-1j * w * t) * d) for t in ts])

    if real_sym:
        for l in range(half, Np):
            res = _advance(l)
            out[:, l] = res
            if l > half:
                out[:, Np - l] = np.conj(res)
        out[:, 0] = _advance(0)
    else:
        for l in range(Np):
            out[:, l] = _advance(l)
    return out


def evolve(sys: SchrodingerizedSystem, t: float) -> SchrodingerizedSystem:
    """Advance every mode by exp(-i H_l t); norm preserving."""
    if t < 0:
        raise ValueError("t must be non-negative")
    modes = _evolve_modes(sys, [t])[0]
    return replace(sys, modes=modes)


def _fit_window(grid: PGrid, p_diamond: float):
    p = grid.points
    lo = p_diamond + grid.dp
    hi = min(grid.Rp - 2.0, lo + 8.0)
    j0 = int(np.searchsorted(p, lo, side="right"))
    j1 = int(np.searchsorted(p, hi, side="right"))
    if j0 >= grid.Np:
        raise ValueError("p_diamond too close to the right endpoint")
    return j0, max(j1, j0 + 2)


def _detrend_fit(field, p, j0, j1):
    """Least-squares fit w_i(p) ~ e^{-p} u_i + k_i + s_i (p - pbar).

    The exact signal on the reconstruction window is proportional to
    e^{-p}; the affine terms capture the spurious component sourced by the
    lowest Fourier modes of a periodic domain (a near-constant offset with
    a slow drift in p).  Returns the signal coefficients, the fitted
    spurious profile on the window, and the rms misfit.
    """
    pw = p[j0:j1]
    G = np.stack([np.exp(-pw), np.ones_like(pw), pw - pw.mean()], axis=1)
    coef, *_ = np.linalg.lstsq(G, field[j0:j1], rcond=None)
    spurious = G[:, 1:] @ coef[1:]
    resid = field[j0:j1] - G @ coef
    rms = float(np.sqrt(np.mean(np.sum(np.abs(resid) ** 2, axis=1))))
    return coef[0], spurious, rms


def reconstruct(
    sys: SchrodingerizedSystem,
    method: str = "single-point",
    p_diamond: float = 0.0,
    detrend: bool = True,
):
    """Recover the physical state from the warped field.

    ``single-point`` evaluates e^{p*} w(t, p*) at the smallest grid point
    p* > p_diamond + dp; ``integral`` evaluates
    e^{p*} * trapezoid(w, p* .. Rp).  With ``detrend=True`` (default) the
    p-independent spurious component of the field -- a periodic-domain
    artifact of source-carrying flows -- is fitted over the window
    [p*, p*+8] and removed first; this leaves the exact identities of both
    methods untouched since a flat offset is orthogonal to e^{-p} signal.

    Returns the full-length state vector (physical plus any auxiliary
    block).
    """
    if method not in ("single-point", "integral"):
        raise ValueError(f"unknown reconstruction method: {method!r}")
    grid = sys.grid
    if p_diamond >= grid.Rp - 2 * grid.dp:
        raise ValueError("p_diamond too close to the right endpoint")
    field = sys.field()
    p = grid.points
    j0, j1 = _fit_window(grid, p_diamond)
    w = field[j0:j1]
    if detrend and j1 - j0 >= 5:
        _, spurious, _ = _detrend_fit(field, p, j0, j1)
        w = w - spurious
    pstar = p[j0]
    if method == "single-point":
        return np.exp(pstar) * w[0]
    return _integral_estimate(w, p[j0:j1])


def _integral_estimate(w, pw):
    """Integral reconstruction e^{p*} int_{p*}^{p_hi} w dq, renormalized by
    the exact tail weight 1 - e^{-(p_hi - p*)}.  The integration stops at
    the end of the trusted window: the discarded tail of the ideal field
    is below e^{-8}, while far regions of a wide domain may hold wrapped
    remnants that would otherwise accumulate in the quadrature."""
    pstar = pw[0]
    width = pw[-1] - pstar
    val = np.trapezoid(w, dx=pw[1] - pw[0], axis=0)
    return np.exp(pstar) * val / (1.0 - np.exp(-width))


def _scalar_probe_value(Rp: float, Np: int, delta: float, t_probe: float = 1.0) -> float:
    """Single-point reconstruction of the pure-decay scalar flow A = -1."""
    grid = PGrid(Lp=-Rp, Rp=Rp, Np=Np, threshold=max(delta / 3.0, 2e-16))
    sysm = from_flow(np.array([[-1.0]]), np.array([1.0]), grid)
    sysm = evolve(sysm, t_probe)
    val = reconstruct(sysm, "single-point", p_diamond=0.0, detrend=False)
    return float(np.real(val[0]))


def build_grid(
    delta_fourier: float,
    p_diamond: float,
    start: int = 2 ** 9,
    cap: int = NP_CAP,
    t_probe: float = 1.0,
) -> PGrid:
    """Size the p-grid for a target truncation tolerance.

    The half-width is Rp = max(2, ln(3/delta_fourier) + p_diamond + 1),
    which keeps the endpoint values of the warped profile below
    delta_fourier/3.  Np starts at ``start`` and doubles until doubling it
    once more moves the reconstructed value of the pure-decay scalar probe
    (flow A = -1, evolved to t=1) by less than delta_fourier/4.
    """
    if not 0.0 < delta_fourier < 1.0:
        raise ValueError("delta_fourier must lie in (0, 1)")
    Rp = max(2.0, math.log(3.0 / delta_fourier) + p_diamond + 1.0)
    thr = max(delta_fourier / 3.0, 2e-16)
    Np = int(start)
    val = _scalar_probe_value(Rp, Np, delta_fourier, t_probe)
    while True:
        if 2 * Np > cap:
            raise ValueError(f"grid refinement failed to converge below Np = {cap}")
        val2 = _scalar_probe_value(Rp, 2 * Np, delta_fourier, t_probe)
        if abs(val2 - val) < delta_fourier / 4.0:
            break
        Np *= 2
        val = val2
    return PGrid(Lp=-Rp, Rp=Rp, Np=Np, threshold=thr)


def materialize_hschr(split: HermitianSplit, grid: PGrid) -> np.ndarray:
    """Assemble the full lifted Hermitian generator (small sizes only).

    Mode index outer: H = diag(mu) (x) A1 - I (x) A2.  Used for layout
    cross-checks and max-norm reporting, never for evolution.
    """
    n = split.herm.shape[0]
    if grid.Np * n > 4096:
        raise ValueError("materialization capped at dimension 4096")
    Dmu = np.diag(grid.freqs)
    return np.kron(Dmu, split.herm) - np.kron(np.eye(grid.Np), split.antiherm)


@dataclass(frozen=True)
class PipelineResult:
    """Output of the end-to-end warped-phase run."""

    u_stacked: np.ndarray        # physical all-at-once block, newest first
    slices: tuple                # (u_1, ..., u_Nt) in natural time order
    aux: np.ndarray              # recovered auxiliary block
    u_single_point: np.ndarray
    u_integral: np.ndarray
    method: str
    t_run: float
    sample_times: np.ndarray
    grid: PGrid
    p_diamond_eff: float
    p_star: float
    mode_norm_drift: float
    trunc_estimate: float
    wall_seconds: float


def _effective_run_time(Hm, steady, cert: DecayCertificate, u0_phys) -> float:
    """Shortest time on a doubling ladder at which the exact transient
    e^{-H t}(u0 - steady) falls below (delta_ss/2) ||steady||, capped by
    the certificate time.  Uses repeated squaring of one short-time
    propagator, so the cost is a handful of dense multiplies."""
    target = 0.5 * cert.delta_ss * float(np.linalg.norm(steady))
    d0 = u0_phys - steady
    base = cert.T_evol_numeric / 32.0
    E = matrix_exp(-Hm, base)
    t = base
    for _ in range(9):
        if float(np.linalg.norm(E @ d0)) <= target or t >= cert.T_evol:
            break
        E = E @ E
        t *= 2.0
    return float(min(t, cert.T_evol))


def _auto_grid(emb: HomogeneousEmbedding, split, t_max, p_dia, delta_fourier,
               dp_target=0.3, np_cap=2 ** 12):
    """Wrap-aware grid sizing.

    The domain half-width starts from the truncation requirement and is
    enlarged until every transport channel (eigenvector of A1) that
    carries a non-negligible share of the initial profile travels less
    than one full period during the run, so wrapped remnants never cross
    the reconstruction window.  Returns ``(grid, vstar)`` where vstar is
    the largest channel speed whose cumulative content exceeds the
    negligibility tolerance.
    """
    evs, U = np.linalg.eigh(split.herm)
    proj = np.abs(U.conj().T @ emb.init)
    order = np.argsort(-np.abs(evs))
    cum = np.sqrt(np.cumsum(proj[order] ** 2))
    tol = delta_fourier * float(np.linalg.norm(emb.init))
    significant = np.where(cum >= tol)[0]
    vstar = abs(evs[order[significant[0]]]) if significant.size else 0.0
    Rbase = max(2.0, math.log(3.0 / delta_fourier) + p_dia + 1.0)
    R = max(Rbase, 0.5 * (vstar * t_max + p_dia + 8.0))
    Np = 2 ** int(np.ceil(np.log2(2.0 * R / dp_target)))
    Np = int(min(max(Np, 2 ** 7), np_cap))
    return PGrid(Lp=-R, Rp=R, Np=Np, threshold=max(delta_fourier / 3.0, 2e-16)), float(vstar)


def run_pipeline(
    emb: HomogeneousEmbedding,
    cert: DecayCertificate,
    grid: Optional[PGrid] = None,
    method: str = "single-point",
    p_diamond: Optional[float] = None,
    delta_fourier: float = 1e-3,
    t_run: Optional[float] = None,
    n_samples: int = 1,
    window_frac: float = 0.0,
    dp_target: float = 0.3,
    np_cap: int = 2 ** 12,
    p_margin: float = 0.5,
) -> PipelineResult:
    """End-to-end warped-phase emulation of the relaxation flow.

    Loads e^{-|p|} [u_0; K chi], evolves every Fourier mode under its
    Hermitian generator to the effective run time, reconstructs the state
    at p* past the spurious-region threshold, and splits off the physical
    all-at-once block.  When ``t_run`` is not given it is chosen from the
    exact decay curve of the transient (never exceeding the certificate
    time); the spurious threshold p_diamond is computed from the largest
    positive eigenvalue of the Hermitian part of the generator.
    """
    t0_wall = time.monotonic()
    n = emb.n_phys
    gen = emb.generator
    Hm = -gen[:n, :n]
    F = gen[:n, n:].sum(axis=1) * emb.K
    steady = np.linalg.solve(Hm, F)
    split = hermitian_split(gen)
    lam_plus = float(np.linalg.eigvalsh(split.herm)[-1])
    p_user = (p_diamond or 0.0) + p_margin

    def window_for(t):
        return max(lam_plus, 0.0) * t + p_user

    # Candidate run times: the decay-curve ladder time guarantees the
    # transient is below tolerance; longer candidates let transported
    # remnants of the initial profile clear the reconstruction window.
    # All candidates share one eigendecomposition per mode, so evaluating
    # them costs only matrix-vector work; the per-candidate fit residual
    # then selects the cleanest one.
    if t_run is None:
        t_base = _effective_run_time(Hm, steady, cert, emb.init[:n])
        cands = [t_base * f for f in (1.0, 1.25, 1.5, 2.0, 2.5, 3.0)]
        t_grid = 2.0 * t_base
    else:
        cands = [float(t_run)]
        t_grid = float(t_run)

    if grid is None:
        grid, vstar = _auto_grid(emb, split, t_grid * (1.0 + window_frac),
                                 window_for(t_grid), delta_fourier, dp_target, np_cap)
    else:
        vstar = None
    if len(cands) > 1 and vstar is not None and vstar > 0:
        # drop candidates whose content-carrying channels would lap the
        # periodic domain and cross back into the reconstruction window
        safe = [t for t in cands
                if vstar * t <= 2.0 * grid.Rp - window_for(t) - 6.0]
        cands = safe or cands[:1]

    sysm = SchrodingerizedSystem(split=split, grid=grid, modes=warped_initial(emb.init, grid))
    norm0 = sysm.total_mode_norm_sq()
    stack = _evolve_modes(sysm, cands)
    drift = max(
        abs(float(np.sum(np.abs(m) ** 2)) - norm0) / norm0 for m in stack
    )
    p = grid.points

    evals = []
    for modes_t, t in zip(stack, cands):
        field = replace(sysm, modes=modes_t).field()
        j0, j1 = _fit_window(grid, window_for(t))
        u_fit, spurious, rms = _detrend_fit(field, p, j0, j1)
        evals.append((t, field, j0, j1, spurious, rms, u_fit))
    if len(evals) == 1:
        t_run, field, j0, j1, spurious, rms, _ = evals[0]
    else:
        # The steady signal is time independent while unconverged or
        # wrapped remnants drift with t, so the cleanest candidate is the
        # one whose fitted solution agrees best with a neighboring time.
        scores = []
        for i in range(len(evals)):
            j = i + 1 if i + 1 < len(evals) else i - 1
            scores.append(float(np.linalg.norm(evals[i][6] - evals[j][6])))
        t_run, field, j0, j1, spurious, rms, _ = evals[int(np.argmin(scores))]
    p_dia = window_for(t_run)
    ts = np.array([t_run])

    if n_samples > 1 and window_frac > 0.0:
        ts = np.linspace(t_run, min(t_run * (1.0 + window_frac), cert.T_evol), n_samples)
        stack2 = _evolve_modes(sysm, ts)
        drift = max(drift, max(
            abs(float(np.sum(np.abs(m) ** 2)) - norm0) / norm0 for m in stack2
        ))
        field = replace(sysm, modes=stack2.mean(axis=0)).field()
        _, spurious, rms = _detrend_fit(field, p, j0, j1)

    w = field[j0:j1] - spurious
    pstar = p[j0]
    u_sp = np.exp(pstar) * w[0]
    u_int = _integral_estimate(w, p[j0:j1])
    chosen = u_sp if method == "single-point" else u_int
    chosen = np.real_if_close(chosen, tol=1e8)

    est = 4.0 * math.exp(pstar) * rms + math.exp(-(grid.Rp - pstar)) * float(
        np.linalg.norm(chosen)
    )

    u_stacked = np.asarray(chosen[:n], dtype=float)
    aux = np.asarray(chosen[n:], dtype=float)
    Nt, bd = emb.Nt, emb.block_dim
    if Nt and bd:
        slices = tuple(u_stacked[(Nt - 1 - k) * bd:(Nt - k) * bd] for k in range(Nt))
    else:
        slices = (u_stacked,)
    return PipelineResult(
        u_stacked=u_stacked,
        slices=slices,
        aux=aux,
        u_single_point=np.real_if_close(u_sp, tol=1e8),
        u_integral=np.real_if_close(u_int, tol=1e8),
        method=method,
        t_run=float(t_run),
        sample_times=ts,
        grid=grid,
        p_diamond_eff=p_dia,
        p_star=float(pstar),
        mode_norm_drift=float(drift),
        trunc_estimate=float(est),
        wall_seconds=time.monotonic() - t0_wall,
    )
