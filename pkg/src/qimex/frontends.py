"""Builders for the two concrete schemes driven through the pipeline: the
d-dimensional linear heat equation with time-dependent diffusivity, and
the multiscale telegraph equation in diffusive-relaxation form with its
symmetrized rescaling, recovery maps, and vanishing-dissipation
convergence study.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .imex import ImexSystem, MultiscaleProblem, build_imex, classical_imex_solve
from .linalg import central_difference_matrix, second_derivative_matrix

__all__ = [
    "HeatConfig",
    "TelegraphConfig",
    "TelegraphSystem",
    "OrderStudyResult",
    "heat_problem",
    "heat_build",
    "heat_grid",
    "steps_for_dt",
    "telegraph_build",
    "telegraph_unrescaled_build",
    "telegraph_recover",
    "telegraph_chi",
    "dissipative_order_study",
]

_STATE_CAP = 4096


def _zero_trace(t: float) -> float:
    return 0.0


@dataclass(frozen=True)
class HeatConfig:
    """Heat equation du/dt = sum_k (a_k(t)/eps) d^2u/dx_k^2 on (0,1)^d with
    Dirichlet boundary data, discretized on Nx interior points per axis
    (spacing h = 1/(Nx+1)), treated fully implicitly.

    ``boundary_func(t, x)`` supplies the Dirichlet trace (default zero);
    ``u0_func(x)`` the initial data, with x a length-d coordinate array.
    """

    d: int
    Nx: int
    a_funcs: Sequence[Callable[[float], float]]
    u0_func: Callable[[np.ndarray], float]
    T: float
    delta: float
    epsilon: float = 1.0
    boundary_func: Optional[Callable[[float, np.ndarray], float]] = None

    def __post_init__(self):
        if len(self.a_funcs) != self.d:
            raise ValueError("need one diffusivity profile per dimension")
        if self.Nx ** self.d > _STATE_CAP:
            raise ValueError(f"state size {self.Nx ** self.d} exceeds cap {_STATE_CAP}")

    @property
    def h(self) -> float:
        return 1.0 / (self.Nx + 1)


def heat_grid(cfg: HeatConfig) -> np.ndarray:
    """Interior grid coordinates, shape (Nx^d, d), C-order flattening."""
    axes = [np.arange(1, cfg.Nx + 1) * cfg.h for _ in range(cfg.d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _kron_chain(k: int, core: np.ndarray, d: int, Nx: int) -> np.ndarray:
    out = np.eye(1)
    for pos in range(d):
        out = np.kron(out, core if pos == k else np.eye(Nx))
    return out


def heat_problem(cfg: HeatConfig) -> MultiscaleProblem:
    """Continuous multiscale form of the heat scheme.

    The stiff generator is L1(t) = sum_k a_k(t) h^-2 (I x..x L x..x I)
    with L the second-difference operator; boundary traces enter the stiff
    source b1.  There is no non-stiff part.
    """
    d, Nx, h = cfg.d, cfg.Nx, cfg.h
    dim = Nx ** d
    L, _ = second_derivative_matrix(Nx)
    parts = [_kron_chain(k, L, d, Nx) for k in range(d)]

    def L1(t: float) -> np.ndarray:
        acc = np.zeros((dim, dim))
        for k in range(d):
            acc += cfg.a_funcs[k](t) * parts[k]
        return acc / h ** 2

    grid = heat_grid(cfg)
    bfun = cfg.boundary_func

    def b1(t: float) -> np.ndarray:
        if bfun is None:
            return np.zeros(dim)
        g = np.zeros(dim)
        shape = (Nx,) * d
        for k in range(d):
            a = cfg.a_funcs[k](t)
            for face in (0.0, 1.0):
                sel = np.where(np.isclose(grid[:, k], h if face == 0.0 else 1.0 - h))[0]
                for i in sel:
                    x = grid[i].copy()
                    x[k] = face
                    g[i] += a * bfun(t, x)
        return g / h ** 2

    u0 = np.array([cfg.u0_func(x) for x in grid], dtype=float)
    return MultiscaleProblem(
        dim=dim, L1=L1, epsilon=cfg.epsilon, u0=u0, T=cfg.T, b1=b1
    )


def heat_build(cfg: HeatConfig, Nt: int) -> ImexSystem:
    """IMEX step matrices of the fully implicit heat scheme:
    P_n = eps I - lam * sum_k a_k L-chain, Q_n = eps I, no CFL restriction."""
    return build_imex(heat_problem(cfg), Nt)


def steps_for_dt(T: float, dt: float) -> int:
    """Round a step-size rule up to an integer count landing exactly on T."""
    return max(1, int(math.ceil(T / dt - 1e-12)))


@dataclass(frozen=True)
class TelegraphConfig:
    """Multiscale telegraph system

        du/dt + dv/dx = 0
        eps^2 dv/dt + a(t) du/dx = -v

    in diffusive-relaxation form, discretized with the relaxation treated
    implicitly and an added vanishing dissipation of strength h^{1/beta}/2.
    ``Nx`` counts interior unknowns (h = 1/(Nx+1)); the step-size rule
    dt = dt_factor * h^{2-1/beta} keeps lambda_tilde = tau/h^{2-1/beta}
    below one.  Trace callables supply boundary values of u and v
    (default homogeneous).
    """

    Nx: int
    beta: float
    epsilon: float
    a_func: Callable[[float], float]
    u0_func: Callable[[np.ndarray], np.ndarray]
    v0_func: Callable[[np.ndarray], np.ndarray]
    T: float
    delta: float
    K: Optional[float] = None
    dt_factor: float = 0.5
    u_left: Callable[[float], float] = _zero_trace
    u_right: Callable[[float], float] = _zero_trace
    v_left: Callable[[float], float] = _zero_trace
    v_right: Callable[[float], float] = _zero_trace

    def __post_init__(self):
        if self.beta < 1.0:
            raise ValueError("beta must be >= 1")

    @property
    def h(self) -> float:
        return 1.0 / (self.Nx + 1)

    @property
    def K_value(self) -> float:
        return float(self.K) if self.K is not None else math.sqrt(self.Nx)

    def default_dt(self) -> float:
        return self.dt_factor * self.h ** (2.0 - 1.0 / self.beta)


@dataclass(frozen=True)
class TelegraphSystem:
    """Rescaled telegraph recursion plus recovery metadata.

    Level n of the hat trajectory represents [u_n; sqrt(tau/A) v_n] with
    A = A_{n-1} for n >= 1 and A_0 at the initial level, so the flux is
    recovered by multiplying the lower block by ``recovery_factors[n]``.
    """

    system: ImexSystem
    w0_hat: np.ndarray
    recovery_factors: np.ndarray
    lam: float
    lam_tilde: float
    h: float
    A: np.ndarray  # A_n = a(n tau) - eps^2, n = 0..Nt

    def recover_level(self, w_hat: np.ndarray, n: int):
        Nx = w_hat.size // 2
        return w_hat[:Nx], self.recovery_factors[n] * w_hat[Nx:]

    def recover_trajectory(self, traj_hat: np.ndarray):
        us, vs = [], []
        for n, w in enumerate(traj_hat):
            u, v = self.recover_level(w, n)
            us.append(u)
            vs.append(v)
        return np.stack(us), np.stack(vs)


def telegraph_recover(w_hat, A_n: float, tau: float):
    """Undo the flux rescaling: (u, v) = (upper half, sqrt(A_n/tau) * lower)."""
    w_hat = np.asarray(w_hat)
    if w_hat.size % 2:
        raise ValueError("rescaled state must have even length")
    Nx = w_hat.size // 2
    return w_hat[:Nx], math.sqrt(A_n / tau) * w_hat[Nx:]


def telegraph_chi(Nx: int, Nt: int) -> np.ndarray:
    """Auxiliary support indicator: boundary entries of both components in
    the first Nt-1 time blocks, the full source block in the last one.
    ||chi||^2 = 4 (Nt-1) + 2 Nx."""
    cell_boundary = np.zeros(2 * Nx)
    cell_boundary[[0, Nx - 1, Nx, 2 * Nx - 1]] = 1.0
    chi = np.tile(cell_boundary, Nt)
    chi[(Nt - 1) * 2 * Nx:] = 1.0
    return chi


def _trace_vectors(cfg: TelegraphConfig, t: float):
    Nx = cfg.Nx
    b1 = np.zeros(Nx)
    b2 = np.zeros(Nx)
    c1 = np.zeros(Nx)
    c2 = np.zeros(Nx)
    ul, ur = cfg.u_left(t), cfg.u_right(t)
    vl, vr = cfg.v_left(t), cfg.v_right(t)
    b1[0], b1[-1] = ul, ur
    b2[0], b2[-1] = -ul, ur
    c1[0], c1[-1] = vl, vr
    c2[0], c2[-1] = -vl, vr
    return b1, b2, c1, c2


def _telegraph_scales(cfg: TelegraphConfig, Nt: int):
    h = cfg.h
    tau = cfg.T / Nt
    lam = tau / h
    lam_tilde = tau / h ** (2.0 - 1.0 / cfg.beta)
    if not lam_tilde < 1.0:
        raise ValueError(f"step-size condition violated: lambda_tilde = {lam_tilde:.3f} >= 1")
    A = np.array([cfg.a_func(n * tau) - cfg.epsilon ** 2 for n in range(Nt + 1)])
    if np.any(A <= 0.0):
        raise ValueError("relaxation coefficient a(t) - eps^2 must stay positive")
    return h, tau, lam, lam_tilde, A


def telegraph_build(cfg: TelegraphConfig, Nt: int) -> TelegraphSystem:
    """Symmetrized (rescaled) telegraph recursion hat-P_n w_{n+1} =
    hat-Q_n w_n + hat-b_n.

    The rescaling divides the flux block by sqrt(A_n/tau), which removes
    the 1/eps^2 entries and makes the off-diagonal part of hat-P purely
    skew, so its Hermitian part is diag(I, (1+eps^2/tau) I).  With a
    time-dependent coefficient the output scaling of step n is reused as
    the input scaling of step n+1 (lower-right of hat-Q picks up
    sqrt(A_{n-1}/A_n)), which keeps the recursion exactly equivalent to
    the unrescaled one; for constant a this is the plain symmetrized
    scheme.  Boundary traces enter with the scaling of the stencil that
    generated them: dissipation traces with lambda_tilde/2 at time n,
    central-difference traces with lambda/2, the relaxation trace with
    sqrt(tau A_n)/(2h).
    """
    h, tau, lam, lam_tilde, A = _telegraph_scales(cfg, Nt)
    Nx = cfg.Nx
    eps = cfg.epsilon
    L, _ = second_derivative_matrix(Nx)
    M, _ = central_difference_matrix(Nx)
    I = np.eye(Nx)
    Z = np.zeros((Nx, Nx))
    damp = I + lam_tilde / 2.0 * L
    steps = []
    for n in range(Nt):
        An = A[n]
        Anm = A[n - 1] if n >= 1 else A[0]
        c = math.sqrt(tau * An) / (2.0 * h)
        P = np.block([[I, c * M], [c * M, (1.0 + eps ** 2 / tau) * I]])
        Q = np.block([
            [damp, Z],
            [-(eps ** 2 / (2.0 * h)) * math.sqrt(tau / An) * M,
             (eps ** 2 / tau) * math.sqrt(Anm / An) * damp],
        ])
        b1n, b2n, c1n, _ = _trace_vectors(cfg, n * tau)
        _, b2n1, _, c2n1 = _trace_vectors(cfg, (n + 1) * tau)
        top = lam_tilde / 2.0 * b1n - lam / 2.0 * c2n1
        bot = (
            -(eps ** 2 / (2.0 * h)) * math.sqrt(tau / An) * b2n
            + (eps ** 2 / (2.0 * h ** (2.0 - 1.0 / cfg.beta))) * math.sqrt(tau / An) * c1n
            - math.sqrt(tau * An) / (2.0 * h) * b2n1
        )
        steps.append((P, Q, np.concatenate([top, bot])))
    x = np.arange(1, Nx + 1) * h
    u0 = np.asarray(cfg.u0_func(x), dtype=float)
    v0 = np.asarray(cfg.v0_func(x), dtype=float)
    w0_hat = np.concatenate([u0, math.sqrt(tau / A[0]) * v0])
    factors = np.array([math.sqrt(A[max(n - 1, 0)] / tau) for n in range(Nt + 1)])
    return TelegraphSystem(
        system=ImexSystem(steps=tuple(steps), tau=tau, Nt=Nt),
        w0_hat=w0_hat,
        recovery_factors=factors,
        lam=lam,
        lam_tilde=lam_tilde,
        h=h,
        A=A,
    )


def telegraph_unrescaled_build(cfg: TelegraphConfig, Nt: int):
    """Plain (unrescaled) recursion for w_n = [u_n; v_n]; carries 1/eps^2
    entries and serves as the direct reference for the rescaled system.
    Returns ``(ImexSystem, w0)``."""
    h, tau, lam, lam_tilde, A = _telegraph_scales(cfg, Nt)
    Nx = cfg.Nx
    eps = cfg.epsilon
    L, _ = second_derivative_matrix(Nx)
    M, _ = central_difference_matrix(Nx)
    I = np.eye(Nx)
    Z = np.zeros((Nx, Nx))
    damp = I + lam_tilde / 2.0 * L
    steps = []
    for n in range(Nt):
        An = A[n]
        P = np.block([[I, lam / 2.0 * M],
                      [lam * An / (2.0 * eps ** 2) * M, (1.0 + tau / eps ** 2) * I]])
        Q = np.block([[damp, Z], [-lam / 2.0 * M, damp]])
        b1n, b2n, c1n, _ = _trace_vectors(cfg, n * tau)
        _, b2n1, _, c2n1 = _trace_vectors(cfg, (n + 1) * tau)
        top = lam_tilde / 2.0 * b1n - lam / 2.0 * c2n1
        bot = -lam / 2.0 * b2n + lam_tilde / 2.0 * c1n - lam * An / (2.0 * eps ** 2) * b2n1
        steps.append((P, Q, np.concatenate([top, bot])))
    x = np.arange(1, Nx + 1) * h
    w0 = np.concatenate([np.asarray(cfg.u0_func(x)), np.asarray(cfg.v0_func(x))])
    return ImexSystem(steps=tuple(steps), tau=tau, Nt=Nt), w0


@dataclass(frozen=True)
class OrderStudyResult:
    beta: float
    h_list: np.ndarray
    errors: np.ndarray
    slope: float
    predicted_slope: float
    monotone: bool


def _oscillator_reference(a: float, eps: float):
    """Exact slow-branch solution u = sin(pi x) f(t), v = (f'/pi) cos(pi x)
    of the constant-coefficient telegraph system."""
    disc = 1.0 - 4.0 * eps ** 2 * a * math.pi ** 2
    if disc <= 0:
        raise ValueError("oscillator reference requires 4 eps^2 a pi^2 < 1")
    r = (-1.0 + math.sqrt(disc)) / (2.0 * eps ** 2)
    return (lambda t: math.exp(r * t)), (lambda t: r * math.exp(r * t))


def dissipative_order_study(
    beta: float,
    Nx_list: Sequence[int] = (24, 36, 54, 80),
    T: float = 0.1,
    c_tau: float = 0.15,
    eps: float = 1e-3,
    a: float = 1.0,
) -> OrderStudyResult:
    """Convergence study of the scheme against the exact telegraph solution.

    The total error behaves like C (tau + h^2 + h^{1/beta}); with the
    study's step-size rule tau = c_tau h^2 the dominant exponent is
    min(2, 1/beta) = 1/beta.  The error measured is the grid-weighted
    max_n (||u_n - u(t_n)|| + eps ||v_n - v(t_n)||) against the
    slow-branch separated solution, whose boundary flux traces are fed to
    the scheme exactly.
    """
    if len(Nx_list) < 3:
        raise ValueError("need at least 3 grid levels")
    f, fp = _oscillator_reference(a, eps)
    hs, errs = [], []
    for Nx in Nx_list:
        h = 1.0 / (Nx + 1)
        dt = c_tau * h * h
        Nt = steps_for_dt(T, dt)
        cfg = TelegraphConfig(
            Nx=Nx, beta=beta, epsilon=eps,
            a_func=lambda t: a,
            u0_func=lambda x: np.sin(np.pi * x) * f(0.0),
            v0_func=lambda x: (fp(0.0) / np.pi) * np.cos(np.pi * x),
            T=T, delta=1e-2,
            v_left=lambda t: fp(t) / np.pi,
            v_right=lambda t: -fp(t) / np.pi,
        )
        tsys = telegraph_build(cfg, Nt)
        traj = classical_imex_solve(tsys.system, tsys.w0_hat)
        us, vs = tsys.recover_trajectory(traj)
        x = np.arange(1, Nx + 1) * h
        worst = 0.0
        for n in range(Nt + 1):
            t = n * tsys.system.tau
            du = np.linalg.norm(us[n] - np.sin(np.pi * x) * f(t))
            dv = np.linalg.norm(vs[n] - (fp(t) / np.pi) * np.cos(np.pi * x))
            worst = max(worst, (du + eps * dv) * math.sqrt(h))
        hs.append(h)
        errs.append(worst)
    hs = np.array(hs)
    errs = np.array(errs)
    slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    predicted = min(2.0 - 1.0 / beta, 2.0, 1.0 / beta)
    monotone = bool(np.all(np.diff(errs[np.argsort(hs)]) >= 0))
    return OrderStudyResult(
        beta=beta, h_list=hs, errors=errs, slope=slope,
        predicted_slope=predicted, monotone=monotone,
    )
