"""Independent oracles used to freeze expected values in the tests.

These are deliberately written against the definitions (truncated Taylor
series, finite differences, brute-force assembly) and share no code with
the implementation paths they check.
"""

import numpy as np


def taylor_expm(A, t=1.0, terms=200):
    """Matrix exponential by scaled truncated Taylor series.

    The input is scaled by powers of two until its max-norm is below 1/2,
    the series is summed to ``terms`` (far past machine precision at that
    scale), and the result is squared back up.
    """
    A = np.asarray(A, dtype=complex) * t
    s = 0
    while np.max(np.abs(A)) > 0.5:
        A = A / 2.0
        s += 1
    n = A.shape[0]
    out = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    for k in range(1, terms + 1):
        term = term @ A / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def lognorm_fd(A, hs=(1e-4, 1e-5, 1e-6)):
    """Finite-difference logarithmic norm, extrapolated h -> 0.

    Evaluates (||I + hA||_2 - 1)/h on the given h values and removes the
    leading O(h) error by a linear fit in h.
    """
    A = np.asarray(A)
    I = np.eye(A.shape[0])
    hs = np.asarray(hs, dtype=float)
    vals = np.array([(np.linalg.norm(I + h * A, 2) - 1.0) / h for h in hs])
    coeff = np.polyfit(hs, vals, 1)
    return coeff[1]


def assemble_blocks(blocks):
    """Dense matrix from an m-by-m grid of equally sized blocks."""
    return np.block([[np.asarray(B) for B in row] for row in blocks])


def stack_trajectory_newest_first(traj):
    """[u_Nt; ...; u_1] from a (Nt+1, dim) trajectory including u_0."""
    return np.concatenate(list(traj[1:][::-1]))
