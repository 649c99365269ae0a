"""Pure-numpy reference versions of the hot kernels.

Signatures mirror the compiled ``_ckernels`` module exactly; ``cellspan.kernels``
picks one at import.
"""

import numpy as np
from scipy.linalg import solve_banded

EXP_LIMIT = 700.0


def kinetics(h, C, y3, d, alpha2, tau, regularized):
    """Rate H and its partials in the potential drop and in C.

    Returns ``(H, dH_dy3, dH_dC, n_saturated)``; H excludes the 1/2*alpha4
    prefactor. Regularized mode uses the clamp theta = min(max(C, 0), 1/tau)
    and the shifted denominator (theta + tau)**-d. Exact mode needs C > 0.
    """
    h = np.asarray(h, dtype=float)
    C = np.asarray(C, dtype=float)
    arg = alpha2 * np.asarray(y3, dtype=float)
    n_sat = int(np.count_nonzero(np.abs(arg) > EXP_LIMIT))
    arg = np.clip(arg, -EXP_LIMIT, EXP_LIMIT)
    ep = np.exp(arg)
    em = np.exp(-arg)

    if regularized:
        theta = np.clip(C, 0.0, 1.0 / tau)
        active = (C > 0.0) & (C < 1.0 / tau)
        shifted = theta + tau
        fwd = h * shifted**-d * ep
        bwd = theta**d * em / h
        root = np.sqrt(theta)
        G = fwd - bwd
        H = root * G
        dH_dy3 = root * alpha2 * (fwd + bwd)
        with np.errstate(divide="ignore", invalid="ignore"):
            dG_dC = -d * fwd / shifted - d * bwd / theta
            dH_dC = np.where(active, 0.5 * G / root + root * dG_dC, 0.0)
    else:
        fwd = h * C**-d * ep
        bwd = C**d * em / h
        root = np.sqrt(C)
        G = fwd - bwd
        H = root * G
        dH_dy3 = root * alpha2 * (fwd + bwd)
        dH_dC = 0.5 * G / root - root * d * (fwd + bwd) / C
    return H, dH_dy3, dH_dC, n_sat


def tridiag_solve(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are ignored."""
    n = diag.size
    ab = np.empty((3, n))
    ab[0, 1:] = upper[:-1]
    ab[0, 0] = 0.0
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    ab[2, -1] = 0.0
    return solve_banded((1, 1), ab, rhs, overwrite_ab=True, check_finite=False)
