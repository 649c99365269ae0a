"""Sinh-type interfacial kinetics and its tau-regularized cutoffs.

With the solid/electrolyte potential drop ``y3``, the kinetic function is

    G(y1, y2, y3) = y1 * y2**-d * exp(alpha2*y3) - y2**d * exp(-alpha2*y3) / y1

where ``y1`` is the lifted-current factor h and ``y2`` the concentration.
All functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import SEPARATOR
from .kernels import EXP_LIMIT


class SaturationWarning(RuntimeWarning):
    """An exponent alpha2*y3 was clamped to +-700 to avoid overflow."""


class KineticsDomainError(ValueError):
    pass


@dataclass(frozen=True)
class KineticsParams:
    d: float
    alpha2: float
    alpha3: float = 1.0
    alpha4: float = 1.0
    tau: float = 0.5

    def __post_init__(self):
        for name in ("d", "alpha2", "alpha3", "alpha4"):
            if not getattr(self, name) > 0:
                raise KineticsDomainError(f"{name} must be positive")
        _check_tau(self.tau)


def _check_tau(tau):
    if not 0.0 < tau < 1.0:
        raise KineticsDomainError(f"tau={tau!r} must lie in (0, 1)")


def _positive(name, value):
    value = np.asarray(value, dtype=float)
    if np.any(~(value > 0)):
        raise KineticsDomainError(f"{name} must be positive")
    return value


def _exps(alpha2, y3):
    arg = alpha2 * np.asarray(y3, dtype=float)
    if np.any(np.abs(arg) > EXP_LIMIT):
        warnings.warn(
            f"exponent alpha2*y3 exceeds {EXP_LIMIT:g}; clamped",
            SaturationWarning,
            stacklevel=3,
        )
        arg = np.clip(arg, -EXP_LIMIT, EXP_LIMIT)
    return np.exp(arg), np.exp(-arg)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def G(y1, y2, y3, d, alpha2):
    y1 = _positive("y1", y1)
    y2 = _positive("y2", y2)
    ep, em = _exps(alpha2, y3)
    return _out(y1 * y2**-d * ep - y2**d * em / y1)


def dG_dy3(y1, y2, y3, d, alpha2):
    """Partial in the potential drop; bounded below by 2*alpha2."""
    y1 = _positive("y1", y1)
    y2 = _positive("y2", y2)
    ep, em = _exps(alpha2, y3)
    return _out(alpha2 * (y1 * y2**-d * ep + y2**d * em / y1))


def dG_dy2(y1, y2, y3, d, alpha2):
    """Partial in the concentration; bounded above by -2d/y2."""
    y1 = _positive("y1", y1)
    y2 = _positive("y2", y2)
    ep, em = _exps(alpha2, y3)
    return _out(-d / y2 * (y1 * y2**-d * ep + y2**d * em / y1))


def G_root(y1, y2, d, alpha2):
    """The potential drop at which G vanishes: (d ln y2 - ln y1) / alpha2."""
    y1 = _positive("y1", y1)
    y2 = _positive("y2", y2)
    return _out((d * np.log(y2) - np.log(y1)) / alpha2)


def theta_tau(s, tau):
    """Clamp to [0, 1/tau].

    The defining display reads "s if kappa(s) <= 1/tau" in its second
    branch; it is taken to mean 0 <= s <= 1/tau, extended by 0 below zero.
    """
    _check_tau(tau)
    return _out(np.clip(np.asarray(s, dtype=float), 0.0, 1.0 / tau))


def G_tau(y1, y2, y3, d, alpha2, tau):
    y1 = _positive("y1", y1)
    y2 = np.asarray(y2, dtype=float)
    if np.any(y2 < 0):
        raise KineticsDomainError("y2 must be nonnegative")
    theta = np.asarray(theta_tau(y2, tau))
    ep, em = _exps(alpha2, y3)
    return _out(y1 * (theta + tau) ** -d * ep - theta**d * em / y1)


def H_tau(y1, y2, y3, d, alpha2, tau):
    """sqrt(theta_tau(y2)) * G_tau; identically zero where y2 <= 0."""
    y2 = np.asarray(y2, dtype=float)
    y2p = np.maximum(y2, 0.0)
    root = np.sqrt(np.asarray(theta_tau(y2p, tau)))
    return _out(root * np.asarray(G_tau(y1, y2p, y3, d, alpha2, tau)))


def S_e(C, phi_s, phi_e, h, region, alpha2, alpha4, d):
    """Physical reaction source 1/2*alpha4*sqrt(C)*G(h, C, phi_s - phi_e).

    ``region`` is a region code (or array of codes); the source is exactly
    zero in the separator, where C is allowed to be anything.
    """
    region = np.asarray(region)
    C = np.asarray(C, dtype=float)
    shape = np.broadcast(C, region, np.asarray(phi_s), np.asarray(phi_e), np.asarray(h)).shape
    out = np.zeros(shape)
    live = np.broadcast_to(region != SEPARATOR, shape)
    if np.any(live):
        Cb = np.broadcast_to(C, shape)[live]
        if np.any(~(Cb > 0)):
            raise KineticsDomainError("C must be positive in electrode regions")
        y3 = (np.broadcast_to(phi_s, shape) - np.broadcast_to(phi_e, shape))[live]
        hb = np.broadcast_to(h, shape)[live]
        out[live] = 0.5 * alpha4 * np.sqrt(Cb) * G(hb, Cb, y3, d, alpha2)
    return _out(out)
