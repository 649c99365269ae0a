"""Closed-form a priori quantities: amplitude root, tangency level, lifespan horizon.

All roots are found by bisection on a monotone function (``scipy.optimize.brentq``)
followed by a couple of Newton polishing steps. Quantities that overflow for
moderate inputs (the tangency level eps0 contains exp(m s0^(1+delta))) are
carried in log form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq


class DeGiorgiDivergence(OverflowError):
    def __init__(self, step, value):
        self.step, self.value = step, value
        super().__init__(f"orbit diverged at step {step} (y={value!r})")


@dataclass(frozen=True)
class AprioriParams:
    """Inputs of the lifespan estimate.

    ``c`` is the single calibration constant standing in for every generic
    constant; ``m`` is the additive constant of the amplitude inequality. Left
    as None it tracks ``c`` (see :attr:`m_value`), also across sweeps.
    ``delta`` is the exponent offset of the amplitude inequality; None means
    gamma - 1, the only choice under which the amplitude bound implies it.
    """

    N: int = 3
    q: float = 4.0
    d: float = 1.0
    alpha0: float = 1.0
    c: float = 1.0
    m: float | None = None
    delta: float | None = None

    def __post_init__(self):
        problems = []
        if not (int(self.N) == self.N and self.N >= 2):
            problems.append(f"N={self.N!r} must be an integer >= 2")
        if not self.q > 1 + self.N / 2:
            problems.append(f"q={self.q!r} must exceed 1 + N/2")
        if not self.d > 0.5:
            problems.append(f"d={self.d!r} must exceed 1/2")
        if not self.alpha0 > 0:
            problems.append("alpha0 must be positive")
        if not self.c > 0:
            problems.append("c must be positive")
        if self.m is not None and not self.m > 0:
            problems.append("m must be positive")
        if self.delta is not None and not self.delta > 0:
            problems.append("delta must be positive")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def m_value(self) -> float:
        return self.c if self.m is None else self.m


@dataclass(frozen=True)
class LifespanReport:
    gamma: float
    delta: float
    m: float
    s0: float
    eps0: float
    log_eps0: float
    Tmax: float
    log_Tmax: float
    residuals: dict = field(default_factory=dict)

    def as_lines(self) -> list[str]:
        rows = [
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("m", self.m),
            ("s0", self.s0),
            ("eps0", self.eps0),
            ("log_eps0", self.log_eps0),
            ("Tmax", self.Tmax),
            ("log_Tmax", self.log_Tmax),
        ]
        rows += [(f"residual_{k}", v) for k, v in self.residuals.items()]
        return [f"{k}={v:.17g}" for k, v in rows]


# --------------------------------------------------------------------------
# De Giorgi recursion


def degiorgi_threshold(c: float, b: float, alpha: float) -> float:
    """c^(-1/alpha) * b^(-1/alpha^2): starts at or below it decay to zero."""
    if not b > 1:
        raise ValueError(f"b={b!r} must exceed 1")
    if not (c > 0 and alpha > 0):
        raise ValueError("c and alpha must be positive")
    return c ** (-1.0 / alpha) * b ** (-1.0 / alpha**2)


def degiorgi_iterate(y0: float, c: float, b: float, alpha: float, n_steps: int) -> np.ndarray:
    """Equality orbit y_{n+1} = c * b**n * y_n**(1+alpha), n = 0..n_steps-1."""
    if not (y0 > 0 and c > 0 and alpha > 0):
        raise ValueError("y0, c and alpha must be positive")
    if not b > 1:
        raise ValueError(f"b={b!r} must exceed 1")
    out = np.empty(n_steps + 1)
    out[0] = y = float(y0)
    for n in range(n_steps):
        try:
            y = c * b**n * y ** (1.0 + alpha)
        except OverflowError:
            raise DeGiorgiDivergence(n + 1, math.inf) from None
        if not math.isfinite(y) or y > 1e300:
            raise DeGiorgiDivergence(n + 1, y)
        out[n + 1] = y
    return out


# --------------------------------------------------------------------------
# amplitude inequality


def _r13(s, m, delta):
    return 1.0 / (m * (1.0 + delta) * s**delta) - s + m


def solve_s0(m: float, delta: float) -> float:
    """Unique positive root of 1/(m(1+delta) s^delta) - s + m = 0.

    The left side is strictly decreasing, positive at s = m and negative at
    m + 1/(m(1+delta) m^delta), so the root lies strictly above m.
    """
    if not (m > 0 and delta > 0):
        raise ValueError("m and delta must be positive")
    hi = m + 1.0 / (m * (1.0 + delta) * m**delta)
    if _r13(hi, m, delta) >= 0 or _r13(m, m, delta) <= 0:
        # the gap to m is below float resolution
        return hi
    s = brentq(_r13, m, hi, args=(m, delta), xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(2):
        f = _r13(s, m, delta)
        df = -delta / (m * (1.0 + delta) * s ** (delta + 1.0)) - 1.0
        step = f / df
        if m < s - step < hi:
            s -= step
    return s


def log_epsilon0(m: float, delta: float, s0: float) -> float:
    return -(math.log(m) + math.log1p(delta) + m * s0 ** (1.0 + delta) + delta * math.log(s0))


def epsilon0(m: float, delta: float, s0: float) -> float:
    """1 / (m (1+delta) exp(m s0^(1+delta)) s0^delta); may underflow to 0."""
    if not (m > 0 and delta > 0 and s0 > 0):
        raise ValueError("m, delta and s0 must be positive")
    return math.exp(log_epsilon0(m, delta, s0))


def f_eps(s, m, delta, log_eps):
    """f(s) = eps exp(m s^(1+delta)) - s + m and its s-derivative, eps given by its log."""
    s = np.asarray(s, dtype=float)
    growth = np.exp(log_eps + m * s ** (1.0 + delta))
    f = growth - s + m
    df = growth * (1.0 + delta) * m * s**delta - 1.0
    return f, df


# --------------------------------------------------------------------------
# exponents and the horizon


def gamma_exponent(q: float, N: float, d: float, alpha0: float) -> float:
    if not 2 * q - N > 0:
        raise ValueError(f"need 2q > N, got q={q!r}, N={N!r}")
    g = q * N * alpha0 / (2 * q - N) + (7 * d + 3 + 2 * alpha0) / 4
    if alpha0 > 0 and d > 0.5:
        assert g > d + 0.5 > 1
    return g


def _g_exponents(q, N, d):
    if not q > 1 + N / 2:
        raise ValueError(f"need q > 1 + N/2, got q={q!r}, N={N!r}")
    if not d > 0.5:
        raise ValueError(f"need d > 1/2, got {d!r}")
    a1 = 2 * N / (N + 2)
    b1 = 2 * (2 * q - 2 - N) / (q * (N + 2))
    a2 = 2 * N / ((N + 2) * (2 * d - 1))
    b2 = 2 / (q * (2 * d - 1))
    return a1, b1, a2, b2


def log_g_of_T(T, q, N, d):
    a1, b1, a2, b2 = _g_exponents(q, N, d)
    T = np.asarray(T, dtype=float)
    if np.any(T < 0):
        raise ValueError("T must be nonnegative")
    with np.errstate(divide="ignore"):
        lt = np.log(T)
    l1 = np.log1p(T)
    return np.maximum(a1 * l1 + b1 * lt, a2 * l1 + b2 * lt)


def g_of_T(T, q, N, d):
    """max of the two growth branches; g(0) = 0 and g is strictly increasing."""
    out = np.exp(log_g_of_T(T, q, N, d))
    return float(out) if np.ndim(out) == 0 else out


def _dlog_g_du(u, q, N, d):
    a1, b1, a2, b2 = _g_exponents(q, N, d)
    T = math.exp(u)
    l1 = math.log1p(T)
    frac = T / (1 + T)
    if a1 * l1 + b1 * u >= a2 * l1 + b2 * u:
        return a1 * frac + b1
    return a2 * frac + b2


def solve_log_Tmax(log_eps0: float, c: float, q: float, N: float, d: float) -> float:
    """log T for the T with c g(T)^2 = eps0; finite even when T underflows."""
    if not c > 0:
        raise ValueError("c must be positive")
    target = log_eps0 - math.log(c)

    def psi(u):
        return 2.0 * float(log_g_of_T(math.exp(u), q, N, d)) - target

    def psi_safe(u):
        # exp(u) underflows below about -745; the lower branch is then linear in u
        if u > -700:
            return psi(u)
        a1, b1, a2, b2 = _g_exponents(q, N, d)
        return 2.0 * max(b1 * u, b2 * u) - target

    lo, hi = -1.0, 1.0
    while psi_safe(lo) > 0:
        lo *= 2.0
    while psi_safe(hi) < 0:
        hi *= 2.0
    u = brentq(psi_safe, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(2):
        r = psi_safe(u)
        if r == 0 or u <= -700:
            break
        u_new = u - r / (2.0 * _dlog_g_du(u, q, N, d))
        if abs(psi_safe(u_new)) < abs(r):
            u = u_new
    return u


def solve_Tmax(eps0: float | None, c: float, q: float, N: float, d: float, *, log_eps0: float | None = None) -> float:
    """The T with c g(T)^2 = eps0, solved in u = log T.

    Pass ``log_eps0`` instead of ``eps0`` when eps0 underflows.
    """
    if log_eps0 is None:
        if not eps0 > 0:
            raise ValueError("eps0 must be positive")
        log_eps0 = math.log(eps0)
    return math.exp(solve_log_Tmax(log_eps0, c, q, N, d))


def lifespan_pipeline(p: AprioriParams) -> LifespanReport:
    """gamma -> delta = gamma - 1 -> s0 -> eps0 -> T_max, with every defining residual."""
    gamma = gamma_exponent(p.q, p.N, p.d, p.alpha0)
    delta = gamma - 1.0 if p.delta is None else p.delta
    m = p.m_value
    s0 = solve_s0(m, delta)
    leps = log_epsilon0(m, delta, s0)
    lT = solve_log_Tmax(leps, p.c, p.q, p.N, p.d)
    f, df = f_eps(s0, m, delta, leps)
    a1, b1, a2, b2 = _g_exponents(p.q, p.N, p.d)
    l1 = math.log1p(math.exp(lT))
    log_g = max(a1 * l1 + b1 * lT, a2 * l1 + b2 * lT)
    tz = math.expm1(min(math.log(p.c) + 2.0 * log_g - leps, 700.0))
    residuals = {
        "s0_equation": abs(_r13(s0, m, delta)),
        "f_eps0_at_s0": abs(float(f)),
        "fprime_eps0_at_s0": abs(float(df)),
        "Tmax_equation_rel": abs(tz),
    }
    return LifespanReport(gamma, delta, m, s0, math.exp(leps), leps, math.exp(lT), lT, residuals)


def tmax_sweep(p: AprioriParams, axis: str, values) -> list[LifespanReport]:
    """Pipeline reports with one field of ``p`` varied (m follows c unless set)."""
    out = []
    for v in values:
        kw = {f: getattr(p, f) for f in ("N", "q", "d", "alpha0", "c", "m", "delta")}
        kw[axis] = v
        out.append(lifespan_pipeline(AprioriParams(**kw)))
    return out


# --------------------------------------------------------------------------
# certificate and bound evaluators


def amplitude_certificate(amplitude, report: LifespanReport) -> np.ndarray:
    """Per-time flags: True where a(t) < s0 (certified), False where flagged."""
    return np.asarray(amplitude, dtype=float) < report.s0


def upper_bound_estimate(T, q, N, c, exp_norm, C0_sup) -> float:
    """c (1+T)^(2N/(N+2)) T^(2(2q-2-N)/(q(N+2))) |exp(a2 (phi_s - phi_e))|_q^2 + 4 |C0| + 2."""
    if not (q > 1 + N / 2 and T >= 0 and exp_norm >= 0 and c > 0):
        raise ValueError("invalid upper-bound inputs")
    a1 = 2 * N / (N + 2)
    b1 = 2 * (2 * q - 2 - N) / (q * (N + 2))
    return c * (1 + T) ** a1 * T**b1 * exp_norm**2 + 4 * C0_sup + 2


def lower_bound_estimate(T, q, N, d, c, exp_norm, C0_min) -> float:
    """Bound on max 1/C: 1/min C0 + c (1+T)^(2N/((N+2)(2d-1))) |exp(-a2 (phi_s-phi_e))|_q^(2/(2d-1)).

    The norm is over Omega' x (0, T), so it vanishes as T -> 0.
    """
    if not (q > 1 + N / 2 and d > 0.5 and T >= 0 and exp_norm >= 0 and c > 0 and C0_min > 0):
        raise ValueError("invalid lower-bound inputs")
    a2 = 2 * N / ((N + 2) * (2 * d - 1))
    return 1.0 / C0_min + c * (1 + T) ** a2 * exp_norm ** (2 / (2 * d - 1))


def spacetime_exp_norm(traj, q: float, sign: float = 1.0) -> float:
    """|exp(sign * alpha2 * (phi_s - phi_e))|_{q, Omega' x (0, T)} from recorded states.

    Right-endpoint rule in time over the recorded states.
    """
    mesh = traj.problem.mesh
    alpha2 = traj.problem.params.alpha2
    chi = mesh.electrode
    V = mesh.volumes[chi]
    total = 0.0
    states = traj.states
    for prev, cur in zip(states[:-1], states[1:]):
        y3 = (cur.pair.phi_s - cur.pair.phi_e)[chi]
        total += (cur.t - prev.t) * float(np.dot(V, np.exp(sign * q * alpha2 * y3)))
    return total ** (1.0 / q)


__all__ = [
    "AprioriParams",
    "DeGiorgiDivergence",
    "LifespanReport",
    "amplitude_certificate",
    "degiorgi_iterate",
    "degiorgi_threshold",
    "epsilon0",
    "f_eps",
    "g_of_T",
    "gamma_exponent",
    "lifespan_pipeline",
    "log_epsilon0",
    "log_g_of_T",
    "lower_bound_estimate",
    "solve_Tmax",
    "solve_log_Tmax",
    "solve_s0",
    "spacetime_exp_norm",
    "tmax_sweep",
    "upper_bound_estimate",
]
