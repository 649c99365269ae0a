"""Backward-Euler transport of C coupled to the potential pair by an outer fixed point.

Each time step alternates two solves until the concentration stops moving:
the potential pair at the current C iterate, then one implicit step of the
concentration equation with those potentials frozen.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import kernels
from .elliptic import (
    REGULARIZED,
    VERIFICATION,
    EllipticSolveSettings,
    PotentialPair,
    linf_bound_check,
    potential_identity_residual,
    solve_potential_pair,
)
from .geometry import Mesh
from .params import HField, PhysParams, ValidatedParams

log = logging.getLogger(__name__)

NONNEG_TOL = 1e-12

# forcing(t, x) -> (f_e, f_s, f_C), per-volume sources at cell centers
Forcing = Callable[[float, np.ndarray], tuple]


class ConcentrationConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class OuterConvergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(f"{message}; |dC| history {['%.2e' % v for v in history]}")
        self.history = list(history)


class SimulationError(RuntimeError):
    """A step failed; ``trajectory`` holds everything computed before it."""

    def __init__(self, message, trajectory, cause=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.cause = cause


class NonPositiveConcentrationError(ValueError):
    def __init__(self, cell, t, value):
        self.cell, self.t, self.value = cell, t, value
        super().__init__(f"C={value!r} <= 0 at cell {cell}, t={t!r}; amplitude undefined")


@dataclass(frozen=True)
class TimeStepSettings:
    elliptic: EllipticSolveSettings = field(default_factory=EllipticSolveSettings)
    tol: float = 1e-10
    rtol: float = 1e-12
    max_newton: int = 50
    tol_C: float = 1e-10
    max_outer: int = 50
    relaxation: float = 1.0

    def __post_init__(self):
        if not (self.tol > 0 and self.rtol >= 0):
            raise ValueError("tolerances must be positive")
        if self.tol_C < 0:
            raise ValueError("tol_C must be nonnegative")
        if not 0.1 <= self.relaxation <= 1.0:
            raise ValueError("relaxation must lie in [0.1, 1]")
        if self.max_outer < 1 or self.max_newton < 1:
            raise ValueError("iteration limits must be >= 1")


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything that stays fixed along a run."""

    mesh: Mesh
    params: PhysParams
    h: HField
    tau: float
    mode: str = REGULARIZED
    forcing: Forcing | None = None

    def __post_init__(self):
        if isinstance(self.params, ValidatedParams):
            object.__setattr__(self, "params", self.params.params)
        if not 0 < self.tau < 1:
            raise ValueError(f"tau={self.tau!r} must lie in (0, 1)")
        if self.mode not in (REGULARIZED, VERIFICATION):
            raise ValueError(f"unknown mode {self.mode!r}")

    def sources(self, t):
        if self.forcing is None:
            return None, None
        fe, fs, fc = self.forcing(t, self.mesh.centers)
        return (fe, fs), fc


@dataclass(frozen=True, eq=False)
class FieldState:
    t: float
    C: np.ndarray
    pair: PotentialPair


@dataclass
class StepDiagnostics:
    t: float
    outer_iters: int
    elliptic_iters: int
    newton_iters: int
    elliptic_residual: float
    concentration_residual: float
    min_C: float
    max_C: float
    identity: float
    identity_rel: float
    mass_defect_rel: float
    bound_margin: float
    outer_history: list = field(default_factory=list)

    @property
    def invariants(self) -> dict[str, bool]:
        return {
            "nonnegativity": self.min_C >= -NONNEG_TOL,
            "identity": self.identity_rel <= 1e-10,
            "mass_balance": self.mass_defect_rel <= 1e-10,
            "linf_bound": not self.bound_margin < 0,
        }


@dataclass
class Trajectory:
    """Recorded states plus per-step diagnostics.

    ``M`` and ``L`` are running maxima of max(max C, 1) and max 1/C over every
    step taken (not only recorded ones), sampled at the recorded times.
    """

    problem: Problem
    dt: float
    states: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    M: list = field(default_factory=list)
    L: list = field(default_factory=list)
    first_nonpositive: tuple | None = None
    _run_M: float = 1.0
    _run_L: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def final(self) -> FieldState:
        return self.states[-1]

    def _observe(self, state: FieldState, record: bool):
        C = state.C
        self._run_M = max(self._run_M, float(np.max(C)))
        if np.any(C <= 0):
            if self.first_nonpositive is None:
                cell = int(np.argmin(C))
                self.first_nonpositive = (cell, state.t, float(C[cell]))
            self._run_L = np.inf
        else:
            self._run_L = max(self._run_L, float(np.max(1.0 / C)))
        if record:
            self.states.append(state)
            self.M.append(self._run_M)
            self.L.append(self._run_L)

    def all_invariants_hold(self) -> bool:
        return all(all(d.invariants.values()) for d in self.diagnostics)


# --------------------------------------------------------------------------
# one implicit concentration step


def _face_T(mesh, D):
    k = np.asarray(D, dtype=float)
    left, right = mesh.interior_distances
    return 1.0 / (left / k[:-1] + right / k[1:])


def _flux(T, u):
    f = T * (u[:-1] - u[1:])
    out = np.zeros_like(u)
    out[:-1] += f
    out[1:] -= f
    return out


class _ConcentrationProblem:
    def __init__(self, mesh, params, C_old, pair, h, tau, dt, mode, source):
        p = params.params if isinstance(params, ValidatedParams) else params
        if not dt > 0:
            raise ValueError(f"dt={dt!r} must be positive")
        self.V = mesh.volumes
        self.chi = mesh.electrode
        self.C_old = np.asarray(C_old, dtype=float)
        self.mass = p.eps_cells(mesh) * self.V / dt
        self.T = _face_T(mesh, p.D_cells(mesh))
        self.sumT = np.zeros(mesh.n_cells)
        self.sumT[:-1] += self.T
        self.sumT[1:] += self.T
        self.gain = 0.5 * p.alpha3 * p.alpha4 * self.V * self.chi
        self.y3 = np.where(self.chi, pair.phi_s - pair.phi_e, 0.0)
        hv = h.values if isinstance(h, HField) else np.broadcast_to(np.asarray(h, float), self.V.shape)
        self.h = np.where(self.chi, hv, 1.0)
        self.d, self.alpha2, self.tau = p.d, p.alpha2, tau
        self.regularized = mode == REGULARIZED
        self.src = np.zeros_like(self.V) if source is None else np.asarray(source, float) * self.V
        # keeps the Jacobian an M-matrix: reaction may remove at most half the mass term
        self.cap = 0.5 * self.mass / np.where(self.gain > 0, self.gain, 1.0)

    def rate(self, C):
        if not self.regularized:
            Cs = np.where(self.chi, C, 1.0)
            if np.any(Cs <= 0):
                return None, None
        else:
            Cs = C
        H, _, dHdC, n_sat = kernels.kinetics(self.h, Cs, self.y3, self.d, self.alpha2, self.tau, self.regularized)
        if n_sat:
            raise FloatingPointError("exponent saturated in the concentration step")
        return np.where(self.chi, H, 0.0), np.where(self.chi, dHdC, 0.0)

    def residual(self, C, H):
        R = self.mass * (C - self.C_old) + _flux(self.T, C) - self.gain * H - self.src
        scale = self.mass * (np.abs(C) + np.abs(self.C_old)) + self.sumT * np.abs(C)
        scale += np.abs(self.gain * H) + np.abs(self.src)
        return R, scale / self.V


def step_concentration(
    mesh: Mesh,
    params,
    C_old,
    pair: PotentialPair,
    h,
    tau: float,
    dt: float,
    settings: TimeStepSettings | None = None,
    *,
    mode: str = REGULARIZED,
    source=None,
    return_info: bool = False,
):
    """One backward-Euler step of the concentration equation at frozen potentials.

    Solves ``eps (C - C_old)/dt - div(D grad C) = 1/2 alpha3 alpha4 H chi + source``
    by Newton with backtracking. The Jacobian keeps the negative part of
    dH/dC exactly and caps the positive part, so every linear solve is an
    M-matrix system.
    """
    settings = settings or TimeStepSettings()
    prob = _ConcentrationProblem(mesh, params, C_old, pair, h, tau, dt, mode, source)
    C = prob.C_old.copy()
    H, dH = prob.rate(C)
    if H is None:
        raise ValueError("verification mode needs C_old > 0 on Omega'")
    R, scale = prob.residual(C, H)
    rnorm = float(np.max(np.abs(R) / prob.V))
    for it in range(settings.max_newton + 1):
        if np.all(np.abs(R) / prob.V <= settings.tol + settings.rtol * scale):
            break
        if it == settings.max_newton:
            raise ConcentrationConvergenceError("concentration Newton did not converge", rnorm)
        diag = prob.mass + prob.sumT - prob.gain * np.minimum(dH, prob.cap)
        off = -prob.T
        lower = np.concatenate(([0.0], off))
        upper = np.concatenate((off, [0.0]))
        dC = kernels.tridiag_solve(lower, diag, upper, -R)
        lam = 1.0
        for _ in range(30):
            trial = C + lam * dC
            Ht, dHt = prob.rate(trial)
            if Ht is not None:
                Rt, st = prob.residual(trial, Ht)
                rt = float(np.max(np.abs(Rt) / prob.V))
                if rt < rnorm or np.all(np.abs(Rt) / prob.V <= settings.tol + settings.rtol * st):
                    break
            lam *= 0.5
        else:
            raise ConcentrationConvergenceError("line search failed in concentration step", rnorm)
        C, H, dH, R, scale, rnorm = trial, Ht, dHt, Rt, st, rt
    if return_info:
        return C, {"iterations": it, "residual": rnorm, "H": H}
    return C


def mass_balance_defect(mesh, params, C_old, C_new, H, dt, source=None) -> tuple[float, float]:
    """Absolute and relative defect of the integrated backward-Euler identity."""
    p = params.params if isinstance(params, ValidatedParams) else params
    V = mesh.volumes
    eps = p.eps_cells(mesh)
    gain = 0.5 * p.alpha3 * p.alpha4 * np.sum(V[mesh.electrode] * H[mesh.electrode])
    if source is not None:
        gain += float(np.dot(V, source))
    change = float(np.dot(eps * V, C_new - C_old))
    defect = change - dt * gain
    return defect, abs(defect) / max(float(np.dot(eps * V, np.abs(C_new))), np.finfo(float).tiny)


# --------------------------------------------------------------------------
# coupled step


def _same(a: PotentialPair, b: PotentialPair) -> bool:
    return np.array_equal(a.phi_e, b.phi_e) and np.array_equal(a.phi_s, b.phi_s, equal_nan=True)


def coupled_step(problem: Problem, state: FieldState, dt: float, settings: TimeStepSettings | None = None):
    """Advance ``state`` by dt; returns the new state and its diagnostics."""
    settings = settings or TimeStepSettings()
    mesh, params, tau, mode = problem.mesh, problem.params, problem.tau, problem.mode
    t_new = state.t + dt
    pot_src, conc_src = problem.sources(t_new)
    solve = lambda C, guess: solve_potential_pair(  # noqa: E731
        mesh, params, C, problem.h, tau, guess, settings.elliptic, mode=mode, forcing=pot_src
    )
    pair, rep = solve(state.C, state.pair)
    ell_iters = rep.iterations
    Ck = state.C
    history = []
    for k in range(1, settings.max_outer + 1):
        C_new, info = step_concentration(
            mesh, params, state.C, pair, problem.h, tau, dt, settings,
            mode=mode, source=conc_src, return_info=True,
        )
        w = settings.relaxation
        C_next = C_new if w == 1.0 else w * C_new + (1 - w) * Ck
        diff = float(np.max(np.abs(C_next - Ck)))
        history.append(diff)
        pair_next, rep = solve(C_new, pair)
        ell_iters += rep.iterations
        # identical potentials reproduce C_new bit for bit, so dC would be 0
        if diff < settings.tol_C or (w == 1.0 and settings.tol_C > 0 and _same(pair_next, pair)):
            break
        Ck = C_next
        if w != 1.0:
            pair_next, rep = solve(C_next, pair_next)
            ell_iters += rep.iterations
        pair = pair_next
    else:
        raise OuterConvergenceError(f"outer fixed point did not converge in {settings.max_outer} iterations", history)

    final_pair = pair_next
    _, rel_mass = mass_balance_defect(mesh, params, state.C, C_new, info["H"], dt, conc_src)
    identity = potential_identity_residual(mesh, final_pair)
    if pot_src is not None:
        V = mesh.volumes
        identity -= (np.dot(V, pot_src[0]) + np.dot(V[mesh.electrode], np.asarray(pot_src[1])[mesh.electrode])) / tau
        margin = np.nan
    else:
        margin = linf_bound_check(mesh, final_pair, C_new, problem.h, tau, params, mode=mode).margin
    phi_max = max(max(final_pair.sup_norms()), np.finfo(float).tiny)
    total = mesh.layout.total
    diag = StepDiagnostics(
        t=t_new,
        outer_iters=k,
        elliptic_iters=ell_iters,
        newton_iters=info["iterations"],
        elliptic_residual=rep.residual,
        concentration_residual=info["residual"],
        min_C=float(np.min(C_new)),
        max_C=float(np.max(C_new)),
        identity=float(identity),
        identity_rel=float(abs(identity) / (total * phi_max)) if identity else 0.0,
        mass_defect_rel=rel_mass,
        bound_margin=float(margin),
        outer_history=history,
    )
    return FieldState(t_new, C_new, final_pair), diag


# --------------------------------------------------------------------------
# time loop


def initial_state(problem: Problem, C0, settings: TimeStepSettings | None = None) -> FieldState:
    settings = settings or TimeStepSettings()
    C0 = np.array(C0, dtype=float)
    pot_src, _ = problem.sources(0.0)
    pair, _ = solve_potential_pair(
        problem.mesh, problem.params, C0, problem.h, problem.tau, None, settings.elliptic,
        mode=problem.mode, forcing=pot_src,
    )
    return FieldState(0.0, C0, pair)


def integrate(
    problem: Problem,
    C0,
    dt: float,
    n_steps: int,
    settings: TimeStepSettings | None = None,
    output_stride: int = 1,
    callback=None,
) -> Trajectory:
    """Fixed-step time loop from C0; states recorded every ``output_stride`` steps.

    The last step is always recorded. On failure a :class:`SimulationError`
    carries the partial trajectory.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if n_steps < 0 or output_stride < 1:
        raise ValueError("need n_steps >= 0 and output_stride >= 1")
    settings = settings or TimeStepSettings()
    traj = Trajectory(problem, dt)
    state = initial_state(problem, C0, settings)
    traj._observe(state, record=True)
    for n in range(1, n_steps + 1):
        try:
            new_state, diag = coupled_step(problem, state, dt, settings)
        except Exception as exc:  # noqa: BLE001 - any step failure ends the run
            raise SimulationError(f"step {n} (t={state.t + dt:.6g}) failed: {exc}", traj, exc) from exc
        # recomputing t as n*dt avoids drift from repeated addition
        state = replace(new_state, t=n * dt)
        diag.t = state.t
        traj.diagnostics.append(diag)
        traj._observe(state, record=(n % output_stride == 0 or n == n_steps))
        if callback is not None:
            callback(n, state, diag)
        log.debug("step %d t=%.6g outer=%d minC=%.6g", n, state.t, diag.outer_iters, diag.min_C)
    return traj


def simulate(config, *, tau: float | None = None, settings: TimeStepSettings | None = None) -> Trajectory:
    """Run the time loop described by a :class:`cellspan.config.RunConfig`."""
    problem = config.problem(tau=tau)
    return integrate(
        problem,
        config.params.C0_cells(problem.mesh),
        config.dt,
        config.n_steps,
        settings or config.step_settings(),
        config.output_stride,
    )


@dataclass
class ContinuationResult:
    taus: list
    trajectories: list
    differences: list


def tau_continuation(config, taus=None) -> ContinuationResult:
    """Repeat a run over decreasing tau and report successive final-C differences."""
    taus = list(taus if taus is not None else config.tau_schedule())
    runs = [simulate(config, tau=t) for t in taus]
    diffs = [
        float(np.max(np.abs(b.final.C - a.final.C))) for a, b in zip(runs[:-1], runs[1:])
    ]
    return ContinuationResult(taus, runs, diffs)


def trajectory_amplitude(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Times and a(t) = M(t) * L(t) at each recorded state."""
    if traj.first_nonpositive is not None:
        cell, t, value = traj.first_nonpositive
        raise NonPositiveConcentrationError(cell, t, value)
    return traj.times, np.asarray(traj.M) * np.asarray(traj.L)


__all__ = [
    "ConcentrationConvergenceError",
    "ContinuationResult",
    "FieldState",
    "NONNEG_TOL",
    "NonPositiveConcentrationError",
    "OuterConvergenceError",
    "Problem",
    "SimulationError",
    "StepDiagnostics",
    "TimeStepSettings",
    "Trajectory",
    "coupled_step",
    "initial_state",
    "integrate",
    "mass_balance_defect",
    "simulate",
    "step_concentration",
    "tau_continuation",
    "trajectory_amplitude",
]
