"""Verification harness: manufactured solutions, equilibrium, uniqueness, invariant scans."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .elliptic import (
    VERIFICATION,
    PotentialPair,
    linf_bound_check,
    potential_identity_residual,
    resolve_h,
    solve_potential_pair,
)
from .geometry import DomainLayout, Mesh, build_layered_mesh
from .params import HField, PhysParams, PowerLawKappa
from .parabolic import (
    NONNEG_TOL,
    FieldState,
    Problem,
    TimeStepSettings,
    Trajectory,
    coupled_step,
    integrate,
)

# --------------------------------------------------------------------------
# manufactured solutions


@dataclass(frozen=True)
class ExactFields:
    """Closed-form C*, phi_e*, phi_s* and the derivatives the forcings need.

    Each callable takes (t, x) arrays. ``phi_s`` only matters on Omega'.
    """

    C: Callable
    C_t: Callable
    C_x: Callable
    C_xx: Callable
    phi_e: Callable
    phi_e_x: Callable
    phi_e_xx: Callable
    phi_s: Callable
    phi_s_xx: Callable


def smooth_fields(layout: DomainLayout, amp_e: float = 0.2, amp_s: float = 0.3) -> ExactFields:
    """C* = 2 + cos(pi x/L) e^-t; cosine potentials with zero flux at every outer face."""
    L = layout.total
    k = math.pi / L
    a0, la = 0.0, layout.anode
    c0, lc = layout.anode + layout.separator, layout.cathode

    def _solid(x):
        return np.where(x < la, k_a * (x - a0), k_c * (x - c0))

    k_a, k_c = math.pi / la, math.pi / lc
    return ExactFields(
        C=lambda t, x: 2.0 + np.cos(k * x) * np.exp(-t),
        C_t=lambda t, x: -np.cos(k * x) * np.exp(-t),
        C_x=lambda t, x: -k * np.sin(k * x) * np.exp(-t),
        C_xx=lambda t, x: -k * k * np.cos(k * x) * np.exp(-t),
        phi_e=lambda t, x: amp_e * np.cos(k * x) + 0.0 * t,
        phi_e_x=lambda t, x: -amp_e * k * np.sin(k * x) + 0.0 * t,
        phi_e_xx=lambda t, x: -amp_e * k * k * np.cos(k * x) + 0.0 * t,
        phi_s=lambda t, x: amp_s * np.cos(_solid(x)) + 0.0 * t,
        phi_s_xx=lambda t, x: -amp_s * np.where(x < la, k_a, k_c) ** 2 * np.cos(_solid(x)) + 0.0 * t,
    )


def constant_fields(C: float = 2.0, phi_e: float = 0.3, phi_s: float = 0.1) -> ExactFields:
    zero = lambda t, x: np.zeros(np.broadcast(t, x).shape)  # noqa: E731
    const = lambda v: (lambda t, x: np.full(np.broadcast(t, x).shape, float(v)))  # noqa: E731
    return ExactFields(const(C), zero, zero, zero, const(phi_e), zero, zero, const(phi_s), zero)


def manufactured_forcing(fields: ExactFields, params: PhysParams, layout: DomainLayout, tau: float, h: float = 1.0):
    """Per-volume sources making ``fields`` an exact solution in verification mode.

    kappa_tau(C) = kappa(C + tau) and the tau*phi terms are kept; the
    reaction uses the unregularized sqrt(C) G.
    """
    p = params
    if not (np.isscalar(p.eps_e) and np.isscalar(p.D)):
        raise ValueError("manufactured forcings need scalar eps_e and D")
    eps, D = float(p.eps_e), float(p.D)
    sep_lo, sep_hi = layout.anode, layout.anode + layout.separator

    def forcing(t, x):
        x = np.asarray(x, dtype=float)
        chi = ((x < sep_lo) | (x > sep_hi)).astype(float)
        C = fields.C(t, x)
        y3 = fields.phi_s(t, x) - fields.phi_e(t, x)
        G = h * C**-p.d * np.exp(p.alpha2 * y3) - C**p.d * np.exp(-p.alpha2 * y3) / h
        S = 0.5 * p.alpha4 * np.sqrt(C) * G * chi
        kap = p.kappa(C + tau)
        dkap = p.kappa.derivative(C + tau)
        div_e = dkap * fields.C_x(t, x) * fields.phi_e_x(t, x) + kap * fields.phi_e_xx(t, x)
        sigma = np.where(x < sep_lo, p.sigma_a, p.sigma_c)
        f_e = -div_e + tau * fields.phi_e(t, x) - S
        f_s = (-sigma * fields.phi_s_xx(t, x) + tau * fields.phi_s(t, x) + S) * chi
        f_C = eps * fields.C_t(t, x) - D * fields.C_xx(t, x) - p.alpha3 * S
        return f_e, f_s, f_C

    return forcing


@dataclass(frozen=True)
class MMSCase:
    """A manufactured-solution refinement study.

    ``levels`` lists (k, dt, n_steps); each level uses (2k, k, 2k) cells on
    the layout, so cells are uniform when the layer lengths are 2:1:2.
    ``study`` names the refinement variable ("space" or "time").
    """

    name: str
    fields: ExactFields
    levels: tuple
    study: str = "space"
    layout: DomainLayout = DomainLayout(0.4, 0.2, 0.4)
    params: PhysParams = field(default_factory=lambda: PhysParams(h=1.0, kappa=PowerLawKappa()))
    tau: float = 0.1

    @classmethod
    def smooth_space(cls, ks=(8, 16, 32), dt=1e-6, n_steps=10):
        layout = DomainLayout(0.4, 0.2, 0.4)
        return cls("smooth-space", smooth_fields(layout), tuple((k, dt, n_steps) for k in ks), "space", layout)

    @classmethod
    def smooth_time(cls, k=200, dts=(0.1, 0.05, 0.025, 0.0125), T=1.0):
        layout = DomainLayout(0.4, 0.2, 0.4)
        levels = tuple((k, dt, int(round(T / dt))) for dt in dts)
        return cls("smooth-time", smooth_fields(layout), levels, "time", layout)

    @classmethod
    def constant(cls, k=8, dt=0.1, n_steps=5):
        return cls("constant", constant_fields(), ((k, dt, n_steps),), "space")


@dataclass
class ConvergenceTable:
    case: str
    study: str
    rows: list = field(default_factory=list)

    FIELDS = ("C", "phi_e", "phi_s")

    def errors(self, fld="all", norm="L2") -> np.ndarray:
        j = 0 if norm == "L2" else 1
        if fld == "all":
            if norm == "L2":
                return np.array([math.sqrt(sum(r["errors"][f][0] ** 2 for f in self.FIELDS)) for r in self.rows])
            return np.array([max(r["errors"][f][1] for f in self.FIELDS) for r in self.rows])
        return np.array([r["errors"][fld][j] for r in self.rows])

    def orders(self, fld="all", norm="L2") -> np.ndarray:
        """Observed orders between consecutive levels in the refined variable."""
        e = self.errors(fld, norm)
        key = "h" if self.study == "space" else "dt"
        step = np.array([r[key] for r in self.rows])
        return np.log(e[:-1] / e[1:]) / np.log(step[:-1] / step[1:])

    def to_csv_rows(self) -> list[list]:
        header = ["level", "h", "dt"]
        for f in self.FIELDS:
            header += [f"{f}_L2", f"{f}_Linf"]
        header += ["order_L2"]
        out = [header]
        orders = [math.nan] + list(self.orders()) if len(self.rows) > 1 else [math.nan]
        for i, r in enumerate(self.rows):
            row = [i, r["h"], r["dt"]]
            for f in self.FIELDS:
                row += list(r["errors"][f])
            row.append(orders[i])
            out.append(row)
        return out


def _errors(mesh: Mesh, state: FieldState, fields: ExactFields, t: float):
    x = mesh.centers
    V = mesh.volumes
    chi = mesh.electrode
    out = {}
    for name, num, exact, mask in (
        ("C", state.C, fields.C(t, x), np.ones_like(chi)),
        ("phi_e", state.pair.phi_e, fields.phi_e(t, x), np.ones_like(chi)),
        ("phi_s", state.pair.phi_s, fields.phi_s(t, x), chi),
    ):
        e = (num - exact)[mask]
        out[name] = (math.sqrt(float(np.dot(V[mask], e * e))), float(np.max(np.abs(e))))
    return out


def run_mms(case: MMSCase, settings: TimeStepSettings | None = None) -> ConvergenceTable:
    """Run every refinement level of ``case`` in verification mode."""
    settings = settings or TimeStepSettings()
    table = ConvergenceTable(case.name, case.study)
    forcing = manufactured_forcing(case.fields, case.params, case.layout, case.tau)
    for k, dt, n_steps in case.levels:
        mesh = build_layered_mesh(case.layout, (2 * k, k, 2 * k))
        h = HField(np.ones(mesh.n_cells), case.params.K, mesh.electrode)
        problem = Problem(mesh, case.params, h, case.tau, VERIFICATION, forcing)
        x = mesh.centers
        phi_s0 = np.where(mesh.electrode, case.fields.phi_s(0.0, x), np.nan)
        state = FieldState(0.0, case.fields.C(0.0, x), PotentialPair(case.fields.phi_e(0.0, x), phi_s0))
        for n in range(1, n_steps + 1):
            state, _ = coupled_step(problem, state, dt, settings)
            state = replace(state, t=n * dt)
        table.rows.append({
            "h": float(np.max(mesh.volumes)),
            "dt": dt,
            "errors": _errors(mesh, state, case.fields, state.t),
        })
    return table


# --------------------------------------------------------------------------
# equilibrium and uniqueness


def equilibrium_preservation(config, n_steps: int = 100, mode: str = VERIFICATION, C0: float | None = None) -> float:
    """Max |C(t) - C0| from the kinetic root with zero potentials.

    The root of G at zero potential drop needs h = C0**d; with C0 = 1 that is h = 1.
    """
    C0 = float(np.min(config.params.C0_cells(config.mesh()))) if C0 is None else float(C0)
    params = replace(config.params, C0=C0, h=C0**config.params.d)
    mesh = config.mesh()
    problem = Problem(mesh, params, params.h_cells(mesh), config.tau, mode)
    traj = integrate(problem, np.full(mesh.n_cells, C0), config.dt, n_steps, config.steps)
    return max(float(np.max(np.abs(s.C - C0))) for s in traj.states)


def uniqueness_sweep(config, n_guesses: int = 10, seed: int = 0, C=None, spread: float = 5.0, guesses=None) -> float:
    """Max pairwise sup-norm gap between pairs solved from random initial guesses."""
    mesh = config.mesh()
    C = config.params.C0_cells(mesh) if C is None else np.asarray(C, dtype=float)
    h = resolve_h(mesh, config.params)
    if guesses is None:
        if n_guesses < 2:
            raise ValueError("need at least two guesses")
        rng = np.random.default_rng(seed)
        guesses = []
        for _ in range(n_guesses):
            ps = np.where(mesh.electrode, rng.uniform(-spread, spread, mesh.n_cells), np.nan)
            guesses.append(PotentialPair(rng.uniform(-spread, spread, mesh.n_cells), ps))
    sols = []
    for g in guesses:
        pair, _ = solve_potential_pair(mesh, config.params, C, h, config.tau, g, config.elliptic, mode=config.mode)
        sols.append(pair)
    chi = mesh.electrode
    worst = 0.0
    for a, b in itertools.combinations(sols, 2):
        gap = max(np.max(np.abs(a.phi_e - b.phi_e)), np.max(np.abs(a.phi_s[chi] - b.phi_s[chi])))
        worst = max(worst, float(gap))
    return worst


# --------------------------------------------------------------------------
# invariant scan


@dataclass(frozen=True)
class InvariantResult:
    passed: bool
    worst_margin: float
    t_worst: float


def invariant_sweep(traj: Trajectory) -> dict:
    """Pass/fail, worst margin and its time for each invariant, recomputed from states.

    Margins are positive when the invariant holds. Mass balance is read from
    the per-step diagnostics since it involves consecutive steps.
    """
    problem = traj.problem
    mesh = problem.mesh
    total = mesh.layout.total
    results = {}

    def scan(values):
        worst = min(values, key=lambda tv: tv[1])
        return InvariantResult(bool(worst[1] >= 0), float(worst[1]), float(worst[0]))

    results["nonnegativity"] = scan([(s.t, float(np.min(s.C)) + NONNEG_TOL) for s in traj.states])
    if problem.forcing is None:
        ident = []
        bound = []
        for s in traj.states:
            phi_max = max(max(s.pair.sup_norms()), np.finfo(float).tiny)
            ident.append((s.t, 1e-10 - abs(potential_identity_residual(mesh, s.pair)) / (total * phi_max)))
            chk = linf_bound_check(mesh, s.pair, s.C, problem.h, problem.tau, problem.params, mode=problem.mode)
            bound.append((s.t, chk.margin))
        results["identity"] = scan(ident)
        results["linf_bound"] = scan(bound)
    if traj.diagnostics:
        results["mass_balance"] = scan([(d.t, 1e-10 - d.mass_defect_rel) for d in traj.diagnostics])
    return results


__all__ = [
    "ConvergenceTable",
    "ExactFields",
    "InvariantResult",
    "MMSCase",
    "constant_fields",
    "equilibrium_preservation",
    "invariant_sweep",
    "manufactured_forcing",
    "run_mms",
    "smooth_fields",
    "uniqueness_sweep",
]
