"""Fixed-time solves for the regularized potential pair and the current lifting.

Unknowns are interleaved per cell as ``[phi_e_0, phi_s_0, phi_e_1, ...]``;
in the separator the solid-potential slot is a decoupled identity row.
With that ordering the Newton Jacobian is symmetric positive definite with
two super-diagonals, so each step is one banded Cholesky solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solveh_banded
from scipy.sparse.linalg import spsolve

from . import kernels
from .geometry import ANODE, CATHODE, Mesh, region_integral
from .params import BoundaryCurrent, HField, ValidatedParams, h_from_potential

log = logging.getLogger(__name__)

REGULARIZED = "regularized"
VERIFICATION = "verification"


class EllipticConvergenceError(RuntimeError):
    def __init__(self, message, residual, history):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual
        self.history = list(history)


class ExponentSaturationError(FloatingPointError):
    """alpha2*(phi_s - phi_e) left the representable range of exp."""


class LiftingCompatibilityError(ValueError):
    pass


@dataclass(frozen=True)
class EllipticSolveSettings:
    tol: float = 1e-10
    rtol: float = 1e-12
    max_iter: int = 60
    damping: float = 0.5
    max_backtracks: int = 3
    picard_relaxation: float = 0.5
    linear_tol: float = 1e-12

    def __post_init__(self):
        if not (self.tol > 0 and self.rtol >= 0 and self.linear_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not 0 < self.picard_relaxation <= 1:
            raise ValueError("picard_relaxation must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class PotentialPair:
    """phi_e on every cell; phi_s on Omega' with NaN in the separator."""

    phi_e: np.ndarray
    phi_s: np.ndarray

    def sup_norms(self) -> tuple[float, float]:
        ps = self.phi_s[~np.isnan(self.phi_s)]
        return float(np.max(np.abs(self.phi_e))), float(np.max(np.abs(ps), initial=0.0))

    @property
    def drop(self) -> np.ndarray:
        """phi_s - phi_e (NaN in the separator)."""
        return self.phi_s - self.phi_e

    @classmethod
    def zeros(cls, mesh: Mesh) -> "PotentialPair":
        phi_s = np.zeros(mesh.n_cells)
        phi_s[~mesh.electrode] = np.nan
        return cls(np.zeros(mesh.n_cells), phi_s)


@dataclass
class SolveReport:
    iterations: int = 0
    residual: float = np.inf
    history: list = field(default_factory=list)
    picard_steps: int = 0
    monotone: bool = True


# --------------------------------------------------------------------------
# discretization helpers


def harmonic_face_coefficients(mesh: Mesh, cell_coeff) -> np.ndarray:
    """Distance-weighted harmonic mean of cell coefficients at interior faces.

    Returned so that ``coeff / (x_{i+1} - x_i)`` is the two-point
    transmissibility ``1 / (dL/kL + dR/kR)``. Faces touching a zero
    coefficient get 0.
    """
    k = np.asarray(cell_coeff, dtype=float)
    left, right = mesh.interior_distances
    kl, kr = k[:-1], k[1:]
    out = np.zeros(mesh.n_cells - 1)
    ok = (kl > 0) & (kr > 0)
    out[ok] = (left[ok] + right[ok]) / (left[ok] / kl[ok] + right[ok] / kr[ok])
    return out


def _transmissibility(mesh: Mesh, face_coeff) -> np.ndarray:
    return np.asarray(face_coeff, dtype=float) / np.diff(mesh.centers)


def assemble_diffusion_operator(mesh: Mesh, face_coeff, tau: float, cells=None) -> sp.csr_matrix:
    """Two-point-flux matrix of ``-div(k grad .) + tau .`` with zero-flux boundaries.

    ``face_coeff`` has one entry per interior face. With ``cells`` (a boolean
    mask) the operator is restricted to those cells and only faces between
    two selected cells carry flux. Rows sum to ``tau * volume``.
    """
    n = mesh.n_cells
    mask = np.ones(n, bool) if cells is None else np.asarray(cells, bool)
    face_coeff = np.asarray(face_coeff, dtype=float)
    if face_coeff.shape != (n - 1,):
        raise ValueError(f"need {n - 1} face coefficients, got {face_coeff.shape}")
    inner = mask[:-1] & mask[1:]
    if np.any(~(face_coeff[inner] > 0)):
        raise ValueError("face coefficients must be positive")
    if tau < 0:
        raise ValueError("zero-order coefficient must be nonnegative")
    T = np.where(inner, _transmissibility(mesh, face_coeff), 0.0)
    diag = tau * mesh.volumes
    diag[:-1] += T
    diag[1:] += T
    A = sp.diags([-T, diag, -T], [-1, 0, 1], shape=(n, n), format="csr")
    idx = np.flatnonzero(mask)
    return A[idx][:, idx].tocsr()


def _face_sum(T: np.ndarray, n: int) -> np.ndarray:
    s = np.zeros(n)
    s[:-1] += T
    s[1:] += T
    return s


def _apply_flux(T: np.ndarray, u: np.ndarray) -> np.ndarray:
    """sum over faces of T*(u_i - u_j)."""
    flux = T * (u[:-1] - u[1:])
    out = np.zeros_like(u)
    out[:-1] += flux
    out[1:] -= flux
    return out


# --------------------------------------------------------------------------
# coupled potential pair


class _PairProblem:
    def __init__(self, mesh, params, C, h, tau, mode, forcing):
        p = params.params if isinstance(params, ValidatedParams) else params
        if not 0 < tau < 1:
            raise ValueError(f"tau={tau!r} must lie in (0, 1)")
        self.mesh = mesh
        self.n = mesh.n_cells
        self.V = mesh.volumes
        self.chi = mesh.electrode
        self.tau = tau
        self.half_a4 = 0.5 * p.alpha4
        self.d = p.d
        self.alpha2 = p.alpha2
        self.regularized = mode == REGULARIZED
        if mode not in (REGULARIZED, VERIFICATION):
            raise ValueError(f"unknown mode {mode!r}")
        C = np.asarray(C, dtype=float)
        if not self.regularized and np.any(C[self.chi] <= 0):
            raise ValueError("verification mode needs C > 0 on Omega'")
        self.C = C
        hv = h.values if isinstance(h, HField) else np.broadcast_to(np.asarray(h, float), C.shape)
        self.h = np.where(self.chi, hv, 1.0)
        kap = p.kappa(np.maximum(C, 0.0) + tau)
        self.Te = _transmissibility(mesh, harmonic_face_coefficients(mesh, kap))
        self.Ts = _transmissibility(mesh, harmonic_face_coefficients(mesh, p.sigma_cells(mesh)))
        self.sum_Te = _face_sum(self.Te, self.n)
        self.sum_Ts = _face_sum(self.Ts, self.n)
        if forcing is None:
            self.f_e = np.zeros(self.n)
            self.f_s = np.zeros(self.n)
        else:
            self.f_e = np.asarray(forcing[0], float) * self.V
            self.f_s = np.where(self.chi, np.asarray(forcing[1], float), 0.0) * self.V
        self.V_total = float(np.sum(self.V) + np.sum(self.V[self.chi]))
        # integral of the forcings fixes int(phi_e) + int(phi_s); zero without forcing
        self.identity_target = (np.sum(self.f_e) + np.sum(self.f_s[self.chi])) / tau

    def kinetics(self, phi_e, phi_s):
        y3 = np.where(self.chi, phi_s - phi_e, 0.0)
        H, dH, _, n_sat = kernels.kinetics(self.h, self.C, y3, self.d, self.alpha2, self.tau, self.regularized)
        H = np.where(self.chi, H, 0.0)
        dH = np.where(self.chi, dH, 0.0)
        return H, dH, n_sat

    def residual(self, phi_e, phi_s, H):
        """Cell-integrated residuals and their per-row magnitude scale."""
        src = self.half_a4 * self.V * H
        Fe = _apply_flux(self.Te, phi_e) + self.tau * self.V * phi_e - src - self.f_e
        Fs = _apply_flux(self.Ts, phi_s) + self.tau * self.V * phi_s + src - self.f_s
        Fs[~self.chi] = 0.0
        scale_e = self.sum_Te * np.abs(phi_e) + _abs_flux(self.Te, phi_e) + np.abs(src) + np.abs(self.f_e)
        scale_s = self.sum_Ts * np.abs(phi_s) + _abs_flux(self.Ts, phi_s) + np.abs(src) + np.abs(self.f_s)
        scale_e += self.tau * self.V * np.abs(phi_e)
        scale_s += self.tau * self.V * np.abs(phi_s)
        scale_s[~self.chi] = 0.0
        return Fe, Fs, scale_e / self.V, scale_s / self.V

    def jacobian_banded(self, dH):
        n = self.n
        w = self.half_a4 * self.V * dH
        tv = self.tau * self.V
        ab = np.zeros((3, 2 * n))
        ab[2, 0::2] = self.sum_Te + tv + w
        ab[2, 1::2] = np.where(self.chi, self.sum_Ts + tv + w, 1.0)
        ab[1, 1::2] = -w
        ab[0, 2::2] = -self.Te
        ab[0, 3::2] = -self.Ts
        return ab

    def shift_constant_mode(self, phi_e, phi_s):
        """Add the same constant to both potentials so the integral identity holds.

        A common shift leaves phi_s - phi_e and all fluxes unchanged; it only
        removes the near-null component the linear solve resolves worst.
        """
        total = np.dot(self.V, phi_e) + np.dot(self.V[self.chi], phi_s[self.chi])
        c = (self.identity_target - total) / self.V_total
        return phi_e + c, np.where(self.chi, phi_s + c, phi_s)


def _abs_flux(T, u):
    a = T * np.abs(u[1:])
    b = T * np.abs(u[:-1])
    out = np.zeros_like(u)
    out[:-1] += a
    out[1:] += b
    return out


def _pair_from_vector(z, chi):
    phi_e = z[0::2].copy()
    phi_s = z[1::2].copy()
    phi_s[~chi] = np.nan
    return PotentialPair(phi_e, phi_s)


def solve_potential_pair(
    mesh: Mesh,
    params,
    C,
    h,
    tau: float,
    guess: PotentialPair | None = None,
    settings: EllipticSolveSettings | None = None,
    *,
    mode: str = REGULARIZED,
    forcing=None,
) -> tuple[PotentialPair, SolveReport]:
    """Damped Newton for the coupled (phi_e, phi_s) system at frozen C.

    ``forcing`` is an optional pair of per-volume source arrays added to the
    two equations (manufactured-solution tests). Returns the converged pair
    and a report; raises :class:`EllipticConvergenceError` otherwise.
    """
    settings = settings or EllipticSolveSettings()
    prob = _PairProblem(mesh, params, C, h, tau, mode, forcing)
    chi = prob.chi
    if guess is None:
        guess = PotentialPair.zeros(mesh)
    phi_e = np.array(guess.phi_e, dtype=float)
    phi_s = np.where(chi, np.nan_to_num(np.asarray(guess.phi_s, dtype=float)), 0.0)
    phi_e, phi_s = prob.shift_constant_mode(phi_e, phi_s)

    def evaluate(pe, ps):
        H, dH, n_sat = prob.kinetics(pe, ps)
        Fe, Fs, se, ss = prob.residual(pe, ps, H)
        excess = max(
            np.max(np.abs(Fe) / prob.V - settings.rtol * se),
            np.max(np.abs(Fs) / prob.V - settings.rtol * ss),
        )
        rnorm = max(np.max(np.abs(Fe) / prob.V), np.max(np.abs(Fs) / prob.V))
        return Fe, Fs, dH, n_sat, rnorm, excess

    Fe, Fs, dH, n_sat, rnorm, excess = evaluate(phi_e, phi_s)
    if n_sat:
        raise ExponentSaturationError(f"{n_sat} cells saturate exp at the initial guess")
    report = SolveReport(residual=rnorm, history=[rnorm])

    for it in range(settings.max_iter):
        if excess <= settings.tol:
            report.iterations = it
            report.residual = rnorm
            return _pair_from_vector(_interleave(phi_e, phi_s), chi), report
        ab = prob.jacobian_banded(dH)
        rhs = -_interleave(Fe, Fs)
        step = solveh_banded(ab, rhs, check_finite=False)
        de, ds = step[0::2], np.where(chi, step[1::2], 0.0)

        lam = 1.0
        accepted = False
        for _ in range(settings.max_backtracks + 1):
            pe, ps = prob.shift_constant_mode(phi_e + lam * de, phi_s + lam * ds)
            trial = evaluate(pe, ps)
            if trial[3] == 0 and np.isfinite(trial[4]) and trial[4] < rnorm:
                accepted = True
                break
            lam *= settings.damping
        if not accepted:
            pe, ps = _picard_step(prob, phi_e, phi_s, settings.picard_relaxation)
            trial = evaluate(pe, ps)
            report.picard_steps += 1
            if trial[3]:
                raise ExponentSaturationError("exponent saturated during Picard fallback")
        elif trial[4] > rnorm:
            report.monotone = False
        phi_e, phi_s = pe, ps
        Fe, Fs, dH, n_sat, rnorm, excess = trial
        report.history.append(rnorm)

    raise EllipticConvergenceError(
        f"potential pair did not converge in {settings.max_iter} iterations",
        rnorm,
        report.history,
    )


def _interleave(a, b):
    z = np.empty(2 * a.size)
    z[0::2] = a
    z[1::2] = b
    return z


def _picard_step(prob: _PairProblem, phi_e, phi_s, relax):
    """One relaxed application of the frozen-source map (linear solves only)."""
    H, _, _ = prob.kinetics(phi_e, phi_s)
    src = prob.half_a4 * prob.V * H
    n = prob.n
    tv = prob.tau * prob.V
    ab = np.zeros((2, n))
    ab[1] = prob.sum_Te + tv
    ab[0, 1:] = -prob.Te
    new_e = solveh_banded(ab, src + prob.f_e, check_finite=False)
    ab_s = np.zeros((2, n))
    ab_s[1] = np.where(prob.chi, prob.sum_Ts + tv, 1.0)
    ab_s[0, 1:] = -prob.Ts
    new_s = solveh_banded(ab_s, np.where(prob.chi, -src + prob.f_s, 0.0), check_finite=False)
    pe = (1 - relax) * phi_e + relax * new_e
    ps = np.where(prob.chi, (1 - relax) * phi_s + relax * new_s, 0.0)
    return prob.shift_constant_mode(pe, ps)


def pair_residual(mesh, params, C, h, tau, pair: PotentialPair, *, mode=REGULARIZED, forcing=None) -> float:
    """Per-volume infinity-norm residual of both potential equations."""
    prob = _PairProblem(mesh, params, C, h, tau, mode, forcing)
    ps = np.where(prob.chi, pair.phi_s, 0.0)
    H, _, _ = prob.kinetics(pair.phi_e, ps)
    Fe, Fs, _, _ = prob.residual(pair.phi_e, ps, H)
    return float(max(np.max(np.abs(Fe) / prob.V), np.max(np.abs(Fs) / prob.V)))


# --------------------------------------------------------------------------
# current lifting


def solve_current_lifting(mesh: Mesh, sigma, current: BoundaryCurrent, tol: float = 1e-10) -> np.ndarray:
    """Zero-mean (per electrode) solution of div(sigma grad phi) = 0 on Omega'.

    Neumann data come from ``current`` as outward densities -sigma dphi/dn.
    Each electrode is a separate component, so each must carry zero net
    current on its own. Returns phi on every cell, NaN in the separator.
    """
    imbalance = current.component_imbalance()
    for name, value in imbalance.items():
        scale = max(abs(current.anode_left), abs(current.anode_right),
                    abs(current.cathode_left), abs(current.cathode_right), 1.0)
        if abs(value) > 1e-12 * scale:
            raise LiftingCompatibilityError(
                f"net current {value!r} into the {name} component; "
                "the Neumann problem has no solution"
            )
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (mesh.n_cells,)).copy()
    sigma[~mesh.electrode] = 0.0
    phi = np.full(mesh.n_cells, np.nan)
    faces = {ANODE: (current.anode_left, current.anode_right),
             CATHODE: (current.cathode_left, current.cathode_right)}
    T_all = _transmissibility(mesh, harmonic_face_coefficients(mesh, sigma))
    for code, (left_flux, right_flux) in faces.items():
        idx = np.flatnonzero(mesh.tags == code)
        if np.any(~(sigma[idx] > 0)):
            raise ValueError("sigma must be positive on Omega'")
        m = idx.size
        T = T_all[idx[0]:idx[-1]]
        diag = np.zeros(m)
        diag[:-1] += T
        diag[1:] += T
        A = sp.diags([-T, diag, -T], [-1, 0, 1], shape=(m, m))
        b = np.zeros(m)
        b[0] -= left_flux
        b[-1] -= right_flux
        vol = mesh.volumes[idx]
        # bordered system: Lagrange multiplier pins the volume-weighted mean
        border = sp.bmat([[A, vol[:, None]], [vol[None, :], None]], format="csc")
        sol = spsolve(border, np.append(b, 0.0))
        u = sol[:m]
        res = np.max(np.abs(A @ u - b) / vol)
        if res > tol * max(1.0, np.max(np.abs(b) / vol)):
            raise EllipticConvergenceError("current lifting solve inaccurate", res, [res])
        phi[idx] = u
    return phi


def resolve_h(mesh: Mesh, params) -> HField:
    """h from the explicit field if given, otherwise from the current lifting."""
    p = params.params if isinstance(params, ValidatedParams) else params
    given = p.h_cells(mesh)
    if given is not None:
        return given
    phi = solve_current_lifting(mesh, p.sigma_cells(mesh), p.current)
    return h_from_potential(phi, p.U, p.alpha2, p.K, mesh.electrode)


# --------------------------------------------------------------------------
# checks


def potential_identity_residual(mesh: Mesh, pair: PotentialPair) -> float:
    """int_Omega phi_e + int_Omega' phi_s (zero for exact solutions)."""
    return region_integral(mesh, pair.phi_e, "omega") + region_integral(mesh, pair.phi_s, "electrodes")


class BoundCheck(NamedTuple):
    ok: bool
    margin: float
    bound: float


def potential_bound(mesh, params, C, h, tau, *, mode=REGULARIZED) -> float:
    """(alpha4/tau) * sup |H(h, C^+, 0)| over Omega'."""
    p = params.params if isinstance(params, ValidatedParams) else params
    chi = mesh.electrode
    hv = h.values if isinstance(h, HField) else np.broadcast_to(np.asarray(h, float), (mesh.n_cells,))
    C = np.asarray(C, dtype=float)
    H, _, _, _ = kernels.kinetics(
        hv[chi], np.maximum(C[chi], 0.0), np.zeros(int(chi.sum())), p.d, p.alpha2, tau, mode == REGULARIZED
    )
    return float(p.alpha4 / tau * np.max(np.abs(H), initial=0.0))


def linf_bound_check(mesh, pair: PotentialPair, C, h, tau, params, *, tol=1e-8, mode=REGULARIZED) -> BoundCheck:
    bound = potential_bound(mesh, params, C, h, tau, mode=mode)
    margin = bound + tol - max(pair.sup_norms())
    return BoundCheck(margin >= 0, float(margin), bound)


__all__ = [
    "BoundCheck",
    "EllipticConvergenceError",
    "EllipticSolveSettings",
    "ExponentSaturationError",
    "LiftingCompatibilityError",
    "PotentialPair",
    "REGULARIZED",
    "SolveReport",
    "VERIFICATION",
    "assemble_diffusion_operator",
    "harmonic_face_coefficients",
    "linf_bound_check",
    "pair_residual",
    "potential_bound",
    "potential_identity_residual",
    "resolve_h",
    "solve_current_lifting",
    "solve_potential_pair",
]
