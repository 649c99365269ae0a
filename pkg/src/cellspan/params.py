"""Physical coefficients and the structural hypotheses they must satisfy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from .geometry import (
    ANODE,
    CATHODE,
    REGION_NAMES,
    SEPARATOR,
    DomainLayout,
    Mesh,
    check_separator_condition,
)

RegionValue = Union[float, Mapping[str, float], np.ndarray]


class HypothesisViolation(ValueError):
    """One or more structural hypotheses fail; ``violations`` lists them all."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class HBoundError(ValueError):
    def __init__(self, cell, value, K):
        self.cell, self.value, self.K = cell, value, K
        super().__init__(
            f"(hb) 1/K <= h <= K violated at cell {cell}: h={value!r}, K={K!r}"
        )


# --------------------------------------------------------------------------
# conductivity models


class KappaModel:
    """Electrolyte conductivity kappa: [0, inf) -> [0, inf).

    Subclasses implement ``__call__`` on arrays and ``derivative``. ``c0``,
    ``alpha0`` and ``knee`` describe the near-zero lower bound
    kappa(s) >= c0 * s**alpha0 on [0, knee).
    """

    c0: float
    alpha0: float
    knee: float

    def __call__(self, s):
        raise NotImplementedError

    def derivative(self, s):
        raise NotImplementedError

    def check(self, n_samples: int = 257) -> list[str]:
        """Sampled checks of the conductivity hypothesis; returns violations."""
        problems = []
        if not (self.c0 > 0 and self.alpha0 > 0 and self.knee > 0):
            problems.append("(H1) c0, alpha0 and knee must be positive")
            return problems
        if self(np.array([0.0]))[0] != 0.0:
            problems.append("(H1) kappa(0) = 0 violated")
        s = np.linspace(0.0, 4.0 * self.knee, n_samples)[1:]
        k = self(s)
        if np.any(~(k > 0)):
            problems.append("(H1) kappa(s) > 0 for s > 0 violated")
        near = s[s < self.knee]
        if np.any(self(near) < self.c0 * near**self.alpha0 * (1 - 1e-12)):
            problems.append("(H1) kappa(s) >= c0 s^alpha0 on [0, knee) violated")
        fine = np.linspace(0.0, 4.0 * self.knee, 8 * n_samples)
        jumps = np.abs(np.diff(self(fine)))
        scale = max(1.0, float(np.max(np.abs(self(fine)))))
        if np.max(jumps) > 0.25 * scale:
            problems.append("(H1) kappa appears discontinuous on the sample grid")
        return problems


@dataclass(frozen=True)
class PowerLawKappa(KappaModel):
    c0: float = 1.0
    alpha0: float = 1.0
    knee: float = 1.0

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return self.c0 * np.maximum(s, 0.0) ** self.alpha0

    def derivative(self, s):
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        with np.errstate(divide="ignore"):
            return self.c0 * self.alpha0 * s ** (self.alpha0 - 1.0)


@dataclass(frozen=True)
class TabulatedKappa(KappaModel):
    """Piecewise-linear interpolant through (points, values), held flat past the end.

    The table must start at (0, 0) and be nondecreasing.
    """

    points: tuple
    values: tuple
    c0: float = 1.0
    alpha0: float = 1.0
    knee: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if p.ndim != 1 or p.shape != v.shape or p.size < 2:
            raise ValueError("kappa table needs matching 1D points/values, >= 2 rows")
        if p[0] != 0.0 or v[0] != 0.0:
            raise ValueError("kappa table must start at (0, 0)")
        if np.any(np.diff(p) <= 0) or np.any(np.diff(v) < 0):
            raise ValueError("kappa table must be increasing in s, nondecreasing in kappa")

    def __call__(self, s):
        return np.interp(np.maximum(np.asarray(s, dtype=float), 0.0), self.points, self.values)

    def derivative(self, s):
        p = np.asarray(self.points)
        slopes = np.diff(self.values) / np.diff(p)
        idx = np.searchsorted(p, np.asarray(s, dtype=float), side="right") - 1
        inside = (idx >= 0) & (idx < slopes.size)
        return np.where(inside, slopes[np.clip(idx, 0, slopes.size - 1)], 0.0)


class FunctionKappa(KappaModel):
    """Wraps an arbitrary vectorized callable; derivative by central differences."""

    def __init__(self, func, c0=1.0, alpha0=1.0, knee=1.0):
        self.func, self.c0, self.alpha0, self.knee = func, c0, alpha0, knee

    def __call__(self, s):
        return np.asarray(self.func(np.maximum(np.asarray(s, dtype=float), 0.0)), dtype=float)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        step = 1e-6 * np.maximum(1.0, np.abs(s))
        lo = np.maximum(s - step, 0.0)
        return (self(s + step) - self(lo)) / (s + step - lo)


def kappa_tau(model: KappaModel, s, tau):
    """Regularized conductivity kappa(s^+ + tau)."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau={tau!r} must lie in (0, 1)")
    out = model(np.maximum(np.asarray(s, dtype=float), 0.0) + tau)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# h and boundary current


@dataclass(frozen=True, eq=False)
class HField:
    """Cell values of h on Omega' (separator entries are carried but unused)."""

    values: np.ndarray
    K: float
    electrode: np.ndarray | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if self.K < 1:
            raise ValueError(f"K={self.K!r} must be >= 1")
        mask = np.ones(values.shape, bool) if self.electrode is None else np.asarray(self.electrode)
        bad = np.flatnonzero(mask & ~((values >= 1.0 / self.K) & (values <= self.K)))
        if bad.size:
            raise HBoundError(int(bad[0]), float(values[bad[0]]), self.K)


def h_from_potential(phi, U: float, alpha2: float, K: float, electrode=None) -> HField:
    """h = exp(alpha2 * (phi - U)) per cell, checked against 1/K <= h <= K."""
    phi = np.asarray(phi, dtype=float)
    mask = np.ones(phi.shape, bool) if electrode is None else np.asarray(electrode)
    if not np.all(np.isfinite(phi[mask])):
        raise ValueError("phi must be finite on Omega'")
    values = np.ones(phi.shape)
    values[mask] = np.exp(alpha2 * (phi[mask] - U))
    return HField(values, K, None if electrode is None else mask)


@dataclass(frozen=True)
class BoundaryCurrent:
    """Outward current density -sigma dphi/dn on the four faces bounding Omega'.

    ``anode_left`` and ``cathode_right`` are the external collectors; the two
    interface entries sit on the separator faces and are zero in the
    original model.
    """

    anode_left: float = 0.0
    anode_right: float = 0.0
    cathode_left: float = 0.0
    cathode_right: float = 0.0

    def external_imbalance(self) -> float:
        return self.anode_left + self.cathode_right

    def is_compatible(self, rtol: float = 1e-12) -> bool:
        """Zero net current through the external collectors."""
        scale = max(abs(self.anode_left), abs(self.cathode_right))
        return abs(self.external_imbalance()) <= rtol * scale

    def component_imbalance(self) -> dict[str, float]:
        return {
            "anode": self.anode_left + self.anode_right,
            "cathode": self.cathode_left + self.cathode_right,
        }

    @property
    def is_zero(self) -> bool:
        return not any((self.anode_left, self.anode_right, self.cathode_left, self.cathode_right))


# --------------------------------------------------------------------------
# parameter bundle


def region_cell_values(mesh: Mesh, value: RegionValue, name: str = "value") -> np.ndarray:
    """Expand a scalar, per-region mapping, or per-cell array to cell values.

    A mapping may omit regions it does not apply to; those cells get NaN.
    """
    if isinstance(value, Mapping):
        out = np.full(mesh.n_cells, np.nan)
        for key, v in value.items():
            out[mesh.region_mask([key])] = float(v)
        return out
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(mesh.n_cells, float(arr))
    if arr.shape != (mesh.n_cells,):
        raise ValueError(f"{name}: expected {mesh.n_cells} cell values, got {arr.shape}")
    return arr.copy()


def _region_min(value: RegionValue) -> float:
    if isinstance(value, Mapping):
        return min(float(v) for v in value.values())
    return float(np.min(np.asarray(value, dtype=float)))


@dataclass(frozen=True)
class PhysParams:
    """All physical coefficients.

    ``h`` may be given directly (scalar, per-region, or per-cell); when it is
    None it is computed from ``current`` by the current-lifting solve.
    """

    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 1.0
    alpha4: float = 1.0
    K: float = 5.0
    U: float = 1.0
    sigma_a: float = 1.0
    sigma_c: float = 1.0
    eps_e: RegionValue = 1.0
    D: RegionValue = 1.0
    kappa: KappaModel = field(default_factory=PowerLawKappa)
    C0: RegionValue = 1.0
    h: RegionValue | None = None
    current: BoundaryCurrent = field(default_factory=BoundaryCurrent)
    require_positivity: bool = True

    @property
    def d(self) -> float:
        return self.alpha1 * self.alpha2

    def sigma_cells(self, mesh: Mesh) -> np.ndarray:
        """sigma per cell, zero in the separator."""
        out = np.zeros(mesh.n_cells)
        out[mesh.tags == ANODE] = self.sigma_a
        out[mesh.tags == CATHODE] = self.sigma_c
        return out

    def eps_cells(self, mesh: Mesh) -> np.ndarray:
        return region_cell_values(mesh, self.eps_e, "eps_e")

    def D_cells(self, mesh: Mesh) -> np.ndarray:
        return region_cell_values(mesh, self.D, "D")

    def C0_cells(self, mesh: Mesh) -> np.ndarray:
        return region_cell_values(mesh, self.C0, "C0")

    def h_cells(self, mesh: Mesh) -> HField | None:
        if self.h is None:
            return None
        values = region_cell_values(mesh, self.h, "h")
        values[mesh.tags == SEPARATOR] = 1.0
        return HField(values, self.K, mesh.electrode)


@dataclass(frozen=True)
class ValidatedParams:
    params: PhysParams
    layout: DomainLayout

    @property
    def d(self) -> float:
        return self.params.d


def validate(params: PhysParams, layout: DomainLayout, mesh: Mesh | None = None) -> ValidatedParams:
    """Check every hypothesis and raise one error listing all violations."""
    problems: list[str] = []

    problems += params.kappa.check()

    for name in ("sigma_a", "sigma_c"):
        if not getattr(params, name) > 0:
            problems.append(f"(H2) {name} > 0 violated")
    for name in ("eps_e", "D"):
        value = getattr(params, name)
        cells = region_cell_values(mesh, value, name) if mesh is not None else None
        low = np.nanmin(cells) if cells is not None else _region_min(value)
        if cells is not None and np.any(np.isnan(cells)):
            problems.append(f"(H2) {name} missing for some region")
        elif not low > 0:
            problems.append(f"(H2) ess inf {name} > 0 violated")

    for i in range(1, 5):
        if not getattr(params, f"alpha{i}") > 0:
            problems.append(f"(H4) alpha{i} > 0 violated")

    if not params.K >= 1:
        problems.append("(hb) K >= 1 violated")
    elif params.h is not None:
        h_vals = (
            region_cell_values(mesh, params.h, "h")[mesh.electrode]
            if mesh is not None
            else np.atleast_1d(
                [float(v) for v in params.h.values()] if isinstance(params.h, Mapping) else params.h
            )
        )
        if np.any((h_vals < 1.0 / params.K) | (h_vals > params.K)):
            problems.append("(H6) 1/K <= h <= K violated")

    C0 = params.C0_cells(mesh) if mesh is not None else params.C0
    c0_min = np.nanmin(C0) if mesh is not None else _region_min(C0)
    if not c0_min > 0:
        problems.append(f"(H7) min C0 > 0 violated (min C0 = {c0_min!r})")

    if params.require_positivity and not params.d > 0.5:
        problems.append(f"(H8) d > 1/2 violated (d = {params.d!r})")

    if not check_separator_condition(layout):
        problems.append("(H9) |Omega_s| < |Omega'| violated")

    if not params.current.is_compatible():
        problems.append(
            f"(bcs2) zero net external current violated "
            f"(imbalance {params.current.external_imbalance()!r})"
        )

    if problems:
        raise HypothesisViolation(problems)
    return ValidatedParams(params, layout)


__all__ = [
    "BoundaryCurrent",
    "HBoundError",
    "HField",
    "HypothesisViolation",
    "KappaModel",
    "PhysParams",
    "PowerLawKappa",
    "REGION_NAMES",
    "TabulatedKappa",
    "ValidatedParams",
    "h_from_potential",
    "kappa_tau",
    "region_cell_values",
    "validate",
]
