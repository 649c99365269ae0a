from dataclasses import replace

import numpy as np
import pytest
import sympy as sp

from cellspan.elliptic import PotentialPair
from cellspan.geometry import DomainLayout
from cellspan.params import PhysParams, PowerLawKappa
from cellspan.parabolic import FieldState, integrate
from cellspan.verify import (
    MMSCase,
    equilibrium_preservation,
    invariant_sweep,
    manufactured_forcing,
    run_mms,
    smooth_fields,
    uniqueness_sweep,
)

LAYOUT = DomainLayout(0.4, 0.2, 0.4)


def _sympy_forcing(params, tau, x0, t0, region):
    """Symbolic residuals of the verification-mode equations at one point."""
    x, t = sp.symbols("x t", real=True)
    L = sp.Rational(1)
    C = 2 + sp.cos(sp.pi * x / L) * sp.exp(-t)
    pe = sp.Rational(1, 5) * sp.cos(sp.pi * x / L)
    if region == "anode":
        ps = sp.Rational(3, 10) * sp.cos(sp.pi * x / sp.Rational(2, 5))
        sigma = params.sigma_a
    else:
        ps = sp.Rational(3, 10) * sp.cos(sp.pi * (x - sp.Rational(3, 5)) / sp.Rational(2, 5))
        sigma = params.sigma_c
    a1, a2, a3, a4 = params.alpha1, params.alpha2, params.alpha3, params.alpha4
    d = a1 * a2
    kap = params.kappa.c0 * (C + tau) ** params.kappa.alpha0
    y3 = ps - pe
    G = C**-d * sp.exp(a2 * y3) - C**d * sp.exp(-a2 * y3)
    S = a4 / 2 * sp.sqrt(C) * G
    fe = -sp.diff(kap * sp.diff(pe, x), x) + tau * pe - S
    fs = -sigma * sp.diff(ps, x, 2) + tau * ps + S
    fc = params.eps_e * sp.diff(C, t) - params.D * sp.diff(C, x, 2) - a3 * S
    sub = {x: x0, t: t0}
    return tuple(float(sp.N(e.subs(sub), 30)) for e in (fe, fs, fc))


@pytest.mark.parametrize("seed", [0, 1])
def test_forcing_matches_sympy(seed):
    rng = np.random.default_rng(seed)
    params = PhysParams(h=1.0, alpha1=0.8, alpha2=1.3, alpha3=0.7, alpha4=1.9, sigma_a=2.0, sigma_c=0.5,
                        eps_e=1.5, D=0.6, kappa=PowerLawKappa(1.2, 1.5))
    tau = 0.1
    forcing = manufactured_forcing(smooth_fields(LAYOUT), params, LAYOUT, tau)
    for _ in range(3):
        t = rng.uniform(0, 1)
        for region, (lo, hi) in (("anode", (0, 0.4)), ("cathode", (0.6, 1.0))):
            x = rng.uniform(lo, hi)
            got = [float(np.asarray(v)) for v in forcing(t, np.array(x))]
            ref = _sympy_forcing(params, tau, x, t, region)
            np.testing.assert_allclose(got, ref, rtol=1e-10, atol=1e-10)


def test_forcing_separator_has_no_reaction():
    params = PhysParams(h=1.0)
    forcing = manufactured_forcing(smooth_fields(LAYOUT), params, LAYOUT, 0.1)
    fe, fs, fc = forcing(0.3, np.array([0.5]))
    assert fs[0] == 0.0
    x = 0.5
    k = np.pi
    ref_c = -np.cos(k * x) * np.exp(-0.3) + k * k * np.cos(k * x) * np.exp(-0.3)
    assert fc[0] == pytest.approx(ref_c, rel=1e-13)


def test_forcing_requires_scalar_coefficients():
    params = PhysParams(h=1.0, D=(1.0, 2.0, 1.0))
    with pytest.raises(ValueError):
        manufactured_forcing(smooth_fields(LAYOUT), params, LAYOUT, 0.1)


def test_constant_case_exact():
    table = run_mms(MMSCase.constant())
    assert table.errors(norm="Linf")[0] <= 1e-12


def test_spatial_orders_quick():
    table = run_mms(MMSCase.smooth_space(ks=(4, 8, 16), n_steps=2))
    assert np.all(table.orders() > 1.8)
    rows = table.to_csv_rows()
    assert rows[0][:3] == ["level", "h", "dt"] and len(rows) == 4


def test_mms_report_deterministic():
    case = MMSCase.smooth_space(ks=(4, 8), n_steps=2)
    assert run_mms(case).to_csv_rows()[1:] == run_mms(case).to_csv_rows()[1:]


def test_equilibrium_preservation(demo_cfg):
    cfg = replace(demo_cfg, cells=(20, 5, 20), tau=1e-3)
    assert equilibrium_preservation(cfg, n_steps=10) <= 1e-12
    assert equilibrium_preservation(cfg, n_steps=3, C0=2.0) <= 1e-12


def test_uniqueness_identical_guesses(demo_cfg):
    cfg = replace(demo_cfg, cells=(20, 5, 20))
    mesh = cfg.mesh()
    g = PotentialPair(np.zeros(mesh.n_cells), np.where(mesh.electrode, 0.0, np.nan))
    assert uniqueness_sweep(cfg, guesses=[g, g]) == 0.0
    assert uniqueness_sweep(cfg, n_guesses=4, seed=3) <= 1e-8
    with pytest.raises(ValueError):
        uniqueness_sweep(cfg, n_guesses=1)


def test_invariant_sweep_clean_and_corrupted(demo_cfg):
    cfg = replace(demo_cfg, cells=(20, 5, 20), n_steps=5)
    prob = cfg.problem()
    traj = integrate(prob, np.ones(prob.mesh.n_cells), cfg.dt, 5)
    res = invariant_sweep(traj)
    assert set(res) == {"nonnegativity", "identity", "linf_bound", "mass_balance"}
    assert all(r.passed for r in res.values())
    s0 = traj.states[0]
    traj.states[0] = FieldState(s0.t, -s0.C, s0.pair)
    bad = invariant_sweep(traj)["nonnegativity"]
    assert not bad.passed and bad.t_worst == 0.0 and bad.worst_margin < 0
