import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cellspan.geometry import DomainLayout, build_layered_mesh
from cellspan.params import (
    BoundaryCurrent,
    FunctionKappa,
    HBoundError,
    HField,
    HypothesisViolation,
    PhysParams,
    PowerLawKappa,
    TabulatedKappa,
    h_from_potential,
    kappa_tau,
    validate,
)

LAYOUT = DomainLayout(1, 0.1, 1)


def test_valid_bundle():
    vp = validate(PhysParams(C0=0.5), LAYOUT)
    assert vp.d == 1.0


def test_d_is_product():
    assert PhysParams(alpha1=0.3, alpha2=2.5).d == pytest.approx(0.75)


def test_h8_violation_named():
    with pytest.raises(HypothesisViolation) as exc:
        validate(PhysParams(alpha1=0.4), LAYOUT)
    assert any(v.startswith("(H8) d > 1/2 violated") for v in exc.value.violations)


def test_h8_skipped_without_positivity():
    validate(PhysParams(alpha1=0.4, require_positivity=False), LAYOUT)


def test_h7_zero_cell():
    mesh = build_layered_mesh(LAYOUT, (4, 2, 4))
    C0 = np.ones(mesh.n_cells)
    C0[3] = 0.0
    with pytest.raises(HypothesisViolation) as exc:
        validate(PhysParams(C0=C0), LAYOUT, mesh)
    assert any(v.startswith("(H7) min C0 > 0 violated") for v in exc.value.violations)


def test_all_violations_collected():
    bad = PhysParams(alpha1=0.4, sigma_a=0.0, C0=-1.0, K=0.5, current=BoundaryCurrent(1.0, 0, 0, 0))
    with pytest.raises(HypothesisViolation) as exc:
        validate(bad, DomainLayout(0.1, 1, 0.1))
    tags = {v.split()[0] for v in exc.value.violations}
    assert {"(H2)", "(H7)", "(H8)", "(H9)", "(hb)", "(bcs2)"} <= tags


def test_h6_bounds_on_given_h():
    with pytest.raises(HypothesisViolation, match=r"\(H6\)"):
        validate(PhysParams(h=10.0, K=5.0), LAYOUT)


def test_kappa_tau_examples():
    lin = FunctionKappa(lambda s: s)
    sq = FunctionKappa(lambda s: s**2)
    assert kappa_tau(lin, -2.0, 0.5) == pytest.approx(0.5)
    assert kappa_tau(sq, 1.0, 0.1) == pytest.approx(1.21)
    with pytest.raises(ValueError):
        kappa_tau(FunctionKappa(np.sqrt), 0.25, 0.0)


@given(st.floats(-50, 50), st.floats(1e-6, 0.999))
def test_kappa_tau_floor(s, tau):
    model = PowerLawKappa(c0=2.0, alpha0=1.5)
    assert kappa_tau(model, s, tau) >= model(tau) > 0


def test_kappa_models_pass_h1():
    assert PowerLawKappa().check() == []
    assert TabulatedKappa((0.0, 1.0, 2.0), (0.0, 1.0, 1.5), c0=0.5, alpha0=1.0).check() == []


def test_kappa_h1_failures():
    assert PowerLawKappa(c0=-1.0).check()
    shifted = FunctionKappa(lambda s: s + 1.0)
    assert any("kappa(0) = 0" in v for v in shifted.check())
    jump = FunctionKappa(lambda s: np.where(s > 0.5, 10.0, s))
    assert any("discontinuous" in v for v in jump.check())


def test_tabulated_kappa_validation():
    with pytest.raises(ValueError):
        TabulatedKappa((0.5, 1.0), (0.0, 1.0))
    with pytest.raises(ValueError):
        TabulatedKappa((0.0, 1.0, 2.0), (0.0, 2.0, 1.0))


def test_tabulated_derivative():
    k = TabulatedKappa((0.0, 1.0, 3.0), (0.0, 2.0, 3.0))
    np.testing.assert_allclose(k.derivative(np.array([0.5, 2.0, 5.0])), [2.0, 0.5, 0.0])


def test_power_law_derivative_fd():
    k = PowerLawKappa(c0=1.3, alpha0=1.7)
    s = np.linspace(0.2, 3.0, 9)
    fd = (k(s + 1e-6) - k(s - 1e-6)) / 2e-6
    np.testing.assert_allclose(k.derivative(s), fd, rtol=1e-7)


def test_h_from_potential_examples():
    phi = np.full(5, 1.0)
    np.testing.assert_array_equal(h_from_potential(phi, 1.0, 3.7, 2.0).values, 1.0)
    h = h_from_potential(phi + 1.0, 1.0, 1.0, 3.0)
    np.testing.assert_allclose(h.values, math.e)
    with pytest.raises(HBoundError) as exc:
        h_from_potential(phi + 2.0, 1.0, 1.0, 3.0)
    assert exc.value.cell == 0


@given(st.floats(0.01, 10), st.floats(-5, 5))
def test_h_identically_one_at_U(alpha2, U):
    np.testing.assert_array_equal(h_from_potential(np.full(3, U), U, alpha2, 1.0).values, 1.0)


def test_hfield_names_offending_cell():
    vals = np.array([1.0, 1.0, 0.1, 1.0])
    with pytest.raises(HBoundError, match="cell 2"):
        HField(vals, 5.0)
    HField(vals, 5.0, electrode=np.array([True, True, False, True]))


def test_boundary_current_compat():
    ok = BoundaryCurrent(-1.0, 1.0, -1.0, 1.0)
    assert ok.is_compatible()
    assert ok.component_imbalance() == {"anode": 0.0, "cathode": 0.0}
    assert not BoundaryCurrent(-1.0, 0, 0, 0.5).is_compatible()
    assert BoundaryCurrent().is_zero


def test_region_cell_values():
    mesh = build_layered_mesh(LAYOUT, (3, 2, 3))
    p = PhysParams(D={"anode": 1.0, "separator": 2.0, "cathode": 3.0}, h={"anode": 1.5, "cathode": 0.5})
    np.testing.assert_array_equal(p.D_cells(mesh), [1, 1, 1, 2, 2, 3, 3, 3])
    np.testing.assert_array_equal(p.sigma_cells(mesh)[mesh.separator], 0.0)
    np.testing.assert_array_equal(p.h_cells(mesh).values, [1.5] * 3 + [1.0] * 2 + [0.5] * 3)
