import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cellspan.geometry import ANODE, CATHODE, SEPARATOR
from cellspan.reaction import (
    G,
    G_root,
    G_tau,
    H_tau,
    KineticsDomainError,
    KineticsParams,
    S_e,
    SaturationWarning,
    dG_dy2,
    dG_dy3,
    theta_tau,
)

pos = st.floats(1e-2, 1e2)
drop = st.floats(-5, 5)
dexp = st.floats(0.55, 3.0)
a2 = st.floats(0.1, 3.0)


def test_G_examples():
    assert G(1, 1, 0, 1, 1) == 0.0
    # independent evaluation: 2*4^-1*e - 4*e^-1/2
    assert G(2, 4, 1, 1, 1) == pytest.approx(0.5 * math.e - 2 / math.e, rel=1e-14)
    assert G(2, 4, 1, 1, 1) == pytest.approx(0.623382, abs=1e-6)


def test_dG_dy3_examples():
    assert dG_dy3(1, 1, 0, 1, 1) == pytest.approx(2.0)
    assert dG_dy3(2, 4, 1, 1, 1) == pytest.approx(0.5 * math.e + 2 / math.e, rel=1e-14)
    assert dG_dy3(2, 4, 1, 1, 1) == pytest.approx(2.094900, abs=1e-6)


def test_theta_examples():
    assert theta_tau(3.0, 0.5) == 2.0
    assert theta_tau(1.0, 0.5) == 1.0
    assert theta_tau(-2.0, 0.5) == 0.0


def test_G_tau_examples():
    assert G_tau(1, 1, 0, 1, 1, 0.1) == pytest.approx(1 / 1.1 - 1, rel=1e-14)
    assert G_tau(1, 100, 0, 1, 1, 0.5) == pytest.approx(-1.6, rel=1e-14)
    assert G_tau(1.7, 0.0, 0.3, 1.5, 2.0, 0.2) == pytest.approx(1.7 * 0.2**-1.5 * math.exp(0.6))


def test_H_tau_examples():
    assert H_tau(3.0, 0.0, 2.0, 1, 1, 0.1) == 0.0
    assert H_tau(1, 1, 0, 1, 1, 0.1) == pytest.approx(1 / 1.1 - 1, rel=1e-14)
    assert H_tau(1, 4, 0, 1, 1, 0.1) == pytest.approx(2 * (1 / 4.1 - 4), rel=1e-14)
    assert H_tau(1, 4, 0, 1, 1, 0.1) == pytest.approx(-7.51220, abs=1e-5)
    # negative concentrations contribute nothing
    assert H_tau(1, -3.0, 1.0, 1, 1, 0.1) == 0.0


def test_S_e_examples():
    assert S_e(-1.0, 5.0, 0.0, 1.0, SEPARATOR, 1, 1, 1) == 0.0
    C, h, d, alpha2 = 2.5, 0.7, 1.3, 0.8
    y3 = (d * math.log(C) - math.log(h)) / alpha2
    assert abs(S_e(C, y3, 0.0, h, ANODE, alpha2, 1, d)) < 1e-12
    assert S_e(1.0, 1.0, 0.0, 1.0, CATHODE, 1, 2, 1) == pytest.approx(math.e - 1 / math.e, rel=1e-14)
    assert S_e(1.0, 1.0, 0.0, 1.0, CATHODE, 1, 2, 1) == pytest.approx(2.35040, abs=1e-5)
    with pytest.raises(KineticsDomainError):
        S_e(0.0, 1.0, 0.0, 1.0, ANODE, 1, 1, 1)


def test_S_e_vectorized_regions():
    regions = np.array([ANODE, SEPARATOR, CATHODE])
    C = np.array([1.0, -5.0, 1.0])
    out = S_e(C, 1.0, 0.0, 1.0, regions, 1, 2, 1)
    assert out[1] == 0.0 and out[0] == out[2] > 0


def test_domain_errors():
    with pytest.raises(KineticsDomainError):
        G(0.0, 1.0, 0.0, 1, 1)
    with pytest.raises(KineticsDomainError):
        G_tau(1.0, -1.0, 0.0, 1, 1, 0.1)
    with pytest.raises(KineticsDomainError):
        theta_tau(1.0, 1.0)
    with pytest.raises(KineticsDomainError):
        KineticsParams(d=1, alpha2=1, tau=0)


def test_saturation_warning():
    with pytest.warns(SaturationWarning):
        val = G(1.0, 1.0, 1000.0, 1, 1)
    assert val == pytest.approx(math.exp(700.0) - math.exp(-700.0))


@given(pos, pos, drop, dexp, a2)
def test_symmetry(y1, y2, y3, d, alpha2):
    g = G(y1, y2, y3, d, alpha2)
    assert G(1 / y1, 1 / y2, -y3, d, alpha2) == pytest.approx(-g, rel=1e-12, abs=1e-12)


@given(pos, pos, drop, drop, dexp, a2)
def test_monotone_in_y3(y1, y2, u, v, d, alpha2):
    lo, hi = min(u, v), max(u, v)
    gap = G(y1, y2, hi, d, alpha2) - G(y1, y2, lo, d, alpha2)
    assert gap >= 2 * alpha2 * (hi - lo) * (1 - 1e-12) - 1e-12
    gap_t = G_tau(y1, y2, hi, d, alpha2, 0.01) - G_tau(y1, y2, lo, d, alpha2, 0.01)
    assert gap_t >= -1e-12


@given(pos, pos, st.floats(1.001, 10), drop, dexp, a2)
def test_decreasing_in_y2(y1, y2, factor, y3, d, alpha2):
    assert G(y1, y2 * factor, y3, d, alpha2) < G(y1, y2, y3, d, alpha2)
    assert G_tau(y1, y2 * factor, y3, d, alpha2, 0.05) <= G_tau(y1, y2, y3, d, alpha2, 0.05)


@given(pos, pos, drop, dexp, a2)
def test_derivative_bounds(y1, y2, y3, d, alpha2):
    assert dG_dy3(y1, y2, y3, d, alpha2) >= 2 * alpha2 * (1 - 1e-14)
    assert dG_dy2(y1, y2, y3, d, alpha2) <= -2 * d / y2 * (1 - 1e-14)


@given(pos, pos, drop, dexp, a2)
def test_finite_differences(y1, y2, y3, d, alpha2):
    h = 1e-5
    fd3 = (G(y1, y2, y3 + h, d, alpha2) - G(y1, y2, y3 - h, d, alpha2)) / (2 * h)
    exact3 = dG_dy3(y1, y2, y3, d, alpha2)
    assert abs(fd3 - exact3) <= 1e-6 * max(1.0, abs(exact3))
    h2 = 1e-5 * y2
    fd2 = (G(y1, y2 + h2, y3, d, alpha2) - G(y1, y2 - h2, y3, d, alpha2)) / (2 * h2)
    exact2 = dG_dy2(y1, y2, y3, d, alpha2)
    assert abs(fd2 - exact2) <= 1e-6 * max(1.0, abs(exact2))


@given(pos, pos, dexp, a2)
def test_root_formula(y1, y2, d, alpha2):
    r = G_root(y1, y2, d, alpha2)
    scale = y1 * y2**-d * math.exp(alpha2 * r)
    assert abs(G(y1, y2, r, d, alpha2)) <= 1e-12 * max(1.0, scale)


@given(st.floats(0.1, 5), st.floats(0.1, 50), st.floats(-2, 2), dexp)
def test_regularized_converges(y1, y2, y3, d):
    exact = G(y1, y2, y3, d, 1.0)
    errs = [abs(G_tau(y1, y2, y3, d, 1.0, t) - exact) for t in (1e-1, 1e-2, 1e-3)]
    assert errs[0] >= errs[1] >= errs[2]
