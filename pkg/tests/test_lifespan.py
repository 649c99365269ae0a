import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cellspan.lifespan import (
    AprioriParams,
    DeGiorgiDivergence,
    amplitude_certificate,
    degiorgi_iterate,
    degiorgi_threshold,
    epsilon0,
    f_eps,
    g_of_T,
    gamma_exponent,
    lifespan_pipeline,
    log_epsilon0,
    lower_bound_estimate,
    solve_s0,
    solve_Tmax,
    tmax_sweep,
    upper_bound_estimate,
)

# high-precision oracles, independent of the float code paths
mp.mp.dps = 40


def _mp_s0(m, delta):
    m, delta = mp.mpf(m), mp.mpf(delta)
    return mp.findroot(lambda s: 1 / (m * (1 + delta) * s**delta) - s + m, m + mp.mpf("0.1"))


def _mp_tmax(eps0, c, b1):
    # branch 1 dominates for T < 1 when d = 1, q = 4, N = 3
    f = lambda T: c * ((1 + T) ** mp.mpf("1.2") * T**b1) ** 2 - eps0  # noqa: E731
    return mp.findroot(f, (mp.mpf("1e-12"), mp.mpf(1)), solver="bisect")


# --------------------------------------------------------------------------
# De Giorgi


def test_threshold_examples():
    assert degiorgi_threshold(1, 2, 1) == 0.5
    assert degiorgi_threshold(4, 4, 0.5) == pytest.approx(1 / 4096, rel=1e-15)
    assert degiorgi_threshold(1, 1 + 1e-12, 1) == pytest.approx(1.0, abs=1e-11)
    with pytest.raises(ValueError):
        degiorgi_threshold(1, 1, 1)


def test_orbit_closed_form():
    y = degiorgi_iterate(0.5, 1, 2, 1, 12)
    np.testing.assert_allclose(y, 2.0 ** -(np.arange(13) + 1), rtol=1e-14)


def test_orbit_at_threshold_decays():
    y0 = degiorgi_threshold(1, 2, 1)
    assert degiorgi_iterate(y0, 1, 2, 1, 60)[-1] < y0 * 1e-6


@given(st.floats(0.1, 10), st.floats(1.1, 8), st.floats(0.2, 2), st.floats(0.05, 1.0))
def test_orbit_below_threshold_decays(c, b, alpha, frac):
    y0 = frac * degiorgi_threshold(c, b, alpha)
    assert degiorgi_iterate(y0, c, b, alpha, 60)[-1] < y0 * 1e-6


def test_orbit_divergence():
    with pytest.raises(DeGiorgiDivergence):
        degiorgi_iterate(10, 1, 2, 1, 60)


# --------------------------------------------------------------------------
# amplitude inequality


def test_s0_closed_forms():
    assert solve_s0(1, 1) == pytest.approx((1 + math.sqrt(3)) / 2, rel=1e-14)
    assert solve_s0(2, 1) == pytest.approx((8 + math.sqrt(80)) / 8, rel=1e-14)


@given(st.floats(0.01, 20), st.floats(0.01, 10))
def test_s0_residual_and_bracket(m, delta):
    s = solve_s0(m, delta)
    assert s >= m
    if m + 1 / (m * (1 + delta) * m**delta) > m:
        assert s > m or 1 / (m * (1 + delta) * m**delta) < 4 * np.spacing(m)
    assert abs(1 / (m * (1 + delta) * s**delta) - s + m) <= 1e-12 * max(1.0, s)


def test_s0_matches_mpmath():
    for m, delta in [(1, 4.4), (0.5, 2.0), (3.0, 0.3)]:
        assert solve_s0(m, delta) == pytest.approx(float(_mp_s0(m, delta)), rel=1e-14)


def test_epsilon0_example():
    s0 = (1 + math.sqrt(3)) / 2
    ref = 1 / (2 * math.exp(1 + math.sqrt(3) / 2) * s0)
    assert epsilon0(1, 1, s0) == pytest.approx(ref, rel=1e-14)
    assert epsilon0(1, 1, s0) == pytest.approx(0.0566381, abs=1e-6)


def test_f_eps_tangency():
    m, delta = 1.0, 4.4
    s0 = solve_s0(m, delta)
    le = log_epsilon0(m, delta, s0)
    f, df = f_eps(s0, m, delta, le)
    assert abs(f) < 1e-12 and abs(df) < 1e-12
    for s in (0.5 * s0, 2 * s0):
        assert f_eps(s, m, delta, le)[0] > 0


def test_epsilon0_log_form_survives_underflow():
    s0 = solve_s0(50, 4.4)
    le = log_epsilon0(50, 4.4, s0)
    assert math.isfinite(le) and le < -745
    assert epsilon0(50, 4.4, s0) == 0.0


# --------------------------------------------------------------------------
# exponents and horizon


def test_gamma_examples():
    assert gamma_exponent(4, 3, 1, 1) == pytest.approx(5.4, abs=1e-15)
    assert gamma_exponent(4, 3, 1, 1e-12) == pytest.approx(2.5, abs=1e-10)
    with pytest.raises(ValueError):
        gamma_exponent(1, 3, 1, 1)


def test_g_examples():
    assert g_of_T(0, 4, 3, 1) == 0.0
    assert g_of_T(1, 4, 3, 1) == pytest.approx(2 ** 1.2, rel=1e-15)
    with pytest.raises(ValueError):
        g_of_T(1, 2, 3, 1)
    with pytest.raises(ValueError):
        g_of_T(1, 4, 3, 0.5)


def test_g_monotone(rng):
    T = np.sort(rng.uniform(0, 50, (100, 2)), axis=1)
    T = T[T[:, 0] < T[:, 1]]
    for q, N, d in [(4, 3, 1), (3, 2, 0.8), (6, 3, 2.5)]:
        assert np.all(g_of_T(T[:, 1], q, N, d) > g_of_T(T[:, 0], q, N, d))


@given(st.floats(-60, 20), st.floats(0.01, 100))
def test_tmax_inverts_g(log_eps, c):
    T = solve_Tmax(None, c, 4, 3, 1, log_eps0=log_eps)
    lhs = math.log(c) + 2 * math.log(g_of_T(T, 4, 3, 1))
    assert abs(math.expm1(lhs - log_eps)) <= 1e-12


def test_tmax_worked_example():
    eps = 1 / (2 * math.exp(1 + math.sqrt(3) / 2) * (1 + math.sqrt(3)) / 2)
    T = solve_Tmax(eps, 1, 4, 3, 1)
    assert g_of_T(T, 4, 3, 1) == pytest.approx(math.sqrt(eps), rel=1e-12)
    assert g_of_T(T, 4, 3, 1) == pytest.approx(0.23799, abs=1e-5)
    assert T == pytest.approx(8.1e-3, rel=0.02)
    assert T == pytest.approx(float(_mp_tmax(mp.mpf(eps), 1, mp.mpf("0.3"))), rel=1e-10)


# --------------------------------------------------------------------------
# pipeline


def test_pipeline_defaults():
    rep = lifespan_pipeline(AprioriParams())
    assert rep.gamma == pytest.approx(5.4, abs=1e-15)
    assert rep.delta == pytest.approx(4.4, abs=1e-15)
    assert rep.m == 1.0
    assert all(v <= 1e-10 for v in rep.residuals.values())
    s0 = float(_mp_s0(1, mp.mpf(rep.delta)))
    assert rep.s0 == pytest.approx(s0, rel=1e-14)
    eps = 1 / (1 * (1 + mp.mpf(rep.delta)) * mp.e ** (mp.mpf(s0) ** (1 + mp.mpf(rep.delta))) * mp.mpf(s0) ** mp.mpf(rep.delta))
    assert rep.eps0 == pytest.approx(float(eps), rel=1e-12)
    assert rep.Tmax == pytest.approx(float(_mp_tmax(eps, 1, mp.mpf("0.3"))), rel=1e-10)
    # frozen values from the oracle above
    assert rep.s0 == pytest.approx(1.1147996, abs=1e-7)
    assert rep.eps0 == pytest.approx(0.0190085, abs=1e-7)
    assert rep.Tmax == pytest.approx(1.3466e-3, rel=1e-4)


def test_report_lines_round_trip():
    rep = lifespan_pipeline(AprioriParams())
    kv = dict(line.split("=") for line in rep.as_lines())
    assert float(kv["Tmax"]) == rep.Tmax
    assert {"gamma", "delta", "m", "s0", "eps0", "log_eps0", "residual_s0_equation"} <= kv.keys()


def test_sensitivities():
    c_reps = tmax_sweep(AprioriParams(), "c", [0.5, 1, 2, 4])
    T = [r.Tmax for r in c_reps]
    assert all(b < a for a, b in zip(T, T[1:]))
    a_reps = tmax_sweep(AprioriParams(), "alpha0", [1.0, 2.0])
    assert a_reps[1].gamma > a_reps[0].gamma and a_reps[1].Tmax < a_reps[0].Tmax


def test_fixed_m_sweep_over_c():
    reps = tmax_sweep(AprioriParams(m=1.0), "c", [1.0, 2.0])
    assert reps[0].m == reps[1].m == 1.0
    assert reps[1].Tmax < reps[0].Tmax


def test_apriori_validation():
    with pytest.raises(ValueError, match="q="):
        AprioriParams(q=2.0)
    with pytest.raises(ValueError, match="d="):
        AprioriParams(d=0.5)
    with pytest.raises(ValueError):
        AprioriParams(N=2.5)


# --------------------------------------------------------------------------
# certificate and bounds


def test_certificate():
    rep = lifespan_pipeline(AprioriParams(m=1.0, c=1.0))
    assert np.all(amplitude_certificate(np.ones(5), rep))
    a = np.linspace(1.0, 2.0, 11)
    flags = amplitude_certificate(a, rep)
    first = np.argmax(~flags)
    assert np.all(flags[:first]) and not np.any(flags[first:])
    assert a[first] >= rep.s0 > a[first - 1]


def test_upper_bound_examples():
    assert upper_bound_estimate(1, 4, 3, 1, 1, 1) == pytest.approx(2 ** 1.2 + 6, rel=1e-14)
    assert upper_bound_estimate(1, 4, 3, 1, 1, 1) == pytest.approx(8.2974, abs=1e-4)
    assert upper_bound_estimate(0, 4, 3, 1, 1, 3.0) == 14.0
    assert upper_bound_estimate(1e-14, 4, 3, 1, 1, 3.0) == pytest.approx(14.0, abs=1e-3)


def test_lower_bound_limits():
    assert lower_bound_estimate(0, 4, 3, 1, 1, 0.0, 0.25) == 4.0
    assert lower_bound_estimate(1, 4, 3, 1, 2.0, 1.0, 0.5) == pytest.approx(2 + 2 * 2 ** 1.2, rel=1e-14)
    with pytest.raises(ValueError):
        lower_bound_estimate(1, 4, 3, 1, 1, 1, 0.0)
