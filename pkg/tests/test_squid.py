import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from fluxtune.constants import PHI0
from fluxtune.errors import (
    DivergenceError,
    DomainError,
    NoSolutionError,
    PreconditionError,
)
from fluxtune.squid import (
    ScreeningPoint,
    SquidParams,
    Stability,
    branch_switching_onset,
    circulating_current,
    fluxoid_residual,
    fold_threshold,
    josephson_inductance,
    junction_currents,
    multivalued_onset,
    potential,
    reduced_circulating_current,
    screening_curve,
    screening_map_is_monotone,
    solve_ground_phase,
    solve_screening,
    squid_inductance,
    terminal_phase,
    transport_decomposition,
)

alphas = st.floats(0.0, 0.95)
betas = st.floats(0.0, 0.6)
phis = st.floats(-math.pi / 2 + 1e-6, math.pi / 2 - 1e-6)


# --- junction relations -----------------------------------------------------


def test_junction_currents_examples():
    assert junction_currents(SquidParams(375e-9, 1 / 3)) == pytest.approx((500e-9, 250e-9))
    assert junction_currents(SquidParams(400e-9, 0.0)) == pytest.approx((400e-9, 400e-9))
    assert junction_currents(SquidParams(400e-9, 0.33)) == pytest.approx((532e-9, 268e-9))


def test_junction_currents_rejects_out_of_range_alpha():
    with pytest.raises(DomainError):
        junction_currents(SquidParams(400e-9, 1.0))
    with pytest.raises(DomainError):
        SquidParams(400e-9, 1.5)


def test_beta_and_derived():
    sq = SquidParams(400e-9, 0.33, 697e-12, 10e-15, 20e-15)
    assert sq.beta_L == pytest.approx(2 * 697e-12 * 400e-9 / PHI0)
    assert sq.C_S == pytest.approx(30e-15)
    assert SquidParams.from_beta(0.27, 400e-9).beta_L == pytest.approx(0.27)


def test_josephson_inductance_examples():
    assert josephson_inductance(500e-9, 0.0) == pytest.approx(658e-12, rel=0.02)
    assert josephson_inductance(400e-9, 0.0) == pytest.approx(823e-12, rel=0.005)
    with pytest.raises(DivergenceError):
        josephson_inductance(400e-9, math.pi / 2)


def test_squid_inductance_examples():
    ls200 = squid_inductance(SquidParams(400e-9, 0.33, 697e-12), (0.0, 0.0))
    assert ls200.Ls == pytest.approx(600e-12, rel=0.02)
    ls10 = squid_inductance(SquidParams(452e-9, 0.33, 10.8e-12), (0.0, 0.0))
    assert ls10.Ls == pytest.approx(364e-12, rel=0.02)
    sym = squid_inductance(SquidParams(400e-9, 0.0, 0.0), (0.0, 0.0))
    assert sym.Ls == pytest.approx(josephson_inductance(400e-9, 0.0) / 2, rel=1e-14)


@given(alphas, st.floats(0, 2e-9), st.floats(-1.2, 1.2))
def test_squid_inductance_invariants(a, lg, phi):
    sq = SquidParams(400e-9, a, lg)
    d1, d2 = -0.2 + phi * 0.5, -0.2 - phi * 0.5
    ind = squid_inductance(sq, (d1, d2))
    assert ind.Larm1 == pytest.approx(ind.Lj1 + lg / 2)
    assert ind.Larm2 == pytest.approx(ind.Lj2 + lg / 2)
    if ind.Larm1 > 0 and ind.Larm2 > 0:
        assert ind.Ls <= min(ind.Larm1, ind.Larm2) * (1 + 1e-12)


@given(alphas, phis)
def test_label_exchange_leaves_ls_unchanged(a, phi):
    sq = SquidParams(400e-9, a, 500e-12)
    pt = solve_screening(0.0, sq)  # any bias; use explicit deltas below
    d1, d2 = 0.1 + phi / 3, 0.1 - phi / 3
    ls = squid_inductance(sq, (d1, d2)).Ls
    # exchanging junction labels maps varphi -> -varphi, i.e. delta1 <-> delta2
    ls_sw = squid_inductance(sq.swapped(), (d2, d1)).Ls
    assert ls_sw == pytest.approx(ls, rel=1e-13)
    assert pt.residual == pytest.approx(0, abs=1e-12)


# --- effective junction -----------------------------------------------------


def test_transport_decomposition_examples():
    sq = SquidParams(400e-9, 0.3)
    ej = transport_decomposition(0.0, sq)
    assert ej.R == pytest.approx(800e-9) and ej.psi0 == 0.0
    ej = transport_decomposition(math.pi / 2, sq)
    assert ej.R == pytest.approx(2 * 400e-9 * 0.3) and ej.psi0 == pytest.approx(math.pi / 2)


def test_transport_identity_at_random_terminal_phases(rng):
    sq = SquidParams(400e-9, 0.3)
    ej = transport_decomposition(math.pi / 4, sq)
    for pl in rng.uniform(-math.pi, math.pi, 20):
        lhs = sq.Ic1 * math.sin(pl + math.pi / 4) + sq.Ic2 * math.sin(pl - math.pi / 4)
        assert abs(lhs - ej.R * math.sin(pl + ej.psi0)) < 1e-12 * 2 * sq.I0


def test_transport_identity_many_triples(rng):
    pl, phi, a = rng.uniform(-np.pi, np.pi, (3, 10_000))
    a = np.abs(a) / np.pi
    lhs = (1 + a) * np.sin(pl + phi) + (1 - a) * np.sin(pl - phi)
    D = np.sqrt(np.cos(phi) ** 2 + a * a * np.sin(phi) ** 2)
    psi0 = np.arctan2(a * np.sin(phi), np.cos(phi))
    assert np.max(np.abs(lhs - 2 * D * np.sin(pl + psi0))) < 1e-12 * 2
    for i in range(0, 10_000, 997):
        ej = transport_decomposition(phi[i], SquidParams(1.0, a[i]))
        assert ej.D == pytest.approx(D[i], rel=1e-14)
        assert a[i] - 1e-15 <= ej.D <= 1 + 1e-15


def test_terminal_phase_examples():
    sq = SquidParams(400e-9, 0.3)
    assert terminal_phase(0.0, 0.0, 0, sq) == 0.0
    phi = 0.7
    assert terminal_phase(0.0, phi, 0, sq) == pytest.approx(-transport_decomposition(phi, sq).psi0)
    phi = math.pi / 3
    R = transport_decomposition(phi, sq).R
    for n in (0, 1):
        pl = terminal_phase(0.5 * R, phi, n, sq)
        back = sq.Ic1 * math.sin(pl + phi) + sq.Ic2 * math.sin(pl - phi)
        assert back == pytest.approx(0.5 * R, rel=1e-12)
    with pytest.raises(NoSolutionError):
        terminal_phase(1.01 * R, phi, 0, sq)


# --- circulating current ----------------------------------------------------


def test_circulating_current_examples():
    assert circulating_current(0.0, SquidParams(1.0, 0.3)) == 0.0
    for phi in np.linspace(-3, 3, 13):
        assert circulating_current(phi, SquidParams(1.0, 1.0)) == pytest.approx(0.0, abs=1e-15)
    val = circulating_current(math.pi / 4, SquidParams(1.0, 0.3), screening_sign=1)
    expected = 0.91 * math.sin(math.pi / 4) / math.sqrt(1 + 0.09)
    assert val == pytest.approx(expected, rel=1e-12)
    assert val == pytest.approx(0.616, abs=5e-4)


@given(alphas, phis, st.sampled_from([1, -1]))
def test_general_form_equals_reduced_form_at_zero_transport(a, phi, sign):
    sq = SquidParams(1.0, a)
    gen = circulating_current(phi, sq, 0.0, sign)
    red = reduced_circulating_current(phi, sq, sign)
    assert gen == pytest.approx(red, rel=1e-12, abs=1e-15)


@given(alphas, phis)
def test_circulating_current_is_odd(a, phi):
    sq = SquidParams(1.0, a)
    assert circulating_current(-phi, sq) == pytest.approx(-circulating_current(phi, sq), abs=1e-15)


def test_general_form_matches_junction_currents_with_transport():
    sq = SquidParams(400e-9, 0.3)
    phi, I = 0.6, 0.4 * transport_decomposition(0.6, sq).R
    pl = terminal_phase(I, phi, 0, sq)
    direct = 0.5 * (sq.Ic1 * math.sin(pl + phi) - sq.Ic2 * math.sin(pl - phi))
    assert circulating_current(phi, sq, I, 1) == pytest.approx(direct, rel=1e-12)


# --- screening solver -------------------------------------------------------


@given(alphas, st.floats(-2, 2))
def test_no_screening_without_inductance(a, x):
    pt = solve_screening(x * PHI0, SquidParams(400e-9, a, 0.0))
    assert pt.Phi_s == pytest.approx(x * PHI0, rel=1e-14, abs=1e-30)


@given(betas, st.floats(-2, 2))
def test_no_screening_for_single_junction(b, x):
    sq = SquidParams.from_beta(b, 400e-9, 1.0)
    pt = solve_screening(x * PHI0, sq)
    assert pt.Phi_s == pytest.approx(x * PHI0, rel=1e-14, abs=1e-30)


def test_screened_flux_frozen_value():
    sq = SquidParams(400e-9, 0.33, 697e-12)
    pt = solve_screening(0.25 * PHI0, sq)
    # independent oracle: bisection of the reduced equation on (0, pi/2)
    b, a = sq.beta_L, sq.alpha

    def h(p):
        return 2 * p + np.pi * b * (1 - a * a) * np.sin(p) * np.cos(p) / np.sqrt(
            np.cos(p) ** 2 + a * a * np.sin(p) ** 2) - np.pi / 2

    oracle = optimize.bisect(h, 0, np.pi / 2, xtol=1e-15)
    assert pt.Phi_s / PHI0 == pytest.approx(oracle / np.pi, abs=1e-13)
    assert pt.Phi_s / PHI0 == pytest.approx(0.185415403650392, abs=1e-12)


@given(st.floats(0.05, 0.95), st.floats(0.0, 0.6), st.integers(-2, 2))
def test_half_flux_is_a_fixed_point_of_the_fixed_sign_equation(a, b, k):
    sq = SquidParams.from_beta(b, 400e-9, a)
    pt = solve_screening((k + 0.5) * PHI0, sq, screening_sign=1, m=-k, seed=math.pi / 2)
    assert pt.Phi_s / PHI0 == pytest.approx(k + 0.5, abs=1e-12)


@given(alphas, betas, st.integers(-3, 3))
def test_integer_flux_is_a_fixed_point(a, b, k):
    sq = SquidParams.from_beta(b, 400e-9, a)
    assert solve_screening(k * PHI0, sq).Phi_s / PHI0 == pytest.approx(k, abs=1e-12)


@given(alphas, betas, st.floats(-0.49, 0.49))
def test_ground_state_odd_about_half_flux(a, b, x):
    sq = SquidParams.from_beta(b, 400e-9, a)
    lo = solve_screening((0.5 - abs(x)) * PHI0 * 0.999, sq).Phi_s
    hi = solve_screening((0.5 + abs(x)) * PHI0 * 0.999 + 0.001 * PHI0, sq).Phi_s
    # mirror of Phi_e about Phi0/2 maps the screened flux the same way
    mirror = solve_screening(PHI0 - (0.5 - abs(x)) * PHI0 * 0.999, sq).Phi_s
    assert lo + mirror == pytest.approx(PHI0, abs=1e-12 * PHI0)
    assert np.isfinite(hi)


@given(alphas, betas, st.floats(-1, 1), st.integers(-2, 2))
def test_screening_periodicity(a, b, x, k):
    sq = SquidParams.from_beta(b, 400e-9, a)
    x = x if abs(abs(x) % 1 - 0.5) > 1e-6 else x + 1e-3
    p0 = solve_screening(x * PHI0, sq)
    pk = solve_screening((x + k) * PHI0, sq)
    assert pk.Phi_s - p0.Phi_s == pytest.approx(k * PHI0, abs=1e-12 * PHI0)


@given(alphas, betas, st.floats(-1.5, 1.5), st.sampled_from([None, 1, -1]))
def test_solution_invariants(a, b, x, sign):
    sq = SquidParams.from_beta(b, 400e-9, a)
    pt = solve_screening(x * PHI0, sq, screening_sign=sign)
    assert pt.delta1 == pt.phi_l + pt.varphi
    assert pt.delta2 == pt.phi_l - pt.varphi
    assert pt.Phi_s == pytest.approx(pt.Phi_e - sq.Lg * pt.I_circ, abs=1e-14 * PHI0)
    assert abs(pt.residual) < 1e-12 * max(1.0, abs(2 * np.pi * (x + pt.m)))
    assert abs(fluxoid_residual(pt.varphi, pt.Phi_e, pt.m, sq, i_circ=pt.I_circ)) < 1e-11


@given(alphas, st.floats(0.01, 0.6), st.floats(-1.5, 1.5))
def test_solver_nulls_potential_gradient(a, b, x):
    sq = SquidParams.from_beta(b, 400e-9, a)
    pt = solve_screening(x * PHI0, sq)
    ps = potential(pt.phi_l, pt.varphi, pt.Phi_e, pt.m, 0.0, sq)
    assert max(abs(ps.grad[0]), abs(ps.grad[1])) < 1e-10


def test_vectorised_ground_phase_matches_scalar_solver():
    sq = SquidParams(400e-9, 0.33, 697e-12)
    grid = np.linspace(-1.4, 1.4, 57) * PHI0
    phi, m = solve_ground_phase(grid, sq)
    for x, p, mm in zip(grid, phi, m):
        pt = solve_screening(x, sq)
        assert mm == pt.m
        assert p == pytest.approx(pt.varphi, abs=1e-12)


# --- screening curves -------------------------------------------------------


def test_screening_curve_identity_without_inductance():
    grid = np.linspace(-1, 1, 41) * PHI0
    curve = screening_curve(grid, SquidParams(400e-9, 0.3, 0.0))
    assert np.allclose(curve.Phi_s, grid, rtol=0, atol=1e-14 * PHI0)
    assert not curve.has_fold


def test_screening_curve_below_onset_is_monotone():
    grid = np.linspace(0, 1, 401) * PHI0
    curve = screening_curve(grid, SquidParams.from_beta(0.3, 400e-9, 0.0))
    assert np.all(np.diff(curve.Phi_s) > 0)
    assert not curve.has_fold


def test_screening_curve_above_onset_reports_fold():
    grid = np.linspace(0, 1, 401) * PHI0
    curve = screening_curve(grid, SquidParams.from_beta(0.8, 400e-9, 0.0))
    assert curve.has_fold
    assert curve.multivalued_intervals


def test_multivalued_onset_symmetric():
    assert multivalued_onset(0.0) == pytest.approx(2 / math.pi, abs=1e-4)
    assert fold_threshold(0.0) == pytest.approx(2 / math.pi)


@given(st.floats(0.0, 1.5))
def test_monotone_iff_below_two_over_pi(b):
    if abs(b - 2 / math.pi) < 1e-9:
        return
    assert screening_map_is_monotone(b, 0.0) == (b <= 2 / math.pi)


@given(st.floats(0.05, 0.9))
def test_asymmetric_onset_matches_closed_form(a):
    assert multivalued_onset(a) == pytest.approx(fold_threshold(a), rel=1e-6)


# --- potential landscape ----------------------------------------------------


def test_potential_examples():
    sq = SquidParams.from_beta(0.3, 400e-9, 0.0)
    assert potential(0, 0, 0, 0, 0, sq).u == pytest.approx(-2)
    assert potential(0, math.pi / 2, 0.5 * PHI0, 0, 0, sq).u == pytest.approx(0, abs=1e-15)
    with pytest.raises(DomainError):
        potential(0, 0, 0, 0, 0, SquidParams(400e-9, 0.0, 0.0))


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-1, 1), alphas, st.floats(0.05, 2), st.floats(-0.5, 0.5))
def test_potential_derivatives_match_finite_differences(pl, ph, x, a, b, i):
    sq = SquidParams.from_beta(b, 400e-9, a)
    I = i * sq.I0
    h = 1e-5

    def u(p, q):
        return potential(p, q, x * PHI0, 0, I, sq).u

    ps = potential(pl, ph, x * PHI0, 0, I, sq)
    g = ((u(pl + h, ph) - u(pl - h, ph)) / (2 * h), (u(pl, ph + h) - u(pl, ph - h)) / (2 * h))
    assert ps.grad[0] == pytest.approx(g[0], rel=1e-6, abs=1e-7)
    assert ps.grad[1] == pytest.approx(g[1], rel=1e-6, abs=1e-7)
    hh = 1e-4
    H = np.array([
        [(u(pl + hh, ph) - 2 * u(pl, ph) + u(pl - hh, ph)) / hh**2,
         (u(pl + hh, ph + hh) - u(pl + hh, ph - hh) - u(pl - hh, ph + hh) + u(pl - hh, ph - hh)) / (4 * hh**2)],
        [0.0, (u(pl, ph + hh) - 2 * u(pl, ph) + u(pl, ph - hh)) / hh**2],
    ])
    H[1, 0] = H[0, 1]
    scale = max(1.0, np.abs(ps.hessian).max())
    assert np.allclose(ps.hessian, H, rtol=1e-6, atol=1e-5 * scale)
    assert ps.stable == (ps.det_h > 0 and ps.hessian[0, 0] > 0 and ps.hessian[1, 1] > 0)


def test_landscape_at_half_flux_is_a_double_well():
    sq = SquidParams.from_beta(0.3, 400e-9, 0.3)
    n = 101
    pls = np.linspace(-np.pi, np.pi, n, endpoint=False)
    phs = np.linspace(-np.pi / 2, 3 * np.pi / 2, n)

    def u(v):
        return potential(v[0], v[1], 0.5 * PHI0, 0, 0.0, sq).u

    def grad(v):
        return np.array(potential(v[0], v[1], 0.5 * PHI0, 0, 0.0, sq).grad)

    U = np.array([[u((a, b)) for b in phs] for a in pls])
    found = set()
    for i in range(n):
        for j in range(1, n - 1):
            block = U[[(i - 1) % n, i, (i + 1) % n]][:, j - 1:j + 2]
            if U[i, j] < np.delete(block.ravel(), 4).min():
                r = optimize.minimize(u, [pls[i], phs[j]], jac=grad, method="BFGS", options={"gtol": 1e-12})
                pl = (r.x[0] + np.pi) % (2 * np.pi) - np.pi
                found.add((round(pl, 5), round(r.x[1], 5)))
    mins = sorted(found, key=lambda p: p[1])
    assert len(mins) == 2
    # the two wells mirror about varphi = pi/2
    assert mins[0][1] + mins[1][1] == pytest.approx(math.pi, abs=1e-4)
    assert mins[0][1] == pytest.approx(1.281169, abs=1e-4)
    for pl, ph in mins:
        assert potential(pl, ph, 0.5 * PHI0, 0, 0.0, sq).stable
    saddle = solve_screening(0.5 * PHI0, sq, screening_sign=1, m=0, seed=math.pi / 2)
    assert saddle.varphi == pytest.approx(math.pi / 2, abs=1e-12)
    assert branch_switching_onset(sq, saddle) is Stability.UNSTABLE


# --- branch switching -------------------------------------------------------


def test_marginal_at_onset_screening():
    sq = SquidParams.from_beta(2 / math.pi, 400e-9, 0.0)
    pt = ScreeningPoint.from_phases(sq, 0.0, math.pi, PHI0, m=0)
    assert branch_switching_onset(sq, pt) is Stability.MARGINAL


def test_all_states_stable_below_onset():
    sq = SquidParams.from_beta(0.3, 400e-9, 0.0)
    for x in np.linspace(0, 1, 101):
        pt = solve_screening(x * PHI0, sq)
        assert branch_switching_onset(sq, pt) is Stability.STABLE


def test_unstable_state_exists_above_onset():
    sq = SquidParams.from_beta(1.0, 400e-9, 0.0)
    labels = set()
    for x in np.linspace(0.85, 1.0, 7):
        for seed in np.linspace(-np.pi, 2 * np.pi, 13):
            for sign in (1, -1):
                pt = solve_screening(x * PHI0, sq, screening_sign=sign, m=0, seed=seed)
                labels.add(branch_switching_onset(sq, pt))
    assert Stability.UNSTABLE in labels and Stability.STABLE in labels


def test_onset_rejects_non_stationary_points():
    sq = SquidParams.from_beta(0.3, 400e-9, 0.2)
    pt = ScreeningPoint.from_phases(sq, 0.3, 0.4, 0.1 * PHI0)
    with pytest.raises(PreconditionError):
        branch_switching_onset(sq, pt)
