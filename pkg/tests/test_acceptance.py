"""Acceptance suite: one PASS/FAIL line per criterion, with sub-checks.

Run with ``pytest tests/test_acceptance.py -v``; lines go straight to the
terminal.  A criterion that is not met fails its test.
"""

import math
import time

import numpy as np
import pytest
from conftest import CPW_10, CPW_100, CPW_200

from fluxtune.constants import HBAR, PHI0
from fluxtune.ftr import (
    CpwParams,
    FtrParams,
    fit_tuning_curve,
    participation_ratio,
    tuning_curve,
)
from fluxtune.magnetics import (
    FluxCalibration,
    TransferChain,
    chain_efficiency,
    efficiency_sweep,
    neumann_mutual,
    square_coil_self_inductance,
    square_loop,
    transfer_efficiency,
)
from fluxtune.s21 import (
    DuffingParams,
    ResonatorFit,
    TlsModel,
    cubic_discriminant,
    duffing_roots,
    extract_period,
    fit_kerr_power_sweep,
    fit_linear_resonance,
    fit_tls,
    s21_linear,
    s21_nonlinear,
    tls_qi,
)
from fluxtune.squid import (
    SquidParams,
    josephson_inductance,
    multivalued_onset,
    squid_inductance,
)
from fluxtune.synth import NoiseSpec, gen_flux_map, gen_linear_trace, gen_power_sweep

PH = 1e-12
GHZ = 2 * np.pi * 1e9
TP = 2 * np.pi


class Criterion:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.checks = []

    def check(self, name, value, target, ok, unit=""):
        self.checks.append((name, value, target, bool(ok), unit))

    @property
    def passed(self):
        return all(c[3] for c in self.checks)

    def lines(self):
        out = [f"{'PASS' if self.passed else 'FAIL'} criterion {self.number}: {self.title}"]
        for name, value, target, ok, unit in self.checks:
            out.append(f"    {'ok  ' if ok else 'MISS'} {name}: {value:.6g}{unit} (target {target})")
        return out


@pytest.fixture
def criterion(capsys):
    made = []

    def make(number, title):
        c = Criterion(number, title)
        made.append(c)
        return c

    yield make
    with capsys.disabled():
        for c in made:
            print()
            print("\n".join(c.lines()))


def within(value, target, rel):
    return abs(value / target - 1) <= rel


def rel_err(a, b):
    return abs(a / b - 1)


# --- 1 ----------------------------------------------------------------------


def test_criterion_1_inductance_golden_set(criterion):
    c = criterion(1, "inductance golden set")
    lj = josephson_inductance(400e-9, 0.0)
    c.check("L_J(400 nA, 0)", lj / PH, "823 pH +-0.5%", within(lj, 823 * PH, 0.005), " pH")
    ls200 = squid_inductance(SquidParams(400e-9, 0.33, 697e-12), (0.0, 0.0)).Ls
    c.check("L_S 200 um column", ls200 / PH, "600 pH +-2.5%", within(ls200, 600 * PH, 0.025), " pH")
    ls10 = squid_inductance(SquidParams(452e-9, 0.33, 10.8e-12), (0.0, 0.0)).Ls
    c.check("L_S 10 um column", ls10 / PH, "364 pH +-2.5%", within(ls10, 364 * PH, 0.025), " pH")
    beta = SquidParams(400e-9, 0.0, 697e-12).beta_L
    c.check("beta_L(697 pH, 400 nA)", beta, "0.27 +-0.01", abs(beta - 0.27) <= 0.01)
    assert c.passed, "; ".join(l.strip() for l in c.lines() if "MISS" in l)


# --- 2 ----------------------------------------------------------------------


def test_criterion_2_modal_golden_set(criterion):
    c = criterion(2, "modal golden set")
    for col, f0 in ((CPW_200, 9.008), (CPW_100, 8.534), (CPW_10, 8.843)):
        w0 = CpwParams.from_modal(**col).omega0 / GHZ
        c.check(f"f0 (L_r={col['L_r'] / PH:g} pH)", w0, f"{f0} GHz +-0.1%", within(w0, f0, 1e-3), " GHz")
    devices = (
        (CPW_200, SquidParams(400e-9, 0.33, 697e-12), 0.55),
        (CPW_100, SquidParams(400e-9, 0.33, 331e-12), 0.43),
        (CPW_10, SquidParams(452e-9, 0.33, 10.8e-12), 0.33),
    )
    for col, sq, g in devices:
        gamma = participation_ratio(squid_inductance(sq, (0.0, 0.0)).Ls, CpwParams.from_modal(**col))
        c.check(f"gamma (Lg={sq.Lg / PH:g} pH)", gamma, f"{g} +-0.02", abs(gamma - g) <= 0.02)
    assert c.passed, "; ".join(l.strip() for l in c.lines() if "MISS" in l)


# --- 3 ----------------------------------------------------------------------


def test_criterion_3_screening_and_branches(criterion):
    c = criterion(3, "screening and branch behaviour")
    onset = multivalued_onset(0.0)
    c.check("multivalued onset at alpha=0", onset, "2/pi +-1e-3", abs(onset - 2 / math.pi) <= 1e-3)

    ftr = FtrParams(CpwParams.from_modal(**CPW_200), SquidParams.from_beta(0.27, 400e-9, 0.33))
    x = np.linspace(-1.5, 1.5, 601)
    curve = tuning_curve(ftr, x * PHI0)
    f = curve.omega_r / TP
    c.check("frequency jumps over 3 periods", len(curve.frequency_jumps), "0", not curve.frequency_jumps)
    even = np.max(np.abs(f - f[::-1]) / f)
    c.check("evenness, max |f(x)-f(-x)|/f", even, "<= 1e-9", even <= 1e-9)
    per = np.max(np.abs(f[:401] - f[200:]) / f[200:])
    c.check("periodicity, max |f(x)-f(x+1)|/f", per, "<= 1e-9", per <= 1e-9)
    fine = tuning_curve(ftr, np.linspace(-1.5, 1.5, 6001) * PHI0).omega_r / TP
    shrink = np.max(np.abs(np.diff(fine))) / np.max(np.abs(np.diff(f)))
    c.check("largest step, 10x finer grid / coarse", shrink, "<= 0.5 (continuous)", shrink <= 0.5)
    assert c.passed, "; ".join(l.strip() for l in c.lines() if "MISS" in l)


# --- 4 ----------------------------------------------------------------------


def test_criterion_4_magnetics_golden_set(criterion):
    c = criterion(4, "magnetics golden set")
    t = time.perf_counter()
    m_flip = neumann_mutual(square_loop(215e-6, 50e-6), square_loop(200e-6), rtol=1e-6)
    m_on = neumann_mutual(square_loop(125e-6), square_loop(100e-6), rtol=1e-6)
    per_pair = (time.perf_counter() - t) / 2
    c.check("Neumann M flip-chip (215/200 um, h=50 um)", m_flip / PH, "153 pH +-5%", within(m_flip, 153 * PH, 0.05),
            " pH")
    c.check("Neumann M on-chip (125/100 um, h=0)", m_on / PH, "121 pH +-5%", within(m_on, 121 * PH, 0.05), " pH")
    L_sq = square_coil_self_inductance(125e-6, 5e-6)
    c.check("square coil (125 um, 5 um)", L_sq / PH, "315 pH +-1%", within(L_sq, 315 * PH, 0.01), " pH")
    eta = 100 * transfer_efficiency(67 * PH, 348 * PH)
    c.check("eta2 on-chip Exp.", eta, "19.3% +-0.2", abs(eta - 19.3) <= 0.2, "%")
    chain = 100 * chain_efficiency(TransferChain(469 * PH, 2.02e-9, 28.7e-9, 485 * PH))
    c.check("chain efficiency", chain, "1.50% +-0.02", abs(chain - 1.50) <= 0.02, "%")
    side, h = 200e-6, 2000e-6
    m_far = neumann_mutual(square_loop(side), square_loop(side, h))
    dipole = m_far / (4e-7 * np.pi * side**4 / (2 * np.pi * h**3))
    c.check("dipole limit ratio at h=10 side", dipole, "1 +-1%", abs(dipole - 1) <= 0.01)
    c.check("Neumann time per pair at rtol 1e-6", per_pair, "<= 2 s", per_pair <= 2.0, " s")
    assert c.passed, "; ".join(l.strip() for l in c.lines() if "MISS" in l)


# --- 5 ----------------------------------------------------------------------


def test_criterion_5_efficiency_surface(criterion):
    c = criterion(5, "efficiency surface")
    ratios = np.round(np.arange(0.6, 1.61, 0.05), 3)
    surf = efficiency_sweep(ratios, [0.0, 50e-6])
    for h, best in zip(surf.heights, surf.argmax_ratio()):
        c.check(f"argmax d_i/d_s at h={h * 1e6:g} um", best, "1.0 +-0.05 (grid step)", abs(best - 1.0) <= 0.05 + 1e-12)
    m = neumann_mutual(square_loop(215e-6, 50e-6), square_loop(200e-6))
    eta = 100 * transfer_efficiency(m, square_coil_self_inductance(215e-6, 7.4e-6))
    c.check("flip-chip analytic eta2 (215/200 um, h=50 um)", eta, "30% +-2", abs(eta - 30) <= 2, "%")
    assert c.passed, "; ".join(l.strip() for l in c.lines() if "MISS" in l)


# --- 6 ----------------------------------------------------------------------


def _kerr_traces(K_hz, f0=6e9, kappa=TP * 12e6, kappa_c=TP * 11e6, att=66.0):
    d = DuffingParams(f0, kappa, kappa_c, TP * K_hz)
    n = np.geomspace(0.05, 5, 6)
    pw = n * kappa**2 / (4 * kappa_c) * HBAR * TP * f0
    grid = np.linspace(f0 - 120e6, f0 + 120e6, 801)
    return gen_power_sweep(d, 10 * np.log10(pw / 1e-3) + att, att, grid).traces


def test_criterion_6_fitting_round_trips(criterion):
    c = criterion(6, "fitting round trips")
    f0 = 6e9
    grid = np.linspace(f0 - 60e6, f0 + 60e6, 801)
    truth = ResonatorFit.from_params(f0, 450, 490, 0.1)
    keys = ("f_r", "Q_L", "Q_c_abs", "phi", "Q_i")
    clean = fit_linear_resonance(gen_linear_trace(truth, None, grid))
    worst = max(rel_err(getattr(clean, k), getattr(truth, k)) for k in keys)
    c.check("linear noiseless, worst relative error", 100 * worst, "<= 0.1%", worst <= 1e-3, "%")
    errs = []
    for seed in range(20):
        fit = fit_linear_resonance(gen_linear_trace(truth, None, grid, NoiseSpec(0.005, seed)))
        errs.append([rel_err(getattr(fit, k), getattr(truth, k)) for k in keys])
    rms = np.sqrt(np.mean(np.square(errs), axis=0))
    c.check("linear sigma=0.005, worst RMS relative error (20 seeds)", 100 * rms.max(), "<= 2%", rms.max() <= 0.02,
            "%")

    for K_hz in (216e3, 381e3):
        kf = fit_kerr_power_sweep(_kerr_traces(K_hz))
        c.check(f"Kerr K/2pi = {K_hz / 1e3:g} kHz", kf.K_over_2pi / 1e3, "+-2%", within(kf.K_over_2pi, K_hz, 0.02),
                " kHz")

    tls = TlsModel(3.4e-7, 2.6e-6, 0.295, 3.30)
    c.check("TLS Q_i,inf", tls.Q_i_inf, "2.9e6 (2 s.f.)", within(tls.Q_i_inf, 2.9e6, 0.05 / 2.9))
    c.check("TLS Q_i,0", tls.Q_i0, "3.5e5 +-5%", within(tls.Q_i0, 3.5e5, 0.05))
    n = np.geomspace(1e-3, 1e8, 100)
    tls_keys = ("delta0", "deltaTLS", "beta_exp", "n_star")
    errs = []
    for seed in range(10):
        q = tls_qi(tls, n) * (1 + 0.05 * np.random.default_rng(seed).standard_normal(n.size))
        fit = fit_tls(n, q)
        errs.append([rel_err(getattr(fit, k), getattr(tls, k)) for k in tls_keys])
    rms = np.sqrt(np.mean(np.square(errs), axis=0))
    for k, e in zip(tls_keys, rms):
        c.check(f"TLS fit SNR 20, RMS relative error {k} (10 seeds)", 100 * e, "<= 5%", e <= 0.05, "%")

    p = dict(A=1.1, alpha=0.3, I0=361e-9, Lg=776e-12, I_off=1.3e-6, I_Phi0=17.8e-6)
    cpw = CpwParams.from_modal(**CPW_200)
    ftr = FtrParams(cpw, SquidParams(p["I0"], p["alpha"], p["Lg"]), p["A"])
    I = np.linspace(p["I_off"] - 1.5 * p["I_Phi0"], p["I_off"] + 1.5 * p["I_Phi0"], 241)
    fm = gen_flux_map(ftr, FluxCalibration(p["I_off"], p["I_Phi0"]), I, noise=NoiseSpec(0.0, 11), freq_noise_hz=1e6)
    cal = extract_period(I, fm.f_r)
    guess = FtrParams(cpw, SquidParams(400e-9, 0.33, 697e-12), 1.0)
    fit = fit_tuning_curve(I, fm.f_r, cpw, guess, cal.I_off, cal.I_Phi0)
    for k, v in fit.params().items():
        if k == "I_off":
            e = abs(v - p[k]) / p["I_Phi0"]
            c.check("flux map I_off error / I_Phi0", 100 * e, "<= 5%", e <= 0.05, "%")
        else:
            e = rel_err(v, p[k])
            c.check(f"flux map {k}, 1 MHz noise", 100 * e, "<= 5%", e <= 0.05, "%")
    assert c.passed, "; ".join(l.strip() for l in c.lines() if "MISS" in l)


# --- 7 ----------------------------------------------------------------------


def test_criterion_7_duffing_cubic(criterion):
    c = criterion(7, "Duffing cubic suite")
    kappa, kappa_c, K = TP * 12e6, TP * 11e6, TP * 216e3
    worst, mismatches, counts = 0.0, 0, set()
    for D in np.linspace(-3, 8, 100) * kappa:
        for s2 in np.geomspace(1e6, 1e12, 100):
            roots = duffing_roots(D, kappa, kappa_c, K, s2)
            a, b, cc, d = K * K, -2 * D * K, D * D + kappa**2 / 4, -kappa_c * s2
            expected = 3 if cubic_discriminant(a, b, cc, d) > 0 else 1
            counts.add(len(roots))
            mismatches += len(roots) != expected
            for r in roots:
                scale = max(abs(a * r.n**3), abs(b * r.n**2), abs(cc * r.n), abs(d))
                worst = max(worst, abs(a * r.n**3 + b * r.n**2 + cc * r.n + d) / scale)
    c.check("worst scaled root residual (100x100 grid)", worst, "< 1e-9", worst < 1e-9)
    c.check("root-count mismatches vs discriminant", mismatches, "0", mismatches == 0)
    c.check("distinct root counts seen", len(counts), "{1, 3} both present", counts == {1, 3})

    f0 = 6e9
    f = np.linspace(f0 - 60e6, f0 + 60e6, 2001)
    d = DuffingParams(f0, kappa, kappa_c, 0.0)
    lin = s21_linear(f, f0, d.Q_L, d.Q_c)
    dev = np.max(np.abs(s21_nonlinear(f, d, np.full(f.size, 3.0)) - lin) / np.abs(lin))
    c.check("K=0 response vs linear model", 100 * dev, "<= 0.1%", dev <= 1e-3, "%")
    kf = fit_kerr_power_sweep(_kerr_traces(0.0))
    fdev = max(max(rel_err(ft.f_r, lin_ft.f_r), rel_err(ft.Q_L, lin_ft.Q_L))
               for ft, lin_ft in zip(kf.fits, (fit_linear_resonance(t) for t in _kerr_traces(0.0))))
    c.check("K=0 sweep fits vs linear fits", 100 * fdev, "<= 0.1%", fdev <= 1e-3, "%")
    assert c.passed, "; ".join(l.strip() for l in c.lines() if "MISS" in l)


# --- 8 ----------------------------------------------------------------------


def test_criterion_8_responsivity(criterion):
    c = criterion(8, "flux responsivity")
    cpw = CpwParams.from_modal(**CPW_200)
    x = np.linspace(-0.5, 0.5, 4001)
    for label, sq, A in (("Input", SquidParams(361e-9, 0.3, 776e-12), 1.1),
                         ("Ext", SquidParams(405e-9, 0.35, 723e-12), 1.06)):
        curve = tuning_curve(FtrParams(cpw, sq, A), x * PHI0)
        r = np.abs(curve.responsivity) * PHI0 / GHZ
        peak = float(np.nanmax(r))
        c.check(f"max |d omega_r/d Phi| / 2pi, 200 um {label} fit", peak, "20 GHz/Phi0 +-25%",
                within(peak, 20.0, 0.25), " GHz/Phi0")
    assert c.passed, "; ".join(l.strip() for l in c.lines() if "MISS" in l)
