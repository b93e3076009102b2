"""Notch-type resonator transmission: background removal, circle fitting,
Kerr (Duffing) response, power-sweep Kerr extraction, and TLS loss fits.

Linear model::

    S21(f) = 1 - (Q_L/Q_c) exp(-i phi) / (1 + 2 i Q_L (f/f_r - 1))

``Q_c`` is the modulus of the complex coupling quality factor and ``phi`` the
impedance-mismatch rotation; the effective coupling is ``Q_c/cos(phi)`` and
``1/Q_i = 1/Q_L - cos(phi)/Q_c``.

Nonlinear response evaluates the linear model (``phi = 0``) at the Kerr
shifted frequency ``f_r0 - K n/2pi`` with the intracavity photon number ``n``
from the steady-state cubic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import optimize, signal

from .constants import HBAR
from .errors import (
    CalibrationError,
    DomainError,
    FitError,
    GeometryError,
    NoResonanceError,
    OverCouplingError,
    PreconditionError,
)
from .magnetics import FluxCalibration

__all__ = [
    "ComplexTrace",
    "BackgroundModel",
    "ResonatorFit",
    "DuffingParams",
    "DuffingRoot",
    "TlsModel",
    "KerrFit",
    "s21_linear",
    "correct_background",
    "fit_circle_algebraic",
    "fit_linear_resonance",
    "analyze_trace",
    "qi_from",
    "duffing_roots",
    "cubic_discriminant",
    "photon_number",
    "s21_nonlinear",
    "fit_kerr_power_sweep",
    "tls_qi",
    "fit_tls",
    "extract_period",
]

MIN_FIT_POINTS = 16


@dataclass(frozen=True)
class ComplexTrace:
    """Complex transmission sampled on a strictly increasing frequency grid."""

    freqs: np.ndarray
    s21: np.ndarray
    power_at_device: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        s = np.asarray(self.s21, dtype=complex)
        if f.ndim != 1 or f.shape != s.shape:
            raise DomainError("freqs and s21 must be 1-D arrays of equal length")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise DomainError("freqs must be strictly increasing")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "s21", s)

    def __len__(self):
        return self.freqs.size

    def with_s21(self, s21) -> "ComplexTrace":
        return ComplexTrace(self.freqs, s21, self.power_at_device, dict(self.metadata))


@dataclass(frozen=True)
class BackgroundModel:
    """Baseline ``(a0 + a1 (f - f0)) exp(i (phi0 - 2 pi tau (f - f0)))``."""

    a0: float = 1.0
    a1: float = 0.0
    phi0: float = 0.0
    tau: float = 0.0
    f0: float = 0.0
    narrow_span: bool = False

    def baseline(self, freqs):
        df = np.asarray(freqs, dtype=float) - self.f0
        return (self.a0 + self.a1 * df) * np.exp(1j * (self.phi0 - 2 * np.pi * self.tau * df))

    def remove(self, trace: ComplexTrace) -> ComplexTrace:
        return trace.with_s21(trace.s21 / self.baseline(trace.freqs))

    def apply(self, trace: ComplexTrace) -> ComplexTrace:
        return trace.with_s21(trace.s21 * self.baseline(trace.freqs))


def s21_linear(freqs, f_r, Q_L, Q_c, phi=0.0):
    """Linear notch transmission."""
    f = np.asarray(freqs, dtype=float)
    return 1 - (Q_L / Q_c) * np.exp(-1j * phi) / (1 + 2j * Q_L * (f / f_r - 1))


@dataclass(frozen=True)
class ResonatorFit:
    """Extracted linear resonator parameters.

    ``center``/``radius`` describe the normalised circle and ``r0`` its
    matched radius ``radius * cos(phi)``.  ``flags`` collects diagnostics such
    as ``"overcoupled"`` or ``"radius_identity"``.
    """

    f_r: float
    Q_L: float
    Q_c_abs: float
    phi: float
    Q_c_eff: float
    Q_i: float
    center: complex = 0j
    radius: float = 0.0
    r0: float = 0.0
    residual: float = 0.0
    scale: complex = 1 + 0j
    flags: tuple = ()

    @classmethod
    def from_params(cls, f_r, Q_L, Q_c_abs, phi=0.0):
        """Model parameters with derived quantities filled in."""
        q_eff = Q_c_abs / math.cos(phi)
        try:
            q_i = qi_from(Q_L, Q_c_abs, phi)
        except OverCouplingError:
            q_i = math.nan
        rad = Q_L / (2 * Q_c_abs)
        return cls(f_r, Q_L, Q_c_abs, phi, q_eff, q_i, 1 - rad * np.exp(-1j * phi), rad, rad * math.cos(phi))

    @classmethod
    def from_internal(cls, f_r, Q_i, Q_c_abs, phi=0.0):
        """Model parameters from internal and coupling quality factors."""
        q_l = 1 / (1 / Q_i + math.cos(phi) / Q_c_abs)
        return cls.from_params(f_r, q_l, Q_c_abs, phi)

    def model(self, freqs):
        return self.scale * s21_linear(freqs, self.f_r, self.Q_L, self.Q_c_abs, self.phi)

    @property
    def overcoupled(self) -> bool:
        return "overcoupled" in self.flags

    def as_dict(self) -> dict:
        return {
            "f_r_hz": self.f_r, "Q_L": self.Q_L, "Q_c_abs": self.Q_c_abs, "phi_rad": self.phi,
            "Q_c_eff": self.Q_c_eff, "Q_i": self.Q_i, "radius": self.radius, "r0": self.r0,
            "residual_rms": self.residual, "flags": list(self.flags),
        }


# ---------------------------------------------------------------------------
# background and circle


def _edge_index(n, fraction):
    k = max(2, int(math.ceil(fraction * n)))
    k = min(k, n // 2)
    return np.r_[0:k, n - k:n]


def correct_background(trace: ComplexTrace, edge_fraction=0.1, resonance=None):
    """Remove cable delay, phase offset and a linear amplitude tilt.

    The baseline is fitted on the outer ``edge_fraction`` of points at both
    ends.  ``resonance`` optionally holds model values of the bare resonance
    on the same grid; it is divided out first so its tails do not bias the
    baseline.  Returns ``(corrected_trace, BackgroundModel)``.
    """
    f, s = trace.freqs, trace.s21
    n = f.size
    if n < 8:
        raise PreconditionError("background correction needs at least 8 points")
    raw = s / resonance if resonance is not None else s
    f0 = 0.5 * (f[0] + f[-1])
    df = f - f0
    idx = _edge_index(n, edge_fraction)
    phase = np.unwrap(np.angle(raw))
    ps = np.polyfit(df[idx], phase[idx], 1)
    amp = np.polyfit(df[idx], np.abs(raw[idx]), 1)
    tau = -ps[0] / (2 * np.pi)
    phi0 = float(math.remainder(ps[1], 2 * math.pi))
    # fraction of points visibly off the baseline
    trial = s / ((amp[1] + amp[0] * df) * np.exp(1j * (ps[1] + ps[0] * df)))
    dev = np.abs(trial - 1)
    floor = _noise_floor(trial, idx)
    narrow = bool(dev.max() > max(5 * floor, 1e-9) and np.mean(dev > 0.1 * dev.max()) > 0.8)
    bg = BackgroundModel(float(amp[1]), float(amp[0]), phi0, float(tau), float(f0), narrow)
    return bg.remove(trace), bg


def fit_circle_algebraic(points):
    """Taubin algebraic circle fit. Returns ``(center, radius)``."""
    z = np.asarray(points, dtype=complex).ravel()
    if z.size < 3:
        raise PreconditionError("need at least 3 points")
    zm = z.mean()
    scale = np.sqrt(np.mean(np.abs(z - zm) ** 2))
    if scale == 0:
        raise GeometryError("points are coincident")
    w = (z - zm) / scale
    x, y = w.real, w.imag
    zz = x * x + y * y
    Mxx, Myy, Mxy = np.mean(x * x), np.mean(y * y), np.mean(x * y)
    Mxz, Myz, Mzz = np.mean(x * zz), np.mean(y * zz), np.mean(zz * zz)
    Mz = Mxx + Myy
    cov_xy = Mxx * Myy - Mxy * Mxy
    var_z = Mzz - Mz * Mz
    A3 = 4 * Mz
    A2 = -3 * Mz * Mz - Mzz
    A1 = var_z * Mz + 4 * cov_xy * Mz - Mxz * Mxz - Myz * Myz
    A0 = Mxz * (Mxz * Myy - Myz * Mxy) + Myz * (Myz * Mxx - Mxz * Mxy) - var_z * cov_xy
    xn, yn = 0.0, np.inf
    for _ in range(100):
        yo = yn
        yn = A0 + xn * (A1 + xn * (A2 + xn * A3))
        if abs(yn) > abs(yo):
            xn = 0.0
            break
        dy = A1 + xn * (2 * A2 + 3 * A3 * xn)
        if dy == 0:
            break
        xo = xn
        xn = xo - yn / dy
        if xn == 0 or abs((xn - xo) / xn) < 1e-15:
            break
        if xn < 0:
            xn = 0.0
            break
    det = xn * xn - xn * Mz + cov_xy
    if abs(det) < 1e-12:
        raise GeometryError("points are collinear")
    cx = (Mxz * (Myy - xn) - Myz * Mxy) / (2 * det)
    cy = (Myz * (Mxx - xn) - Mxz * Mxy) / (2 * det)
    r = math.sqrt(cx * cx + cy * cy + Mz)
    return complex(zm + scale * complex(cx, cy)), float(scale * r)


# ---------------------------------------------------------------------------
# linear fit


def qi_from(Q_L, Q_c_abs, phi=0.0):
    """Internal quality factor from ``1/Q_i = 1/Q_L - cos(phi)/Q_c``.

    Returns ``inf`` when the loss term vanishes and raises
    :class:`OverCouplingError` when it is negative.
    """
    inv = 1 / Q_L - math.cos(phi) / Q_c_abs
    if abs(inv) <= 1e-12 / Q_L:
        return math.inf
    if inv < 0:
        raise OverCouplingError(f"1/Q_i = {inv:.3e} < 0: coupling inconsistent with loaded Q")
    return 1 / inv


def _noise_floor(s, idx):
    d = np.diff(s[idx[: idx.size // 2]])
    d2 = np.diff(s[idx[idx.size // 2:]])
    dd = np.concatenate([d, d2])
    return float(np.sqrt(np.mean(np.abs(dd) ** 2) / 4)) if dd.size else 0.0


def _wrap(x):
    return np.angle(np.exp(1j * x))


def _phase_fit(f, theta, f_r, Q_L, theta0):
    def res(p):
        t0, logq, fr = p
        return _wrap(theta - (t0 + 2 * np.arctan(2 * np.exp(logq) * (1 - f / fr))))

    sol = optimize.least_squares(res, [theta0, math.log(Q_L), f_r], x_scale=[1.0, 1.0, f_r / Q_L],
                                 method="lm", xtol=1e-14, ftol=1e-14, max_nfev=2000)
    t0, logq, fr = sol.x
    return float(t0), float(np.exp(logq)), float(fr)


def fit_linear_resonance(trace: ComplexTrace, penalty=True, edge_fraction=0.1) -> ResonatorFit:
    """Circle-fit pipeline for a background-corrected notch trace."""
    f, s = trace.freqs, trace.s21
    n = f.size
    if n < MIN_FIT_POINTS:
        raise PreconditionError(f"need at least {MIN_FIT_POINTS} points, got {n}")
    idx = _edge_index(n, edge_fraction)
    ref = s[idx].mean()
    dev = np.abs(s - ref)
    noise = _noise_floor(s, idx)
    if dev.max() <= 5 * noise or dev.max() < 1e-12:
        raise NoResonanceError("no resonance dip above the noise floor")

    zc, r = fit_circle_algebraic(s)
    k = int(np.argmax(dev))
    f_guess = f[k]
    half = dev >= dev.max() / math.sqrt(2)
    span = f[half].max() - f[half].min() if half.sum() > 1 else (f[-1] - f[0]) / n
    q_guess = max(f_guess / max(span, (f[-1] - f[0]) / n), 1.0)
    theta = np.angle(s - zc)
    t0, Q_L, f_r = _phase_fit(f, theta, f_guess, q_guess, float(theta[k]))

    p_off = zc + r * np.exp(1j * (t0 + np.pi))
    zc_n = zc / p_off
    r_n = r / abs(p_off)
    phi = float(-np.angle(1 - zc_n))
    Q_c = Q_L / (2 * r_n)
    scale = complex(p_off)

    # complex least squares with the radius identity as a soft penalty
    r_match = r_n * math.cos(phi)

    def unpack(p):
        fr, lql, lqc, ph, la, arg = p
        return fr, math.exp(lql), math.exp(lqc), ph, math.exp(la) * np.exp(1j * arg)

    def res(p, weight):
        fr, ql, qc, ph, a = unpack(p)
        d = a * s21_linear(f, fr, ql, qc, ph) - s
        out = np.concatenate([d.real, d.imag])
        if weight > 0:
            pen = r_match - ql * math.cos(ph) / (2 * qc)
            out = np.append(out, math.sqrt(weight * out.size) * pen)
        return out

    p0 = [f_r, math.log(Q_L), math.log(Q_c), phi, math.log(abs(scale)), float(np.angle(scale))]
    xs = [f_r / Q_L, 1.0, 1.0, 1.0, 1.0, 1.0]
    try:
        sol = optimize.least_squares(res, p0, args=(0.0,), x_scale=xs, method="lm",
                                     xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000)
        p = sol.x
        if penalty:
            d = res(p, 0.0)
            weight = float(np.mean(d * d))
            if weight > 0:
                sol = optimize.least_squares(res, p, args=(weight,), x_scale=xs, method="lm",
                                             xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000)
                p = sol.x
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise FitError(f"complex refinement failed: {exc}") from exc

    fr, ql, qc, ph, a = unpack(p)
    ph = float(math.remainder(ph, 2 * math.pi))
    d = a * s21_linear(f, fr, ql, qc, ph) - s
    rms = float(np.sqrt(np.mean(np.abs(d) ** 2)))
    flags = []
    q_eff = qc / math.cos(ph)
    try:
        qi = qi_from(ql, qc, ph)
    except OverCouplingError:
        qi = math.nan
        flags.append("overcoupling_inconsistent")
    if math.isinf(qi):
        flags.append("divergent_Qi")
    if q_eff < qi:
        flags.append("overcoupled")
    r0_model = ql / (2 * q_eff)
    if abs(r_match - r0_model) > 0.01 * max(abs(r0_model), 1e-300):
        flags.append("radius_identity")
    center = 1 - (ql / (2 * qc)) * np.exp(-1j * ph)
    return ResonatorFit(fr, ql, qc, ph, q_eff, qi, complex(center), ql / (2 * qc), r_match, rms, complex(a),
                        tuple(flags))


def analyze_trace(trace: ComplexTrace, iterations=1, edge_fraction=0.1, joint=True):
    """Background removal followed by the circle fit.

    The baseline is re-estimated with the fitted resonance divided out, then
    (``joint=True``) baseline and resonance are refined together by complex
    least squares on the raw trace before the final circle fit.
    Returns ``(ResonatorFit, BackgroundModel)``.
    """
    f = trace.freqs
    corrected, bg = correct_background(trace, edge_fraction)
    fit = fit_linear_resonance(corrected, edge_fraction=edge_fraction)
    for _ in range(iterations):
        res = s21_linear(f, fit.f_r, fit.Q_L, fit.Q_c_abs, fit.phi)
        corrected, bg = correct_background(trace, edge_fraction, resonance=res)
        fit = fit_linear_resonance(corrected, edge_fraction=edge_fraction)
    if not joint:
        return fit, bg

    f0 = bg.f0
    span = f[-1] - f[0]
    amp = abs(fit.scale)
    p0 = [fit.f_r, math.log(fit.Q_L), math.log(fit.Q_c_abs), fit.phi,
          bg.a0 * amp, bg.a1 * amp, bg.phi0 + float(np.angle(fit.scale)), bg.tau]
    xs = [fit.f_r / fit.Q_L, 1.0, 1.0, 1.0, abs(p0[4]), abs(p0[4]) / span, 1.0, 1 / span]

    def model(p):
        fr, lql, lqc, ph, a0, a1, phi0, tau = p
        base = BackgroundModel(a0, a1, phi0, tau, f0).baseline(f)
        return base * s21_linear(f, fr, math.exp(lql), math.exp(lqc), ph)

    def res(p):
        d = model(p) - trace.s21
        return np.concatenate([d.real, d.imag])

    try:
        sol = optimize.least_squares(res, p0, x_scale=xs, method="lm", xtol=1e-15, ftol=1e-15,
                                     gtol=1e-15, max_nfev=4000)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise FitError(f"joint background refinement failed: {exc}") from exc
    a0, a1, phi0, tau = sol.x[4:]
    bg = BackgroundModel(float(a0), float(a1), float(math.remainder(phi0, 2 * math.pi)), float(tau), f0,
                         bg.narrow_span)
    fit = fit_linear_resonance(bg.remove(trace), edge_fraction=edge_fraction)
    return fit, bg


# ---------------------------------------------------------------------------
# Duffing response


@dataclass(frozen=True)
class DuffingParams:
    """Kerr resonator: bare frequency (Hz), rates (rad/s), Kerr ``K`` (rad/s
    per photon, positive for a downward shift)."""

    f_r0: float
    kappa: float
    kappa_c: float
    K: float = 0.0

    def __post_init__(self):
        if not (self.kappa_c > 0 and self.kappa >= self.kappa_c):
            raise DomainError("require kappa >= kappa_c > 0")

    @property
    def Q_L(self) -> float:
        return 2 * math.pi * self.f_r0 / self.kappa

    @property
    def Q_c(self) -> float:
        return 2 * math.pi * self.f_r0 / self.kappa_c


class DuffingRoot(NamedTuple):
    n: float
    stable: bool


def cubic_discriminant(a, b, c, d):
    """Discriminant of ``a x^3 + b x^2 + c x + d``."""
    return 18 * a * b * c * d - 4 * b**3 * d + b * b * c * c - 4 * a * c**3 - 27 * a * a * d * d


def _cubic_coeffs(Delta, kappa, kappa_c, K, s_in_sq):
    return K * K, -2 * Delta * K, Delta * Delta + kappa * kappa / 4, -kappa_c * s_in_sq


def duffing_roots(Delta, kappa, kappa_c, K, s_in_sq, rtol=1e-9):
    """Nonnegative real roots of
    ``K^2 n^3 - 2 Delta K n^2 + (Delta^2 + kappa^2/4) n - kappa_c s_in^2 = 0``.

    Roots are sorted; with three roots the middle one is unstable.
    """
    if not kappa > 0:
        raise DomainError("kappa must be positive")
    if s_in_sq < 0:
        raise DomainError("s_in_sq must be >= 0")
    if s_in_sq == 0:
        return [DuffingRoot(0.0, True)]
    c3, c2, c1, c0 = _cubic_coeffs(Delta, kappa, kappa_c, K, s_in_sq)
    n_lin = -c0 / c1
    if K == 0:
        return [DuffingRoot(n_lin, True)]
    # x = n / n_lin turns the cubic into a3 x^3 + a2 x^2 + x - 1
    a3 = c3 * n_lin**3 / -c0
    a2 = c2 * n_lin**2 / -c0
    raw = np.roots([a3, a2, 1.0, -1.0])
    xs = [z.real for z in raw if abs(z.imag) <= 1e-7 * max(1.0, abs(z))]

    def p(x):
        return ((a3 * x + a2) * x + 1.0) * x - 1.0

    def dp(x):
        return (3 * a3 * x + 2 * a2) * x + 1.0

    polished = []
    for x in xs:
        for _ in range(6):
            d = dp(x)
            if d == 0:
                break
            step = p(x) / d
            x -= step
            if abs(step) <= 1e-16 * abs(x):
                break
        polished.append(x)
    polished = sorted(x for x in polished if x >= 0)
    uniq = []
    for x in polished:
        if not uniq or abs(x - uniq[-1]) > 1e-9 * max(1.0, abs(x)):
            uniq.append(x)
    out = []
    for x in uniq:
        n = x * n_lin
        terms = abs(c3 * n**3) + abs(c2 * n * n) + abs(c1 * n) + abs(c0)
        val = ((c3 * n + c2) * n + c1) * n + c0
        if abs(val) > rtol * terms:
            raise FitError(f"cubic root failed back-substitution (residual {abs(val) / terms:.2e})")
        out.append(n)
    if len(out) == 3:
        return [DuffingRoot(out[0], True), DuffingRoot(out[1], False), DuffingRoot(out[2], True)]
    if len(out) == 2:
        # saddle-node: the merged pair is marginal, the isolated root stable
        d0 = abs(dp(out[0] / n_lin))
        d1 = abs(dp(out[1] / n_lin))
        return [DuffingRoot(out[0], d0 > d1), DuffingRoot(out[1], d1 >= d0)]
    return [DuffingRoot(x, True) for x in out]


def photon_number(P_g, f, params: DuffingParams, branch="low"):
    """Steady-state intracavity photon number for drive power ``P_g`` (W) at
    frequency ``f`` (Hz).

    The detuning entering the cubic is taken relative to a downward Kerr
    shift, i.e. the cubic is evaluated at ``Delta = 2 pi (f_r0 - f)`` so that
    the response peaks at ``f_r0 - K n/2pi``.
    """
    if P_g < 0:
        raise DomainError("power must be >= 0")
    if P_g == 0:
        return 0.0
    s_sq = P_g / (HBAR * 2 * np.pi * f)
    roots = duffing_roots(2 * np.pi * (params.f_r0 - f), params.kappa, params.kappa_c, params.K, s_sq)
    stable = [r.n for r in roots if r.stable] or [r.n for r in roots]
    if branch == "low":
        return stable[0]
    if branch == "high":
        return stable[-1]
    raise DomainError("branch must be 'low' or 'high'")


def s21_nonlinear(f, params: DuffingParams, n):
    """Linear notch response (``phi = 0``) at the Kerr-shifted resonance."""
    f = np.asarray(f, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise DomainError("photon number must be >= 0")
    f_eff = params.f_r0 - params.K * n / (2 * np.pi)
    return 1 - params.kappa_c / (params.kappa + 2j * 2 * np.pi * (f - f_eff))


# ---------------------------------------------------------------------------
# Kerr power sweep


@dataclass
class KerrFit:
    K: float
    f_r0: float
    K_stderr: float
    photon_numbers: np.ndarray
    f_r: np.ndarray
    fits: list
    excluded: tuple = ()

    @property
    def K_over_2pi(self) -> float:
        return self.K / (2 * np.pi)


def _has_fold(s, noise):
    d = np.abs(np.diff(s))
    if d.size < 3:
        return False
    left = np.concatenate(([d[1]], d[:-1]))
    right = np.concatenate((d[1:], [d[-2]]))
    return bool(np.any((d > 8 * np.maximum(left, right)) & (d > 10 * noise + 1e-12)))


def _zero_detuning(trace: ComplexTrace, fit: ResonatorFit, half_width=4):
    """Frequency, loaded Q and ``kappa_c/kappa`` at the point of the trace
    opposite the off-resonant point on its circle.

    A Kerr trace stays on the linear circle but is traversed nonuniformly;
    the antipode still marks zero effective detuning, and there the photon
    number is stationary so the local phase slope ``-4 Q_L/f_r`` is
    undistorted.  The trace must be background corrected.
    """
    f = trace.freqs
    zc, r = fit_circle_algebraic(trace.s21)
    u = (1 - zc) / abs(1 - zc)
    p_off = zc + r * u
    zn, rn = zc / p_off, r / abs(p_off)
    ratio = 2 * rn * math.cos(float(np.angle(1 - zn)))
    s = trace.s21 / p_off
    theta = np.unwrap(np.angle(s - zn))
    target = float(np.angle(-u))
    k = int(np.argmin(np.abs(f - fit.f_r)))
    target += 2 * np.pi * round((theta[k] - target) / (2 * np.pi))
    d = theta - target
    cross = np.nonzero(np.sign(d[:-1]) != np.sign(d[1:]))[0]
    fallback = (fit.f_r, fit.Q_L, fit.Q_L / fit.Q_c_eff)
    if cross.size == 0:
        return fallback
    j = int(cross[np.argmin(np.abs(cross - k))])
    lo, hi = max(j - half_width + 1, 0), min(j + half_width + 1, f.size)
    x = f[lo:hi] - f[j]
    poly = np.polynomial.Polynomial.fit(x, d[lo:hi], min(3, x.size - 1))
    roots = [z.real for z in poly.roots() if abs(z.imag) < 1e-9 * (1 + abs(z)) and x[0] <= z.real <= x[-1]]
    if not roots:
        return fallback
    x0 = min(roots, key=lambda z: abs(z - (f[j + 1] - f[j]) / 2))
    f_star = float(f[j] + x0)
    q_l = -float(poly.deriv()(x0)) * f_star / 4
    if not q_l > 0:
        return fallback
    return f_star, q_l, ratio


def fit_kerr_power_sweep(traces, correct=False):
    """Kerr coefficient from resonance frequency vs. photon number.

    Each trace needs ``power_at_device`` (W).  The resonance frequency per
    power is the zero-effective-detuning point on the fitted circle, where
    the photon number is ``4 kappa_c |s_in|^2/kappa^2`` (the cubic root at
    zero effective detuning).  Traces showing a fold are excluded.
    """
    rows = []
    excluded = []
    for i, tr in enumerate(traces):
        if tr.power_at_device is None:
            raise PreconditionError(f"trace {i} lacks power_at_device")
        idx = _edge_index(len(tr), 0.1)
        if _has_fold(tr.s21, _noise_floor(tr.s21, idx)):
            excluded.append(i)
            continue
        if correct:
            fit, bg = analyze_trace(tr)
            tr = bg.remove(tr)
        else:
            fit = fit_linear_resonance(tr)
        f_star, q_l, ratio = _zero_detuning(tr, fit)
        w = 2 * np.pi * f_star
        kappa = w / q_l
        kappa_c = kappa * ratio
        s_sq = tr.power_at_device / (HBAR * w)
        n = 4 * kappa_c * s_sq / kappa**2
        rows.append((n, f_star, f_star / q_l * max(fit.residual, 1e-9), fit))
    if len(rows) < 4:
        raise PreconditionError("need at least 4 usable powers")
    n = np.array([r[0] for r in rows])
    fr = np.array([r[1] for r in rows])
    if n.max() < 10 * max(n.min(), 1e-300):
        raise PreconditionError("photon numbers must span at least a factor of 10")
    sig = np.array([r[2] for r in rows])
    coef, cov = np.polyfit(n, fr, 1, w=1 / sig, cov=True)
    slope, intercept = coef
    return KerrFit(
        K=float(-2 * np.pi * slope),
        f_r0=float(intercept),
        K_stderr=float(2 * np.pi * math.sqrt(max(cov[0, 0], 0.0))),
        photon_numbers=n,
        f_r=fr,
        fits=[r[3] for r in rows],
        excluded=tuple(excluded),
    )


# ---------------------------------------------------------------------------
# TLS loss


@dataclass(frozen=True)
class TlsModel:
    delta0: float
    deltaTLS: float
    beta_exp: float
    n_star: float
    rms: float = 0.0

    def __post_init__(self):
        if min(self.delta0, self.deltaTLS, self.beta_exp, self.n_star) < 0:
            raise DomainError("TLS parameters must be >= 0")

    @property
    def Q_i0(self) -> float:
        return 1 / (self.delta0 + self.deltaTLS)

    @property
    def Q_i_inf(self) -> float:
        return math.inf if self.delta0 == 0 else 1 / self.delta0

    def Q_i(self, n):
        return tls_qi(self, n)


def tls_qi(model: TlsModel, n):
    """``1/(delta0 + deltaTLS/(1 + (n/n*)^beta'))``."""
    n = np.asarray(n, dtype=float)
    return 1 / (model.delta0 + model.deltaTLS / (1 + (n / model.n_star) ** model.beta_exp))


def fit_tls(n_c, Q_i):
    """Least-squares TLS saturation fit on relative ``1/Q_i`` residuals."""
    n = np.asarray(n_c, dtype=float)
    q = np.asarray(Q_i, dtype=float)
    if n.shape != q.shape or n.size < 6:
        raise PreconditionError("need at least 6 (n, Q_i) points")
    if np.any(n <= 0) or np.any(q <= 0):
        raise PreconditionError("photon numbers and Q_i must be positive")
    if n.max() / n.min() < 100:
        raise PreconditionError("photon numbers must span at least two decades")
    y = 1 / q
    order = np.argsort(n)
    lo, hi = y[order[: max(2, n.size // 6)]].mean(), y[order[-max(2, n.size // 6):]].mean()
    d0 = max(min(hi, lo) * 0.9, 1e-30)
    dt = max(lo - d0, 1e-3 * d0)

    def model(p, nn):
        d0_, dt_, b_, ns_ = np.exp(p)
        return d0_ + dt_ / (1 + (nn / ns_) ** b_)

    def res(p):
        return model(p, n) / y - 1

    best = None
    mid = y.min() + 0.5 * (y.max() - y.min())
    ns0 = float(n[order][np.argmin(np.abs(y[order] - mid))])
    for b0 in (0.3, 0.6, 1.0):
        for ns in (ns0, math.sqrt(n.min() * n.max())):
            p0 = np.log([d0, dt, b0, ns])
            try:
                sol = optimize.least_squares(res, p0, method="lm", xtol=1e-14, ftol=1e-14, max_nfev=5000)
            except (ValueError, FloatingPointError):
                continue
            if best is None or sol.cost < best.cost:
                best = sol
    if best is None or not np.all(np.isfinite(best.x)):
        raise FitError("TLS fit did not converge")
    d0_, dt_, b_, ns_ = np.exp(best.x)
    return TlsModel(float(d0_), float(dt_), float(b_), float(ns_), float(np.sqrt(np.mean(best.fun**2))))


# ---------------------------------------------------------------------------
# flux period


def _harmonic_design(I, period, harmonics):
    cols = [np.ones_like(I)]
    for k in range(1, harmonics + 1):
        arg = 2 * np.pi * k * I / period
        cols += [np.cos(arg), np.sin(arg)]
    return np.column_stack(cols)


def _harmonic_fit(I, f, period, harmonics):
    A = _harmonic_design(I, period, harmonics)
    coef, *_ = np.linalg.lstsq(A, f, rcond=None)
    r = f - A @ coef
    return coef, float(r @ r)


def extract_period(I_in, f_r, harmonics=24, near=0.0):
    """Flux calibration ``(I_off, I_Phi0)`` from a resonance-frequency map.

    The dominant Lomb-Scargle peak gives a first period, refined by
    minimising the residual of a truncated Fourier series.  ``I_off`` is the
    frequency maximum of that series closest to ``near``.
    """
    I = np.asarray(I_in, dtype=float)
    f = np.asarray(f_r, dtype=float)
    if I.shape != f.shape or I.size < 8:
        raise PreconditionError("need at least 8 (I, f_r) points")
    order = np.argsort(I)
    I, f = I[order], f[order]
    span = I[-1] - I[0]
    if span <= 0 or np.std(f) <= 1e-12 * max(np.abs(f).max(), 1.0):
        raise CalibrationError("no modulation: resonance frequency is constant")
    y = f - f.mean()
    dI = np.median(np.diff(I))
    p_min = max(4 * dI, span / I.size * 2)
    p_max = span / 1.5
    if p_max <= p_min:
        raise CalibrationError("not enough points to resolve a period")
    periods = np.geomspace(p_min, p_max, 4000)
    power = signal.lombscargle(I, y, 2 * np.pi / periods)
    k = int(np.argmax(power))
    p0 = periods[k]
    h = min(harmonics, max(1, int(p0 / (3 * dI))))

    def ssr(p):
        return _harmonic_fit(I, f, p, h)[1]

    trial = np.linspace(0.95 * p0, 1.05 * p0, 201)
    j = int(np.argmin([ssr(p) for p in trial]))
    lo, hi = trial[max(j - 1, 0)], trial[min(j + 1, trial.size - 1)]
    period = float(optimize.minimize_scalar(ssr, bounds=(lo, hi), method="bounded",
                                            options={"xatol": 1e-12 * p0}).x)
    coef, r2 = _harmonic_fit(I, f, period, h)
    if r2 > 0.5 * float(y @ y):
        raise CalibrationError("no periodic modulation detected")
    if span / period < 1.5:
        raise CalibrationError("data cover fewer than 1.5 periods")
    grid = np.linspace(0, period, 20001)
    vals = _harmonic_design(grid, period, h) @ coef
    x_max = float(grid[int(np.argmax(vals))])
    i_off = x_max + period * round((near - x_max) / period)
    # the series rings near sharp features, so the maximum is refined on
    # the raw samples with a local quartic
    for _ in range(3):
        sel = np.abs(I - i_off) <= period / 8
        if sel.sum() < 7:
            break
        poly = np.polynomial.Polynomial.fit(I[sel] - i_off, f[sel], 4)
        x = np.linspace((I[sel] - i_off).min(), (I[sel] - i_off).max(), 4001)
        step = float(x[int(np.argmax(poly(x)))])
        i_off += step
        if abs(step) < 1e-9 * period:
            break
    return FluxCalibration(I_off=float(i_off), I_Phi0=period)
