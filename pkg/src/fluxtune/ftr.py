"""Quarter-wave resonator terminated by a SQUID: modal parameters, resonance
frequency vs. flux, Kerr shift, and parameter extraction from tuning data.

The shorted end of the CPW sees the SQUID as a (flux-dependent) inductance
``Ls``.  With ``theta = k l`` the boundary condition reads::

    tan(theta) = (1 - w^2 Cs Ls) / (gamma * theta),   gamma = Ls / (l L_l)

whose fundamental root lies in ``(0, pi/2)``.  Near ``theta = pi/2`` this
reduces to ``w_r = w0/(1 + gamma)``; the default frequency path multiplies
that approximation by a phenomenological scale factor ``A``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .constants import PHI0
from .errors import DomainError, FitError, PreconditionError, SolverError
from .squid import (
    SquidInductances,
    SquidParams,
    _ls_array,
    principal_winding,
    solve_ground_phase,
    solve_screening,
)

__all__ = [
    "CpwParams",
    "FtrParams",
    "TuningCurve",
    "KerrModel",
    "TuningFit",
    "modal_parameters",
    "participation_ratio",
    "frequency_approx",
    "frequency_exact",
    "validity_frequencies",
    "squid_inductance_vs_flux",
    "tuning_curve",
    "resonance_frequency",
    "fit_tuning_curve",
    "kerr_shift",
]

RESPONSIVITY_STEP = PHI0 / 2000


@dataclass(frozen=True)
class CpwParams:
    """Uniform CPW section of length ``length`` with per-length L and C."""

    length: float
    L_per_length: float
    C_per_length: float

    def __post_init__(self):
        for name in ("length", "L_per_length", "C_per_length"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive, got {v!r}")

    @classmethod
    def from_modal(cls, L_r, C_r, length):
        """Per-length values reproducing the modal ``(L_r, C_r)`` of a section."""
        if L_r <= 0 or C_r <= 0 or length <= 0:
            raise DomainError("modal parameters and length must be positive")
        return cls(length, L_r * math.pi**2 / (8 * length), 2 * C_r / length)

    @property
    def phase_velocity(self) -> float:
        return 1 / math.sqrt(self.L_per_length * self.C_per_length)

    @property
    def total_inductance(self) -> float:
        return self.length * self.L_per_length

    @property
    def L_r(self) -> float:
        return 8 / math.pi**2 * self.total_inductance

    @property
    def C_r(self) -> float:
        return self.C_per_length * self.length / 2

    @property
    def omega0(self) -> float:
        return math.pi / (2 * self.length * math.sqrt(self.L_per_length * self.C_per_length))

    def wavenumber(self, omega):
        return omega * math.sqrt(self.L_per_length * self.C_per_length)

    def omega_n(self, n: int) -> float:
        """Bare quarter-wave mode ``n`` (``n = 0`` is the fundamental)."""
        return (2 * n + 1) * self.omega0


@dataclass(frozen=True)
class FtrParams:
    cpw: CpwParams
    squid: SquidParams
    scaling_A: float = 1.0
    include_Cs: bool = False

    def __post_init__(self):
        if not self.scaling_A > 0:
            raise DomainError("scaling_A must be positive")


@dataclass(frozen=True)
class KerrModel:
    omega_r0: float
    K: float

    def frequency(self, n):
        return kerr_shift(self, n)


@dataclass(frozen=True)
class TuningCurve:
    """Flux-to-frequency map sampled on a grid.

    Divergent points (a junction biased at ``cos(delta) = 0``) carry
    ``omega_r = 0`` and ``divergent = True``.  ``phi_s_jumps`` and
    ``frequency_jumps`` list grid indices where the screened flux or the
    frequency changes discontinuously.
    """

    Phi_e: np.ndarray
    Phi_s: np.ndarray
    gamma: np.ndarray
    omega_r: np.ndarray
    responsivity: np.ndarray
    branch_n: np.ndarray
    screening_sign: np.ndarray
    m: np.ndarray
    divergent: np.ndarray
    phi_s_jumps: tuple = ()
    frequency_jumps: tuple = ()

    def __len__(self):
        return len(self.Phi_e)

    @property
    def points(self):
        keys = ("Phi_e", "Phi_s", "gamma", "omega_r", "responsivity", "branch_n", "screening_sign", "divergent")
        return [dict(zip(keys, row)) for row in zip(*(getattr(self, k) for k in keys))]

    def rows(self):
        """CSV-ready rows in SI units."""
        header = ["Phi_e", "Phi_s", "gamma", "omega_r", "responsivity", "branch_n", "screening_sign", "divergent"]
        out = [header]
        for p in self.points:
            out.append([p[k] for k in header])
        return out


@dataclass
class TuningFit:
    """Result of :func:`fit_tuning_curve`."""

    A: float
    alpha: float
    I0: float
    Lg: float
    I_off: float
    I_Phi0: float
    rms_residual: float
    residuals: np.ndarray = field(repr=False)
    at_bound: tuple = ()
    nfev: int = 0
    success: bool = True
    message: str = ""

    def params(self) -> dict:
        return {k: getattr(self, k) for k in ("A", "alpha", "I0", "Lg", "I_off", "I_Phi0")}

    @property
    def beta_L(self) -> float:
        return 2 * self.Lg * self.I0 / PHI0


def modal_parameters(cpw: CpwParams):
    """``(L_r, C_r, omega0)`` of the section."""
    return cpw.L_r, cpw.C_r, 1 / math.sqrt(cpw.L_r * cpw.C_r)


def participation_ratio(Ls, cpw: CpwParams):
    """``gamma = Ls/(l L_l)``: SQUID inductance over total line inductance."""
    if np.any(np.asarray(Ls) < 0):
        raise DomainError("Ls must be >= 0")
    return Ls / cpw.total_inductance


def frequency_approx(omega0, gamma, A=1.0):
    """``A omega0 / (1 + gamma)``."""
    if np.any(np.asarray(gamma) <= -1):
        raise DomainError("gamma must exceed -1")
    return A * omega0 / (1 + gamma)


def frequency_exact(cpw: CpwParams, Ls, Cs=0.0, with_capacitance=False):
    """Fundamental root of the shorted-line boundary condition.

    Solves ``gamma theta sin(theta) = (1 - w^2 Cs Ls) cos(theta)`` for
    ``theta`` in ``(0, pi/2)``, with ``w = 2 theta w0/pi``.
    """
    if Ls < 0:
        raise DomainError("Ls must be >= 0")
    w0 = cpw.omega0
    if Ls == 0:
        return w0
    gamma = participation_ratio(Ls, cpw)
    lc = Cs * Ls if with_capacitance else 0.0

    # solved in eps = pi/2 - theta so small gamma does not cancel against cos(pi/2)
    def h(eps):
        theta = math.pi / 2 - eps
        w = w0 * (1 - 2 * eps / math.pi)
        return gamma * theta * math.cos(eps) - (1 - w * w * lc) * math.sin(eps)

    lo, hi = 0.0, math.pi / 2
    if not (h(lo) > 0 > h(hi)):
        raise SolverError("no bracket for the fundamental root")
    # absolute tolerance tied to the small-gamma estimate eps ~ (pi/2) gamma/(1+gamma)
    xtol = max(1e-17 * math.pi / 2 * gamma / (1 + gamma), 5e-324)
    eps = optimize.brentq(h, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=400)
    theta = math.pi / 2 - eps
    w = w0 * (1 - 2 * eps / math.pi)
    if lc and w * w * lc >= 1:
        raise SolverError("root lies beyond the SQUID self-resonance; model invalid")
    scale = gamma * theta + abs(math.sin(eps)) + 1e-300
    if abs(h(eps)) > 1e-12 * scale:
        raise SolverError("transcendental root did not converge")
    return w


def validity_frequencies(squid_ind: SquidInductances, params: SquidParams):
    """Junction plasma frequency and SQUID self-resonance ``(w_p, w_LC)``.

    The mean junction has inductance ``2 Lj1 Lj2/(Lj1 + Lj2)`` and
    capacitance ``(Cj1 + Cj2)/2``.
    """
    if params.Cj1 <= 0 or params.Cj2 <= 0:
        raise DomainError("junction capacitances must be positive")
    lj = 2 * squid_ind.Lj1 * squid_ind.Lj2 / (squid_ind.Lj1 + squid_ind.Lj2)
    cj = 0.5 * params.C_S
    return 1 / math.sqrt(lj * cj), 1 / math.sqrt(squid_ind.Ls * params.C_S)


def squid_inductance_vs_flux(params: SquidParams, Phi_e):
    """Ground-state ``Ls`` (NaN where divergent), screened flux and windings."""
    Phi_e = np.asarray(Phi_e, dtype=float)
    phi, m = solve_ground_phase(Phi_e, params)
    ls = _ls_from_phase(params, phi)
    phi_s = PHI0 * (phi / np.pi - m)
    return ls, phi_s, phi, m


def resonance_frequency(ftr: FtrParams, Phi_e, exact=False):
    """Vectorised ``omega_r(Phi_e)``; zero at divergent points."""
    ls, _, _, _ = squid_inductance_vs_flux(ftr.squid, Phi_e)
    return _omega_from_ls(ftr, ls, exact)


def _omega_from_ls(ftr, ls, exact):
    ls = np.atleast_1d(ls)
    out = np.zeros_like(ls)
    ok = np.isfinite(ls) & (ls >= 0)
    if exact:
        cs = ftr.squid.C_S
        for i in np.nonzero(ok)[0]:
            out[i] = ftr.scaling_A * frequency_exact(ftr.cpw, ls[i], cs, ftr.include_Cs)
    else:
        gamma = ls[ok] / ftr.cpw.total_inductance
        out[ok] = frequency_approx(ftr.cpw.omega0, gamma, ftr.scaling_A)
    bad = ~ok
    if np.any(bad & np.isfinite(ls)):
        # negative parallel inductance: unstable bias, report as divergent
        out[bad] = 0.0
    return out


def _jumps(values, factor=8.0, floor=0.0):
    """Indices where the increment from the previous finite sample is an
    isolated outlier relative to the neighbouring increments."""
    v = np.asarray(values, dtype=float)
    idx = np.nonzero(np.isfinite(v))[0]
    if idx.size < 4:
        return ()
    d = np.abs(np.diff(v[idx]))
    left = np.concatenate(([d[1]], d[:-1]))
    right = np.concatenate((d[1:], [d[-2]]))
    hit = (d > factor * np.maximum(left, right)) & (d > floor)
    return tuple(int(idx[i + 1]) for i in np.nonzero(hit)[0])


def _sweep_states(params: SquidParams, grid):
    """Follow the n=0 branch continuously along the grid (hysteretic sweep)."""
    m0 = int(principal_winding(grid[0]))
    phis = np.empty(grid.size)
    seed = None
    for i, x in enumerate(grid):
        pt = solve_screening(x, params, m=m0, seed=seed)
        phis[i] = seed = pt.varphi
    return phis, np.full(grid.size, m0)


def _ls_from_phase(params: SquidParams, phi):
    psi0 = np.arctan2(params.alpha * np.sin(phi), np.cos(phi))
    return _ls_array(params, phi - psi0, -phi - psi0)


def tuning_curve(ftr: FtrParams, Phi_e_grid, exact=False, sweep=False) -> TuningCurve:
    """Resonance frequency along a sorted flux grid.

    By default every point is the SQUID ground state.  With ``sweep=True``
    the state is continued from point to point, so metastable segments are
    followed until they terminate, as in an upward flux sweep.
    """
    grid = np.asarray(Phi_e_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise PreconditionError("flux grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) < 0):
        raise PreconditionError("flux grid must be sorted")
    h = RESPONSIVITY_STEP
    if sweep:
        sq = ftr.squid
        phi, m = _sweep_states(sq, grid)
        ls = _ls_from_phase(sq, phi)
        phi_s = PHI0 * (phi / np.pi - m)
        shifted = []
        for off in (h, -h):
            ph = np.array([
                solve_screening(x + off, sq, m=int(mm), seed=p).varphi for x, mm, p in zip(grid, m, phi)
            ])
            shifted.append(_omega_from_ls(ftr, _ls_from_phase(sq, ph), exact))
        wp, wm = shifted
    else:
        ls, phi_s, phi, m = squid_inductance_vs_flux(ftr.squid, grid)
        wp = resonance_frequency(ftr, grid + h, exact)
        wm = resonance_frequency(ftr, grid - h, exact)
    divergent = ~np.isfinite(ls) | (ls < 0)
    omega = _omega_from_ls(ftr, ls, exact)
    with np.errstate(invalid="ignore"):
        gamma = np.where(divergent, np.inf, ls / ftr.cpw.total_inductance)
    resp = (wp - wm) / (2 * h)
    resp_bad = divergent | (wp == 0) | (wm == 0)
    resp = np.where(resp_bad, np.nan, resp)
    sign = np.where(np.cos(phi) >= 0, 1, -1)
    # screened-flux jumps are measured modulo the flux quantum bookkeeping
    phi_s_j = _jumps(phi_s, floor=1e-3 * PHI0)
    omega_j = _jumps(np.where(divergent, np.nan, omega), floor=1e-4 * ftr.cpw.omega0)
    return TuningCurve(
        Phi_e=grid,
        Phi_s=phi_s,
        gamma=gamma,
        omega_r=omega,
        responsivity=resp,
        branch_n=np.zeros(grid.size, dtype=int),
        screening_sign=sign,
        m=m,
        divergent=divergent,
        phi_s_jumps=phi_s_j,
        frequency_jumps=omega_j,
    )


# ---------------------------------------------------------------------------
# fitting

_FIT_NAMES = ("A", "alpha", "I0", "Lg", "I_off", "I_Phi0")


def _unpack(x):
    logA, alpha, logI0, logLg, i_off_ua, logP = x
    return math.exp(logA), alpha, math.exp(logI0), math.exp(logLg), i_off_ua * 1e-6, math.exp(logP)


def fit_tuning_curve(currents, freqs_hz, cpw: CpwParams, guess: FtrParams, I_off, I_Phi0,
                     fixed=(), max_nfev=2000, alpha_max=0.999, alpha_starts=(1.0, 0.5, 0.7, 1.4)):
    """Fit ``{A, alpha, I0, Lg, I_off, I_Phi0}`` to measured ``f_r(I_in)``.

    Damped least squares (trust-region reflective) on the frequency residuals,
    with log-transformed positive parameters and alpha bounded to
    ``[0, alpha_max]``.  ``fixed`` names parameters held at their guesses.

    Above the fold threshold the ground-state curve has jumps and the cost
    has several basins, so the fit is restarted from the guess with alpha
    scaled by each of ``alpha_starts`` and the lowest cost wins.
    """
    I = np.asarray(currents, dtype=float)
    f = np.asarray(freqs_hz, dtype=float)
    if I.shape != f.shape or I.ndim != 1:
        raise PreconditionError("currents and frequencies must be equal-length 1-D arrays")
    if I.size < 8:
        raise PreconditionError("at least 8 points are required")
    if I_Phi0 == 0:
        raise PreconditionError("I_Phi0 must be nonzero")
    if (I.max() - I.min()) < 0.5 * abs(I_Phi0):
        raise PreconditionError("data must span at least half a flux period")
    unknown = set(fixed) - set(_FIT_NAMES)
    if unknown:
        raise DomainError(f"unknown fixed parameters {sorted(unknown)}")

    sq = guess.squid
    x0 = np.array([
        math.log(guess.scaling_A),
        min(max(abs(sq.alpha), 1e-6), alpha_max),
        math.log(sq.I0),
        math.log(max(sq.Lg, 1e-15)),
        I_off * 1e6,
        math.log(abs(I_Phi0)),
    ])
    free = [i for i, n in enumerate(_FIT_NAMES) if n not in fixed]
    lb = np.array([-np.inf, 0.0, -np.inf, -np.inf, -np.inf, -np.inf])
    ub = np.array([np.inf, alpha_max, np.inf, np.inf, np.inf, np.inf])
    period_sign = 1.0 if I_Phi0 > 0 else -1.0
    history = []
    fscale = max(np.std(f), 1.0)

    def model(x):
        A, alpha, I0, Lg, i_off, P = _unpack(x)
        squid = replace(sq, I0=I0, alpha=alpha, Lg=Lg)
        ftr = FtrParams(cpw, squid, A, guess.include_Cs)
        phi_e = PHI0 * (I - i_off) / (period_sign * P)
        return resonance_frequency(ftr, phi_e) / (2 * np.pi)

    def resid(xf):
        x = x0.copy()
        x[free] = xf
        r = (model(x) - f) / fscale
        history.append(float(np.sum(r * r)))
        return r

    starts = [1.0] if "alpha" in fixed else list(alpha_starts) or [1.0]
    sol = None
    for scale in starts:
        xs = x0.copy()
        xs[1] = min(max(x0[1] * scale, 1e-6), alpha_max)
        try:
            cand = optimize.least_squares(
                resid, xs[free], bounds=(lb[free], ub[free]), method="trf",
                x_scale="jac", max_nfev=max_nfev, xtol=1e-12, ftol=1e-12, gtol=1e-12,
            )
        except (ValueError, ArithmeticError) as exc:
            if sol is None and scale == starts[-1]:
                raise FitError(f"tuning fit failed: {exc}", trace=history) from exc
            continue
        if cand.status > 0 and (sol is None or cand.cost < sol.cost):
            sol = cand
    if sol is None:
        raise FitError("tuning fit did not converge from any start", trace=history)
    x = x0.copy()
    x[free] = sol.x
    A, alpha, I0, Lg, i_off, P = _unpack(x)
    r = model(x) - f
    at_bound = tuple(
        _FIT_NAMES[i] for j, i in enumerate(free)
        if np.isfinite(lb[i]) and abs(sol.x[j] - lb[i]) < 1e-9 or np.isfinite(ub[i]) and abs(sol.x[j] - ub[i]) < 1e-9
    )
    return TuningFit(
        A=A, alpha=alpha, I0=I0, Lg=Lg, I_off=i_off, I_Phi0=period_sign * P,
        rms_residual=float(np.sqrt(np.mean(r * r))), residuals=r, at_bound=at_bound,
        nfev=int(sol.nfev), success=bool(sol.success), message=str(sol.message),
    )


def kerr_shift(model: KerrModel, n_c):
    """``omega_r0 - K n_c``."""
    if np.any(np.asarray(n_c) < 0):
        raise DomainError("photon number must be >= 0")
    return model.omega_r0 - model.K * n_c
