"""Synthetic measurement data from the forward models.

Noise is additive complex Gaussian.  Samples come from a Box-Muller
transform of PCG64 uniform doubles; the generator for item ``index`` is
seeded with ``SeedSequence([seed, index])``, so output does not depend on
generation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .constants import HBAR, PHI0
from .errors import DomainError, PreconditionError
from .ftr import FtrParams, TuningCurve, tuning_curve
from .magnetics import FluxCalibration
from .s21 import (
    BackgroundModel,
    ComplexTrace,
    DuffingParams,
    ResonatorFit,
    duffing_roots,
    s21_linear,
    s21_nonlinear,
)

__all__ = [
    "NoiseSpec",
    "PowerSweep",
    "FluxMap",
    "QualityModel",
    "rng_for",
    "complex_noise",
    "dbm_to_watt",
    "gen_linear_trace",
    "gen_power_sweep",
    "gen_flux_map",
]


@dataclass(frozen=True)
class NoiseSpec:
    sigma_per_quadrature: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.sigma_per_quadrature >= 0:
            raise DomainError("sigma must be >= 0")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise DomainError("rng_seed must be a 64-bit unsigned integer")


def rng_for(seed: int, index: int = 0) -> np.random.Generator:
    """Independent PCG64 stream for item ``index`` of a run seeded ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))


def complex_noise(noise: NoiseSpec, size: int, index: int = 0) -> np.ndarray:
    """``size`` complex samples with independent N(0, sigma^2) quadratures."""
    if noise.sigma_per_quadrature == 0:
        return np.zeros(size, dtype=complex)
    rng = rng_for(noise.rng_seed, index)
    u1 = rng.random(size)
    u2 = rng.random(size)
    rad = np.sqrt(-2.0 * np.log1p(-u1))
    return noise.sigma_per_quadrature * rad * np.exp(2j * np.pi * u2)


def dbm_to_watt(p_dbm):
    return 1e-3 * 10 ** (np.asarray(p_dbm, dtype=float) / 10)


def _check_grid(grid):
    f = np.asarray(grid, dtype=float)
    if f.ndim != 1 or f.size < 2 or np.any(np.diff(f) <= 0):
        raise PreconditionError("frequency grid must be strictly increasing")
    return f


def gen_linear_trace(fit: ResonatorFit, bg: BackgroundModel | None, grid, noise: NoiseSpec | None = None,
                     index: int = 0, metadata: dict | None = None) -> ComplexTrace:
    """Background times the linear notch response plus noise."""
    f = _check_grid(grid)
    s = s21_linear(f, fit.f_r, fit.Q_L, fit.Q_c_abs, fit.phi)
    if bg is not None:
        s = s * bg.baseline(f)
    if noise is not None:
        s = s + complex_noise(noise, f.size, index)
    return ComplexTrace(f, s, None, dict(metadata or {}))


# ---------------------------------------------------------------------------
# power sweeps


@dataclass
class PowerSweep:
    """Traces at increasing drive power with the photon number used for
    every sample and a flag for traces that crossed a bistable region."""

    traces: list
    photon_numbers: list
    bistable: list
    powers_dbm: np.ndarray
    attenuation_db: float

    def __len__(self):
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    def __getitem__(self, i):
        return self.traces[i]


def gen_power_sweep(duffing: DuffingParams, powers_dbm, attenuation_db, grid, noise: NoiseSpec | None = None,
                    branch="low", background: BackgroundModel | None = None) -> PowerSweep:
    """Kerr-nonlinear traces for a list of source powers.

    The power at the device is the source power minus ``attenuation_db``.
    For every frequency the photon number is the requested stable root of
    the steady-state cubic.
    """
    p = np.asarray(powers_dbm, dtype=float)
    if p.ndim != 1 or np.any(np.diff(p) < 0):
        raise PreconditionError("powers must be sorted ascending")
    if branch not in ("low", "high"):
        raise DomainError("branch must be 'low' or 'high'")
    f = _check_grid(grid)
    traces, ns, flags = [], [], []
    for i, pdbm in enumerate(p):
        pw = float(dbm_to_watt(pdbm - attenuation_db))
        n = np.empty(f.size)
        multi = False
        for j, fj in enumerate(f):
            s_sq = pw / (HBAR * 2 * np.pi * fj)
            roots = duffing_roots(2 * np.pi * (duffing.f_r0 - fj), duffing.kappa, duffing.kappa_c, duffing.K, s_sq)
            stable = [r.n for r in roots if r.stable] or [r.n for r in roots]
            multi = multi or len(roots) > 1
            n[j] = stable[0] if branch == "low" else stable[-1]
        s = s21_nonlinear(f, duffing, n)
        if background is not None:
            s = s * background.baseline(f)
        if noise is not None:
            s = s + complex_noise(noise, f.size, i)
        meta = {"power_dbm": float(pdbm), "attenuation_db": float(attenuation_db), "bistable": multi}
        traces.append(ComplexTrace(f, s, pw, meta))
        ns.append(n)
        flags.append(multi)
    return PowerSweep(traces, ns, flags, p, float(attenuation_db))


# ---------------------------------------------------------------------------
# flux maps


@dataclass(frozen=True)
class QualityModel:
    """Per-point quality factors; ``Q_i`` may depend on frequency through
    ``Q_i_fn(f_r_hz, Phi_e_wb)``."""

    Q_i: float = 3e4
    Q_c_abs: float = 490.0
    phi: float = 0.0
    Q_i_fn: Callable | None = None

    def fit_at(self, f_r, Phi_e) -> ResonatorFit:
        qi = self.Q_i_fn(f_r, Phi_e) if self.Q_i_fn is not None else self.Q_i
        return ResonatorFit.from_internal(f_r, qi, self.Q_c_abs, self.phi)


@dataclass
class FluxMap:
    currents: np.ndarray
    Phi_e: np.ndarray
    f_r: np.ndarray
    curve: TuningCurve
    traces: list = field(default_factory=list)
    calibration: FluxCalibration | None = None

    @property
    def phi_s_jumps(self):
        return self.curve.phi_s_jumps

    @property
    def frequency_jumps(self):
        return self.curve.frequency_jumps

    @property
    def has_discontinuity(self) -> bool:
        return bool(self.curve.frequency_jumps)


def gen_flux_map(ftr: FtrParams, cal: FluxCalibration, currents, grid=None, quality: QualityModel | None = None,
                 noise: NoiseSpec | None = None, exact=False, sweep=False, centered=True,
                 freq_noise_hz: float = 0.0) -> FluxMap:
    """Resonance frequency (and optionally full traces) versus coil current.

    ``Phi_e = Phi0 (I - I_off)/I_Phi0``.  With a ``grid`` a linear trace is
    generated per current; ``centered=True`` treats the grid as offsets from
    each resonance.  ``freq_noise_hz`` adds Gaussian scatter to the reported
    resonance frequencies.
    """
    I = np.asarray(currents, dtype=float)
    if I.ndim != 1 or I.size == 0:
        raise PreconditionError("currents must be a non-empty 1-D sequence")
    order = np.argsort(I, kind="stable")
    if not np.all(order == np.arange(I.size)):
        raise PreconditionError("currents must be sorted ascending")
    phi_e = PHI0 * (I - cal.I_off) / cal.I_Phi0
    curve = tuning_curve(ftr, phi_e, exact=exact, sweep=sweep)
    f_r = curve.omega_r / (2 * np.pi)
    if freq_noise_hz > 0:
        seed = noise.rng_seed if noise is not None else 0
        f_r = f_r + freq_noise_hz * rng_for(seed, 2**32).standard_normal(f_r.size)
    traces = []
    if grid is not None:
        g = _check_grid(grid)
        q = quality or QualityModel()
        for i, (fi, pe, cur) in enumerate(zip(f_r, phi_e, I)):
            if not fi > 0:
                traces.append(None)
                continue
            fg = g + fi if centered else g
            meta = {"bias_current_a": float(cur), "Phi_e_wb": float(pe)}
            traces.append(gen_linear_trace(q.fit_at(fi, pe), None, fg, noise, index=i, metadata=meta))
    return FluxMap(I, phi_e, f_r, curve, traces, cal)


def flux_quanta(currents, cal: FluxCalibration):
    """Applied flux in units of the flux quantum."""
    return (np.asarray(currents, dtype=float) - cal.I_off) / cal.I_Phi0


def photon_flux(power_w, f_hz):
    return power_w / (HBAR * 2 * math.pi * f_hz)
