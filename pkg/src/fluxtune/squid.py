"""Static model of an asymmetric dc SQUID with finite loop inductance.

Conventions
-----------
Phases follow the symmetric/antisymmetric split of the two junction phase
drops, ``delta1 = phi_l + varphi`` and ``delta2 = phi_l - varphi``, where
``phi_l`` is the terminal phase seen by the transport current and
``varphi`` is the loop phase.  Fluxoid quantization reads::

    2*varphi + pi*beta_L * I_circ/I0 = 2*pi*(phi_e + m)

with ``phi_e = Phi_e/Phi0`` and an explicit winding integer ``m``.  At zero
transport current the terminal phase sits at ``phi_l = -psi0 + n*pi``; the
``n = 0`` branch is a minimum of the potential along ``phi_l``.  The fixed-sign
reduced circulating current ``+-(1-a^2) sin(varphi)/sqrt(1 + a^2 tan^2(varphi))``
coincides with the ``n = 0`` branch for ``|varphi| < pi/2`` when the sign is
``+1``; in general ``(-1)**n == screening_sign * sign(cos(varphi))``.

Two solving modes are provided by :func:`solve_screening`:

* ground mode (``screening_sign=None``): the lowest-energy ``n = 0`` state of
  the principal flux cell, which is what a tuning curve evaluates;
* fixed-sign mode: roots of the reduced equation with a chosen sign, used for
  screening-curve continuation.

All quantities are SI.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .constants import PHI0
from .errors import (
    DivergenceError,
    DomainError,
    NoSolutionError,
    PreconditionError,
    SolverError,
)

__all__ = [
    "SquidParams",
    "ScreeningPoint",
    "ScreeningCurve",
    "EffectiveJunction",
    "SquidInductances",
    "PotentialSample",
    "Stability",
    "junction_currents",
    "josephson_inductance",
    "squid_inductance",
    "transport_decomposition",
    "terminal_phase",
    "circulating_current",
    "reduced_circulating_current",
    "fluxoid_residual",
    "solve_screening",
    "solve_ground_phase",
    "screening_curve",
    "potential",
    "branch_switching_onset",
    "screening_map_is_monotone",
    "multivalued_onset",
    "fold_threshold",
]

DIVERGENCE_THRESHOLD = 1e-9
STATIONARY_TOL = 1e-10


@dataclass(frozen=True)
class SquidParams:
    """Junction and loop parameters of the SQUID.

    ``alpha`` is the critical-current asymmetry ``(Ic1 - Ic2)/(Ic1 + Ic2)``.
    Negative values describe the mirrored device with the larger junction in
    arm 2, and ``|alpha| = 1`` the single-junction limit.
    """

    I0: float
    alpha: float = 0.0
    Lg: float = 0.0
    Cj1: float = 0.0
    Cj2: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.I0) and self.I0 > 0):
            raise DomainError(f"I0 must be positive, got {self.I0!r}")
        if not (math.isfinite(self.alpha) and -1.0 <= self.alpha <= 1.0):
            raise DomainError(f"alpha must lie in [-1, 1], got {self.alpha!r}")
        if not (math.isfinite(self.Lg) and self.Lg >= 0):
            raise DomainError(f"Lg must be >= 0, got {self.Lg!r}")
        if self.Cj1 < 0 or self.Cj2 < 0:
            raise DomainError("junction capacitances must be >= 0")

    @classmethod
    def from_critical_currents(cls, Ic1, Ic2, Lg=0.0, Cj1=0.0, Cj2=0.0):
        total = Ic1 + Ic2
        if total <= 0:
            raise DomainError("at least one critical current must be positive")
        return cls(I0=total / 2, alpha=(Ic1 - Ic2) / total, Lg=Lg, Cj1=Cj1, Cj2=Cj2)

    @classmethod
    def from_beta(cls, beta_L, I0, alpha=0.0, Cj1=0.0, Cj2=0.0):
        """Build parameters for a prescribed screening parameter."""
        return cls(I0=I0, alpha=alpha, Lg=beta_L * PHI0 / (2 * I0), Cj1=Cj1, Cj2=Cj2)

    @property
    def Ic1(self) -> float:
        return self.I0 * (1 + self.alpha)

    @property
    def Ic2(self) -> float:
        return self.I0 * (1 - self.alpha)

    @property
    def beta_L(self) -> float:
        return 2 * self.Lg * self.I0 / PHI0

    @property
    def C_S(self) -> float:
        return self.Cj1 + self.Cj2

    def swapped(self) -> "SquidParams":
        """Same device with the two junction labels exchanged."""
        return SquidParams(self.I0, -self.alpha, self.Lg, self.Cj2, self.Cj1)


@dataclass(frozen=True)
class EffectiveJunction:
    """Single-junction equivalent of the two arms at fixed loop phase."""

    R: float
    psi0: float
    D: float


@dataclass(frozen=True)
class SquidInductances:
    Lj1: float
    Lj2: float
    Larm1: float
    Larm2: float
    Ls: float


@dataclass(frozen=True)
class ScreeningPoint:
    """A solved static operating point.

    ``residual`` is the dimensionless fluxoid residual and ``multivalued``
    reports whether the solved equation had more than one root at this flux.
    """

    phi_l: float
    varphi: float
    m: int
    branch_n: int
    screening_sign: int
    I: float
    I_circ: float
    Phi_e: float
    Phi_s: float
    delta1: float
    delta2: float
    residual: float = 0.0
    multivalued: bool = False
    n_roots: int = 1

    @classmethod
    def from_phases(cls, params: SquidParams, phi_l, varphi, Phi_e, m=0, I=0.0):
        """Construct a point from raw phases without solving anything."""
        d1, d2 = phi_l + varphi, phi_l - varphi
        i_circ = 0.5 * (params.Ic1 * math.sin(d1) - params.Ic2 * math.sin(d2))
        c = math.cos(phi_l + transport_decomposition(varphi, params).psi0)
        n = 0 if c >= 0 else 1
        sign = (1 if n == 0 else -1) * (1 if math.cos(varphi) >= 0 else -1)
        return cls(
            phi_l=phi_l,
            varphi=varphi,
            m=int(m),
            branch_n=n,
            screening_sign=sign,
            I=I,
            I_circ=i_circ,
            Phi_e=Phi_e,
            Phi_s=Phi_e - params.Lg * i_circ,
            delta1=d1,
            delta2=d2,
            residual=float(fluxoid_residual(varphi, Phi_e, m, params, i_circ=i_circ)),
        )


@dataclass(frozen=True)
class ScreeningCurve:
    """Sequence of screening points plus the flux intervals where the solved
    equation is multivalued and the grid indices where the solution jumped."""

    points: tuple
    multivalued_intervals: tuple = ()
    jumps: tuple = ()

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, idx):
        return self.points[idx]

    @property
    def Phi_e(self):
        return np.array([p.Phi_e for p in self.points])

    @property
    def Phi_s(self):
        return np.array([p.Phi_s for p in self.points])

    @property
    def I_circ(self):
        return np.array([p.I_circ for p in self.points])

    @property
    def has_fold(self) -> bool:
        return bool(self.multivalued_intervals)


class Stability(str, enum.Enum):
    STABLE = "stable"
    MARGINAL = "marginal"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class PotentialSample:
    """Dimensionless potential ``u = U/E0`` with analytic derivatives."""

    u: float
    E0: float
    grad: tuple
    hessian: np.ndarray = field(repr=False)
    det_h: float
    stable: bool
    reduced_current: float


# ---------------------------------------------------------------------------
# junction relations


def junction_currents(params: SquidParams):
    """Critical currents ``(Ic1, Ic2)`` of the two junctions."""
    if not 0.0 <= params.alpha < 1.0:
        raise DomainError(f"alpha must lie in [0, 1) for this operation, got {params.alpha}")
    return params.Ic1, params.Ic2


def josephson_inductance(Ic, delta):
    """Small-signal inductance ``Phi0/(2 pi Ic cos delta)``.

    Raises :class:`DivergenceError` when ``|cos delta|`` falls below 1e-9.
    """
    if not Ic > 0:
        raise DomainError(f"critical current must be positive, got {Ic!r}")
    c = math.cos(delta)
    if abs(c) < DIVERGENCE_THRESHOLD:
        raise DivergenceError(f"junction inductance diverges at delta={delta!r}")
    return PHI0 / (2 * math.pi * Ic * c)


def _deltas(point_or_deltas):
    if hasattr(point_or_deltas, "delta1"):
        return point_or_deltas.delta1, point_or_deltas.delta2
    d1, d2 = point_or_deltas
    return d1, d2


def squid_inductance(params: SquidParams, point) -> SquidInductances:
    """Arm and parallel inductances at the junction biases of ``point``.

    ``point`` is a :class:`ScreeningPoint` or a ``(delta1, delta2)`` pair.
    """
    d1, d2 = _deltas(point)
    lj1 = josephson_inductance(params.Ic1, d1)
    lj2 = josephson_inductance(params.Ic2, d2)
    la1 = lj1 + params.Lg / 2
    la2 = lj2 + params.Lg / 2
    den = la1 + la2
    if abs(den) <= DIVERGENCE_THRESHOLD * (abs(la1) + abs(la2)):
        raise DivergenceError("parallel SQUID inductance diverges")
    return SquidInductances(lj1, lj2, la1, la2, la1 * la2 / den)


def _ls_array(params: SquidParams, d1, d2):
    """Vectorised parallel inductance; NaN where a junction diverges."""
    c1, c2 = np.cos(d1), np.cos(d2)
    bad = (np.abs(c1) < DIVERGENCE_THRESHOLD) | (np.abs(c2) < DIVERGENCE_THRESHOLD)
    with np.errstate(divide="ignore", invalid="ignore"):
        la1 = PHI0 / (2 * np.pi * params.Ic1 * c1) + params.Lg / 2
        la2 = PHI0 / (2 * np.pi * params.Ic2 * c2) + params.Lg / 2
        ls = la1 * la2 / (la1 + la2)
    return np.where(bad, np.nan, ls)


# ---------------------------------------------------------------------------
# effective junction and circulating current


def _amplitude(varphi, alpha):
    c, s = np.cos(varphi), np.sin(varphi)
    return np.sqrt(c * c + alpha * alpha * s * s)


def transport_decomposition(varphi, params: SquidParams) -> EffectiveJunction:
    """Amplitude and offset of ``Ic1 sin(phi_l+varphi) + Ic2 sin(phi_l-varphi)``."""
    a = params.alpha
    D = float(_amplitude(varphi, a))
    psi0 = math.atan2(a * math.sin(varphi), math.cos(varphi))
    return EffectiveJunction(R=2 * params.I0 * D, psi0=psi0, D=D)


def terminal_phase(I, varphi, branch_n, params: SquidParams):
    """Terminal phase ``phi_l`` carrying transport current ``I`` on branch ``n``."""
    if branch_n not in (0, 1):
        raise DomainError("branch_n must be 0 or 1")
    ej = transport_decomposition(varphi, params)
    if abs(I) > ej.R * (1 + 1e-12):
        raise NoSolutionError(f"|I|={abs(I):.6g} A exceeds effective critical current {ej.R:.6g} A")
    ratio = 0.0 if I == 0 else max(-1.0, min(1.0, I / ej.R))
    return -ej.psi0 + (-1) ** branch_n * math.asin(ratio) + branch_n * math.pi


def circulating_current(varphi, params: SquidParams, I=0.0, screening_sign=1):
    """Circulating current for transport ``I``.

    ``screening_sign`` selects the square-root branch; ``+1`` corresponds to
    terminal-phase branch ``n = 0``.  At ``I = 0`` and ``|varphi| < pi/2`` it
    equals :func:`reduced_circulating_current` with the same sign.
    """
    a, I0 = params.alpha, params.I0
    ej = transport_decomposition(varphi, params)
    if abs(I) > ej.R * (1 + 1e-12):
        raise NoSolutionError("transport current exceeds effective critical current")
    D = ej.D
    if D == 0.0:
        # alpha = 0 at cos(varphi) = 0: zero effective junction, symmetric limit
        return 0.0
    root = math.sqrt(max(0.0, 1.0 - (I / (2 * I0 * D)) ** 2))
    c, s = math.cos(varphi), math.sin(varphi)
    return screening_sign * I0 * (1 - a * a) * c * s / D * root + a * I / (2 * D * D)


def _f_reduced(varphi, alpha, sign):
    """``I_circ/I0`` of the fixed-sign reduced form (vectorised)."""
    c, s = np.cos(varphi), np.sin(varphi)
    if alpha == 0:
        return sign * s
    D = np.sqrt(c * c + alpha * alpha * s * s)
    return sign * (1 - alpha * alpha) * s * np.abs(c) / D


def reduced_circulating_current(varphi, params: SquidParams, screening_sign=1):
    """Zero-transport circulating current
    ``+-I0 (1-a^2) sin(varphi)/sqrt(1 + a^2 tan^2 varphi)``."""
    out = params.I0 * _f_reduced(varphi, params.alpha, screening_sign)
    return float(out) if np.ndim(out) == 0 else out


def fluxoid_residual(varphi, Phi_e, m, params: SquidParams, screening_sign=1, i_circ=None):
    """Dimensionless residual ``2 varphi + pi beta I_circ/I0 - 2 pi (phi_e + m)``."""
    if i_circ is None:
        i_circ = reduced_circulating_current(varphi, params, screening_sign)
    return 2 * varphi + np.pi * params.beta_L * i_circ / params.I0 - 2 * np.pi * (Phi_e / PHI0 + m)


# ---------------------------------------------------------------------------
# per-cell fluxoid functions
#
# Cell k covers varphi in [k pi - pi/2, k pi + pi/2]; within a cell sign(cos)
# is fixed, so both the n=0 form and the fixed-sign form are smooth there.


def _cell_f(phi, alpha, k, kind):
    """(f, df) in cell ``k``; ``kind`` is 0 for the n=0 form or +-1 for fixed sign."""
    c, s = np.cos(phi), np.sin(phi)
    sgn = 1.0 if k % 2 == 0 else -1.0
    if alpha == 0:
        f0, df0 = sgn * s, sgn * c
    else:
        a2 = alpha * alpha
        D = np.sqrt(c * c + a2 * s * s)
        f0 = (1 - a2) * s * c / D
        df0 = (1 - a2) * ((c * c - s * s) / D + (1 - a2) * s * s * c * c / D**3)
    if kind == 0:
        return f0, df0
    return kind * sgn * f0, kind * sgn * df0


def _cell_grid(k, n=257):
    t = np.linspace(-1.0, 1.0, n)
    return k * np.pi + 0.5 * np.pi * np.sin(0.5 * np.pi * t)


def _polish(phi, T, beta, alpha, k, kind, lo, hi):
    for _ in range(4):
        f, df = _cell_f(phi, alpha, k, kind)
        h = 2 * phi + np.pi * beta * f - T
        dh = 2 + np.pi * beta * df
        if dh == 0:
            break
        nxt = phi - h / dh
        if not lo <= nxt <= hi:
            break
        phi = nxt
    return float(phi)


def _all_roots(T, beta, alpha, kind):
    """All roots ``(varphi, cell)`` of the fluxoid equation for target ``T``."""
    half = 0.5 * np.pi * beta * (1 - alpha * alpha) + 1e-9
    lo_w, hi_w = T / 2 - half, T / 2 + half
    k_lo = int(math.floor(lo_w / np.pi + 0.5))
    k_hi = int(math.floor(hi_w / np.pi + 0.5))
    roots = []
    for k in range(k_lo, k_hi + 1):
        grid = _cell_grid(k)
        f, _ = _cell_f(grid, alpha, k, kind)
        h = 2 * grid + np.pi * beta * f - T
        scale = max(1.0, abs(T))
        for i in range(len(grid)):
            if abs(h[i]) <= 4e-15 * scale:
                roots.append((float(grid[i]), k))
        sc = np.nonzero(np.sign(h[:-1]) * np.sign(h[1:]) < 0)[0]
        for i in sc:
            a, b = grid[i], grid[i + 1]

            def fn(x, k=k):
                return 2 * x + np.pi * beta * _cell_f(x, alpha, k, kind)[0] - T

            r = optimize.brentq(fn, a, b, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
            roots.append((_polish(r, T, beta, alpha, k, kind, a, b), k))
    roots.sort()
    out = []
    for r in roots:
        if not out or abs(r[0] - out[-1][0]) > 1e-10:
            out.append(r)
    return out


def _solve_cell0(T, beta, alpha, iters=64):
    """Vectorised bisection for the n=0 root in the principal cell."""
    T = np.asarray(T, dtype=float)
    lo = np.full(T.shape, -0.5 * np.pi)
    hi = np.full(T.shape, 0.5 * np.pi)

    def h(x):
        return 2 * x + np.pi * beta * _cell_f(x, alpha, 0, 0)[0] - T

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        neg = h(mid) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    phi = 0.5 * (lo + hi)
    for _ in range(2):
        f, df = _cell_f(phi, alpha, 0, 0)
        dh = 2 + np.pi * beta * df
        step = (2 * phi + np.pi * beta * f - T) / np.where(dh == 0, np.inf, dh)
        cand = phi - step
        ok = (cand >= -0.5 * np.pi) & (cand <= 0.5 * np.pi)
        res_old = np.abs(h(phi))
        res_new = np.abs(h(np.where(ok, cand, phi)))
        phi = np.where(ok & (res_new <= res_old), cand, phi)
    return phi


def principal_winding(Phi_e):
    """Winding ``m`` placing ``phi_e + m`` in ``[-1/2, 1/2)``."""
    return -np.floor(np.asarray(Phi_e) / PHI0 + 0.5).astype(int)


def solve_ground_phase(Phi_e, params: SquidParams):
    """Vectorised ground-state loop phase and winding for arrays of flux.

    Returns ``(varphi, m)``.  The ground state is the ``n = 0`` root inside
    the principal cell, which is unique for ``|phi_e + m| < 1/2``.
    """
    Phi_e = np.asarray(Phi_e, dtype=float)
    m = principal_winding(Phi_e)
    T = 2 * np.pi * (Phi_e / PHI0 + m)
    beta, alpha = params.beta_L, params.alpha
    if beta == 0 or abs(alpha) == 1:
        return T / 2, m
    return _solve_cell0(T, beta, abs(alpha)), m


def _energy(phi, phi_l, T, beta, alpha):
    flux = (2 * np.pi / beta) * (phi / np.pi - T / (2 * np.pi)) ** 2
    return -(1 + alpha) * math.cos(phi_l + phi) - (1 - alpha) * math.cos(phi_l - phi) + flux


def _branch_for(phi, sign):
    c = math.cos(phi)
    sc = 1 if c >= 0 else -1
    return 0 if sign * sc > 0 else 1


def _cell_residual(root, T, beta, alpha, sign):
    phi, cell = root
    f = _cell_f(phi, alpha, cell, 0)[0] if sign == 0 else _f_reduced(phi, alpha, sign)
    return 2 * phi + np.pi * beta * float(f) - T


def _make_point(params, phi, m, Phi_e, sign, n, n_roots, cell=None):
    a = params.alpha
    if cell is None:
        cell = int(math.floor(phi / np.pi + 0.5))
    if sign == 0:
        i_circ = params.I0 * float(_cell_f(phi, a, cell, 0)[0])
        sign = 1 if cell % 2 == 0 else -1
    else:
        i_circ = params.I0 * float(_f_reduced(phi, a, sign))
    phi_l = terminal_phase(0.0, phi, n, params)
    if sign != 0:
        # on a cell boundary the parity label is ambiguous; keep the branch
        # whose junction phases reproduce the circulating current
        def mismatch(pl):
            direct = 0.5 * (params.Ic1 * math.sin(pl + phi) - params.Ic2 * math.sin(pl - phi))
            return abs(direct - i_circ)

        alt = terminal_phase(0.0, phi, 1 - n, params)
        if mismatch(alt) < mismatch(phi_l) - 1e-12 * params.I0:
            n, phi_l = 1 - n, alt
    res = float(fluxoid_residual(phi, Phi_e, m, params, i_circ=i_circ))
    return ScreeningPoint(
        phi_l=phi_l,
        varphi=phi,
        m=int(m),
        branch_n=n,
        screening_sign=int(sign),
        I=0.0,
        I_circ=i_circ,
        Phi_e=float(Phi_e),
        Phi_s=float(Phi_e - params.Lg * i_circ),
        delta1=phi_l + phi,
        delta2=phi_l - phi,
        residual=res,
        multivalued=n_roots > 1,
        n_roots=n_roots,
    )


def solve_screening(Phi_e, params: SquidParams, screening_sign=None, m=None, seed=None, tol=1e-12):
    """Solve fluxoid quantization at zero transport current.

    Parameters
    ----------
    screening_sign:
        ``None`` selects the ground state (``n = 0`` branch, lowest energy).
        ``+1``/``-1`` solves the fixed-sign reduced equation.
    m:
        Winding integer.  Defaults to the principal cell.
    seed:
        Loop-phase guess; the root nearest to it is returned.  Without a seed
        the fixed-sign mode returns the root nearest the cell center.
    """
    Phi_e = float(Phi_e)
    if m is None:
        m = int(principal_winding(Phi_e))
    T = 2 * np.pi * (Phi_e / PHI0 + m)
    beta, alpha = params.beta_L, params.alpha
    sign = 0 if screening_sign is None else int(np.sign(screening_sign))
    if screening_sign is not None and sign == 0:
        raise DomainError("screening_sign must be +1, -1 or None")

    if beta == 0 or abs(alpha) == 1:
        phi = T / 2
        n = _branch_for(phi, sign if sign else 1) if sign else 0
        return _make_point(params, phi, m, Phi_e, sign, n, 1)

    roots = _all_roots(T, beta, alpha, sign)
    # a sign change across the |cos| kink at alpha = 0 is not a root
    lim = max(tol, 1e-12) * max(1.0, abs(T))
    roots = [r for r in roots if abs(_cell_residual(r, T, beta, alpha, sign)) <= lim]
    if not roots:
        raise NoSolutionError(f"no fluxoid root found at Phi_e={Phi_e!r}")
    if seed is not None:
        phi, cell = min(roots, key=lambda r: abs(r[0] - seed))
    elif sign == 0:
        # lowest potential energy among n=0 states, preferring the principal cell
        # ranked by beta * U so a vanishing beta does not overflow
        def energy(r):
            pl = terminal_phase(0.0, r[0], 0, params)
            jos = -(1 + alpha) * math.cos(pl + r[0]) - (1 - alpha) * math.cos(pl - r[0])
            return beta * jos + 2 * np.pi * (r[0] / np.pi - T / (2 * np.pi)) ** 2

        best = min(energy(r) for r in roots)
        cands = [r for r in roots if energy(r) <= best + 1e-12 * max(1.0, abs(best))]
        phi, cell = min(cands, key=lambda r: abs(r[0]))
    else:
        phi, cell = min(roots, key=lambda r: abs(r[0] - T / 2))

    n = 0 if sign == 0 else (0 if sign * (1 if cell % 2 == 0 else -1) > 0 else 1)
    pt = _make_point(params, phi, m, Phi_e, sign, n, len(roots), cell)
    if abs(pt.residual) > max(tol, 1e-12) * max(1.0, abs(T)):
        raise SolverError(f"fluxoid residual {pt.residual:.3e} above tolerance")
    return pt


def screening_curve(Phi_e_grid, params: SquidParams, screening_sign=1, mode="continuation"):
    """Screened flux along a sorted grid of applied flux.

    ``mode="continuation"`` keeps the winding of the first point and seeds each
    solve with the previous loop phase, tracing the fixed-sign characteristic
    including metastable segments.  ``mode="ground"`` solves every point
    independently in ground mode.
    """
    grid = np.asarray(Phi_e_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise PreconditionError("flux grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) < 0):
        raise PreconditionError("flux grid must be sorted")
    points = []
    jumps = []
    if mode == "ground":
        for x in grid:
            points.append(solve_screening(x, params))
    elif mode == "continuation":
        m0 = int(principal_winding(grid[0]))
        seed = None
        for x in grid:
            p = solve_screening(x, params, screening_sign=screening_sign, m=m0, seed=seed)
            points.append(p)
            seed = p.varphi
    else:
        raise DomainError(f"unknown mode {mode!r}")

    phis = np.array([p.varphi + np.pi * p.m for p in points])
    dphi = np.abs(np.diff(phis))
    if dphi.size:
        step = np.abs(np.diff(grid)) / PHI0 * np.pi
        typical = float(np.median(dphi)) if dphi.size else 0.0
        thresh = np.maximum(0.1, 20 * np.maximum(step, typical))
        jumps = [int(i + 1) for i in np.nonzero(dphi > thresh)[0]]

    intervals = []
    start = None
    for i, p in enumerate(points):
        if p.multivalued and start is None:
            start = i
        if (not p.multivalued or i == len(points) - 1) and start is not None:
            end = i if p.multivalued else i - 1
            intervals.append((float(grid[start]), float(grid[end])))
            start = None
    return ScreeningCurve(tuple(points), tuple(intervals), tuple(jumps))


# ---------------------------------------------------------------------------
# potential landscape


def potential(phi_l, varphi, Phi_e, m, I, params: SquidParams) -> PotentialSample:
    """Dimensionless SQUID potential with analytic gradient and Hessian."""
    beta = params.beta_L
    if beta <= 0:
        raise DomainError("dimensionless potential requires beta_L > 0")
    a = params.alpha
    i = I / params.I0
    d1, d2 = phi_l + varphi, phi_l - varphi
    c1, c2 = math.cos(d1), math.cos(d2)
    s1, s2 = math.sin(d1), math.sin(d2)
    x = varphi / math.pi - m - Phi_e / PHI0
    u = -(1 + a) * c1 - (1 - a) * c2 + (2 * math.pi / beta) * x * x - i * phi_l
    g_l = (1 + a) * s1 + (1 - a) * s2 - i
    g_p = (1 + a) * s1 - (1 - a) * s2 + (4 / beta) * x
    h_ll = (1 + a) * c1 + (1 - a) * c2
    h_lp = (1 + a) * c1 - (1 - a) * c2
    h_pp = h_ll + 4 / (math.pi * beta)
    H = np.array([[h_ll, h_lp], [h_lp, h_pp]])
    det = h_ll * h_pp - h_lp * h_lp
    return PotentialSample(
        u=u,
        E0=PHI0 * params.I0 / (2 * math.pi),
        grad=(g_l, g_p),
        hessian=H,
        det_h=det,
        stable=bool(det > 0 and h_ll > 0 and h_pp > 0),
        reduced_current=i,
    )


def branch_switching_onset(params: SquidParams, point, tol=STATIONARY_TOL, det_tol=1e-9):
    """Classify a stationary point by the definiteness of the Hessian."""
    ps = potential(point.phi_l, point.varphi, point.Phi_e, point.m, point.I, params)
    scale = max(1.0, abs(ps.u))
    if max(abs(ps.grad[0]), abs(ps.grad[1])) > tol * scale:
        raise PreconditionError(f"point is not stationary (grad={ps.grad})")
    h = ps.hessian
    norm = max(1.0, abs(h[0, 0]), abs(h[1, 1]), abs(h[0, 1])) ** 2
    if abs(ps.det_h) <= det_tol * norm:
        return Stability.MARGINAL
    return Stability.STABLE if ps.stable else Stability.UNSTABLE


# ---------------------------------------------------------------------------
# multivaluedness of the screening map


def _min_slope(alpha, kind=1, n=4097):
    """Minimum over a full period of ``d f/d varphi`` for the chosen form."""
    vals = []
    for k in (0, 1):
        grid = _cell_grid(k, n)
        vals.append(np.min(_cell_f(grid, alpha, k, kind)[1]))
    if alpha > 0:
        # one-sided limits at the cell boundary
        lim = (1 - alpha * alpha) / alpha
        vals.append(-lim)
    return float(min(vals))


def screening_map_is_monotone(beta_L, alpha, screening_sign=1):
    """Whether ``Phi_s -> Phi_e`` of the fixed-sign equation is monotone."""
    return 2 + np.pi * beta_L * _min_slope(abs(alpha), screening_sign) >= 0


def multivalued_onset(alpha, screening_sign=1, tol=1e-10, beta_max=100.0):
    """Bisect the smallest screening parameter making the fixed-sign
    characteristic multivalued."""
    lo, hi = 0.0, beta_max
    if screening_map_is_monotone(hi, alpha, screening_sign):
        return math.inf
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if screening_map_is_monotone(mid, alpha, screening_sign):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fold_threshold(alpha):
    """Closed-form onset for the ``+`` characteristic.

    ``2/pi`` for a symmetric device and ``2 alpha/(pi (1 - alpha^2))``
    otherwise, set by the steep slope of the circulating current near half
    flux.
    """
    a = abs(alpha)
    if a == 0:
        return 2 / math.pi
    if a >= 1:
        return math.inf
    return min(2 * a / (math.pi * (1 - a * a)), 2 / (math.pi * (1 - a * a)))
