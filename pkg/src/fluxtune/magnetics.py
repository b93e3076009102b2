"""Mutual and self inductance of filamentary loops and flux-transfer chains.

Mutual inductance uses the Neumann double line integral over closed polyline
filaments.  The integral is split into straight segment pairs:

* perpendicular pairs contribute nothing (``dl_a . dl_b = 0``);
* parallel and collinear pairs use the closed-form double antiderivative of
  ``1/r``;
* all other pairs integrate the inner segment analytically and the outer
  parameter with adaptive Gauss-Legendre quadrature.

Pair contributions are accumulated with ``math.fsum`` in a fixed order so the
result does not depend on evaluation order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constants import MU0, PHI0
from .errors import DomainError, GeometryError, PreconditionError, QuadratureError

__all__ = [
    "PolylineLoop",
    "TransferChain",
    "FluxCalibration",
    "EfficiencySurface",
    "square_loop",
    "neumann_mutual",
    "min_separation",
    "square_coil_self_inductance",
    "wire_self_inductance",
    "transfer_efficiency",
    "chain_efficiency",
    "mutual_from_period",
    "flux_from_current",
    "efficiency_sweep",
    "load_loops",
    "save_loops",
]

MIN_SEPARATION = 1e-9
# wire widths reproducing the reference coil inductances with the square-coil formula
DEFAULT_WIDTH_ON_CHIP = 5e-6
DEFAULT_WIDTH_FLIP_CHIP = 7.4e-6


@dataclass(frozen=True)
class PolylineLoop:
    """Filament through ``vertices`` (N x 3, metres).

    A closed loop joins the last vertex back to the first; do not repeat the
    first vertex.  ``wire_width``/``wire_radius`` only matter for self
    inductance.
    """

    vertices: np.ndarray
    closed: bool = True
    wire_width: float | None = None
    wire_radius: float | None = None
    name: str = ""

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise DomainError("vertices must be an (N, 3) array")
        if v.shape[1] == 2:
            v = np.column_stack([v, np.zeros(len(v))])
        if len(v) < 3:
            raise DomainError("a loop needs at least 3 vertices")
        if not np.all(np.isfinite(v)):
            raise DomainError("vertices must be finite")
        nxt = np.roll(v, -1, axis=0) if self.closed else v[1:]
        cur = v if self.closed else v[:-1]
        if np.any(np.linalg.norm(nxt - cur, axis=1) == 0):
            raise DomainError("consecutive vertices must be distinct")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def segments(self):
        """``(starts, ends)`` arrays of the straight pieces."""
        v = self.vertices
        if self.closed:
            return v, np.roll(v, -1, axis=0)
        return v[:-1], v[1:]

    @property
    def perimeter(self) -> float:
        a, b = self.segments
        return float(np.sum(np.linalg.norm(b - a, axis=1)))

    @property
    def vector_area(self) -> np.ndarray:
        """``(1/2) sum r_i x r_{i+1}``; its norm is the area of a planar loop."""
        a, b = self.segments
        return 0.5 * np.sum(np.cross(a, b), axis=0)

    @property
    def area(self) -> float:
        return float(np.linalg.norm(self.vector_area))

    def is_planar(self, tol=1e-12) -> bool:
        v = self.vertices - self.vertices.mean(axis=0)
        s = np.linalg.svd(v, compute_uv=False)
        return bool(s[-1] <= tol * max(s[0], 1e-300))

    def scaled(self, s: float) -> "PolylineLoop":
        w = None if self.wire_width is None else self.wire_width * s
        r = None if self.wire_radius is None else self.wire_radius * s
        return PolylineLoop(self.vertices * s, self.closed, w, r, self.name)

    def translated(self, offset) -> "PolylineLoop":
        return PolylineLoop(self.vertices + np.asarray(offset, float), self.closed,
                            self.wire_width, self.wire_radius, self.name)

    def subdivided(self, k: int = 2) -> "PolylineLoop":
        """Same contour with each segment split into ``k`` collinear pieces."""
        a, b = self.segments
        pts = [a[i] + (b[i] - a[i]) * j / k for i in range(len(a)) for j in range(k)]
        if not self.closed:
            pts.append(self.vertices[-1])
        return PolylineLoop(np.array(pts), self.closed, self.wire_width, self.wire_radius, self.name)


def square_loop(side, z=0.0, center=(0.0, 0.0), wire_width=None, normal="z", name=""):
    """Axis-aligned square filament of edge ``side`` traversed counter-clockwise.

    ``normal`` selects the plane: ``"z"`` (xy-plane at height ``z``), ``"x"`` or
    ``"y"`` for vertical loops through ``center``.
    """
    if not side > 0:
        raise DomainError("side must be positive")
    h = side / 2
    corners = np.array([[-h, -h], [h, -h], [h, h], [-h, h]])
    cx, cy = center
    if normal == "z":
        v = np.column_stack([corners[:, 0] + cx, corners[:, 1] + cy, np.full(4, z)])
    elif normal == "x":
        v = np.column_stack([np.full(4, cx), corners[:, 0] + cy, corners[:, 1] + z])
    elif normal == "y":
        v = np.column_stack([corners[:, 0] + cx, np.full(4, cy), corners[:, 1] + z])
    else:
        raise DomainError(f"unknown normal {normal!r}")
    return PolylineLoop(v, True, wire_width, None, name)


@dataclass(frozen=True)
class TransferChain:
    """Flux transformer: pickup, wiring, and input coil in series."""

    M: float
    L_p: float = 0.0
    L_wire: float = 0.0
    L_i: float = 0.0
    transduction: float | None = None

    def __post_init__(self):
        for name in ("L_p", "L_wire", "L_i"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")

    @property
    def total_inductance(self) -> float:
        return self.L_p + self.L_wire + self.L_i

    def end_to_end_efficiency(self, source_current, delivered_flux=PHI0):
        """``Phi_e/Phi_p`` when ``source_current`` delivers ``delivered_flux``.

        ``transduction`` is the pickup flux per unit source current (Wb/A).
        """
        if self.transduction is None:
            raise PreconditionError("transduction is not set")
        return delivered_flux / (self.transduction * source_current)


@dataclass(frozen=True)
class FluxCalibration:
    I_off: float
    I_Phi0: float

    def __post_init__(self):
        if self.I_Phi0 == 0 or not math.isfinite(self.I_Phi0):
            raise DomainError("I_Phi0 must be finite and nonzero")


@dataclass(frozen=True)
class EfficiencySurface:
    """``eta2[i, j]`` at ``ratios[i]`` and ``heights[j]``; NaN marks loops
    that touch."""

    ratios: np.ndarray
    heights: np.ndarray
    eta2: np.ndarray
    M: np.ndarray
    L_i: np.ndarray
    squid_side: float
    width_fraction: float

    def argmax_ratio(self):
        """Ratio maximising ``eta2`` for every height."""
        e = np.where(np.isfinite(self.eta2), self.eta2, -np.inf)
        return self.ratios[np.argmax(e, axis=0)]

    def rows(self):
        out = [["ratio", "h", "M", "L_i", "eta2"]]
        for i, r in enumerate(self.ratios):
            for j, h in enumerate(self.heights):
                out.append([r, h, self.M[i, j], self.L_i[i], self.eta2[i, j]])
        return out


# ---------------------------------------------------------------------------
# geometry helpers


def _seg_seg_distance(p0, p1, q0, q1):
    """Minimum distance between segments [p0, p1] and [q0, q1]."""
    d1, d2, r = p1 - p0, q1 - q0, p0 - q0
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    c = d1 @ r
    b = d1 @ d2
    denom = a * e - b * b
    if denom > 1e-14 * a * e:
        s = min(max((b * f - c * e) / denom, 0.0), 1.0)
    else:
        s = 0.0
    t = (b * s + f) / e
    if t < 0:
        t, s = 0.0, min(max(-c / a, 0.0), 1.0)
    elif t > 1:
        t, s = 1.0, min(max((b - c) / a, 0.0), 1.0)
    return float(np.linalg.norm(p0 + d1 * s - (q0 + d2 * t)))


def min_separation(a: PolylineLoop, b: PolylineLoop) -> float:
    """Smallest segment-to-segment distance between two loops."""
    a0, a1 = a.segments
    b0, b1 = b.segments
    best = math.inf
    for i in range(len(a0)):
        for j in range(len(b0)):
            best = min(best, _seg_seg_distance(a0[i], a1[i], b0[j], b1[j]))
    return best


# ---------------------------------------------------------------------------
# Neumann integral


def _G(u, d):
    """Double antiderivative of ``1/sqrt(u^2 + d^2)``."""
    if d == 0.0:
        au = abs(u)
        return 0.0 if au == 0.0 else u * math.log(au) - au
    return u * math.asinh(u / d) - math.hypot(u, d)


def _parallel_pair(p0, ta, La, q0, tb, Lb):
    """``int int ds dt / |r|`` for parallel segments (analytic)."""
    sgn = 1.0 if ta @ tb > 0 else -1.0
    # coordinates of b's endpoints along a's axis
    w = q0 - p0
    b1 = w @ ta
    b2 = b1 + sgn * Lb
    perp = w - b1 * ta
    d = float(np.linalg.norm(perp))
    scale = max(La, Lb)
    if d < 1e-13 * scale:
        d = 0.0
    lo, hi = min(b1, b2), max(b1, b2)
    val = _G(La - lo, d) - _G(-lo, d) - _G(La - hi, d) + _G(-hi, d)
    # orientation of b relative to a enters through dl_a . dl_b
    return sgn * val


def _inner(p, q0, tb, Lb):
    """``int_0^Lb dt / |p - q0 - t tb|`` for an array of points ``p``."""
    w = p - q0
    u = w @ tb
    rho2 = np.maximum(np.einsum("ij,ij->i", w, w) - u * u, 0.0)
    rho = np.sqrt(rho2)
    out = np.empty_like(u)
    small = rho < 1e-12 * Lb
    big = ~small
    out[big] = np.arcsinh((Lb - u[big]) / rho[big]) + np.arcsinh(u[big] / rho[big])
    us = u[small]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[small] = np.where(us <= 0, np.log((Lb - us) / -us), np.log(us / (us - Lb)))
    return out


_GL_CACHE = {}


def _gl(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _general_pair(p0, ta, La, q0, tb, Lb, rtol, atol, max_depth=40):
    """Adaptive Gauss-Legendre over segment a with analytic inner integral."""
    x8, w8 = _gl(8)
    x16, w16 = _gl(16)

    def quad(lo, hi, x, w):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        s = mid + half * x
        pts = p0[None, :] + s[:, None] * ta[None, :]
        return half * float(np.sum(w * _inner(pts, q0, tb, Lb)))

    total = []
    stack = [(0.0, La, 0)]
    worst = 0.0
    while stack:
        lo, hi, depth = stack.pop()
        coarse = quad(lo, hi, x8, w8)
        fine = quad(lo, hi, x16, w16)
        err = abs(fine - coarse)
        frac = (hi - lo) / La
        if err <= max(rtol * abs(fine), atol * frac) or depth >= max_depth:
            if depth >= max_depth and err > max(rtol * abs(fine), atol * frac):
                worst = max(worst, err)
            total.append(fine)
        else:
            mid = 0.5 * (lo + hi)
            stack.append((mid, hi, depth + 1))
            stack.append((lo, mid, depth + 1))
    return math.fsum(total) * float(ta @ tb), worst


def neumann_mutual(a: PolylineLoop, b: PolylineLoop, rtol=1e-6, check_geometry=True):
    """Mutual inductance (H) of two closed filament loops.

    Raises :class:`GeometryError` if the filaments come closer than 1 nm and
    :class:`QuadratureError` if adaptive refinement fails to converge.
    """
    if not (a.closed and b.closed):
        raise DomainError("mutual inductance requires closed loops")
    if check_geometry:
        sep = min_separation(a, b)
        if sep <= MIN_SEPARATION:
            raise GeometryError(f"loops touch or intersect (separation {sep:.3e} m)")
    a0, a1 = a.segments
    b0, b1 = b.segments
    La = np.linalg.norm(a1 - a0, axis=1)
    Lb = np.linalg.norm(b1 - b0, axis=1)
    ta = (a1 - a0) / La[:, None]
    tb = (b1 - b0) / Lb[:, None]
    scale = max(La.max(), Lb.max())
    # absolute floor relative to a typical pair magnitude
    atol = rtol * scale * 1e-3
    parts = []
    worst = 0.0
    for i in range(len(a0)):
        for j in range(len(b0)):
            dot = float(ta[i] @ tb[j])
            if abs(dot) < 1e-14:
                continue
            cross = np.linalg.norm(np.cross(ta[i], tb[j]))
            if cross < 1e-12:
                parts.append(_parallel_pair(a0[i], ta[i], La[i], b0[j], tb[j], Lb[j]))
            else:
                val, err = _general_pair(a0[i], ta[i], La[i], b0[j], tb[j], Lb[j], rtol * 0.1, atol)
                parts.append(val)
                worst = max(worst, err)
    total = MU0 / (4 * math.pi) * math.fsum(parts)
    if worst > rtol * max(abs(total) / (MU0 / (4 * math.pi)), atol):
        raise QuadratureError("Neumann quadrature did not converge", estimate=total)
    return total


# ---------------------------------------------------------------------------
# analytic self inductances and efficiencies


def square_coil_self_inductance(side, wire_width):
    """Square loop of edge ``side`` made of a flat wire of width ``wire_width``."""
    if not (0 < wire_width < side):
        raise DomainError("require 0 < wire_width < side")
    s2 = math.sqrt(2.0)
    return 2 * MU0 * side / math.pi * (s2 - 2 + math.log(4 * side / (wire_width * (1 + s2))))


def wire_self_inductance(length, radius):
    """Straight cylindrical wire of ``length`` and ``radius``."""
    if not (0 < radius < length):
        raise DomainError("require 0 < radius < length")
    return MU0 * length / (2 * math.pi) * (math.log(2 * length / radius) - 0.75)


def transfer_efficiency(M, L_i):
    """Fraction ``M/L_i`` of the input-coil self flux threading the SQUID."""
    if not L_i > 0:
        raise DomainError("L_i must be positive")
    return M / L_i


def chain_efficiency(chain: TransferChain):
    """``M/(L_p + L_wire + L_i)`` of a flux transformer."""
    den = chain.total_inductance
    if not den > 0:
        raise DomainError("total chain inductance must be positive")
    return chain.M / den


def mutual_from_period(I_Phi0):
    """Mutual inductance implied by a modulation period ``I_Phi0``."""
    if not I_Phi0 > 0:
        raise DomainError("I_Phi0 must be positive")
    return PHI0 / I_Phi0


def flux_from_current(I_in, cal: FluxCalibration):
    """Applied flux ``Phi0 (I_in - I_off)/I_Phi0``."""
    return PHI0 * (np.asarray(I_in, dtype=float) - cal.I_off) / cal.I_Phi0 if np.ndim(I_in) else \
        PHI0 * (I_in - cal.I_off) / cal.I_Phi0


def efficiency_sweep(ratios, heights, squid_side=200e-6, width_fraction=DEFAULT_WIDTH_FLIP_CHIP / 215e-6,
                     rtol=1e-6):
    """``eta2(d_i/d_s, h)`` for coaxial square filaments.

    The SQUID loop has edge ``squid_side``; the input coil has edge
    ``ratio * squid_side``, sits at axial distance ``h``, and has a wire width
    ``width_fraction`` times its edge so that coils of every size share the
    same aspect.  ``L_i`` follows from the square-coil formula.  Below a
    height of about one wire width the filament ``M`` outgrows the finite-width
    ``L_i`` and ``eta2`` can exceed 1.
    """
    ratios = np.asarray(ratios, dtype=float)
    heights = np.asarray(heights, dtype=float)
    if np.any(ratios <= 0) or np.any(heights < 0):
        raise DomainError("ratios must be positive and heights nonnegative")
    if not 0 < width_fraction < 1:
        raise DomainError("width_fraction must lie in (0, 1)")
    squid = square_loop(squid_side)
    M = np.full((ratios.size, heights.size), np.nan)
    L_i = np.empty(ratios.size)
    for i, r in enumerate(ratios):
        side = r * squid_side
        L_i[i] = square_coil_self_inductance(side, width_fraction * side)
        for j, h in enumerate(heights):
            coil = square_loop(side, z=h)
            try:
                M[i, j] = neumann_mutual(coil, squid, rtol=rtol)
            except GeometryError:
                pass
    return EfficiencySurface(ratios, heights, M / L_i[:, None], M, L_i, squid_side, width_fraction)


# ---------------------------------------------------------------------------
# geometry files


def _loop_from_spec(name, spec):
    if "vertices" in spec:
        return PolylineLoop(np.array(spec["vertices"], dtype=float), bool(spec.get("closed", True)),
                            spec.get("wire_width"), spec.get("wire_radius"), name)
    if "square" in spec:
        sq = spec["square"]
        return square_loop(sq["side"], sq.get("z", 0.0), tuple(sq.get("center", (0.0, 0.0))),
                           sq.get("wire_width"), sq.get("normal", "z"), name)
    raise DomainError(f"loop {name!r} needs 'vertices' or 'square'")


def load_loops(path) -> dict:
    """Read loops from JSON (``{"loops": {name: spec}}``) or CSV
    (``loop,x,y,z`` rows, metres)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        import csv

        pts = {}
        with path.open(newline="") as fh:
            for row in csv.DictReader(fh):
                pts.setdefault(row["loop"], []).append([float(row["x"]), float(row["y"]), float(row["z"])])
        return {k: PolylineLoop(np.array(v), True, name=k) for k, v in pts.items()}
    data = json.loads(path.read_text())
    loops = data.get("loops", data)
    return {name: _loop_from_spec(name, spec) for name, spec in loops.items()}


def save_loops(path, loops: dict):
    """Write loops as JSON vertex lists (round-trips through :func:`load_loops`)."""
    out = {}
    for name, lp in loops.items():
        spec = {"vertices": lp.vertices.tolist(), "closed": lp.closed}
        if lp.wire_width is not None:
            spec["wire_width"] = lp.wire_width
        if lp.wire_radius is not None:
            spec["wire_radius"] = lp.wire_radius
        out[name] = spec
    Path(path).write_text(json.dumps({"loops": out}, indent=2))
