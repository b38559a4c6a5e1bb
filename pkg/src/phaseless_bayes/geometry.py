"""Parametric obstacle boundaries.

Two families are supported:

``kite``
    Six parameters ``(cx, a1, a2, cy, b1, b2)`` with
    ``x(t) = (cx + a1 cos t + a2 cos 2t, cy + b1 sin t + b2 sin 2t)``.
    The vector ``(0, 1, 0, 0, 1, 0)`` is the unit circle and
    ``(-0.65, 1, 0.65, -3, 1.5, 0)`` is the classical kite.

``star``
    ``3 + 2 * n_r`` parameters ``(a, b, a0, a1, b1, ..., a_nr, b_nr)`` with
    ``x(t) = (a + r(t) cos t, b + r(t) sin t)`` and
    ``r(t) = a0 + sum_n a_n cos(n t) + b_n sin(n t)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ParameterError

R_MIN = 0.05
D_MIN = 0.1
VALIDITY_GRID = 512
SPEED_MIN = 1e-8


class Family(str, enum.Enum):
    KITE = "kite"
    STAR = "star"


@dataclass(frozen=True)
class ObstacleParams:
    """Parameter vector of one candidate boundary."""

    family: Family
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        fam = Family(self.family)
        vals = np.array(self.values, dtype=float).reshape(-1)
        vals.setflags(write=False)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "values", vals)
        n = vals.size
        if fam is Family.KITE and n != 6:
            raise ParameterError(f"kite family needs 6 parameters, got {n}")
        if fam is Family.STAR and (n < 5 or (n - 3) % 2):
            raise ParameterError(f"star family needs 3 + 2*n_r parameters (n_r >= 1), got {n}")
        if not np.all(np.isfinite(vals)):
            raise ParameterError("parameters must be finite")

    @classmethod
    def kite(cls, values) -> "ObstacleParams":
        return cls(Family.KITE, values)

    @classmethod
    def star(cls, values) -> "ObstacleParams":
        return cls(Family.STAR, values)

    @property
    def n_r(self) -> int | None:
        if self.family is Family.STAR:
            return (self.values.size - 3) // 2
        return None

    def __len__(self) -> int:
        return self.values.size

    def with_values(self, values) -> "ObstacleParams":
        return ObstacleParams(self.family, values)

    def __eq__(self, other):
        if not isinstance(other, ObstacleParams):
            return NotImplemented
        return self.family is other.family and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.family, self.values.tobytes()))

    def __repr__(self):
        vals = ", ".join(f"{v:.6g}" for v in self.values)
        return f"ObstacleParams({self.family.value}, [{vals}])"


def parameter_count(family: Family | str, n_r: int | None = None) -> int:
    family = Family(family)
    if family is Family.KITE:
        return 6
    if n_r is None or n_r < 1:
        raise ParameterError("star family needs n_r >= 1")
    return 3 + 2 * n_r


class BoundaryCurve:
    """Closed parametric curve ``x(t)``, ``t`` in ``[0, 2 pi)``.

    All evaluators accept an array of parameter values and return an
    ``(n, 2)`` array.
    """

    def __init__(self, params: ObstacleParams):
        self.params = params

    @property
    def family(self) -> Family:
        return self.params.family

    def radius(self, t, order: int = 0):
        """Radial function ``r(t)`` and its derivatives (star family only)."""
        if self.family is not Family.STAR:
            raise ParameterError("radius() is only defined for the star family")
        t = np.asarray(t, dtype=float)
        v = self.params.values
        n = np.arange(1, self.params.n_r + 1)
        a, b = v[3::2], v[4::2]
        nt = np.multiply.outer(t, n)
        c, s = np.cos(nt), np.sin(nt)
        if order == 0:
            return v[2] + c @ a + s @ b
        if order == 1:
            return (-s * n) @ a + (c * n) @ b
        if order == 2:
            return (-c * n**2) @ a + (-s * n**2) @ b
        raise ValueError("order must be 0, 1 or 2")

    def derivatives(self, t):
        """Return ``x(t), x'(t), x''(t)`` as three ``(n, 2)`` arrays."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        v = self.params.values
        if self.family is Family.KITE:
            cx, a1, a2, cy, b1, b2 = v
            c1, s1 = np.cos(t), np.sin(t)
            c2, s2 = np.cos(2 * t), np.sin(2 * t)
            x = np.stack([cx + a1 * c1 + a2 * c2, cy + b1 * s1 + b2 * s2], axis=-1)
            dx = np.stack([-a1 * s1 - 2 * a2 * s2, b1 * c1 + 2 * b2 * c2], axis=-1)
            ddx = np.stack([-a1 * c1 - 4 * a2 * c2, -b1 * s1 - 4 * b2 * s2], axis=-1)
            return x, dx, ddx
        r0, r1, r2 = self.radius(t), self.radius(t, 1), self.radius(t, 2)
        c, s = np.cos(t), np.sin(t)
        x = np.stack([v[0] + r0 * c, v[1] + r0 * s], axis=-1)
        dx = np.stack([r1 * c - r0 * s, r1 * s + r0 * c], axis=-1)
        ddx = np.stack([r2 * c - 2 * r1 * s - r0 * c, r2 * s + 2 * r1 * c - r0 * s], axis=-1)
        return x, dx, ddx

    def _pick(self, t, i):
        out = self.derivatives(t)[i]
        return out[0] if np.ndim(t) == 0 else out

    def __call__(self, t):
        """Point(s) ``x(t)``: shape ``(2,)`` for scalar ``t``, else ``t.shape + (2,)``."""
        return self._pick(t, 0)

    def velocity(self, t):
        return self._pick(t, 1)

    def acceleration(self, t):
        return self._pick(t, 2)


def make_curve(params: ObstacleParams) -> BoundaryCurve:
    if not isinstance(params, ObstacleParams):
        raise ParameterError("make_curve expects ObstacleParams")
    return BoundaryCurve(params)


def sample_boundary(curve: BoundaryCurve, n_pts: int) -> np.ndarray:
    """Points ``x(2 pi j / n_pts)``, ``j = 0..n_pts-1``, as an ``(n_pts, 2)`` array."""
    if n_pts < 4:
        raise ValueError("n_pts must be at least 4")
    t = 2.0 * np.pi * np.arange(n_pts) / n_pts
    return curve(t)


def signed_area(points: np.ndarray) -> float:
    """Shoelace area of a closed polyline; positive for counter-clockwise."""
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@numba.njit(cache=True)
def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@numba.njit(cache=True)
def _polyline_is_simple(pts):
    # Sweep-and-prune over segment x-extents; adjacent segments share a
    # vertex and are skipped.
    n = pts.shape[0]
    xmin = np.empty(n)
    xmax = np.empty(n)
    for i in range(n):
        j = (i + 1) % n
        xmin[i] = min(pts[i, 0], pts[j, 0])
        xmax[i] = max(pts[i, 0], pts[j, 0])
    order = np.argsort(xmin)
    for ii in range(n):
        i = order[ii]
        i2 = (i + 1) % n
        ax, ay, bx, by = pts[i, 0], pts[i, 1], pts[i2, 0], pts[i2, 1]
        for jj in range(ii + 1, n):
            j = order[jj]
            if xmin[j] > xmax[i]:
                break
            if j == i2 or i == (j + 1) % n:
                continue
            j2 = (j + 1) % n
            cx, cy, dx, dy = pts[j, 0], pts[j, 1], pts[j2, 0], pts[j2, 1]
            if max(ay, by) < min(cy, dy) or max(cy, dy) < min(ay, by):
                continue
            d1 = _orient(ax, ay, bx, by, cx, cy)
            d2 = _orient(ax, ay, bx, by, dx, dy)
            d3 = _orient(cx, cy, dx, dy, ax, ay)
            d4 = _orient(cx, cy, dx, dy, bx, by)
            if ((d1 > 0) != (d2 > 0) or d1 == 0 or d2 == 0) and (
                (d3 > 0) != (d4 > 0) or d3 == 0 or d4 == 0
            ):
                return False
    return True


@numba.njit(cache=True)
def _sources_clear(pts, sources, d_min):
    # Every source must have winding number zero and lie at least d_min
    # from every polyline segment.
    n = pts.shape[0]
    # Shortcut: a source farther than rho + d_min from the origin, where rho
    # bounds the polyline, is outside and clear.
    rho2 = 0.0
    for i in range(n):
        rho2 = max(rho2, pts[i, 0] * pts[i, 0] + pts[i, 1] * pts[i, 1])
    rho = np.sqrt(rho2)
    for s in range(sources.shape[0]):
        px, py = sources[s, 0], sources[s, 1]
        if np.sqrt(px * px + py * py) > rho + d_min:
            continue
        wind = 0
        dmin2 = np.inf
        for i in range(n):
            j = (i + 1) % n
            ax, ay, bx, by = pts[i, 0], pts[i, 1], pts[j, 0], pts[j, 1]
            ex, ey = bx - ax, by - ay
            l2 = ex * ex + ey * ey
            tt = 0.0
            if l2 > 0:
                tt = ((px - ax) * ex + (py - ay) * ey) / l2
                tt = min(1.0, max(0.0, tt))
            qx, qy = ax + tt * ex - px, ay + tt * ey - py
            d2 = qx * qx + qy * qy
            if d2 < dmin2:
                dmin2 = d2
            if ay <= py:
                if by > py and _orient(ax, ay, bx, by, px, py) > 0:
                    wind += 1
            elif by <= py and _orient(ax, ay, bx, by, px, py) < 0:
                wind -= 1
        if wind != 0 or dmin2 < d_min * d_min:
            return False
    return True


def is_valid(
    curve: BoundaryCurve,
    sources=(),
    r_min: float = R_MIN,
    d_min: float = D_MIN,
    n_grid: int = VALIDITY_GRID,
    check_simple: bool = True,
) -> bool:
    """Validity predicate for the forward problem.

    Star curves need ``min r(t) >= r_min``; kites must be simple closed
    curves.  Both need a non-vanishing tangent on the grid, and every source
    must lie outside the curve with clearance ``d_min``.  With
    ``check_simple=False`` self-intersecting kites are accepted; the solver
    still produces a (non-physical) answer for them.
    """
    t = 2.0 * np.pi * np.arange(n_grid) / n_grid
    if curve.family is Family.STAR:
        if float(np.min(curve.radius(t))) < r_min:
            return False
    pts, dx, _ = curve.derivatives(t)
    scale = max(1.0, float(np.max(np.abs(pts))))
    if float(np.min(np.hypot(dx[:, 0], dx[:, 1]))) <= SPEED_MIN * scale:
        return False
    pts = np.ascontiguousarray(pts)
    if check_simple and curve.family is Family.KITE and not _polyline_is_simple(pts):
        return False
    src = np.asarray(sources, dtype=float).reshape(-1, 2)
    if src.shape[0] and not _sources_clear(pts, np.ascontiguousarray(src), float(d_min)):
        return False
    return True


def polygon_length(points: np.ndarray) -> float:
    diff = np.diff(np.vstack([points, points[:1]]), axis=0)
    return float(np.sum(np.hypot(diff[:, 0], diff[:, 1])))


def unit_circle(family: Family | str = Family.KITE, n_r: int = 1) -> ObstacleParams:
    """Unit circle at the origin expressed in the requested family."""
    family = Family(family)
    if family is Family.KITE:
        return ObstacleParams.kite([0.0, 1.0, 0.0, 0.0, 1.0, 0.0])
    vals = np.zeros(3 + 2 * n_r)
    vals[2] = 1.0
    return ObstacleParams.star(vals)


def circle(radius: float, center=(0.0, 0.0)) -> ObstacleParams:
    """Circle of given radius as a one-mode star curve."""
    return ObstacleParams.star([center[0], center[1], radius, 0.0, 0.0])


KITE_EXACT = (-0.65, 1.0, 0.65, -3.0, 1.5, 0.0)
NOTCHED_DISK_EXACT = (-5.0, -4.0, 2.5, 2.0, 1.0)
STAR4_EXACT = (-1.0, -1.0, 4.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)

