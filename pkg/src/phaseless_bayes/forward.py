"""Exterior Dirichlet Helmholtz solver for point-source incidence.

The scattered field is sought as a combined double/single layer potential

    u_sc(x) = int_G [dPhi(x, y)/dnu(y) - i eta Phi(x, y)] phi(y) ds(y),

with ``Phi(x, y) = (i/4) H0(k |x - y|)`` and ``eta = k``.  The boundary
condition ``u_sc = -u_in`` gives a second-kind equation that is discretised
with Kress' trigonometric quadrature, splitting off the logarithmic parts of
the kernels analytically.  The far field is normalised as

    u_sc(x) = e^{ik|x|} / sqrt(|x|) * (u_inf(x_hat) + O(1/|x|)),

so ``u_inf`` carries the prefactor ``e^{-i pi/4} / sqrt(8 pi k)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.linalg.lapack import zgecon

from .errors import GeometryError, SolverError
from .geometry import BoundaryCurve, is_valid, signed_area
from .specfun import bessel01

RCOND_MIN = 1e-12
RESOLUTION_MIN = 1.5
RESOLUTION_SEPARATION = 3
N_QUAD_MAX = 512
_EULER_GAMMA = 0.57721566490153286061


@dataclass(frozen=True)
class ScatteringSetup:
    """Wavenumber, source ring, observation grid and quadrature size."""

    k: float = 2.0
    R: float = 6.0
    L: int = 25
    M: int = 25
    n_quad: int = 64
    eta: float | None = None
    n_quad_max: int | None = None
    min_resolution: float = RESOLUTION_MIN

    def __post_init__(self):
        if not self.k > 0 or not self.R > 0:
            raise ValueError("k and R must be positive")
        if self.L < 1 or self.M < 1:
            raise ValueError("L and M must be at least 1")
        if self.n_quad < 16 or self.n_quad % 2:
            raise ValueError("n_quad must be an even integer >= 16")
        if self.n_quad_max is not None and self.n_quad_max < self.n_quad:
            raise ValueError("n_quad_max must not be below n_quad")

    @property
    def adaptive(self) -> bool:
        return self.n_quad_max is not None and self.n_quad_max > self.n_quad

    @property
    def coupling(self) -> float:
        return self.k if self.eta is None else float(self.eta)

    @functools.cached_property
    def sources(self) -> np.ndarray:
        theta = 2.0 * np.pi * np.arange(self.L) / self.L
        return np.stack([self.R * np.cos(theta), self.R * np.sin(theta)], axis=-1)

    @functools.cached_property
    def direction_angles(self) -> np.ndarray:
        return -np.pi + 2.0 * np.pi * np.arange(self.M) / self.M

    @functools.cached_property
    def directions(self) -> np.ndarray:
        th = self.direction_angles
        return np.stack([np.cos(th), np.sin(th)], axis=-1)

    def replace(self, **changes) -> "ScatteringSetup":
        fields = dict(k=self.k, R=self.R, L=self.L, M=self.M, n_quad=self.n_quad, eta=self.eta,
                      n_quad_max=self.n_quad_max, min_resolution=self.min_resolution)
        fields.update(changes)
        return ScatteringSetup(**fields)


def incident_field(x, source, k: float) -> complex:
    """Point source wave ``(i/4) H0^(1)(k |x - source|)``."""
    x = np.asarray(x, dtype=float)
    source = np.asarray(source, dtype=float)
    r = float(np.hypot(*(x - source)))
    if r < 1e-12:
        raise ValueError("incident field is singular at the source position")
    j0, _, y0, _ = bessel01(k * r)
    return 0.25j * complex(j0, y0)


@functools.lru_cache(maxsize=16)
def _quadrature_tables(n_quad: int):
    # Kress log-weights R_j and ln(4 sin^2(d/2)) as functions of the
    # index offset (i - j) mod n_quad.
    n = n_quad // 2
    d = np.pi * np.arange(n_quad) / n
    m = np.arange(1, n)
    rw = -(2.0 * np.pi / n) * (np.cos(np.outer(d, m)) / m).sum(axis=1)
    rw -= (np.pi / n**2) * np.cos(n * d)
    with np.errstate(divide="ignore"):
        lg = np.log(4.0 * np.sin(0.5 * d) ** 2)
    lg[0] = 0.0
    return rw, lg


@numba.njit(cache=True)
def _assemble(z, dz, ddz, k, eta, rw, lg):
    nq = z.shape[0]
    w = np.pi / (nq // 2)
    inv2pi = 1.0 / (2.0 * np.pi)
    A = np.empty((nq, nq), dtype=np.complex128)
    speed = np.empty(nq)
    for j in range(nq):
        speed[j] = math.hypot(dz[j, 0], dz[j, 1])
    for i in range(nq):
        # diagonal
        sp = speed[i]
        l2 = inv2pi * (dz[i, 0] * ddz[i, 1] - dz[i, 1] * ddz[i, 0]) / (sp * sp)
        m1 = -inv2pi * sp
        m2 = complex(-_EULER_GAMMA / np.pi - math.log(0.5 * k * sp) / np.pi, 0.5) * sp
        k1 = 1j * eta * m1
        k2 = l2 + 1j * eta * m2
        A[i, i] = 1.0 - (rw[0] * k1 + w * k2)
        for j in range(i + 1, nq):
            ex = z[i, 0] - z[j, 0]
            ey = z[i, 1] - z[j, 1]
            r = math.hypot(ex, ey)
            j0, j1, y0, y1 = bessel01(k * r)
            off = (i - j) % nq
            rij = rw[off]
            lij = lg[off]
            rji = rw[nq - off]
            lji = lg[nq - off]
            # row i, column j
            cr = dz[j, 1] * ex - dz[j, 0] * ey
            l1 = k * inv2pi * cr * j1 / r
            lfull = -0.5j * k * cr * complex(j1, y1) / r
            mfull = 0.5j * complex(j0, y0) * speed[j]
            mm1 = -inv2pi * j0 * speed[j]
            kk1 = l1 + 1j * eta * mm1
            kk2 = (lfull - l1 * lij) + 1j * eta * (mfull - mm1 * lij)
            A[i, j] = -(rij * kk1 + w * kk2)
            # row j, column i (difference vector flips sign)
            cr = -(dz[i, 1] * ex - dz[i, 0] * ey)
            l1 = k * inv2pi * cr * j1 / r
            lfull = -0.5j * k * cr * complex(j1, y1) / r
            mfull = 0.5j * complex(j0, y0) * speed[i]
            mm1 = -inv2pi * j0 * speed[i]
            kk1 = l1 + 1j * eta * mm1
            kk2 = (lfull - l1 * lji) + 1j * eta * (mfull - mm1 * lji)
            A[j, i] = -(rji * kk1 + w * kk2)
    return A


@numba.njit(cache=True)
def _boundary_rhs(z, sources, k):
    # -2 u_in on the nodes, one column per source.
    nq = z.shape[0]
    ns = sources.shape[0]
    g = np.empty((nq, ns), dtype=np.complex128)
    for s in range(ns):
        for i in range(nq):
            r = math.hypot(z[i, 0] - sources[s, 0], z[i, 1] - sources[s, 1])
            j0, _, y0, _ = bessel01(k * r)
            g[i, s] = -0.5j * complex(j0, y0)
    return g


@numba.njit(cache=True)
def _far_field_operator(z, dz, directions, k, eta):
    nq = z.shape[0]
    nd = directions.shape[0]
    w = np.pi / (nq // 2)
    pref = complex(math.cos(-0.25 * np.pi), math.sin(-0.25 * np.pi)) / math.sqrt(8.0 * np.pi * k)
    F = np.empty((nd, nq), dtype=np.complex128)
    for m in range(nd):
        d0, d1 = directions[m, 0], directions[m, 1]
        for j in range(nq):
            sp = math.hypot(dz[j, 0], dz[j, 1])
            amp = k * (d0 * dz[j, 1] - d1 * dz[j, 0]) + eta * sp
            ph = -k * (d0 * z[j, 0] + d1 * z[j, 1])
            F[m, j] = pref * w * amp * complex(math.cos(ph), math.sin(ph))
    return F


def discretize(curve: BoundaryCurve, n_quad: int):
    """Counter-clockwise quadrature nodes ``(z, z', z'')`` for ``curve``."""
    t = 2.0 * np.pi * np.arange(n_quad) / n_quad
    z, dz, ddz = curve.derivatives(t)
    if signed_area(z) < 0:
        # reparametrise t -> -t so the normal from (z2', -z1') points outward
        z, dz, ddz = curve.derivatives(-t)
        dz = -dz
    return np.ascontiguousarray(z), np.ascontiguousarray(dz), np.ascontiguousarray(ddz)


@numba.njit(cache=True)
def _resolution(z, dz, sep_min):
    # Smallest distance between nodes that are not near neighbours along the
    # curve, in units of the local node spacing.  Small values flag thin
    # regions where the quadrature cannot resolve the near-singular kernel.
    nq = z.shape[0]
    h = 2.0 * np.pi / nq
    worst = np.inf
    for i in range(nq):
        si = math.hypot(dz[i, 0], dz[i, 1])
        for j in range(i + sep_min, nq):
            if nq - (j - i) < sep_min:
                break
            sj = math.hypot(dz[j, 0], dz[j, 1])
            d = math.hypot(z[i, 0] - z[j, 0], z[i, 1] - z[j, 1]) / (max(si, sj) * h)
            if d < worst:
                worst = d
    return worst


def resolution(curve: BoundaryCurve, n_quad: int) -> float:
    """Node-spacing-relative thickness of ``curve`` at ``n_quad`` nodes."""
    z, dz, _ = discretize(curve, n_quad)
    return float(_resolution(z, dz, RESOLUTION_SEPARATION))


def choose_n_quad(curve: BoundaryCurve, setup: ScatteringSetup) -> int:
    """Smallest ``n_quad * 2^j`` that resolves the curve; raises if none up to the cap."""
    n = setup.n_quad
    if not setup.adaptive:
        return n
    while True:
        if resolution(curve, n) >= setup.min_resolution:
            return n
        if 2 * n > setup.n_quad_max:
            raise SolverError(f"curve too thin to resolve with {setup.n_quad_max} nodes")
        n *= 2


class FactoredBoundaryOperator:
    """LU factorisation of the Nyström matrix for one curve and setup.

    With an adaptive setup the node count is doubled from ``n_quad`` until
    thin regions are resolved (see :func:`choose_n_quad`).
    """

    def __init__(self, curve: BoundaryCurve, setup: ScatteringSetup):
        self.setup = setup
        self.n_quad = n_quad = choose_n_quad(curve, setup)
        z, dz, ddz = discretize(curve, n_quad)
        self.nodes = z
        self.tangents = dz
        rw, lg = _quadrature_tables(n_quad)
        A = _assemble(z, dz, ddz, float(setup.k), float(setup.coupling), rw, lg)
        if not np.all(np.isfinite(A)):
            raise SolverError("non-finite entries in the boundary operator")
        self.lu, self.piv = lu_factor(A, check_finite=False)
        anorm = float(np.abs(A).sum(axis=0).max())
        rcond, info = zgecon(self.lu, anorm, norm="1")
        if info != 0 or not rcond > RCOND_MIN:
            raise SolverError(f"boundary operator numerically singular (rcond={rcond:.3e})")
        self.rcond = float(rcond)
        self._far = _far_field_operator(
            z, dz, np.ascontiguousarray(setup.directions), float(setup.k), float(setup.coupling)
        )

    def density(self, source_indices=None) -> np.ndarray:
        src = self.setup.sources
        if source_indices is not None:
            src = src[np.atleast_1d(source_indices)]
        rhs = _boundary_rhs(self.nodes, np.ascontiguousarray(src), float(self.setup.k))
        return lu_solve((self.lu, self.piv), rhs, check_finite=False)

    def far_field(self, source_indices=None) -> np.ndarray:
        """Complex far field, shape ``(M, n_sources)``."""
        return self._far @ self.density(source_indices)


def _check_valid(curve, setup, check):
    if check and not is_valid(curve, setup.sources):
        raise GeometryError(f"invalid geometry for the forward problem: {curve.params!r}")


def solve_far_field(curve: BoundaryCurve, setup: ScatteringSetup, source_index: int,
                    check: bool = True) -> np.ndarray:
    """Complex far-field pattern at the ``M`` directions for one source."""
    if not 0 <= source_index < setup.L:
        raise IndexError("source index out of range")
    _check_valid(curve, setup, check)
    return FactoredBoundaryOperator(curve, setup).far_field(source_index)[:, 0]


def far_field_matrix(curve: BoundaryCurve, setup: ScatteringSetup, check: bool = True) -> np.ndarray:
    """Complex far fields for all sources, shape ``(M, L)``; one factorisation."""
    _check_valid(curve, setup, check)
    return FactoredBoundaryOperator(curve, setup).far_field()


def forward_map(curve: BoundaryCurve, setup: ScatteringSetup, check: bool = True) -> np.ndarray:
    """Phaseless data ``|u_inf(x_m; source_l)|`` as an ``(M, L)`` array."""
    return np.abs(far_field_matrix(curve, setup, check=check))


def circle_far_field_series(radius: float, setup: ScatteringSetup, source_index: int = 0,
                            n_terms: int = 60) -> np.ndarray:
    """Far field of a centred sound-soft disc by separation of variables.

    Kept in the library as a reference solution; the test-suite has its own
    independent copy built on :mod:`scipy.special`.
    """
    from .specfun import bessel_j, hankel1

    k = setup.k
    src = setup.sources[source_index]
    r0 = float(np.hypot(*src))
    th0 = float(np.arctan2(src[1], src[0]))
    th = setup.direction_angles
    out = np.zeros(th.size, dtype=complex)
    for n in range(-n_terms, n_terms + 1):
        a = abs(n)
        sign = (-1) ** a if n < 0 else 1
        # H_{-n} = (-1)^n H_n and J_{-n} = (-1)^n J_n; the ratio J/H is even in n
        coef = -0.25j * sign * hankel1(a, k * r0) * bessel_j(a, k * radius) / hankel1(a, k * radius)
        out += coef * np.exp(-1j * n * th0) * np.exp(1j * n * th) * np.exp(-0.5j * np.pi * n)
    return out * np.sqrt(2.0 / (np.pi * k)) * np.exp(-0.25j * np.pi)
