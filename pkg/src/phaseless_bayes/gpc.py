"""Hermite polynomial-chaos surrogate of the phaseless forward map.

The basis is the tensor product of normalised probabilists' Hermite
polynomials in the prior-standardised variables ``(z_n - m_n) / sqrt(sigma_pr)``,
truncated at total degree ``N_tilde``.  Chaos coefficients are plain Monte
Carlo averages over prior draws.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bayes import GaussianPrior
from .errors import ConfigError, GeometryError, PriorMismatchError, SolverError

logger = logging.getLogger(__name__)

MAX_ORDER = 16
MAX_INDEX_COUNT = 10_000_000
FILE_MAGIC = b"GPCSURR1"
INDEX_ORDER = "graded-lex"
_HEADER = struct.Struct("<IIIIQqdQ")


def hermite_1d(m: int, x):
    """Orthonormal probabilists' Hermite polynomial ``He_m(x) / sqrt(m!)``."""
    if m < 0 or m > MAX_ORDER:
        raise ValueError(f"order must lie in [0, {MAX_ORDER}]")
    return hermite_table(x, m)[..., m]


def hermite_table(x, max_degree: int) -> np.ndarray:
    """All orthonormal Hermite values up to ``max_degree``; shape ``x.shape + (max_degree + 1,)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (max_degree + 1,))
    out[..., 0] = 1.0
    if max_degree >= 1:
        out[..., 1] = x
    # normalised form of He_{m+1} = x He_m - m He_{m-1}
    for m in range(1, max_degree):
        out[..., m + 1] = (x * out[..., m] - math.sqrt(m) * out[..., m - 1]) / math.sqrt(m + 1)
    return out


def index_count(N: int, N_tilde: int) -> int:
    return math.comb(N + N_tilde, N)


def _compositions(total: int, parts: int):
    # descending lexicographic: the first entry is exhausted first
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def build_index_set(N: int, N_tilde: int) -> np.ndarray:
    """All multi-indices with ``|alpha| <= N_tilde``, shape ``(count, N)``.

    Ordered by total degree, and within one degree lexicographically from
    the largest first entry down.
    """
    if N < 0 or N_tilde < 0:
        raise ValueError("N and N_tilde must be non-negative")
    count = index_count(N, N_tilde)
    if count > MAX_INDEX_COUNT:
        raise ConfigError(f"index set of size {count} exceeds {MAX_INDEX_COUNT}")
    if N == 0:
        return np.zeros((1, 0), dtype=np.int64)
    rows = [c for d in range(N_tilde + 1) for c in _compositions(d, N)]
    return np.array(rows, dtype=np.int64).reshape(count, N)


def basis_eval(alpha, z, prior: GaussianPrior) -> float:
    """Prior-standardised tensor Hermite basis function at one point."""
    alpha = np.asarray(alpha, dtype=np.int64)
    xi = prior.standardize(z)
    if alpha.shape != xi.shape:
        raise ValueError("multi-index and parameter lengths differ")
    return float(np.prod([hermite_1d(int(a), x) for a, x in zip(alpha, xi)]))


def basis_matrix(indices: np.ndarray, zs, prior: GaussianPrior) -> np.ndarray:
    """Basis values for many points: shape ``(n_points, n_indices)``."""
    xi = prior.standardize(np.atleast_2d(zs))
    order = int(indices.max()) if indices.size else 0
    H = hermite_table(xi, order)  # (n, N, order + 1)
    B = np.ones((xi.shape[0], indices.shape[0]))
    for n in range(indices.shape[1]):
        B *= H[:, n, :][:, indices[:, n]]
    return B


class ConditionalEvaluator:
    """Surrogate restricted to a line where only component ``n`` varies.

    The coefficients are collapsed over the fixed components once, so each
    candidate costs ``(N_tilde + 1) * L * M`` operations.
    """

    def __init__(self, surrogate: "GpcSurrogate", z, n: int):
        self.surrogate = surrogate
        self.n = n
        idx = surrogate.indices
        xi = surrogate.prior.standardize(z)
        H = hermite_table(xi, surrogate.order)
        rest = np.ones(idx.shape[0])
        for i in range(idx.shape[1]):
            if i != n:
                rest *= H[i, idx[:, i]]
        U = surrogate.flat_coefficients
        self.collapsed = np.stack([rest[g] @ U[g] for g in surrogate.groups(n)])

    def evaluate(self, values) -> np.ndarray:
        """Predictions for each value of the free component, shape ``(n_values, M, L)``."""
        s = self.surrogate
        xi = (np.asarray(values, dtype=float) - s.prior.mean[self.n]) / s.prior.std
        out = hermite_table(xi, s.order) @ self.collapsed
        return out.reshape(-1, s.L, s.M).transpose(0, 2, 1)


@dataclass
class GpcSurrogate:
    """Chaos coefficients ``u[alpha, l, m]`` with their multi-indices and prior."""

    indices: np.ndarray = field(repr=False)
    coefficients: np.ndarray = field(repr=False)
    prior: GaussianPrior
    order: int
    n_samples: int
    seed: int = 0
    rejected: int = 0

    def __post_init__(self):
        self.coefficients = np.ascontiguousarray(self.coefficients, dtype=float)
        if self.coefficients.ndim != 3 or self.coefficients.shape[0] != self.indices.shape[0]:
            raise ValueError("coefficients must have shape (n_indices, L, M)")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("non-finite chaos coefficients")
        self._groups = {}

    @property
    def N(self) -> int:
        return self.indices.shape[1]

    @property
    def L(self) -> int:
        return self.coefficients.shape[1]

    @property
    def M(self) -> int:
        return self.coefficients.shape[2]

    @property
    def flat_coefficients(self) -> np.ndarray:
        return self.coefficients.reshape(self.coefficients.shape[0], -1)

    def groups(self, n: int) -> list:
        if n not in self._groups:
            col = self.indices[:, n]
            self._groups[n] = [np.flatnonzero(col == d) for d in range(self.order + 1)]
        return self._groups[n]

    def batch(self, zs) -> np.ndarray:
        """Surrogate predictions for many parameter vectors, shape ``(n, M, L)``."""
        B = basis_matrix(self.indices, zs, self.prior)
        return (B @ self.flat_coefficients).reshape(-1, self.L, self.M).transpose(0, 2, 1)

    def __call__(self, z) -> np.ndarray:
        return self.batch(np.asarray(z, dtype=float)[None, :])[0]

    def conditional(self, z, n: int) -> ConditionalEvaluator:
        return ConditionalEvaluator(self, z, n)

    def header(self) -> dict:
        return dict(
            N=self.N, N_tilde=self.order, L=self.L, M=self.M,
            prior_mean=[float(v) for v in self.prior.mean], prior_variance=self.prior.variance,
            n_samples=self.n_samples, seed=self.seed, rejected=self.rejected,
            index_order=INDEX_ORDER, n_indices=int(self.indices.shape[0]),
            dtype="float64", byte_order="little", layout="row-major (alpha, l, m)",
        )


def surrogate_eval(surrogate: GpcSurrogate, z) -> np.ndarray:
    """Surrogate phaseless data ``(M, L)`` at one parameter vector (may undershoot zero)."""
    return surrogate(z)


def surrogate_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(2,))))


def project_mc(forward, prior: GaussianPrior, N_tilde: int, n_samples: int, seed: int = 0,
               chunk: int = 256, max_invalid_fraction: float = 0.5) -> GpcSurrogate:
    """Monte Carlo projection of ``forward`` onto the Hermite chaos basis.

    ``forward`` maps a parameter vector to an ``(M, L)`` array and raises
    :class:`GeometryError` or :class:`SolverError` for draws it cannot handle;
    those draws are replaced by fresh ones.  If the share of rejected draws
    exceeds ``max_invalid_fraction`` a :class:`PriorMismatchError` is raised.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if N_tilde > MAX_ORDER:
        raise ValueError(f"N_tilde must not exceed {MAX_ORDER}")
    indices = build_index_set(prior.dim, N_tilde)
    rng = surrogate_generator(seed)
    zs, ys = [], []
    rejected = 0
    # rejected / (rejected + n_samples) > f  <=>  rejected > n_samples * f / (1 - f)
    f = max_invalid_fraction
    max_rejected = math.inf if f >= 1 else n_samples * f / (1.0 - f)
    while len(zs) < n_samples:
        z = prior.sample(rng)
        try:
            y = np.asarray(forward(z), dtype=float)
        except (GeometryError, SolverError):
            rejected += 1
            if rejected > max_rejected:
                raise PriorMismatchError(
                    f"more than {f:.0%} of the prior draws were invalid ({rejected} rejected)")
            continue
        zs.append(z)
        ys.append(y.T.reshape(-1))  # (l, m) row-major
    zs = np.array(zs)
    ys = np.array(ys)
    M, L = y.shape
    acc = np.zeros((indices.shape[0], ys.shape[1]))
    for start in range(0, n_samples, chunk):
        B = basis_matrix(indices, zs[start:start + chunk], prior)
        acc += B.T @ ys[start:start + chunk]
    coeffs = (acc / n_samples).reshape(-1, L, M)
    logger.info("projected %d samples onto %d basis functions (%d draws rejected)",
                n_samples, indices.shape[0], rejected)
    return GpcSurrogate(indices, coeffs, prior, N_tilde, n_samples, seed, rejected)


def save_surrogate(path, surrogate: GpcSurrogate) -> Path:
    """Write the binary container and a JSON sidecar; returns the sidecar path."""
    path = Path(path)
    s = surrogate
    with open(path, "wb") as fh:
        fh.write(FILE_MAGIC)
        fh.write(_HEADER.pack(s.N, s.order, s.L, s.M, s.n_samples, s.seed,
                              s.prior.variance, s.rejected))
        fh.write(np.asarray(s.prior.mean, dtype="<f8").tobytes())
        fh.write(INDEX_ORDER.encode().ljust(16, b"\0"))
        fh.write(np.asarray(s.coefficients, dtype="<f8").tobytes(order="C"))
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(s.header(), indent=2) + "\n")
    return sidecar


def load_surrogate(path) -> GpcSurrogate:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != FILE_MAGIC:
        raise ValueError(f"{path}: not a surrogate file")
    off = 8
    N, order, L, M, n_samples, seed, variance, rejected = _HEADER.unpack_from(raw, off)
    off += _HEADER.size
    mean = np.frombuffer(raw, dtype="<f8", count=N, offset=off).copy()
    off += 8 * N
    tag = raw[off:off + 16].rstrip(b"\0").decode()
    off += 16
    if tag != INDEX_ORDER:
        raise ValueError(f"{path}: unsupported index order {tag!r}")
    indices = build_index_set(N, order)
    count = indices.shape[0] * L * M
    coeffs = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(-1, L, M).copy()
    if off + 8 * count != len(raw):
        raise ValueError(f"{path}: unexpected file size")
    return GpcSurrogate(indices, coeffs, GaussianPrior(mean, variance), order, n_samples, seed,
                        rejected)
