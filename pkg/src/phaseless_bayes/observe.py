"""Noisy phaseless observations and their noise covariances."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

COV_FLOOR = 1e-12


class NoiseModel(str, enum.Enum):
    MULTIPLICATIVE = "multiplicative"
    ADDITIVE = "additive"


@dataclass(frozen=True)
class ObservationMatrix:
    """``M x L`` phaseless data: rows are directions, columns are sources."""

    data: np.ndarray = field(repr=False)
    noise_model: NoiseModel | None = None
    sigma_eta: float = 0.0
    seed: int | None = None
    ideal: bool = False

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError("observation data must be a 2-D (M, L) array")
        if not np.all(np.isfinite(data)):
            raise ValueError("observation data must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.noise_model is not None:
            object.__setattr__(self, "noise_model", NoiseModel(self.noise_model))

    @property
    def M(self) -> int:
        return self.data.shape[0]

    @property
    def L(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class NoiseCovariance:
    """Diagonal noise variances ``sigma^l_m`` stored as an ``(M, L)`` array."""

    variances: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.variances, dtype=float)
        if np.any(~(v > 0)):
            raise ValueError("noise variances must be strictly positive")
        v.setflags(write=False)
        object.__setattr__(self, "variances", v)

    @property
    def precision(self) -> np.ndarray:
        return 1.0 / self.variances

    def column(self, source_index: int) -> np.ndarray:
        """Diagonal of the covariance matrix for one source."""
        return self.variances[:, source_index]


def _as_array(obs) -> np.ndarray:
    return obs.data if isinstance(obs, ObservationMatrix) else np.asarray(obs, dtype=float)


def noise_generator(seed: int, sample: int = 0) -> np.random.Generator:
    """Counter-based (Philox) stream for noise sample ``sample`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(0, int(sample)))
    return np.random.Generator(np.random.Philox(ss))


def standard_noise(shape, seed: int, sample: int = 0) -> np.ndarray:
    """The i.i.d. standard normal field ``omega`` of the given shape."""
    return noise_generator(seed, sample).standard_normal(shape)


def synthesize(
    exact,
    model: NoiseModel | str = NoiseModel.MULTIPLICATIVE,
    sigma_eta: float = 0.03,
    seed: int = 0,
    ideal: bool = False,
    sample: int = 0,
) -> ObservationMatrix:
    """Pollute exact phaseless data.

    ``multiplicative``: ``y = |u| + sigma_eta |u| omega``;
    ``additive``: ``y = |u| + sigma_eta omega``.  With ``ideal=True`` the
    noise realisation is ``omega = 0`` while ``sigma_eta`` is still recorded
    so the likelihood keeps its covariance.
    """
    if sigma_eta < 0:
        raise ValueError("sigma_eta must be non-negative")
    model = NoiseModel(model)
    clean = _as_array(exact)
    if ideal or sigma_eta == 0:
        data = clean.copy()
    else:
        omega = standard_noise(clean.shape, seed, sample)
        if model is NoiseModel.MULTIPLICATIVE:
            data = clean + sigma_eta * clean * omega
        else:
            data = clean + sigma_eta * omega
    return ObservationMatrix(data, model, float(sigma_eta), int(seed), bool(ideal))


def covariance(exact, model: NoiseModel | str = NoiseModel.MULTIPLICATIVE,
               sigma_eta: float = 0.03, floor: float = COV_FLOOR) -> NoiseCovariance:
    """Noise variances built from the exact obstacle's far field."""
    if not sigma_eta > 0:
        raise ValueError("sigma_eta must be positive to define a covariance")
    clean = _as_array(exact)
    if NoiseModel(model) is NoiseModel.MULTIPLICATIVE:
        var = (sigma_eta * np.abs(clean)) ** 2
    else:
        var = np.full(clean.shape, sigma_eta**2)
    return NoiseCovariance(np.maximum(var, floor))


def pre_between(a, b) -> float:
    """Relative Frobenius discrepancy ``||a - b|| / ||b||``."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    nb = np.linalg.norm(b)
    if nb == 0:
        raise ZeroDivisionError("reference matrix has zero norm")
    return float(np.linalg.norm(a - b) / nb)


def write_matrix_csv(path, data) -> None:
    data = _as_array(data)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.array(rows, dtype=float)


def save_observations(csv_path, obs: ObservationMatrix, metadata: dict) -> Path:
    """Write the matrix as CSV plus a ``.json`` sidecar; returns the sidecar path."""
    csv_path = Path(csv_path)
    write_matrix_csv(csv_path, obs)
    meta = dict(metadata)
    meta.update(
        M=obs.M,
        L=obs.L,
        noise_model=obs.noise_model.value if obs.noise_model else None,
        sigma_eta=obs.sigma_eta,
        seed=obs.seed,
        ideal=obs.ideal,
    )
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return sidecar


def load_observations(csv_path) -> tuple[ObservationMatrix, dict]:
    csv_path = Path(csv_path)
    data = read_matrix_csv(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    if data.shape != (meta["M"], meta["L"]):
        raise ValueError(f"{csv_path}: matrix shape {data.shape} disagrees with metadata")
    obs = ObservationMatrix(data, meta.get("noise_model"), meta.get("sigma_eta", 0.0),
                            meta.get("seed"), meta.get("ideal", False))
    return obs, meta
