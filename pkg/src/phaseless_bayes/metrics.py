"""Reconstruction error measures and the surrogate cost model."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .geometry import BoundaryCurve, ObstacleParams, make_curve, sample_boundary

HD_POINTS = 1024


@numba.njit(cache=True)
def _directed_hausdorff(a, b):
    worst = 0.0
    for i in range(a.shape[0]):
        best = np.inf
        for j in range(b.shape[0]):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            d = dx * dx + dy * dy
            if d < best:
                best = d
                if best <= worst:
                    break  # cannot raise the running maximum
        if best > worst:
            worst = best
    return math.sqrt(worst)


def _curve(c) -> BoundaryCurve:
    return c if isinstance(c, BoundaryCurve) else make_curve(c)


def hausdorff_points(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sided Hausdorff distance between two finite point sets."""
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    return max(_directed_hausdorff(a, b), _directed_hausdorff(b, a))


def hausdorff(curve_a, curve_b, n_pts: int = HD_POINTS) -> float:
    """Discrete Hausdorff distance between two boundaries sampled at ``n_pts`` points."""
    if n_pts < 64:
        raise ValueError("n_pts must be at least 64")
    return hausdorff_points(sample_boundary(_curve(curve_a), n_pts),
                            sample_boundary(_curve(curve_b), n_pts))


@dataclass
class EnsembleSummary:
    mean: np.ndarray = field(repr=False)
    hd_mean: float
    hd_sd: float
    count: int
    hds: np.ndarray = field(default=None, repr=False)


def ensemble_stats(reconstructions, exact: ObstacleParams, n_pts: int = HD_POINTS) -> EnsembleSummary:
    """Mean parameters and mean/SD (divisor ``n``) of Hausdorff errors."""
    recs = [r if isinstance(r, ObstacleParams) else exact.with_values(r) for r in reconstructions]
    if not recs:
        raise ValueError("need at least one reconstruction")
    ref = sample_boundary(make_curve(exact), n_pts)
    hds = np.array([hausdorff_points(sample_boundary(make_curve(r), n_pts), ref) for r in recs])
    mean = np.mean([r.values for r in recs], axis=0)
    return EnsembleSummary(mean, float(hds.mean()), float(hds.std()), len(recs), hds)


@dataclass(frozen=True)
class CostReport:
    T: float
    T_hat: float
    T_multi: float
    R_T: float


def cost_report(t0: float, t1: float, J_hat_1: int, J_hat_2: int, N: int, J0: int) -> CostReport:
    """Cost model of single-candidate, surrogate-screened and multi-candidate chains.

    ``t0`` is one full forward map, ``t1`` the surrogate basis evaluation for
    ``J_hat_1`` states.
    """
    if not t0 > 0 or t1 < 0:
        raise ValueError("t0 must be positive and t1 non-negative")
    T = t0 * N * J0
    T_hat = (t1 + t0 * J_hat_2) * N * J0
    T_multi = t0 * J_hat_1 * N * J0
    return CostReport(T, T_hat, T_multi, T_hat / T_multi)


METRICS_HEADER = ["experiment", "L", "M", "sigma_eta", "hd_mean", "hd_sd", "pre", "wall_time"]


def append_metrics_row(path, experiment: str, L: int, M: int, sigma_eta: float, hd_mean: float,
                       hd_sd: float, pre: float, wall_time: float) -> None:
    """Append one row to a metrics report CSV, writing the header for a new file."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(METRICS_HEADER)
        w.writerow([experiment, L, M, sigma_eta, hd_mean, hd_sd, pre, wall_time])


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary_dict(summary: EnsembleSummary) -> dict:
    d = asdict(summary)
    d["mean"] = [float(v) for v in summary.mean]
    d["hds"] = [float(v) for v in summary.hds] if summary.hds is not None else []
    return d
