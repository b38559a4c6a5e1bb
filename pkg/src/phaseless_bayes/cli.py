"""Command-line orchestration: configuration, synthesis, inversion, studies and figures.

Every entry point is also usable as a library function; the command-line
layer only parses arguments, maps exceptions to exit codes and prints a
short summary.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bayes import ExactForward, GaussianPrior, PosteriorContext
from .errors import ConfigError, GeometryError, ParameterError, PriorMismatchError, SolverError
from .forward import ScatteringSetup, forward_map
from .geometry import (
    KITE_EXACT, Family, ObstacleParams, is_valid, make_curve, parameter_count, sample_boundary,
    unit_circle,
)
from .gpc import GpcSurrogate, load_surrogate, project_mc, save_surrogate
from .mcmc import Algorithm, ChainConfig, ChainResult, run_chain
from .metrics import (
    append_metrics_row, cost_report, ensemble_stats, hausdorff, read_metrics, summary_dict,
)
from .observe import (
    NoiseModel, ObservationMatrix, covariance, load_observations, pre_between, save_observations,
    synthesize, write_matrix_csv,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class ObstacleSection:
    family: str = "kite"
    exact: tuple | None = KITE_EXACT


@dataclass(frozen=True)
class ForwardSection:
    k: float = 2.0
    R: float = 6.0
    L: int = 25
    M: int = 25
    n_quad: int = 64
    n_quad_max: int | None = None


@dataclass(frozen=True)
class PriorSection:
    mean: tuple | None = None  # unit circle of the family when unset
    variance: float = 1.0


@dataclass(frozen=True)
class NoiseSection:
    model: str = "multiplicative"
    sigma_eta: float = 0.03
    ideal: bool = False


@dataclass(frozen=True)
class ChainSection:
    algorithm: str = "alg1"
    J0: int = 20000
    J1: int = 10000
    J2: int = 100
    J3: int = 101
    gamma: float = 0.1
    beta0: float = 0.5
    J_hat_1: int = 1000
    J_hat_2: int = 100
    selection: str = "best"
    include_mean: bool = True


@dataclass(frozen=True)
class SurrogateSection:
    N_tilde: int = 9
    n_samples: int = 6000
    seed: int = 0
    check_simple: bool = False
    max_invalid_fraction: float = 0.5
    path: str | None = None


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    out: str = "runs"
    threads: int = 1
    n_repeats: int = 1
    keep_chains: bool = False


_SECTIONS = {
    "obstacle": ObstacleSection, "forward": ForwardSection, "prior": PriorSection,
    "noise": NoiseSection, "chain": ChainSection, "surrogate": SurrogateSection, "run": RunSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description.

    Unset fields take the defaults of the kite experiments: ``k = 2``,
    ``R = 6``, unit-circle prior mean with ``sigma_pr = 1``, ``gamma = 0.1``
    and ``sigma_eta = 3%`` multiplicative noise.
    """

    obstacle: ObstacleSection = field(default_factory=ObstacleSection)
    forward: ForwardSection = field(default_factory=ForwardSection)
    prior: PriorSection = field(default_factory=PriorSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    chain: ChainSection = field(default_factory=ChainSection)
    surrogate: SurrogateSection = field(default_factory=SurrogateSection)
    run: RunSection = field(default_factory=RunSection)

    def __post_init__(self):
        self.validate()

    # -- derived objects
    @property
    def family(self) -> Family:
        return Family(self.obstacle.family)

    @property
    def n_r(self) -> int | None:
        if self.family is Family.KITE:
            return None
        ref = self.obstacle.exact if self.obstacle.exact is not None else self.prior.mean
        if ref is None:
            return 1
        return (len(ref) - 3) // 2

    @property
    def N(self) -> int:
        return parameter_count(self.family, self.n_r)

    def exact_params(self) -> ObstacleParams | None:
        if self.obstacle.exact is None:
            return None
        return ObstacleParams(self.family, self.obstacle.exact)

    def prior_dist(self) -> GaussianPrior:
        mean = self.prior.mean
        if mean is None:
            mean = unit_circle(self.family, self.n_r or 1).values
        return GaussianPrior(mean, self.prior.variance)

    def setup(self) -> ScatteringSetup:
        f = self.forward
        return ScatteringSetup(k=f.k, R=f.R, L=f.L, M=f.M, n_quad=f.n_quad, n_quad_max=f.n_quad_max)

    def chain_config(self) -> ChainConfig:
        c = self.chain
        return ChainConfig(J0=c.J0, J1=c.J1, J2=c.J2, J3=c.J3, gamma=c.gamma, beta0=c.beta0,
                           J_hat_1=c.J_hat_1, J_hat_2=c.J_hat_2, seed=self.run.seed,
                           selection=c.selection, include_mean=c.include_mean)

    @property
    def algorithm(self) -> Algorithm:
        return Algorithm(self.chain.algorithm)

    # -- validation and copying
    def validate(self) -> None:
        try:
            fam = Family(self.obstacle.family)
            Algorithm(self.chain.algorithm)
            NoiseModel(self.noise.model)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        try:
            if self.obstacle.exact is not None:
                ObstacleParams(fam, self.obstacle.exact)
            n = self.N
            if self.prior.mean is not None and len(self.prior.mean) != n:
                raise ConfigError(f"prior mean has {len(self.prior.mean)} entries, family needs {n}")
            self.prior_dist()
            self.setup()
            self.chain_config()
        except (ParameterError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if self.noise.sigma_eta <= 0:
            raise ConfigError("sigma_eta must be positive (the likelihood needs it even when ideal)")
        if self.run.threads < 1 or self.run.n_repeats < 1:
            raise ConfigError("threads and n_repeats must be at least 1")
        if self.surrogate.N_tilde < 0 or self.surrogate.n_samples < 1:
            raise ConfigError("surrogate order must be >= 0 and n_samples >= 1")

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with per-section overrides, e.g. ``replace(run={"seed": 3})``."""
        changes = {}
        for name, upd in sections.items():
            if name not in _SECTIONS:
                raise ConfigError(f"unknown config section {name!r}")
            changes[name] = dataclasses.replace(getattr(self, name), **_coerce(name, upd))
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        unknown = set(raw) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        parts = {}
        for name, klass in _SECTIONS.items():
            try:
                parts[name] = klass(**_coerce(name, raw.get(name, {})))
            except TypeError as exc:
                raise ConfigError(f"[{name}]: {exc}") from None
        return cls(**parts)


def _coerce(section: str, values: dict) -> dict:
    out = dict(values)
    for key in ("exact", "mean"):
        if key in out and out[key] is not None:
            out[key] = tuple(float(v) for v in out[key])
    klass = _SECTIONS[section]
    names = {f.name for f in dataclasses.fields(klass)}
    bad = set(out) - names
    if bad:
        raise ConfigError(f"[{section}]: unknown keys {sorted(bad)}")
    return out


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read a TOML file or a run manifest (JSON with a ``config`` key)."""
    raw: dict = {}
    if path is not None:
        path = Path(path)
        text = path.read_bytes()
        if path.suffix == ".json":
            raw = json.loads(text)
            raw = raw.get("config", raw)
        else:
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            try:
                raw = tomllib.loads(text.decode())
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
    cfg = ExperimentConfig.from_dict(raw)
    return cfg.replace(**overrides) if overrides else cfg


def write_manifest(out_dir: Path, cfg: ExperimentConfig, command: str, extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "config": cfg.to_dict(),
        "seeds": {"run": cfg.run.seed, "surrogate": cfg.surrogate.seed},
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(cfg: ExperimentConfig, out_dir=None) -> Path:
    d = Path(out_dir if out_dir is not None else cfg.run.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _exact_forward(cfg: ExperimentConfig, check_simple: bool = True) -> ExactForward:
    return ExactForward(cfg.setup(), cfg.family, check_simple=check_simple)


# ---------------------------------------------------------------- synthesis

def exact_data(cfg: ExperimentConfig) -> np.ndarray:
    exact = cfg.exact_params()
    if exact is None:
        raise ConfigError("synthesis needs exact obstacle parameters")
    setup = cfg.setup()
    curve = make_curve(exact)
    if not is_valid(curve, setup.sources):
        raise GeometryError(f"exact obstacle {exact!r} is not a valid geometry for this setup")
    return forward_map(curve, setup, check=False)


def run_synthesize(cfg: ExperimentConfig, out_dir=None, clean: np.ndarray | None = None) -> dict:
    """Write ``exact.csv`` and ``observations.csv`` with JSON sidecars."""
    out = _out_dir(cfg, out_dir)
    if clean is None:
        clean = exact_data(cfg)
    meta = {"family": cfg.family.value, "exact": list(cfg.obstacle.exact), "k": cfg.forward.k,
            "R": cfg.forward.R, "n_quad": cfg.forward.n_quad}
    exact_obs = ObservationMatrix(clean, cfg.noise.model, cfg.noise.sigma_eta, cfg.run.seed, True)
    noisy = synthesize(clean, cfg.noise.model, cfg.noise.sigma_eta, seed=cfg.run.seed,
                       ideal=cfg.noise.ideal)
    save_observations(out / "exact.csv", exact_obs, dict(meta, kind="exact"))
    save_observations(out / "observations.csv", noisy, dict(meta, kind="observations"))
    pre = 100.0 * pre_between(noisy, clean)
    return {"exact": out / "exact.csv", "observations": out / "observations.csv", "pre": pre}


# ---------------------------------------------------------------- surrogate

def build_surrogate(cfg: ExperimentConfig) -> GpcSurrogate:
    s = cfg.surrogate
    fw = _exact_forward(cfg, check_simple=s.check_simple)
    return project_mc(fw, cfg.prior_dist(), s.N_tilde, s.n_samples, seed=s.seed,
                      max_invalid_fraction=s.max_invalid_fraction)


def run_surrogate_build(cfg: ExperimentConfig, out_dir=None) -> dict:
    out = _out_dir(cfg, out_dir)
    t0 = time.perf_counter()
    sur = build_surrogate(cfg)
    elapsed = time.perf_counter() - t0
    path = out / "surrogate.gpc"
    save_surrogate(path, sur)
    write_manifest(out, cfg, "surrogate build", {"build_seconds": elapsed})
    return {"surrogate": path, "build_seconds": elapsed, "rejected": sur.rejected}


def _surrogate_for(cfg: ExperimentConfig, surrogate=None) -> GpcSurrogate:
    if isinstance(surrogate, GpcSurrogate):
        return surrogate
    path = surrogate or cfg.surrogate.path
    if path is not None:
        sur = load_surrogate(path)
    else:
        sur = build_surrogate(cfg)
    if (sur.N, sur.L, sur.M) != (cfg.N, cfg.forward.L, cfg.forward.M):
        raise ConfigError(f"surrogate shape (N={sur.N}, L={sur.L}, M={sur.M}) does not match the config")
    return sur


# ---------------------------------------------------------------- inversion

@dataclass
class InvertOutcome:
    seed: int
    estimate: np.ndarray
    hd: float | None
    elapsed: float
    pre: float | None
    result: ChainResult = field(repr=False)


def _write_states(path: Path, states: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"z_{i + 1}" for i in range(states.shape[1])])
        for row in states:
            w.writerow([repr(float(v)) for v in row])


def invert(cfg: ExperimentConfig, observations, clean=None, surrogate=None) -> InvertOutcome:
    """Run the configured sampler on an ``(M, L)`` observation matrix (no file output)."""
    data = observations.data if isinstance(observations, ObservationMatrix) else np.asarray(observations)
    shape = (cfg.forward.M, cfg.forward.L)
    if data.shape != shape:
        raise ConfigError(f"observation matrix has shape {data.shape}, config expects {shape}")
    have_clean = clean is not None
    if not have_clean:
        logger.warning("no exact data: building the noise covariance from the observations")
        clean = data
    clean = np.asarray(clean, dtype=float)
    noise = covariance(clean, cfg.noise.model, cfg.noise.sigma_eta)
    prior = cfg.prior_dist()
    ctx = PosteriorContext(data, noise, _exact_forward(cfg), prior)
    sctx = None
    if cfg.algorithm is Algorithm.SURROGATE:
        sctx = PosteriorContext(data, noise, _surrogate_for(cfg, surrogate), prior)
    result = run_chain(ctx, cfg.chain_config(), cfg.algorithm, surrogate_ctx=sctx)
    exact = cfg.exact_params()
    hd = None
    if exact is not None:
        hd = hausdorff(exact.with_values(result.estimate), exact)
    pre = 100.0 * pre_between(data, clean) if have_clean else None
    return InvertOutcome(cfg.run.seed, result.estimate, hd, result.elapsed, pre, result)


def run_invert(cfg: ExperimentConfig, observations=None, exact=None, out_dir=None, surrogate=None,
               write_chain: bool = True) -> InvertOutcome:
    """Invert observation files and write chain, selected states, estimate and timing."""
    out = _out_dir(cfg, out_dir)
    obs_path = Path(observations) if observations is not None else out / "observations.csv"
    obs, _ = load_observations(obs_path)
    exact_path = Path(exact) if exact is not None else obs_path.with_name("exact.csv")
    clean = load_observations(exact_path)[0].data if exact_path.exists() else None
    outcome = invert(cfg, obs, clean, surrogate)
    _write_outcome(out, cfg, outcome, write_chain)
    write_manifest(out, cfg, "invert", {"observations": str(obs_path)})
    return outcome


def _write_outcome(out: Path, cfg: ExperimentConfig, o: InvertOutcome, write_chain: bool) -> None:
    if write_chain:
        o.result.write_csv(out / "chain.csv")
    _write_states(out / "selected.csv", o.result.selected)
    record = {
        "seed": o.seed, "algorithm": cfg.algorithm.value,
        "estimate": [float(v) for v in o.estimate], "hd": o.hd, "pre": o.pre,
        "wall_time": o.elapsed, "true_evals": o.result.true_evals,
        "acceptance_rate": o.result.acceptance_rate, "final_misfit": float(o.result.misfits[-1]),
    }
    (out / "estimate.json").write_text(json.dumps(record, indent=2) + "\n")


def run_single(cfg: ExperimentConfig, out_dir=None, surrogate=None, clean=None,
               write_chain: bool = True) -> InvertOutcome:
    """Synthesize with ``cfg.run.seed`` and invert; the unit of a noise study."""
    out = _out_dir(cfg, out_dir)
    files = run_synthesize(cfg, out, clean=clean)
    return run_invert(cfg, files["observations"], files["exact"], out, surrogate, write_chain)


# ---------------------------------------------------------------- noise study

def _study_worker(args):
    cfg, out, surrogate, clean, keep = args
    try:
        return run_single(cfg, out, surrogate, clean, keep)
    except (GeometryError, SolverError, PriorMismatchError) as exc:
        return exc


@dataclass
class StudyOutcome:
    runs: list
    failures: dict
    summary: object
    pres: list
    elapsed: float


def run_noise_study(cfg: ExperimentConfig, n_repeats: int | None = None, out_dir=None,
                    experiment: str = "study") -> StudyOutcome:
    """Independent synthesize + invert runs with seeds ``seed, seed + 1, ...``.

    Run ``i`` is identical to :func:`run_single` with ``run.seed = seed + i``.
    Failed runs are reported and excluded from the statistics.
    """
    n = n_repeats if n_repeats is not None else cfg.run.n_repeats
    if n < 1:
        raise ConfigError("n_repeats must be at least 1")
    out = _out_dir(cfg, out_dir)
    t0 = time.perf_counter()
    clean = exact_data(cfg)
    surrogate = _surrogate_for(cfg) if cfg.algorithm is Algorithm.SURROGATE else None
    jobs = [(cfg.replace(run={"seed": cfg.run.seed + i}), out / f"run_{i:04d}", surrogate, clean,
             cfg.run.keep_chains) for i in range(n)]
    if cfg.run.threads > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=cfg.run.threads) as pool:
            results = list(pool.map(_study_worker, jobs))
    else:
        results = [_study_worker(j) for j in jobs]
    runs = [r for r in results if isinstance(r, InvertOutcome)]
    failures = {jobs[i][0].run.seed: str(r) for i, r in enumerate(results) if isinstance(r, Exception)}
    for seed, msg in failures.items():
        logger.error("run with seed %d failed: %s", seed, msg)
    exact = cfg.exact_params()
    summary = ensemble_stats([r.estimate for r in runs], exact) if runs else None
    pres = [r.pre for r in runs]
    elapsed = time.perf_counter() - t0
    _write_study(out, cfg, runs, failures, summary, pres, elapsed, experiment)
    write_manifest(out, cfg, "study", {"n_repeats": n, "experiment": experiment})
    return StudyOutcome(runs, failures, summary, pres, elapsed)


def _write_study(out, cfg, runs, failures, summary, pres, elapsed, experiment) -> None:
    with open(out / "reconstructions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed"] + [f"z_{i + 1}" for i in range(cfg.N)] + ["hd", "pre", "wall_time"])
        for r in runs:
            w.writerow([r.seed] + [repr(float(v)) for v in r.estimate] + [r.hd, r.pre, r.elapsed])
    doc = {"experiment": experiment, "n_runs": len(runs), "failures": failures,
           "elapsed": elapsed, "pre_mean": float(np.mean(pres)) if pres else None,
           "L": cfg.forward.L, "M": cfg.forward.M, "sigma_eta": cfg.noise.sigma_eta,
           "summary": summary_dict(summary) if summary is not None else None}
    (out / "summary.json").write_text(json.dumps(doc, indent=2) + "\n")


def study_metrics_row(study_dir) -> dict:
    doc = json.loads((Path(study_dir) / "summary.json").read_text())
    s = doc["summary"] or {}
    return dict(experiment=doc["experiment"], L=doc["L"], M=doc["M"], sigma_eta=doc["sigma_eta"],
                hd_mean=s.get("hd_mean", math.nan), hd_sd=s.get("hd_sd", math.nan),
                pre=doc["pre_mean"] if doc["pre_mean"] is not None else math.nan,
                wall_time=doc["elapsed"])


# ---------------------------------------------------------------- figures

_PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"]


class _Canvas:
    """Minimal SVG writer mapping data coordinates onto a fixed viewport."""

    def __init__(self, xlim, ylim, width=480, height=480, margin=48):
        self.xlim, self.ylim = xlim, ylim
        self.w, self.h, self.m = width, height, margin
        self.items: list[str] = []

    def px(self, x, y):
        (x0, x1), (y0, y1) = self.xlim, self.ylim
        X = self.m + (x - x0) / (x1 - x0) * (self.w - 2 * self.m)
        Y = self.h - self.m - (y - y0) / (y1 - y0) * (self.h - 2 * self.m)
        return X, Y

    def polyline_d(self, pts, closed=False):
        coords = [self.px(x, y) for x, y in pts]
        d = "M" + " L".join(f"{X:.2f},{Y:.2f}" for X, Y in coords)
        return d + (" Z" if closed else "")

    def path(self, d, **style):
        attrs = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in style.items())
        self.items.append(f'<path d="{d}" {attrs}/>')

    def text(self, x, y, s, anchor="middle", size=12):
        self.items.append(f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" '
                          f'text-anchor="{anchor}">{s}</text>')

    def axes(self, xlabel="", ylabel="", ticks=5):
        (x0, x1), (y0, y1) = self.xlim, self.ylim
        m, w, h = self.m, self.w, self.h
        self.items.append(f'<rect x="{m}" y="{m}" width="{w - 2 * m}" height="{h - 2 * m}" '
                          'fill="none" stroke="#444"/>')
        for t in np.linspace(x0, x1, ticks):
            X, _ = self.px(t, y0)
            self.text(X, h - m + 16, f"{t:.3g}", size=10)
        for t in np.linspace(y0, y1, ticks):
            _, Y = self.px(x0, t)
            self.text(m - 6, Y + 4, f"{t:.3g}", anchor="end", size=10)
        if xlabel:
            self.text(w / 2, h - 8, xlabel)
        if ylabel:
            self.items.append(f'<text x="14" y="{h / 2:.1f}" font-size="12" text-anchor="middle" '
                              f'transform="rotate(-90 14 {h / 2:.1f})">{ylabel}</text>')

    def write(self, path) -> Path:
        body = "\n".join(self.items)
        svg = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
               f'viewBox="0 0 {self.w} {self.h}">\n<rect width="100%" height="100%" fill="white"/>\n'
               f"{body}\n</svg>\n")
        Path(path).write_text(svg)
        return Path(path)


def _square_limits(point_sets, pad=0.15):
    pts = np.vstack(point_sets)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    c, half = (lo + hi) / 2, (hi - lo).max() / 2 * (1 + pad) + 1e-9
    return (c[0] - half, c[0] + half), (c[1] - half, c[1] + half)


def overlay_svg(path, exact: ObstacleParams, reconstructions=(), n_pts: int = 256) -> Path:
    """Exact boundary as circles, each reconstruction as a curve and their mean as dots.

    Emits one ``<path>`` for the exact boundary, one per reconstruction and
    one for the mean (omitted when there are no reconstructions).
    """
    ex = sample_boundary(make_curve(exact), n_pts)
    recs = [sample_boundary(make_curve(exact.with_values(r)), n_pts) for r in reconstructions]
    mean = None
    if recs:
        mean = sample_boundary(make_curve(exact.with_values(np.mean(reconstructions, axis=0))), n_pts)
    xlim, ylim = _square_limits([ex] + recs)
    cv = _Canvas(xlim, ylim)
    cv.axes("x1", "x2")
    for i, pts in enumerate(recs):
        cv.path(cv.polyline_d(pts, closed=True), fill="none", stroke=_PALETTE[i % len(_PALETTE)],
                stroke_width="0.8", stroke_opacity="0.6")
    marks = []
    for x, y in ex[:: max(1, n_pts // 64)]:
        X, Y = cv.px(x, y)
        marks.append(f"M{X + 3:.2f},{Y:.2f} a3,3 0 1,0 -6,0 a3,3 0 1,0 6,0")
    cv.path(" ".join(marks), fill="none", stroke="black", stroke_width="1")
    if mean is not None:
        cv.path(cv.polyline_d(mean, closed=True), fill="none", stroke="red", stroke_width="2.5",
                stroke_dasharray="0.1,5", stroke_linecap="round")
    return cv.write(path)


def histogram_svg(path, values, bins: int = 20, xlabel: str = "PRE (%)") -> Path:
    values = np.asarray([v for v in values if v is not None and math.isfinite(v)], dtype=float)
    if values.size == 0:
        values = np.zeros(1)
    counts, edges = np.histogram(values, bins=bins)
    if edges[0] == edges[-1]:
        edges = np.array([edges[0] - 0.5, edges[0] + 0.5])
    cv = _Canvas((edges[0], edges[-1]), (0, max(1, counts.max()) * 1.1), width=560, height=400)
    cv.axes(xlabel, "count")
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        X0, Y0 = cv.px(a, 0)
        X1, Y1 = cv.px(b, c)
        cv.items.append(f'<rect x="{X0:.2f}" y="{Y1:.2f}" width="{X1 - X0:.2f}" '
                        f'height="{Y0 - Y1:.2f}" fill="#1f77b4" stroke="white"/>')
    return cv.write(path)


def line_chart_svg(path, xs, ys, xlabel="L", ylabel="Hausdorff distance") -> Path:
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    order = np.argsort(xs)
    xs, ys = xs[order], ys[order]
    top = float(np.nanmax(ys)) if ys.size else 1.0
    xlim = (xs.min(), xs.max()) if xs.size > 1 and xs.min() < xs.max() else (0.0, max(1.0, 2 * xs.max(initial=0)))
    cv = _Canvas(xlim, (0.0, 1.1 * top if top > 0 else 1.0), width=560, height=400, margin=60)
    cv.axes(xlabel, ylabel)
    if xs.size:
        cv.path(cv.polyline_d(np.column_stack([xs, ys])), fill="none", stroke="#d62728",
                stroke_width="2")
        for x, y in zip(xs, ys):
            X, Y = cv.px(x, y)
            cv.items.append(f'<circle cx="{X:.2f}" cy="{Y:.2f}" r="3.5" fill="#d62728"/>')
    return cv.write(path)


def emit_figures(out_dir, exact: ObstacleParams, reconstructions=(), pres=(), hd_vs_L=None) -> dict:
    """Write the overlay, PRE histogram and HD-vs-L chart plus their CSV data."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    recs = np.asarray(reconstructions, dtype=float).reshape(-1, exact.values.size)
    files = {"overlay": overlay_svg(out / "overlay.svg", exact, list(recs))}
    write_matrix_csv(out / "boundary_exact.csv", sample_boundary(make_curve(exact), 256))
    if len(recs):
        _write_states(out / "reconstructions.csv", recs)
    pres = [p for p in pres if p is not None]
    with open(out / "pre.csv", "w", newline="") as fh:
        csv.writer(fh).writerows([["pre"]] + [[repr(float(p))] for p in pres])
    files["pre_histogram"] = histogram_svg(out / "pre_histogram.svg", pres)
    if hd_vs_L:
        Ls, hds = zip(*sorted(hd_vs_L))
        with open(out / "hd_vs_L.csv", "w", newline="") as fh:
            csv.writer(fh).writerows([["L", "hd"]] + [[l, repr(float(h))] for l, h in zip(Ls, hds)])
        files["hd_vs_L"] = line_chart_svg(out / "hd_vs_L.svg", Ls, hds)
    return files


def figures_from_study(study_dir, out_dir=None, cfg: ExperimentConfig | None = None) -> dict:
    study_dir = Path(study_dir)
    if cfg is None:
        cfg = load_config(study_dir / "manifest.json")
    rows = []
    pres = []
    with open(study_dir / "reconstructions.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append([float(row[f"z_{i + 1}"]) for i in range(cfg.N)])
            if row["pre"] not in ("", "None"):
                pres.append(float(row["pre"]))
    return emit_figures(out_dir or study_dir / "figures", cfg.exact_params(), rows, pres)


# ---------------------------------------------------------------- bench

def run_bench(cfg: ExperimentConfig, repeats: int = 20, surrogate=None) -> dict:
    """Time one forward map and one surrogate screening pass; report the cost model."""
    fw = _exact_forward(cfg)
    z = cfg.exact_params().values if cfg.exact_params() is not None else cfg.prior_dist().mean
    fw(z)  # compile
    t = time.perf_counter()
    for _ in range(repeats):
        fw(z)
    t0 = (time.perf_counter() - t) / repeats
    sur = _surrogate_for(cfg, surrogate) if (surrogate or cfg.surrogate.path) else None
    t1 = math.nan
    if sur is not None:
        vals = cfg.prior_dist().sample(np.random.default_rng(0), cfg.chain.J_hat_1)[:, 0]
        t = time.perf_counter()
        for _ in range(repeats):
            sur.conditional(z, 0).evaluate(vals)
        t1 = (time.perf_counter() - t) / repeats
    report = {"t0": t0, "t1": t1}
    if math.isfinite(t1):
        report.update(dataclasses.asdict(cost_report(t0, t1, cfg.chain.J_hat_1, cfg.chain.J_hat_2,
                                                     cfg.N, cfg.chain.J0)))
    return report


# ---------------------------------------------------------------- argument parsing

def _global_flags(parser, default) -> None:
    parser.add_argument("--config", default=default, help="TOML config or run manifest")
    parser.add_argument("--seed", type=int, default=default, help="base seed (overrides run.seed)")
    parser.add_argument("--out", default=default, help="output directory (overrides run.out)")
    parser.add_argument("--threads", type=int, default=default, help="worker processes for studies")
    parser.add_argument("-v", "--verbose", action="count", default=0 if default is None else default)


def _parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand; the
    # subcommand copies use SUPPRESS so they do not reset earlier values
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="phaseless-bayes",
                                description="Bayesian obstacle reconstruction from phaseless far-field data")
    _global_flags(p, None)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synthesize", parents=[common], help="write exact and noisy observations")
    inv = sub.add_parser("invert", parents=[common], help="run the sampler on observation files")
    inv.add_argument("--observations", help="observation CSV (default: <out>/observations.csv)")
    inv.add_argument("--exact", help="exact data CSV for the noise covariance")
    inv.add_argument("--surrogate", help="surrogate file for alg2-surrogate")
    inv.add_argument("--no-chain", action="store_true", help="skip writing the full chain CSV")
    sur = sub.add_parser("surrogate", parents=[common], help="surrogate tools")
    sur_sub = sur.add_subparsers(dest="action", required=True)
    sur_sub.add_parser("build", parents=[common], help="build a gPC surrogate by MC projection")
    st = sub.add_parser("study", parents=[common], help="repeated synthesize + invert runs")
    st.add_argument("--repeats", type=int, help="number of noise samples (overrides run.n_repeats)")
    st.add_argument("--experiment", default="study", help="label for the metrics report")
    st.add_argument("--figures", action="store_true", help="emit figures after the study")
    me = sub.add_parser("metrics", parents=[common], help="collect study summaries into a report")
    me.add_argument("studies", nargs="+", help="study output directories")
    me.add_argument("--report", default="metrics.csv", help="metrics CSV to append to")
    fi = sub.add_parser("figures", parents=[common], help="emit SVG figures")
    fi.add_argument("study", nargs="?", help="study directory to plot")
    fi.add_argument("--metrics", help="metrics CSV for the HD-vs-L chart")
    be = sub.add_parser("bench", parents=[common], help="time forward map and surrogate evaluation")
    be.add_argument("--repeats", type=int, default=20)
    be.add_argument("--surrogate", help="surrogate file")
    return p


def _resolve(args) -> ExperimentConfig:
    run = {}
    if args.seed is not None:
        run["seed"] = args.seed
    if args.out is not None:
        run["out"] = args.out
    if args.threads is not None:
        run["threads"] = args.threads
    return load_config(args.config, **({"run": run} if run else {}))


def _dispatch(args) -> dict:
    cfg = _resolve(args)
    out = Path(cfg.run.out)
    if args.command == "synthesize":
        files = run_synthesize(cfg)
        write_manifest(out, cfg, "synthesize")
        return {k: str(v) for k, v in files.items()}
    if args.command == "invert":
        o = run_invert(cfg, args.observations, args.exact, surrogate=args.surrogate,
                       write_chain=not args.no_chain)
        return {"estimate": [float(v) for v in o.estimate], "hd": o.hd, "wall_time": o.elapsed}
    if args.command == "surrogate":
        res = run_surrogate_build(cfg)
        return {k: str(v) if isinstance(v, Path) else v for k, v in res.items()}
    if args.command == "study":
        if args.repeats is not None:
            cfg = cfg.replace(run={"n_repeats": args.repeats})
        st = run_noise_study(cfg, experiment=args.experiment)
        if args.figures:
            figures_from_study(out, cfg=cfg)
        s = st.summary
        return {"runs": len(st.runs), "failures": len(st.failures),
                "hd_mean": s.hd_mean if s else None, "hd_sd": s.hd_sd if s else None}
    if args.command == "metrics":
        rows = []
        for d in args.studies:
            row = study_metrics_row(d)
            append_metrics_row(args.report, **row)
            rows.append(row)
        return {"report": args.report, "rows": rows}
    if args.command == "figures":
        files = {}
        if args.study:
            files.update(figures_from_study(args.study, out / "figures" if args.out else None, cfg))
        if args.metrics:
            pts = [(int(r["L"]), float(r["hd_mean"])) for r in read_metrics(args.metrics)]
            exact = cfg.exact_params()
            if exact is None:
                raise ConfigError("figures need exact obstacle parameters")
            files.update(emit_figures(out, exact, hd_vs_L=pts))
        if not files:
            raise ConfigError("nothing to plot: give a study directory or --metrics")
        return {k: str(v) for k, v in files.items()}
    if args.command == "bench":
        return run_bench(cfg, args.repeats, args.surrogate)
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = _dispatch(args)
    except (ConfigError, ParameterError, GeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, PriorMismatchError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(result, indent=2, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
