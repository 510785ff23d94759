"""Experiment orchestration: configs, single replicates, sweeps, rate fits.

A sweep is a cartesian product over the six axes (n, p, M, D, s, sigma); each
point runs R replicates of the full pipeline
    sample -> smooth -> empirical Gram -> pre-estimate -> tuning
    -> penalized solve -> aligned errors (plus the plain-PCA baseline)
and yields one RateRecord per replicate.  Replicates are seeded by (seed,
point index, replicate index), never by scheduling, so any worker count
produces the same records.
"""

from __future__ import annotations

import configparser
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .basis import make_basis, project_function, smooth
from .covariance import empirical_gram
from .estimator import (SolverConfig, SolveResult, aligned_error, pre_estimate,
                        solve_penalized)
from .fnspace import CoefVector, h_inner, norms
from .simulate import build_sparse_model, sample_observations
from .tuning import (TuningInputs, TuningReport, estimate_nuisances, lambda1,
                     lambda_rule, oracle_check)

_SHAPE_NAMES = ("smooth", "piecewise")
_TUNING_MODES = ("oracle", "practice")


class ConfigError(ValueError):
    """Invalid experiment configuration (file or field level)."""


@dataclass(frozen=True)
class SweepPoint:
    index: int
    n: int
    p: int
    M: int
    D: int
    s: int
    sigma: float


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: model family, sweep axes, replicate count, solver knobs.

    eigenvalues, when nonempty, is the model spectrum verbatim; otherwise a
    geometric spectrum mu1 * decay^k of length rank is used.  class_l and
    alpha double as the assumed regularity class in practice tuning mode.
    """

    ns: tuple = (200,)
    ps: tuple = (64,)
    ms: tuple = (16,)
    ds: tuple = (8,)
    ss: tuple = (2,)
    sigmas: tuple = (0.5,)
    replicates: int = 1
    seed: int = 0
    tuning: str = "oracle"
    rank: int = 3
    mu1: float = 1.0
    decay: float = 0.5
    eigenvalues: tuple = ()
    alpha: float = 0.5
    shape: str = "smooth"
    class_l: float = 1.0
    max_iters: int = 4000
    tol: float = 1e-8
    out: str = ""

    def __post_init__(self):
        for name in ("ns", "ps", "ms", "ds", "ss"):
            axis = getattr(self, name)
            if not axis or any(int(v) != v or v < 1 for v in axis):
                raise ConfigError(f"sweep axis {name} needs positive integers, got {axis!r}")
        if not self.sigmas or any(v < 0 or not math.isfinite(v) for v in self.sigmas):
            raise ConfigError(f"sigma axis needs nonnegative reals, got {self.sigmas!r}")
        if self.replicates < 1:
            raise ConfigError(f"need at least one replicate, got {self.replicates}")
        for M, p in itertools.product(self.ms, self.ps):
            if p % M:
                raise ConfigError(f"every basis size must divide every grid size; "
                                  f"M={M} does not divide p={p}")
        for s, D in itertools.product(self.ss, self.ds):
            if s > D:
                raise ConfigError(f"sparsity s={s} exceeds dimension D={D}")
        if self.tuning not in _TUNING_MODES:
            raise ConfigError(f"tuning mode must be one of {_TUNING_MODES}, got {self.tuning!r}")
        if self.shape not in _SHAPE_NAMES:
            raise ConfigError(f"shape must be one of {_SHAPE_NAMES}, got {self.shape!r}")
        mu = self.effective_eigenvalues()
        if not mu or any(v <= 0 for v in mu) or any(b >= a for a, b in zip(mu, mu[1:])):
            raise ConfigError(f"model spectrum must be positive and strictly "
                              f"decreasing, got {mu!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if self.class_l <= 0:
            raise ConfigError(f"class_l must be positive, got {self.class_l!r}")
        if self.max_iters < 1 or self.tol <= 0:
            raise ConfigError("solver needs max_iters >= 1 and tol > 0")

    def effective_eigenvalues(self) -> tuple:
        if self.eigenvalues:
            return tuple(float(v) for v in self.eigenvalues)
        if self.rank < 1 or not 0.0 < self.decay < 1.0 or self.mu1 <= 0:
            raise ConfigError(f"geometric spectrum needs rank >= 1, mu1 > 0 and "
                              f"decay in (0, 1), got rank={self.rank}, "
                              f"mu1={self.mu1}, decay={self.decay}")
        return tuple(self.mu1 * self.decay**k for k in range(self.rank))

    def points(self) -> tuple:
        return tuple(
            SweepPoint(index=i, n=n, p=p, M=M, D=D, s=s, sigma=sig)
            for i, (n, p, M, D, s, sig) in enumerate(itertools.product(
                self.ns, self.ps, self.ms, self.ds, self.ss, self.sigmas))
        )


@dataclass(frozen=True)
class RateRecord:
    """One replicate's outcome; failed replicates carry an error code status."""

    n: int
    p: int
    D: int
    M: int
    s: int
    sigma: float
    seed: int
    lam: float
    t: float
    eta: float
    err_g: float
    err_f: float
    err_f_pca: float
    iterations: int
    stationarity_gap: float
    oracle_satisfied: bool
    wall_ms: float
    status: str = "ok"

    def __post_init__(self):
        if self.status != "ok":
            return
        if not (self.err_g >= 0.0 and self.err_f >= 0.0 and self.err_f_pca >= 0.0):
            raise ValueError("error fields must be nonnegative")
        if self.err_f > 4.0 or self.err_f_pca > 4.0:
            raise ValueError("squared distance of two unit directions cannot exceed 4")


# --------------------------------------------------------------- config file

def _parse_axis(raw: str, cast):
    vals = tuple(cast(v.strip()) for v in raw.split(",") if v.strip())
    if not vals:
        raise ValueError(f"empty axis value {raw!r}")
    return vals


_FIELD_READERS = {
    "model": {
        "rank": ("rank", int),
        "mu1": ("mu1", float),
        "decay": ("decay", float),
        "eigenvalues": ("eigenvalues", lambda v: _parse_axis(v, float)),
        "alpha": ("alpha", float),
        "shape": ("shape", str),
        "class_l": ("class_l", float),
    },
    "sweep": {
        "n": ("ns", lambda v: _parse_axis(v, int)),
        "p": ("ps", lambda v: _parse_axis(v, int)),
        "m": ("ms", lambda v: _parse_axis(v, int)),
        "d": ("ds", lambda v: _parse_axis(v, int)),
        "s": ("ss", lambda v: _parse_axis(v, int)),
        "sigma": ("sigmas", lambda v: _parse_axis(v, float)),
    },
    "run": {
        "replicates": ("replicates", int),
        "seed": ("seed", int),
        "tuning": ("tuning", str),
        "max_iters": ("max_iters", int),
        "tol": ("tol", float),
        "out": ("out", str),
    },
}


def read_experiment_config(path) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ConfigError(f"cannot read config file {path}")
    kwargs = {}
    for section in cp.sections():
        readers = _FIELD_READERS.get(section)
        if readers is None:
            raise ConfigError(f"unknown config section [{section}] in {path}")
        for key, raw in cp[section].items():
            if key not in readers:
                raise ConfigError(f"unknown key {key!r} in section [{section}] of {path}")
            field, cast = readers[key]
            try:
                kwargs[field] = cast(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})") from exc
    return ExperimentConfig(**kwargs)


# ------------------------------------------------------------ one replicate

class _PointContext:
    """Per-point truth: model, basis, projected first component, nuisances."""

    __slots__ = ("model", "basis", "f1_proj", "g1_proj", "tail", "mu1",
                 "mu1_tilde", "k_sup")

    def __init__(self, model, basis, f1_proj, g1_proj, tail, mu1, mu1_tilde, k_sup):
        self.model = model
        self.basis = basis
        self.f1_proj = f1_proj
        self.g1_proj = g1_proj
        self.tail = tail
        self.mu1 = mu1
        self.mu1_tilde = mu1_tilde
        self.k_sup = k_sup


@lru_cache(maxsize=4)
def _point_context(config: ExperimentConfig, point: SweepPoint) -> _PointContext:
    mu = config.effective_eigenvalues()
    model = build_sparse_model(D=point.D, s=point.s, r=len(mu), eigenvalues=mu,
                               seed=config.seed, sigma=point.sigma,
                               alpha=config.alpha, shape=config.shape)
    basis = make_basis(point.M, point.p)
    # 1e-9 cell-mean accuracy puts coefficient noise far below every error
    # scale measured against these truths (projection tails are >= 1e-6)
    proj = [project_function([model.component_callable(l, d)
                              for d in range(point.D)], basis,
                             tol=1e-9, max_doublings=10)
            for l in range(model.r)]
    # top eigenvalue of the projected operator via the Gram matrix of the
    # scaled projected components (they span its range)
    C = np.empty((model.r, model.r))
    for l in range(model.r):
        for m in range(l, model.r):
            C[l, m] = C[m, l] = math.sqrt(mu[l] * mu[m]) * h_inner(proj[l], proj[m])
    mu1_tilde = float(np.linalg.eigvalsh(C)[-1])
    f1 = proj[0]
    tail = max(0.0, 1.0 - h_inner(f1, f1))
    g1 = f1.with_coeffs(math.sqrt(mu[0]) * f1.coeffs)
    return _PointContext(model=model, basis=basis, f1_proj=f1, g1_proj=g1,
                         tail=tail, mu1=float(mu[0]), mu1_tilde=mu1_tilde,
                         k_sup=model.kernel_sup_norm())


def _tuning_inputs(config: ExperimentConfig, point: SweepPoint,
                   ctx: _PointContext, obs, pre) -> TuningInputs:
    if config.tuning == "oracle":
        return TuningInputs(n=point.n, p=point.p, D=point.D, M=point.M,
                            s=ctx.model.s, sigma=ctx.model.sigma,
                            k_sup=ctx.k_sup, mu1_tilde=ctx.mu1_tilde,
                            holder_L=ctx.model.holder_L, alpha=ctx.model.alpha,
                            g_ref=ctx.g1_proj)
    mu1_t, k_hat, sig_hat = estimate_nuisances(obs, ctx.basis,
                                               alpha=config.alpha,
                                               holder_L=config.class_l)
    return TuningInputs(n=point.n, p=point.p, D=point.D, M=point.M,
                        s=point.s, sigma=sig_hat, k_sup=k_hat,
                        mu1_tilde=mu1_t, holder_L=config.class_l,
                        alpha=config.alpha, g_ref=pre.g)


def select_tuning(inputs: TuningInputs, pre):
    """Penalty, l1 budget, and locality radius for a solve around ``pre``.

    The locality radius is a sixteenth of the estimated eigengap (half the
    curvature margin's ceiling).  The budget is the tuning suggestion, but
    never less than 1.05x the reference's own l1 size (the reference stays
    feasible) and never less than the init's l1 size (the search region stays
    nonempty; a dense pre-estimate can exceed the sparse reference by far).
    Beyond the largest feasible budget the check is recorded as failed rather
    than silently clipped.  Returns (lam, t, eta, ok, report); report is None
    when the spectrum is degenerate.
    """
    rho = pre.gap
    eta = rho / 16.0 if rho > 0.0 else math.inf
    g_l1 = float(norms(inputs.g_ref).l1_norm)
    init_l1 = float(norms(pre.g).l1_norm)
    report: Optional[TuningReport] = None
    if rho > 0.0:
        probe = oracle_check(inputs, t=g_l1, eta=eta, rho=rho, mu1=pre.mu1)
        t_used = max(1.05 * g_l1, init_l1, probe.t_suggest)
        report = (oracle_check(inputs, t=t_used, eta=eta, rho=rho, mu1=pre.mu1)
                  if math.isfinite(t_used) else probe)
        return report.lam, t_used, eta, report.oracle_satisfied, report
    lam = lambda_rule(inputs, lambda1(inputs))
    return lam, math.inf, eta, False, report


def _run_replicate_full(config: ExperimentConfig, point: SweepPoint,
                        replicate_index: int):
    """The pipeline with its intermediates; raises on any stage failure."""
    t0 = time.perf_counter()
    ctx = _point_context(config, point)
    obs = sample_observations(ctx.model, n=point.n, p=point.p,
                              seed=config.seed,
                              stream=(point.index, replicate_index))
    gram = empirical_gram(smooth(obs.Y, ctx.basis))
    pre = pre_estimate(gram)
    f_pca = pre.g.with_coeffs(pre.g.coeffs / math.sqrt(pre.mu1))
    err_f_pca = aligned_error(f_pca, ctx.f1_proj) + ctx.tail

    inputs = _tuning_inputs(config, point, ctx, obs, pre)
    lam, t_used, eta, satisfied, report = select_tuning(inputs, pre)

    solver = SolverConfig(lam=lam, T=t_used, eta=eta,
                          max_iters=config.max_iters,
                          tol_stationarity=config.tol)
    res = solve_penalized(gram, solver, pre.g)
    err_g = aligned_error(res.g_hat, ctx.g1_proj) + ctx.mu1 * ctx.tail
    err_f = aligned_error(res.f_hat, ctx.f1_proj) + ctx.tail
    record = RateRecord(
        n=point.n, p=point.p, D=point.D, M=point.M, s=point.s,
        sigma=point.sigma, seed=config.seed, lam=lam, t=t_used, eta=eta,
        err_g=err_g, err_f=err_f, err_f_pca=err_f_pca,
        iterations=res.iterations, stationarity_gap=res.stationarity_gap,
        oracle_satisfied=satisfied,
        wall_ms=(time.perf_counter() - t0) * 1e3, status="ok",
    )
    return record, report, res


def run_replicate(config: ExperimentConfig, point: SweepPoint,
                  replicate_index: int) -> RateRecord:
    """One replicate; stage failures become an error-coded record, not a raise."""
    try:
        record, _, _ = _run_replicate_full(config, point, replicate_index)
        return record
    except Exception as exc:  # noqa: BLE001 - converted to a failed-row marker
        nan = float("nan")
        return RateRecord(n=point.n, p=point.p, D=point.D, M=point.M,
                          s=point.s, sigma=point.sigma, seed=config.seed,
                          lam=nan, t=nan, eta=nan, err_g=nan, err_f=nan,
                          err_f_pca=nan, iterations=0, stationarity_gap=nan,
                          oracle_satisfied=False, wall_ms=0.0,
                          status=type(exc).__name__)


# ------------------------------------------------------------------- sweeps

def _sweep_task(args):
    config, point, rep = args
    return run_replicate(config, point, rep)


def run_sweep(config: ExperimentConfig, threads: int = 1) -> list:
    """All points x replicates, in point-major order.

    Rows are identified by their (point, replicate) position, so worker count
    changes scheduling only.  Wall times are schedule- and machine-dependent,
    so persisted sweep rows zero them; equal seeds then give identical output
    byte for byte.
    """
    tasks = [(config, point, rep)
             for point in config.points()
             for rep in range(config.replicates)]
    if threads <= 1:
        raw = [_sweep_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            raw = list(pool.map(_sweep_task, tasks))
    return [replace(rec, wall_ms=0.0) for rec in raw]


def failure_count(records: Sequence[RateRecord]) -> int:
    return sum(1 for r in records if r.status != "ok")


# ---------------------------------------------------------------- rate fits

def fit_loglog_slope(records: Sequence[RateRecord], x_field: str = "n",
                     y_field: str = "err_f"):
    """OLS slope of log mean-y against log x over successful rows.

    Returns (slope, intercept, stderr).  Requires at least three distinct
    x values and positive group means.
    """
    groups: dict = {}
    for rec in records:
        if rec.status != "ok":
            continue
        groups.setdefault(float(getattr(rec, x_field)), []).append(
            float(getattr(rec, y_field)))
    if len(groups) < 3:
        raise ValueError(f"need at least 3 distinct {x_field} values with "
                         f"successful rows, got {len(groups)}")
    xs = np.array(sorted(groups))
    means = np.array([np.mean(groups[x]) for x in xs])
    if np.any(xs <= 0) or np.any(means <= 0) or not np.all(np.isfinite(means)):
        raise ValueError("log-log fit needs positive x and positive finite mean y")
    lx, ly = np.log(xs), np.log(means)
    dx = lx - lx.mean()
    slope = float(dx @ ly / (dx @ dx))
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    dof = len(xs) - 2
    stderr = float(math.sqrt(float(resid @ resid) / dof / float(dx @ dx))) \
        if dof > 0 else float("nan")
    return slope, intercept, stderr
