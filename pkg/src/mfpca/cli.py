"""Command-line entry points for the experiment harness.

Exit codes: 0 success, 1 runtime failure, 2 configuration errors (including
bad flags and malformed config files).
"""

from __future__ import annotations

import dataclasses
import math
import os
import sys
import tempfile

import click
import numpy as np

from . import formats, harness
from .adversarial import build_pair, hellinger_affinity, make_bump_family
from .basis import make_basis, project_function, smooth
from .covariance import (GramOperator, KernelSpec, empirical_gram,
                         projection_bias_bound, projection_bias_report,
                         remainder_report)
from .estimator import SolverConfig, pre_estimate, solve_penalized
from .fnspace import CoefVector, norms, project_l1_ball, soft_threshold
from .simulate import build_sparse_model, make_rng, sample_observations
from .simulate import ObservationSet
from .tuning import TuningInputs, estimate_nuisances, lambda1


def _load_config(path, seed=None, out=None) -> harness.ExperimentConfig:
    try:
        cfg = harness.read_experiment_config(path)
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=seed)
        if out:
            cfg = dataclasses.replace(cfg, out=out)
        return cfg
    except harness.ConfigError as exc:
        raise click.UsageError(str(exc)) from exc


@click.group()
def main():
    """Sparse multivariate functional PCA: simulation and estimation harness."""


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["csv", "binary"]),
              default="csv", show_default=True)
def simulate(config_path, seed, out, fmt):
    """Draw one dataset at the first sweep point and write it to --out."""
    cfg = _load_config(config_path, seed)
    point = cfg.points()[0]
    try:
        mu = cfg.effective_eigenvalues()
        model = build_sparse_model(D=point.D, s=point.s, r=len(mu),
                                   eigenvalues=mu, seed=cfg.seed,
                                   sigma=point.sigma, alpha=cfg.alpha,
                                   shape=cfg.shape)
        obs = sample_observations(model, n=point.n, p=point.p, seed=cfg.seed,
                                  stream=(point.index, 0))
        if fmt == "binary":
            formats.write_observations_binary(obs.Y, out)
        else:
            formats.write_observations_csv(obs.Y, out)
    except Exception as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"wrote {obs.n} x {obs.D} x {obs.p} observations to {out} ({fmt})")


def _echo_solve(res, pre, report):
    click.echo(f"mu_hat = {res.mu_hat:.17g}")
    click.echo(f"gap_hat = {pre.gap:.17g}")
    click.echo(f"active_components = {int(norms(res.f_hat).l0_count)}")
    click.echo(f"iterations = {res.iterations}")
    click.echo(f"stationarity_gap = {res.stationarity_gap:.3e}")
    click.echo(f"binding = {res.binding}")
    if report is not None:
        click.echo(report.as_text())
    else:
        click.echo("tuning report unavailable: degenerate spectrum estimate")


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None)
@click.option("--in", "infile", type=click.Path(exists=True, dir_okay=False),
              default=None,
              help="Observation dump to estimate on; omitted, a dataset is "
                   "simulated at the first sweep point.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Also write the replicate record as a one-row CSV.")
def estimate(config_path, seed, infile, out):
    """Estimate the leading sparse component of one dataset."""
    cfg = _load_config(config_path, seed)
    point = cfg.points()[0]
    if infile is None:
        try:
            record, report, res = harness._run_replicate_full(cfg, point, 0)
            pre_gap = record.eta * 16.0 if math.isfinite(record.eta) else 0.0
        except Exception as exc:
            raise click.ClickException(str(exc)) from exc
        click.echo(f"err_g = {record.err_g:.17g}")
        click.echo(f"err_f = {record.err_f:.17g}  (plain PCA {record.err_f_pca:.17g})")
        click.echo(f"mu_hat = {res.mu_hat:.17g}")
        click.echo(f"gap_hat = {pre_gap:.17g}")
        click.echo(f"active_components = {int(norms(res.f_hat).l0_count)}")
        click.echo(f"iterations = {record.iterations}")
        click.echo(f"stationarity_gap = {record.stationarity_gap:.3e}")
        if report is not None:
            click.echo(report.as_text())
        if out:
            formats.write_rate_csv([record], out)
            click.echo(f"record -> {out}")
        return
    if cfg.tuning == "oracle":
        raise click.UsageError("oracle tuning needs model truth; external "
                               "datasets require tuning = practice")
    try:
        Y = formats.read_observations(infile)
        n, D, p = Y.shape
        M = cfg.ms[0]
        if p % M:
            raise harness.ConfigError(f"basis size M={M} does not divide the "
                                      f"file's grid size p={p}")
        basis = make_basis(M, p)
        obs = ObservationSet(Y=Y, sigma=float(cfg.sigmas[0]), seed=cfg.seed)
        gram = empirical_gram(smooth(Y, basis))
        pre = pre_estimate(gram)
        mu1_t, k_hat, sig_hat = estimate_nuisances(obs, basis, alpha=cfg.alpha,
                                                   holder_L=cfg.class_l)
        inputs = TuningInputs(n=n, p=p, D=D, M=M, s=min(cfg.ss[0], D),
                              sigma=sig_hat, k_sup=k_hat, mu1_tilde=mu1_t,
                              holder_L=cfg.class_l, alpha=cfg.alpha,
                              g_ref=pre.g)
        lam, t_used, eta, _, report = harness.select_tuning(inputs, pre)
        solver = SolverConfig(lam=lam, T=t_used, eta=eta,
                              max_iters=cfg.max_iters,
                              tol_stationarity=cfg.tol)
        res = solve_penalized(gram, solver, pre.g)
    except harness.ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    except Exception as exc:
        raise click.ClickException(str(exc)) from exc
    _echo_solve(res, pre, report)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Rate-record CSV destination (falls back to the config's).")
@click.option("--threads", type=int, default=1, show_default=True)
def sweep(config_path, seed, out, threads):
    """Monte Carlo sweep over all config points; writes a rate-record CSV."""
    cfg = _load_config(config_path, seed, out)
    if not cfg.out:
        raise click.UsageError("no output path: pass --out or set run.out")
    if threads < 1:
        raise click.UsageError(f"--threads must be at least 1, got {threads}")
    try:
        records = harness.run_sweep(cfg, threads=threads)
        formats.write_rate_csv(records, cfg.out)
    except Exception as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"{len(records)} rows ({harness.failure_count(records)} failed) "
               f"-> {cfg.out}")


@main.command()
@click.argument("csv_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--x-field", default="n", show_default=True)
@click.option("--y-field", default="err_f", show_default=True)
def rates(csv_path, x_field, y_field):
    """Fit the log-log rate slope of a sweep's rate-record CSV."""
    try:
        records = formats.read_rate_csv(csv_path)
        slope, intercept, stderr = harness.fit_loglog_slope(records, x_field,
                                                            y_field)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    failed = harness.failure_count(records)
    click.echo(f"slope {slope:.2f} (stderr {stderr:.3g}, intercept "
               f"{intercept:.3g}; {len(records)} rows, {failed} failed)")


@main.command()
@click.option("--kernel", type=click.Choice(["brownian", "fbm"]),
              default="brownian", show_default=True)
@click.option("--hurst", type=float, default=0.5, show_default=True)
@click.option("--m", "m_cells", type=int, default=4, show_default=True)
@click.option("--p", "p_nodes", type=int, default=64, show_default=True)
@click.option("--sigma", type=float, default=0.0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Also write the report lines to a text file.")
def diagnose(kernel, hurst, m_cells, p_nodes, sigma, out):
    """Discretization remainders, projection bias, and a worst-pair check."""
    try:
        spec = KernelSpec(kind=kernel, hurst=hurst)
        basis = make_basis(m_cells, p_nodes)
        rem = remainder_report(spec, basis, sigma2=sigma * sigma)
        bias = projection_bias_report(spec, basis)
        bias_bound = projection_bias_bound(spec, m_cells)
        n_pair = 100
        _, cov = build_pair(s=2, n=n_pair, p=max(p_nodes, 3), D=2, sigma=1.0,
                            seed=0)
        aff = hellinger_affinity(cov.G0, cov.G1)
        h2n = 2.0 - 2.0 * aff**n_pair
    except Exception as exc:
        raise click.ClickException(str(exc)) from exc
    lines = [
        f"max_RN = {rem.max_RN:.6e}",
        f"max_RK = {rem.max_RK:.6e} (bound {rem.bound_RK:.6e}, "
        f"{'ok' if rem.max_RK <= rem.bound_RK else 'VIOLATED'})",
        f"projection_bias = {bias:.6e} (bound {bias_bound:.6e}, ok)",
        f"hellinger_h2n = {h2n:.6f} at n = {n_pair} (indistinguishable pair)",
    ]
    for line in lines:
        click.echo(line)
    if out:
        with open(out, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _check_partition_of_unity():
    basis = make_basis(8, 64)
    coefs = project_function(lambda t: np.ones_like(t), basis)
    assert abs(norms(coefs).h_norm - 1.0) <= 1e-12


def _check_l1_projection():
    rng = make_rng(0, 0x5E1F)
    v = rng.standard_normal(40)
    w = project_l1_ball(v, 3.0)
    assert np.sum(np.abs(w)) <= 3.0 + 1e-12
    assert np.allclose(project_l1_ball(w, 3.0), w, atol=1e-12)
    u = soft_threshold(v, 0.5)
    assert np.all(np.abs(u) <= np.maximum(np.abs(v) - 0.5, 0.0) + 1e-15)


def _check_gram_psd():
    rng = make_rng(1, 0x5E1F)
    W = rng.standard_normal((12, 20))
    g = GramOperator.from_factor(W, M=5, D=4)
    for _ in range(5):
        v = rng.standard_normal(20)
        assert g.quad(v) >= -1e-12


def _check_plain_solve_is_pca():
    rng = make_rng(2, 0x5E1F)
    v = rng.standard_normal(12)
    v /= np.linalg.norm(v)
    G = 2.0 * np.outer(v, v) + 0.1 * np.eye(12)
    gram = GramOperator.from_dense(G, M=4, D=3)
    pre = pre_estimate(gram)
    res = solve_penalized(gram, SolverConfig(lam=0.0), pre.g)
    top = math.sqrt(2.1) * v
    err = min(np.linalg.norm(res.g_hat.coeffs - top),
              np.linalg.norm(res.g_hat.coeffs + top))
    assert err <= 1e-6


def _check_noise_remainder_vanishes():
    rep = remainder_report(KernelSpec(kind="brownian"), make_basis(2, 8),
                           sigma2=1.0)
    assert rep.max_RN <= 1e-12
    assert rep.max_RK <= rep.bound_RK


def _check_unit_affinity():
    g = np.diag([2.0, 1.0, 0.5])
    assert hellinger_affinity(g, g) == 1.0


def _check_penalty_scale():
    e = math.e
    inputs = TuningInputs(n=4, p=e, D=e, M=e, s=1, sigma=0.0, k_sup=1.0,
                          mu1_tilde=1.0, holder_L=0.0, alpha=0.5,
                          g_ref=CoefVector(np.array([1.0]), M=1, D=1))
    # log(DM) = 2 and the variance product is 1, so the penalty scale is
    # exactly 4 (4 sqrt(1/2) + 1/2)
    assert abs(lambda1(inputs) - 4.0 * (4.0 * math.sqrt(0.5) + 0.5)) <= 1e-12


def _check_binary_round_trip():
    Y = make_rng(3, 0x5E1F).standard_normal((3, 2, 5))
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "obs.bin")
        formats.write_observations_binary(Y, path)
        back = formats.read_observations_binary(path)
    assert np.array_equal(Y, back)


def _check_paired_bump_cancels():
    pair, _ = build_pair(s=2, n=50, p=65, D=3, sigma=1.0, seed=0)
    assert math.fsum(pair.phi_grid) == 0.0


_SELFTEST_CHECKS = (
    ("constant function has unit norm in the basis", _check_partition_of_unity),
    ("l1 projection is feasible and idempotent", _check_l1_projection),
    ("empirical Gram operator is PSD", _check_gram_psd),
    ("unpenalized solve recovers the top eigenpair", _check_plain_solve_is_pca),
    ("noise remainder vanishes on aligned lattices", _check_noise_remainder_vanishes),
    ("identical Gaussians have unit affinity", _check_unit_affinity),
    ("penalty scale matches its closed form", _check_penalty_scale),
    ("binary observation dump round-trips", _check_binary_round_trip),
    ("worst-case bump cancels on the grid", _check_paired_bump_cancels),
)


@main.command()
def selftest():
    """Run the built-in invariant checks; nonzero exit on any failure."""
    failures = 0
    for name, check in _SELFTEST_CHECKS:
        try:
            check()
        except Exception as exc:  # noqa: BLE001 - report every failing check
            failures += 1
            click.echo(f"FAIL {name}: {exc}")
        else:
            click.echo(f"ok   {name}")
    if failures:
        click.echo(f"{failures} of {len(_SELFTEST_CHECKS)} checks failed")
        sys.exit(1)
    click.echo(f"all {len(_SELFTEST_CHECKS)} checks passed")


if __name__ == "__main__":
    main()
