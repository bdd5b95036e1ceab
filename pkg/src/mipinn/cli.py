"""Batch front door: train, levelset, ntk, and eval subcommands.

Each run reads one YAML experiment file, writes its artifacts into a
single directory with fixed filenames (trace.csv, report.csv, grid.csv,
spectrum.csv, intervals.csv, metrics.txt, checkpoints, manifest.txt),
and exits 0 on success, 2 on configuration errors, 3 on numerical
failure. Flags override file keys: --seed the stored seed, --out the
output directory; --threads caps BLAS workers without changing results.
"""

from __future__ import annotations

import os
import sys

import click
import numpy as np

from .config import (ConfigError, ExperimentConfig, load_config, write_manifest)
from .estimators import FlowMapLearner, InterfaceSolver
from .levelset import NeuralLevelSet, load_flow_checkpoint, save_flow_checkpoint
from .lm import save_trace_csv
from .metrics import (error_norms, export_grid, save_report_csv, save_table_csv)
from .network import load_checkpoint, save_checkpoint
from .ntk import initialization_comparison, save_metrics_txt, save_spectrum_csv
from .problems import get_benchmark
from .sampling import (evaluation_grid, interface_time_grid, make_rng,
                       sample_boundary, sample_initial, sample_interface,
                       sample_interior)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_thread_limiter = None  # keeps the cap alive for the process lifetime


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _prepare(config_path, seed, threads, out_dir, command):
    """Shared prologue: validated config, effective seed, run directory."""
    global _thread_limiter
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        for line in exc.errors:
            click.echo(f"config error: {line}", err=True)
        sys.exit(EXIT_CONFIG)
    seed = cfg.seed if seed is None else seed
    out = out_dir or cfg.out_dir
    if out is None:
        _fail(EXIT_CONFIG, "no output directory: set out_dir in the config "
              "or pass --out")
    os.makedirs(out, exist_ok=True)
    if threads is not None:
        import threadpoolctl
        _thread_limiter = threadpoolctl.threadpool_limits(limits=threads)
    write_manifest(out, cfg, seed, command)
    return cfg, seed, out


def _solver_levelset(cfg: ExperimentConfig, bench):
    """Level set named by the config: analytic, or a fitted flow map."""
    if cfg.solver.levelset == "analytic":
        if bench.geometry.analytic is None:
            _fail(EXIT_CONFIG, f"{cfg.benchmark} has no analytic level set; "
                  "set solver.levelset: neural")
        return None  # InterfaceSolver.fit defaults to the analytic one
    flow, trained_on = load_flow_checkpoint(cfg.solver.flow_checkpoint)
    if trained_on != cfg.benchmark:
        _fail(EXIT_CONFIG, f"flow checkpoint was trained on {trained_on}, "
              f"config says {cfg.benchmark}")
    return NeuralLevelSet(flow=flow, initial=bench.geometry.initial)


def _evaluation_lattice(cfg: ExperimentConfig, spec):
    resolution = cfg.eval.resolution
    if resolution is None:
        resolution = 101 if spec.spatial_dim == 2 else 41
    return evaluation_grid(spec.domain, resolution, cfg.eval.n_times, spec.t_end)


def _write_report_and_grid(out, params, rule, levelset, bench, cfg, seed):
    x, t = _evaluation_lattice(cfg, bench.spec)
    report = error_norms(params, rule, levelset, bench.exact, x, t,
                         kind=bench.spec.kind, benchmark=bench.spec.name,
                         seed=seed)
    save_report_csv(os.path.join(out, "report.csv"), report)
    export_grid(params, rule, levelset, bench.exact, x, t,
                os.path.join(out, "grid.csv"), kind=bench.spec.kind)
    return report


@click.group()
def main():
    """Mesh-free neural solver for moving-interface problems."""


def _run_options(f):
    f = click.option("--out", "out_dir", type=click.Path(), default=None,
                     help="Run directory (overrides out_dir in the config).")(f)
    f = click.option("--threads", type=click.IntRange(min=1), default=None,
                     help="Cap BLAS/LAPACK worker threads.")(f)
    f = click.option("--seed", type=click.IntRange(min=0), default=None,
                     help="Override the seed stored in the config.")(f)
    f = click.option("--config", "config_path", required=True,
                     type=click.Path(), help="YAML experiment file.")(f)
    return f


@main.command()
@_run_options
def train(config_path, seed, threads, out_dir):
    """Train the solver network and write checkpoint, trace, and errors."""
    cfg, seed, out = _prepare(config_path, seed, threads, out_dir, "train")
    bench = get_benchmark(cfg.benchmark)
    levelset = _solver_levelset(cfg, bench)
    est = InterfaceSolver(
        benchmark=cfg.benchmark, hidden=cfg.solver.hidden, rule=cfg.solver.rule,
        n_interior=cfg.samples.n_interior, n_boundary=cfg.samples.n_boundary,
        n_initial=cfg.samples.n_initial,
        n_interface_times=cfg.samples.n_interface_times,
        n_interface_per_time=cfg.samples.n_interface_per_time,
        max_iters=cfg.lm.max_iters, loss_stop=cfg.lm.loss_stop,
        lambda_init=cfg.lm.lambda_init, weights=cfg.solver.weights,
        mode=cfg.solver.mode, interface_tol=cfg.solver.interface_tol,
        seed=seed)
    try:
        est.fit(flow_levelset=levelset)
    except np.linalg.LinAlgError as exc:
        _fail(EXIT_NUMERICAL, f"training failed: {exc}")
    save_trace_csv(os.path.join(out, "trace.csv"), est.result_.trace)
    save_checkpoint(os.path.join(out, "checkpoint.npz"), est.params_,
                    extra={"benchmark": cfg.benchmark, "rule": est.rule_})
    if est.result_.stop_reason == "stalled":
        _fail(EXIT_NUMERICAL,
              f"training stalled at loss {est.loss_:.6g}; trace written")
    report = _write_report_and_grid(out, est.params_, est.rule_, est.levelset_,
                                    bench, cfg, seed)
    click.echo(f"stop_reason = {est.result_.stop_reason}")
    click.echo(f"iterations = {est.n_iter_}")
    click.echo(f"loss = {est.loss_:.17g}")
    click.echo(f"e0 = {report.e0:.17g}")
    click.echo(f"e1 = {report.e1:.17g}")


def _zeroset_files(out, est, cfg):
    """Zero-level contours of the fitted level set at requested times."""
    from skimage import measure

    spec = est.benchmark_.spec
    if spec.spatial_dim != 2 or not cfg.flow.zeroset_times:
        return
    lo, hi = spec.domain.bounding_box()
    n = cfg.flow.zeroset_resolution
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    for tv in cfg.flow.zeroset_times:
        phi = est.levelset_.phi(pts, np.full(len(pts), float(tv)))
        rows = []
        for contour in measure.find_contours(phi.reshape(n, n), 0.0):
            x1 = lo[0] + contour[:, 0] * (hi[0] - lo[0]) / (n - 1)
            x2 = lo[1] + contour[:, 1] * (hi[1] - lo[1]) / (n - 1)
            rows.append(np.column_stack([x1, x2]))
        data = np.vstack(rows) if rows else np.empty((0, 2))
        save_table_csv(os.path.join(out, f"zeroset_t{tv:g}.csv"),
                       ["x1", "x2"], data)


@main.command()
@_run_options
def levelset(config_path, seed, threads, out_dir):
    """Fit the neural flow map with adaptive intervals; write checkpoint,
    interval table, and the trajectory-mismatch metric."""
    cfg, seed, out = _prepare(config_path, seed, threads, out_dir, "levelset")
    est = FlowMapLearner(
        benchmark=cfg.benchmark, hidden=cfg.flow.hidden,
        n_reference=cfg.flow.n_reference, n_times=cfg.flow.n_times,
        delta=cfg.flow.delta, substeps=cfg.flow.substeps,
        max_iters=cfg.flow.max_iters, loss_stop=cfg.flow.loss_stop,
        lambda_init=cfg.flow.lambda_init, seed=seed)
    try:
        est.fit()
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        _fail(EXIT_NUMERICAL, f"flow-map training failed: {exc}")
    save_flow_checkpoint(os.path.join(out, "flow_checkpoint.npz"), est.flow_,
                         cfg.benchmark)
    rows = np.array([[r.t_start, r.t_end, r.min_det, r.n_extensions, r.fit_loss]
                     for r in est.records_])
    save_table_csv(os.path.join(out, "intervals.csv"),
                   ["t_start", "t_end", "min_det", "n_extensions", "fit_loss"],
                   rows)
    save_metrics_txt(os.path.join(out, "metrics.txt"), {
        "flowmap_error": est.flowmap_error_,
        "n_intervals": est.n_pieces_,
        "min_det": min(r.min_det for r in est.records_),
        "delta": cfg.flow.delta,
    })
    _zeroset_files(out, est, cfg)
    click.echo(f"n_intervals = {est.n_pieces_}")
    click.echo(f"flowmap_error = {est.flowmap_error_:.17g}")


@main.command()
@_run_options
def ntk(config_path, seed, threads, out_dir):
    """Compare training-kernel spectra of the extended-input network and a
    plain network at initialization."""
    cfg, seed, out = _prepare(config_path, seed, threads, out_dir, "ntk")
    bench = get_benchmark(cfg.benchmark)
    if bench.geometry.analytic is None:
        _fail(EXIT_CONFIG, f"{cfg.benchmark} has no analytic level set")
    spec = bench.spec
    interior = sample_interior(spec.domain, spec.t_end, cfg.ntk.n_interior,
                               make_rng(seed, 0))
    boundary = sample_boundary(spec.domain, spec.t_end, cfg.ntk.n_boundary,
                               make_rng(seed, 1))
    initial = sample_initial(spec.domain, cfg.ntk.n_initial, make_rng(seed, 2))
    times = interface_time_grid(spec.t_end, cfg.ntk.n_interface_times)
    interface = sample_interface(bench.geometry, times,
                                 cfg.ntk.n_interface_per_time, make_rng(seed, 3))
    try:
        rep_ext, rep_plain = initialization_comparison(
            bench, bench.geometry.analytic, interior, boundary, initial,
            interface, cfg.ntk.hidden, seed, rule=cfg.solver.rule,
            with_full_spectrum=cfg.ntk.full_spectrum)
    except np.linalg.LinAlgError as exc:
        _fail(EXIT_NUMERICAL, f"kernel analysis failed: {exc}")
    spectra = {f"extended/{k}": v for k, v in rep_ext.spectra.items()}
    spectra.update({f"plain/{k}": v for k, v in rep_plain.spectra.items()})
    save_spectrum_csv(os.path.join(out, "spectrum.csv"), spectra)
    metrics = {
        "extended_c_total": rep_ext.c_total,
        "extended_c_partial": rep_ext.c_partial,
        "plain_c_total": rep_plain.c_total,
        "plain_c_partial": rep_plain.c_partial,
        "ratio_total": rep_ext.c_total / rep_plain.c_total,
        "ratio_partial": rep_ext.c_partial / rep_plain.c_partial,
        "extended_params": rep_ext.param_count,
        "plain_params": rep_plain.param_count,
    }
    save_metrics_txt(os.path.join(out, "metrics.txt"), metrics)
    click.echo(f"extended_c_total = {rep_ext.c_total:.17g}")
    click.echo(f"plain_c_total = {rep_plain.c_total:.17g}")
    click.echo(f"ratio_total = {metrics['ratio_total']:.17g}")


@main.command("eval")
@click.option("--checkpoint", "checkpoint_path", required=True,
              type=click.Path(), help="Solver checkpoint (.npz) to evaluate.")
@_run_options
def eval_cmd(config_path, seed, threads, out_dir, checkpoint_path):
    """Recompute the error report of a saved solver checkpoint."""
    cfg, seed, out = _prepare(config_path, seed, threads, out_dir, "eval")
    if not os.path.exists(checkpoint_path):
        _fail(EXIT_CONFIG, f"no such checkpoint: {checkpoint_path}")
    params, extra = load_checkpoint(checkpoint_path)
    trained_on = extra.get("benchmark")
    if trained_on is not None and trained_on != cfg.benchmark:
        _fail(EXIT_CONFIG, f"checkpoint was trained on {trained_on}, "
              f"config says {cfg.benchmark}")
    rule = extra.get("rule")
    if rule is None:
        _fail(EXIT_CONFIG, "checkpoint lacks the extension-rule tag")
    bench = get_benchmark(cfg.benchmark)
    levelset = _solver_levelset(cfg, bench) or bench.geometry.analytic
    report = _write_report_and_grid(out, params, rule, levelset, bench, cfg,
                                    seed)
    click.echo(f"e0 = {report.e0:.17g}")
    click.echo(f"e1 = {report.e1:.17g}")


if __name__ == "__main__":
    main()
