"""Command-line workflow: simulate -> fit -> reconstruct -> diagnose.

Exit status: 0 = success with healthy diagnostics, 2 = completed but at
least one health gate failed (files are still written), 1 = error (bad
arguments, unreadable files, malformed config, numerical failure).
"""

import argparse
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import figures, io
from .diagnostics import (
    DiagnosticError,
    _even_indices,
    build_posterior_summary,
    credible_interval,
    discrepancy_vs_residuals,
    effective_sample_size,
    pooled_constrained,
    posterior_correlation,
    split_rhat,
)
from .forward import SolverError
from .model import (
    ParameterSpace,
    PosteriorDensity,
    _initial_condition_for,
    predicted_level_series,
    simulate_dataset,
)
from .sampler import (
    InitializationError,
    laplace_covariance,
    maximize_log_density,
    run_chains,
)

__all__ = ["FitResult", "cmd_simulate", "cmd_fit", "cmd_reconstruct", "cmd_diagnose", "main"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNHEALTHY = 2


def _out(config, name):
    return os.path.join(config.out_dir, name)


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(config):
    """Generate a synthetic dataset plus its ground truth record."""
    if config.simulate is None:
        raise io.ConfigError("config has no 'simulate' section")
    scenario = config.simulate
    os.makedirs(config.out_dir, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    dataset = simulate_dataset(rng, scenario.truth, scenario.designs, config.constants())
    io.write_dataset(config.dataset_path, dataset, config.time_unit)

    space = ParameterSpace.from_dataset(dataset, degree=scenario.truth.a.degree)
    values = space.pack(scenario.truth)
    io.write_key_value(
        _out(config, "truth.txt"),
        [(f"param.{name}", v) for name, v in zip(space.names, values)],
    )
    n_rows = sum(e.times.size + len(e.held_out_times) for e in dataset.experiments)
    print(f"wrote {config.dataset_path} ({n_rows} rows, {len(dataset.experiments)} experiments)")
    print(f"wrote {_out(config, 'truth.txt')}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


@dataclass
class FitResult:
    """Everything a fit produced, for library callers and tests."""

    config: object
    dataset: object
    posterior: PosteriorDensity
    traces: list
    summary: object
    table: object

    @property
    def space(self):
        return self.posterior.space

    @property
    def exit_code(self):
        return EXIT_OK if self.summary.healthy else EXIT_UNHEALTHY


def _posterior_curves(traces, dataset, space, n_draws, constants, n_points=60):
    """Level curves for evenly spaced posterior draws, per experiment."""
    pooled = pooled_constrained(traces)
    idx = _even_indices(pooled.shape[0], n_draws)
    curves = {}
    for exp in dataset.experiments:
        t_end = float(exp.times.max())
        if exp.held_out_times.size:
            t_end = max(t_end, float(exp.held_out_times.max()))
        draws = []
        for i in idx:
            beta = space.unpack(pooled[i])
            ic = _initial_condition_for(beta, dataset, exp)
            grid = np.linspace(min(ic.t0, t_end), t_end, n_points)
            levels = np.atleast_1d(
                predicted_level_series(beta, dataset, exp.id, grid, constants)
            )
            draws.append((grid, levels))
        curves[exp.id] = draws
    return curves


def _warm_start(posterior, sampler_cfg, config):
    """Mode-seeded chain starts plus a curvature-matched proposal covariance.

    The posterior concentrates far inside the prior, so chains started from
    plain prior draws spend most of the run crawling toward it and the
    covariance adaptation learns the transient instead of the target.
    Climbing to the mode first and starting the chains from a dispersed
    cloud around it removes that failure mode; the local inverse curvature
    seeds the proposal shape that adaptation then refines.
    """
    u0, _ = posterior.space.to_unconstrained(posterior.prior_central())
    u_map = maximize_log_density(posterior, u0, max_evals=config.map_max_evals)
    covariance = laplace_covariance(
        posterior, u_map, scales=posterior.prior_proposal_scales()
    )
    chol = np.linalg.cholesky(covariance)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(7,)))
    inits = []
    for _ in range(sampler_cfg.n_chains):
        point = u_map
        for _ in range(100):
            candidate = u_map + 2.0 * (chol @ rng.standard_normal(posterior.space.dim))
            if np.isfinite(posterior(candidate)):
                point = candidate
                break
        inits.append(point)
    return inits, covariance


def _diagnostic_entries(summary):
    entries = []
    for p in summary.parameters:
        entries.append(
            {
                "name": p.name,
                "mean": p.mean,
                "sd": p.sd,
                "rhat": p.rhat,
                "ess": p.ess,
                "rhat_pass": "true" if p.rhat <= summary.rhat_gate else "false",
                "ess_pass": "true" if p.ess >= summary.ess_gate else "false",
            }
        )
    return entries


def cmd_fit(config):
    """Run the full inference and write every report file.

    Files are written before the health verdict is taken, so an unhealthy
    run still leaves a complete report behind.
    """
    constants = config.constants()
    dataset = io.load_dataset(config.dataset_path, config.time_unit, config.level_cutoff)
    posterior = PosteriorDensity(dataset, spec=config.prior, constants=constants)

    sampler_cfg = config.sampler
    if sampler_cfg.initial_proposal_scales is None:
        sampler_cfg = replace(
            sampler_cfg, initial_proposal_scales=posterior.prior_proposal_scales()
        )

    inits = None
    initial_covariance = None
    if config.warm_start:
        inits, initial_covariance = _warm_start(posterior, sampler_cfg, config)
    traces = run_chains(
        posterior,
        sampler_cfg,
        inits=inits,
        init_sampler=posterior.draw_unconstrained,
        constrain=posterior.space.constrain_array,
        initial_covariance=initial_covariance,
        extra_moves=(posterior.flow_ridge_move(), posterior.start_ridge_move()),
    )

    space = posterior.space
    summary = build_posterior_summary(
        traces,
        space,
        dataset=dataset,
        constants=constants,
        mae_draws=config.mae_draws,
        rhat_gate=config.rhat_gate,
        ess_gate=config.ess_gate,
    )
    table = discrepancy_vs_residuals(
        traces,
        dataset,
        space,
        n_posterior_draws=config.discrepancy_draws,
        constants=constants,
    )
    curves = _posterior_curves(traces, dataset, space, config.trajectory_draws, constants)

    os.makedirs(config.out_dir, exist_ok=True)
    io.write_samples(_out(config, "samples.csv"), traces, space.names)
    io.write_summary(_out(config, "summary.txt"), summary)
    io.write_diagnostics_table(_out(config, "diagnostics.csv"), _diagnostic_entries(summary))
    rows = []
    for exp in dataset.experiments:
        for draw, (grid, levels) in enumerate(curves[exp.id]):
            rows.extend((exp.id, draw, t, lv) for t, lv in zip(grid, levels))
    io.write_trajectory_samples(_out(config, "trajectories.csv"), rows)
    io.write_discrepancy_table(_out(config, "discrepancy.csv"), table)
    io.write_residual_bins(_out(config, "residual_bins.csv"), table)

    if config.figures:
        figures.plot_trajectories(_out(config, "trajectories.png"), dataset, curves)
        figures.plot_discrepancy(_out(config, "discrepancy.png"), table)
        figures.plot_traces(_out(config, "traces.png"), traces, space.names)
        pooled = pooled_constrained(traces)
        pid = space.pollution_id
        h0_col = pooled[:, space.index(f"{pid}_h0")]
        figures.plot_reconstruction(
            _out(config, "reconstruction.png"),
            pooled[:, space.index(f"{pid}_t0")],
            h0_col,
            interval=credible_interval(h0_col, 0.90),
        )

    result = FitResult(
        config=config,
        dataset=dataset,
        posterior=posterior,
        traces=traces,
        summary=summary,
        table=table,
    )
    p = summary.parameter(f"{space.pollution_id}_h0")
    print(
        f"fit: {summary.n_chains} chains x {summary.n_iterations} iterations "
        f"(burn-in {summary.n_burn_in}), mean acceptance {summary.acceptance_rate:.3f}"
    )
    print(
        f"{p.name}: mean={p.mean:.3f} sd={p.sd:.3f} "
        f"ci90=[{p.ci90[0]:.3f}, {p.ci90[1]:.3f}]"
    )
    if summary.healthy:
        print(f"diagnostics: healthy (rhat <= {summary.rhat_gate}, ess >= {summary.ess_gate:g})")
    else:
        for failure in summary.gate_failures:
            print(f"gate failure: {failure}")
    print(f"report written to {config.out_dir}")
    return result


# ---------------------------------------------------------------------------
# reconstruct


def cmd_reconstruct(config, samples_path):
    """Summarize the reconstructed drainage start (t0, h0) from a samples file."""
    samples = io.load_samples(samples_path)
    dataset = None
    try:
        dataset = io.load_dataset(config.dataset_path, config.time_unit, config.level_cutoff)
    except (OSError, io.DatasetFormatError):
        pass

    if dataset is not None:
        pid = dataset.pollution_experiment.id
    elif "pollution_t0" in samples.names:
        pid = "pollution"
    else:
        raise io.DatasetFormatError(
            "cannot locate pollution parameters: no dataset available and no "
            "'pollution_t0' column in the samples file"
        )
    try:
        t0 = samples.parameter(f"{pid}_t0").ravel()
        h0 = samples.parameter(f"{pid}_h0").ravel()
    except io.DatasetFormatError:
        raise io.DatasetFormatError(
            f"samples file {samples_path} is missing pollution parameters "
            f"{pid}_t0/{pid}_h0"
        ) from None

    def _stats(draws):
        mean = float(draws.mean())
        sd = float(draws.std(ddof=1)) if draws.size > 1 else 0.0
        return mean, sd, credible_interval(draws, 0.90), credible_interval(draws, 0.95)

    t0_mean, t0_sd, t0_ci90, t0_ci95 = _stats(t0)
    h0_mean, h0_sd, h0_ci90, h0_ci95 = _stats(h0)
    try:
        corr = posterior_correlation(t0, h0)
    except DiagnosticError:
        corr = float("nan")
        print(
            "warning: correlation between start time and level is undefined "
            "(degenerate draws)",
            file=sys.stderr,
        )
    if h0.size < 2:
        print("warning: single posterior draw; intervals have zero width", file=sys.stderr)

    items = [
        ("pollution_id", pid),
        ("n_draws", int(h0.size)),
        ("t0.mean", t0_mean),
        ("t0.sd", t0_sd),
        ("t0.ci90_low", t0_ci90[0]),
        ("t0.ci90_high", t0_ci90[1]),
        ("t0.ci95_low", t0_ci95[0]),
        ("t0.ci95_high", t0_ci95[1]),
        ("h0.mean", h0_mean),
        ("h0.sd", h0_sd),
        ("h0.ci90_low", h0_ci90[0]),
        ("h0.ci90_high", h0_ci90[1]),
        ("h0.ci95_low", h0_ci95[0]),
        ("h0.ci95_high", h0_ci95[1]),
        ("correlation_t0_h0", corr),
    ]

    held = None
    if dataset is not None:
        exp = dataset.pollution_experiment
        if exp.held_out_times.size:
            held = (float(exp.held_out_times[0]), float(exp.held_out_levels[0]))
    if held is not None:
        true_t0, true_h0 = held
        inside = h0_ci90[0] <= true_h0 <= h0_ci90[1]
        items += [
            ("heldout.t0", true_t0),
            ("heldout.h0", true_h0),
            ("heldout.h0_abs_error", abs(h0_mean - true_h0)),
            ("heldout.h0_in_ci90", inside),
        ]

    os.makedirs(config.out_dir, exist_ok=True)
    io.write_key_value(_out(config, "reconstruction.txt"), items)

    print(f"reconstruction of {pid!r} from {h0.size} draws:")
    print(f"  start time  t0: mean={t0_mean:.3f} s, 90% CI [{t0_ci90[0]:.3f}, {t0_ci90[1]:.3f}]")
    print(f"  start level h0: mean={h0_mean:.3f} cm, 90% CI [{h0_ci90[0]:.3f}, {h0_ci90[1]:.3f}]")
    print(f"  correlation(t0, h0) = {corr:.3f}")
    if held is not None:
        verdict = "inside" if items[-1][1] else "OUTSIDE"
        print(
            f"  held-out truth h0={held[1]:g} cm is {verdict} the 90% CI "
            f"(|error| = {abs(h0_mean - held[1]):.3f} cm)"
        )
    print(f"report written to {_out(config, 'reconstruction.txt')}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# diagnose


def cmd_diagnose(samples_path, rhat_gate=1.05, ess_gate=400.0, out_dir="out"):
    """Convergence report for an existing samples file."""
    samples = io.load_samples(samples_path)
    os.makedirs(out_dir, exist_ok=True)
    out_path = os.path.join(out_dir, "diagnostics.csv")

    entries = []
    if samples.n_chains < 2:
        for j, name in enumerate(samples.names):
            col = samples.values[:, :, j]
            entries.append(
                {
                    "name": name,
                    "mean": float(col.mean()),
                    "sd": float(col.std(ddof=1)) if col.size > 1 else 0.0,
                    "rhat": float("nan"),
                    "ess": float("nan"),
                    "rhat_pass": "unavailable",
                    "ess_pass": "unavailable",
                }
            )
        io.write_diagnostics_table(out_path, entries)
        print(
            f"diagnostics unavailable: convergence checks need at least 2 chains, "
            f"got {samples.n_chains}"
        )
        print(f"report written to {out_path}")
        return EXIT_UNHEALTHY

    failures = 0
    for j, name in enumerate(samples.names):
        mat = samples.values[:, :, j]
        try:
            rhat = split_rhat(mat)
        except DiagnosticError:
            rhat = float("nan")
        try:
            ess = effective_sample_size(mat)
        except DiagnosticError:
            ess = float("nan")
        rhat_ok = rhat <= rhat_gate
        ess_ok = ess >= ess_gate
        failures += (not rhat_ok) + (not ess_ok)
        entries.append(
            {
                "name": name,
                "mean": float(mat.mean()),
                "sd": float(mat.std(ddof=1)),
                "rhat": rhat,
                "ess": ess,
                "rhat_pass": "true" if rhat_ok else "false",
                "ess_pass": "true" if ess_ok else "false",
            }
        )
        marks = ("" if rhat_ok else " RHAT-FAIL") + ("" if ess_ok else " ESS-FAIL")
        print(f"{name}: rhat={rhat:.4f} ess={ess:.1f}{marks}")

    io.write_diagnostics_table(out_path, entries)
    healthy = failures == 0
    print(
        f"{samples.n_chains} chains x {samples.n_draws} draws: "
        + ("all gates passed" if healthy else f"{failures} gate failures")
        + f" (rhat <= {rhat_gate}, ess >= {ess_gate:g})"
    )
    print(f"report written to {out_path}")
    return EXIT_OK if healthy else EXIT_UNHEALTHY


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="drainback",
        description=(
            "Bayesian reconstruction of a tank's initial liquid level from "
            "drainage observations."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def _common(p):
        p.add_argument("--config", help="JSON run configuration file")
        p.add_argument("--seed", type=int, help="override the configured random seed")
        p.add_argument("--out-dir", help="override the configured output directory")

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset from a ground truth")
    _common(p_sim)

    p_fit = sub.add_parser("fit", help="run MCMC inference and write all report files")
    _common(p_fit)
    p_fit.add_argument("--dataset", help="override the configured dataset path")
    p_fit.add_argument(
        "--no-figures", action="store_true", help="skip figure rendering"
    )

    p_rec = sub.add_parser("reconstruct", help="summarize the reconstructed (t0, h0)")
    _common(p_rec)
    p_rec.add_argument("--samples", help="samples file (default: <out-dir>/samples.csv)")

    p_diag = sub.add_parser("diagnose", help="convergence gates for a samples file")
    _common(p_diag)
    p_diag.add_argument("--samples", help="samples file (default: <out-dir>/samples.csv)")
    p_diag.add_argument("--rhat-gate", type=float, help="split R-hat threshold")
    p_diag.add_argument("--ess-gate", type=float, help="effective sample size threshold")

    return parser


def _resolve_config(args, required=False):
    if args.config is not None:
        config = io.load_config(args.config)
    else:
        if required:
            raise io.ConfigError(f"the {args.command} command needs --config")
        config = io.RunConfig()
    if args.seed is not None:
        config = replace(
            config, seed=args.seed, sampler=replace(config.sampler, seed=args.seed)
        )
    if args.out_dir is not None:
        config = replace(config, out_dir=args.out_dir)
    return config


def _dispatch(args):
    if args.command == "simulate":
        return cmd_simulate(_resolve_config(args, required=True))
    if args.command == "fit":
        config = _resolve_config(args, required=args.dataset is None)
        if args.dataset is not None:
            config = replace(config, dataset=args.dataset)
        if args.no_figures:
            config = replace(config, figures=False)
        return cmd_fit(config).exit_code
    if args.command == "reconstruct":
        config = _resolve_config(args)
        samples = args.samples or _out(config, "samples.csv")
        return cmd_reconstruct(config, samples)
    if args.command == "diagnose":
        config = _resolve_config(args)
        samples = args.samples or _out(config, "samples.csv")
        rhat_gate = args.rhat_gate if args.rhat_gate is not None else config.rhat_gate
        ess_gate = args.ess_gate if args.ess_gate is not None else config.ess_gate
        return cmd_diagnose(samples, rhat_gate, ess_gate, config.out_dir)
    raise ValueError(f"unknown command {args.command!r}")


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which this tool reserves for
        # health-gate warnings; remap while keeping --help's clean exit.
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        return _dispatch(args)
    except (
        io.ConfigError,
        io.DatasetFormatError,
        InitializationError,
        SolverError,
        DiagnosticError,
        OSError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
