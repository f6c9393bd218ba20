"""File formats and run configuration.

Datasets, posterior samples and report tables are delimited text with fixed
headers; summary-style reports are key=value lines.  Floats are written with
``repr`` so regenerated files are byte-identical under a fixed seed and
values survive a round trip exactly.  The run configuration is a single JSON
file shared by all subcommands.
"""

import csv
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .forward import PhysicalConstants
from .model import (
    CALIBRATION,
    KINDS,
    POLLUTION,
    BetaPrior,
    Dataset,
    DiscrepancyCoefficients,
    Experiment,
    ExponentialPrior,
    GaussianPrior,
    InitialCondition,
    LaplacePrior,
    ObservationDesign,
    ParameterVector,
    PriorSpec,
)
from .sampler import SamplerConfig

__all__ = [
    "DatasetFormatError",
    "ConfigError",
    "DATASET_HEADER",
    "load_dataset",
    "write_dataset",
    "write_samples",
    "SampleFile",
    "load_samples",
    "write_key_value",
    "write_summary",
    "write_diagnostics_table",
    "write_trajectory_samples",
    "write_discrepancy_table",
    "write_residual_bins",
    "SimulateScenario",
    "RunConfig",
    "config_from_dict",
    "load_config",
]


class DatasetFormatError(ValueError):
    """A data or samples file does not parse or violates its contract."""


class ConfigError(ValueError):
    """The run configuration is malformed."""


DATASET_HEADER = ("experiment_id", "kind", "t", "level", "held_out")

_TRUE = {"1", "true"}
_FALSE = {"0", "false"}


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _parse_float(text, path, line_no, what):
    try:
        return float(text)
    except ValueError:
        raise DatasetFormatError(f"{path}:{line_no}: bad {what} value {text!r}") from None


def load_dataset(path, time_unit="s", level_cutoff=0.0):
    """Read a dataset file into internal units (seconds, centimeters).

    Columns: experiment_id, kind, t, level, held_out.  ``time_unit``
    declares the file's time column ("s" or "min"; minutes convert exactly
    by a factor of 60).  Calibration rows with level at or below
    ``level_cutoff`` are dropped; the pollution observation is exempt since
    it is the inference target.  Held-out rows load but never enter the
    likelihood.
    """
    if time_unit not in ("s", "min"):
        raise DatasetFormatError(f"unknown time unit {time_unit!r} (use 's' or 'min')")
    factor = 60.0 if time_unit == "min" else 1.0

    order = []
    rows = {}
    seen_times = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != DATASET_HEADER:
            raise DatasetFormatError(
                f"{path}:1: expected header {','.join(DATASET_HEADER)}, got {','.join(header)}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise DatasetFormatError(f"{path}:{line_no}: expected 5 fields, got {len(row)}")
            exp_id, kind, t_text, level_text, held_text = (f.strip() for f in row)
            if kind not in KINDS:
                raise DatasetFormatError(f"{path}:{line_no}: unknown kind {kind!r}")
            t = _parse_float(t_text, path, line_no, "time") * factor
            level = _parse_float(level_text, path, line_no, "level")
            held_lower = held_text.lower()
            if held_lower in _TRUE:
                held = True
            elif held_lower in _FALSE:
                held = False
            else:
                raise DatasetFormatError(
                    f"{path}:{line_no}: held_out must be 0/1/true/false, got {held_text!r}"
                )
            if exp_id not in rows:
                order.append(exp_id)
                rows[exp_id] = {"kind": kind, "obs": [], "held": []}
                seen_times[exp_id] = {}
            elif rows[exp_id]["kind"] != kind:
                raise DatasetFormatError(
                    f"{path}:{line_no}: experiment {exp_id!r} changes kind"
                )
            if t in seen_times[exp_id]:
                raise DatasetFormatError(
                    f"{path}:{line_no}: duplicate time {t!r} for experiment {exp_id!r} "
                    f"(first at line {seen_times[exp_id][t]})"
                )
            seen_times[exp_id][t] = line_no
            if held:
                rows[exp_id]["held"].append((t, level))
            else:
                rows[exp_id]["obs"].append((t, level, line_no))

    experiments = []
    for exp_id in order:
        entry = rows[exp_id]
        obs = entry["obs"]
        if entry["kind"] == POLLUTION and len(obs) > 1:
            raise DatasetFormatError(
                f"{path}: pollution experiment {exp_id!r} has {len(obs)} observations, "
                "expected exactly one"
            )
        if entry["kind"] == CALIBRATION:
            obs = [o for o in obs if o[1] > level_cutoff]
        if not obs:
            raise DatasetFormatError(
                f"{path}: experiment {exp_id!r} has no usable observations"
            )
        obs.sort(key=lambda o: o[0])
        held = sorted(entry["held"])
        try:
            experiments.append(
                Experiment(
                    id=exp_id,
                    kind=entry["kind"],
                    times=np.array([o[0] for o in obs]),
                    levels=np.array([o[1] for o in obs]),
                    held_out_times=tuple(h[0] for h in held),
                    held_out_levels=tuple(h[1] for h in held),
                    level_cutoff=level_cutoff if entry["kind"] == CALIBRATION else 0.0,
                )
            )
        except ValueError as exc:
            raise DatasetFormatError(f"{path}: {exc}") from exc

    dataset = Dataset(tuple(experiments))
    if dataset.pollution_experiment is None:
        raise DatasetFormatError(f"{path}: dataset has no pollution experiment")
    return dataset


def write_dataset(path, dataset, time_unit="s"):
    """Inverse of :func:`load_dataset` (always writes all held-out rows)."""
    factor = 60.0 if time_unit == "min" else 1.0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DATASET_HEADER)
        for exp in dataset.experiments:
            for t, level in zip(exp.times, exp.levels):
                writer.writerow([exp.id, exp.kind, _fmt(t / factor), _fmt(level), "0"])
            for t, level in zip(exp.held_out_times, exp.held_out_levels):
                writer.writerow([exp.id, exp.kind, _fmt(t / factor), _fmt(level), "1"])


def write_samples(path, traces, names):
    """Post-burn-in draws of all chains, one row per draw.

    ``iteration`` is the absolute iteration index within its chain, so the
    burn-in length is recoverable from the file.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["chain", "iteration", "log_posterior", *names])
        for trace in traces:
            draws = trace.post_constrained
            log_posts = trace.post_log_posterior
            for k in range(draws.shape[0]):
                writer.writerow(
                    [
                        trace.chain_id,
                        trace.n_burn_in + k,
                        _fmt(log_posts[k]),
                        *(_fmt(v) for v in draws[k]),
                    ]
                )


@dataclass
class SampleFile:
    """Loaded posterior draws: (chains, draws) per scalar parameter."""

    names: tuple
    chain_ids: tuple
    iterations: np.ndarray
    log_posterior: np.ndarray
    values: np.ndarray

    @property
    def n_chains(self):
        return self.values.shape[0]

    @property
    def n_draws(self):
        return self.values.shape[1]

    def parameter(self, name):
        try:
            j = self.names.index(name)
        except ValueError:
            raise DatasetFormatError(f"samples carry no parameter {name!r}") from None
        return self.values[:, :, j]


def load_samples(path):
    """Read a samples file back into per-chain arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty samples file") from None
        header = [h.strip() for h in header]
        if header[:3] != ["chain", "iteration", "log_posterior"] or len(header) < 4:
            raise DatasetFormatError(
                f"{path}:1: expected header chain,iteration,log_posterior,<parameters>"
            )
        names = tuple(header[3:])
        chains = {}
        chain_order = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetFormatError(
                    f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                chain = int(row[0])
                iteration = int(row[1])
            except ValueError:
                raise DatasetFormatError(
                    f"{path}:{line_no}: bad chain/iteration {row[0]!r}/{row[1]!r}"
                ) from None
            values = [_parse_float(v, path, line_no, "sample") for v in row[2:]]
            if chain not in chains:
                chains[chain] = []
                chain_order.append(chain)
            chains[chain].append((iteration, values))
    if not chains:
        raise DatasetFormatError(f"{path}: samples file has no draws")
    lengths = {len(v) for v in chains.values()}
    if len(lengths) != 1:
        raise DatasetFormatError(f"{path}: chains have unequal draw counts {sorted(lengths)}")
    iterations = np.array([[it for it, _ in chains[c]] for c in chain_order], dtype=int)
    data = np.array([[v for _, v in chains[c]] for c in chain_order])
    return SampleFile(
        names=names,
        chain_ids=tuple(chain_order),
        iterations=iterations,
        log_posterior=data[:, :, 0],
        values=data[:, :, 1:],
    )


def write_key_value(path, items):
    """Write an ordered mapping as key=value lines."""
    with open(path, "w") as fh:
        for key, value in items:
            fh.write(f"{key}={_fmt(value)}\n")


def summary_items(summary):
    """Flatten a PosteriorSummary into ordered key=value pairs."""
    items = [
        ("chains", summary.n_chains),
        ("iterations", summary.n_iterations),
        ("burn_in", summary.n_burn_in),
        ("acceptance_rate", summary.acceptance_rate),
        ("rhat_gate", summary.rhat_gate),
        ("ess_gate", summary.ess_gate),
        ("healthy", summary.healthy),
        ("gate_failures", "; ".join(summary.gate_failures)),
    ]
    for p in summary.parameters:
        items += [
            (f"param.{p.name}.mean", p.mean),
            (f"param.{p.name}.sd", p.sd),
            (f"param.{p.name}.ci90_low", p.ci90[0]),
            (f"param.{p.name}.ci90_high", p.ci90[1]),
            (f"param.{p.name}.ci95_low", p.ci95[0]),
            (f"param.{p.name}.ci95_high", p.ci95[1]),
            (f"param.{p.name}.rhat", p.rhat),
            (f"param.{p.name}.ess", p.ess),
        ]
    for exp_id, value in summary.mae.items():
        items.append((f"mae.{exp_id}", value))
    names = summary.names
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            items.append(
                (f"correlation.{names[i]}.{names[j]}", float(summary.correlation[i, j]))
            )
    return items


def write_summary(path, summary):
    """Machine-parseable fit report."""
    write_key_value(path, summary_items(summary))


def write_diagnostics_table(path, entries):
    """Per-parameter diagnostics table.

    ``entries`` rows carry name, mean, sd, rhat, ess plus pass verdicts
    ("true"/"false"/"unavailable").
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["parameter", "mean", "sd", "rhat", "ess", "rhat_pass", "ess_pass"])
        for e in entries:
            writer.writerow(
                [
                    e["name"],
                    _fmt(e["mean"]),
                    _fmt(e["sd"]),
                    _fmt(e["rhat"]),
                    _fmt(e["ess"]),
                    e["rhat_pass"],
                    e["ess_pass"],
                ]
            )


def write_trajectory_samples(path, rows):
    """Posterior-predictive level curves: experiment_id, draw, t, level."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["experiment_id", "draw", "t", "level"])
        for exp_id, draw, t, level in rows:
            writer.writerow([exp_id, draw, _fmt(t), _fmt(level)])


def write_discrepancy_table(path, table):
    """Posterior level-correction band on the level grid."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["level", "delta_mean", "delta_low", "delta_high"])
        for row in zip(table.level_grid, table.delta_mean, table.delta_low, table.delta_high):
            writer.writerow([_fmt(v) for v in row])


def write_residual_bins(path, table):
    """Binned calibration residuals against the physics-only posterior mean."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["level_bin_center", "mean_residual", "count"])
        for center, res, count in zip(
            table.bin_centers, table.bin_mean_residual, table.bin_count
        ):
            writer.writerow([_fmt(center), _fmt(res), _fmt(int(count))])


# ---------------------------------------------------------------------------
# Run configuration


@dataclass(frozen=True)
class SimulateScenario:
    """Ground truth and observation designs for synthetic data generation."""

    truth: ParameterVector
    designs: tuple


@dataclass(frozen=True)
class RunConfig:
    """Everything a subcommand needs, parsed from one JSON file."""

    out_dir: str = "out"
    seed: int = 0
    dataset: str | None = None
    time_unit: str = "s"
    level_cutoff: float = 0.0
    g: float = 981.0
    prior: PriorSpec = PriorSpec()
    sampler: SamplerConfig = SamplerConfig()
    simulate: SimulateScenario | None = None
    figures: bool = True
    warm_start: bool = True
    map_max_evals: int = 6000
    trajectory_draws: int = 30
    mae_draws: int = 100
    discrepancy_draws: int = 50
    rhat_gate: float = 1.05
    ess_gate: float = 400.0

    @property
    def dataset_path(self):
        return self.dataset if self.dataset is not None else os.path.join(self.out_dir, "dataset.csv")

    def constants(self):
        return PhysicalConstants(self.g)


_PRIOR_FAMILIES = ("gaussian", "beta", "exponential", "laplace")


def _parse_prior(entry, where):
    if not isinstance(entry, dict) or "family" not in entry:
        raise ConfigError(f"{where}: prior entries need a 'family' key")
    family = entry["family"]
    try:
        if family == "gaussian":
            return GaussianPrior(float(entry["mean"]), float(entry["sd"]))
        if family == "beta":
            return BetaPrior(float(entry["alpha"]), float(entry["beta"]))
        if family == "exponential":
            if "rate" in entry:
                return ExponentialPrior(float(entry["rate"]))
            return ExponentialPrior(1.0 / float(entry["scale"]))
        if family == "laplace":
            return LaplacePrior(float(entry["loc"]), float(entry["scale"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: bad {family} hyperparameters: {exc}") from exc
    raise ConfigError(f"{where}: unknown family {family!r} (use one of {_PRIOR_FAMILIES})")


def _parse_prior_spec(raw, degree):
    spec = PriorSpec(a=(LaplacePrior(0.0, 0.25),) * (degree + 1))
    if raw is None:
        return spec
    if not isinstance(raw, dict):
        raise ConfigError("'prior' must be an object")
    kwargs = {}
    for key, entry in raw.items():
        if key == "a":
            kwargs["a"] = tuple(
                _parse_prior(e, f"prior.a[{i}]") for i, e in enumerate(entry)
            )
        elif key == "calibration_h0_mean":
            kwargs["calibration_h0_mean"] = float(entry)
        elif key in ("h_max", "x_t", "x_b", "r", "c", "sigma", "pollution_t0", "calibration_t0"):
            kwargs[key] = _parse_prior(entry, f"prior.{key}")
        else:
            raise ConfigError(f"unknown prior key {key!r}")
    spec = replace(spec, **kwargs)
    if spec.degree != degree and "a" in kwargs:
        raise ConfigError(
            f"prior.a defines degree {spec.degree} but bernstein_degree={degree}"
        )
    return spec


def _parse_times(entry, where):
    if isinstance(entry, dict):
        try:
            start = float(entry["start"])
            stop = float(entry["stop"])
            step = float(entry["step"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: times need start/stop/step: {exc}") from exc
        if step <= 0:
            raise ConfigError(f"{where}: step must be positive")
        return tuple(np.arange(start, stop + 0.5 * step, step))
    if isinstance(entry, (list, tuple)):
        return tuple(float(t) for t in entry)
    raise ConfigError(f"{where}: times must be a list or a start/stop/step object")


def _parse_scenario(raw):
    if raw is None:
        return None
    try:
        truth_raw = raw["truth"]
        designs_raw = raw["designs"]
        pollution = truth_raw["pollution"]
        calibration = truth_raw.get("calibration", [])
        truth = ParameterVector(
            h_max=float(truth_raw["h_max"]),
            x_t=float(truth_raw["x_t"]),
            x_b=float(truth_raw["x_b"]),
            c=float(truth_raw["c"]),
            r=float(truth_raw["r"]),
            a=DiscrepancyCoefficients(tuple(float(v) for v in truth_raw["a"])),
            sigma=float(truth_raw["sigma"]),
            pollution_ic=InitialCondition(float(pollution["t0"]), float(pollution["h0"])),
            calib_ic=tuple(
                InitialCondition(float(ic["t0"]), float(ic["h0"])) for ic in calibration
            ),
        )
        designs = tuple(
            ObservationDesign(
                experiment_id=str(d["id"]),
                kind=str(d["kind"]),
                times=_parse_times(d["times"], f"simulate.designs[{i}]"),
                record_initial=bool(d.get("record_initial", False)),
            )
            for i, d in enumerate(designs_raw)
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad 'simulate' section: {exc}") from exc
    return SimulateScenario(truth=truth, designs=designs)


def config_from_dict(raw, base_dir="."):
    """Build a RunConfig from a parsed JSON object.

    Relative paths resolve against ``base_dir`` (the config file's
    directory).  Unknown top-level keys are rejected to catch typos.
    """
    known = {
        "out_dir",
        "seed",
        "dataset",
        "time_unit",
        "level_cutoff",
        "g",
        "bernstein_degree",
        "prior",
        "sampler",
        "simulate",
        "figures",
        "warm_start",
        "map_max_evals",
        "trajectory_draws",
        "mae_draws",
        "discrepancy_draws",
        "rhat_gate",
        "ess_gate",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    degree = int(raw.get("bernstein_degree", 2))
    if degree < 0:
        raise ConfigError("bernstein_degree must be >= 0")
    prior = _parse_prior_spec(raw.get("prior"), degree)

    sampler_raw = raw.get("sampler", {})
    if not isinstance(sampler_raw, dict):
        raise ConfigError("'sampler' must be an object")
    try:
        sampler = SamplerConfig(**sampler_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad 'sampler' section: {exc}") from exc
    if "seed" not in sampler_raw:
        sampler = replace(sampler, seed=int(raw.get("seed", 0)))

    def _resolve(p):
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.join(base_dir, p)

    time_unit = raw.get("time_unit", "s")
    if time_unit not in ("s", "min"):
        raise ConfigError(f"time_unit must be 's' or 'min', got {time_unit!r}")

    return RunConfig(
        out_dir=_resolve(raw.get("out_dir", "out")),
        seed=int(raw.get("seed", 0)),
        dataset=_resolve(raw.get("dataset")),
        time_unit=time_unit,
        level_cutoff=float(raw.get("level_cutoff", 0.0)),
        g=float(raw.get("g", 981.0)),
        prior=prior,
        sampler=sampler,
        simulate=_parse_scenario(raw.get("simulate")),
        figures=bool(raw.get("figures", True)),
        warm_start=bool(raw.get("warm_start", True)),
        map_max_evals=int(raw.get("map_max_evals", 6000)),
        trajectory_draws=int(raw.get("trajectory_draws", 30)),
        mae_draws=int(raw.get("mae_draws", 100)),
        discrepancy_draws=int(raw.get("discrepancy_draws", 50)),
        rhat_gate=float(raw.get("rhat_gate", 1.05)),
        ess_gate=float(raw.get("ess_gate", 400.0)),
    )


def load_config(path):
    """Parse a JSON config file into a RunConfig."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))
