"""Convergence diagnostics and posterior summaries.

Chain-level statistics (split R-hat, effective sample size) operate on a
matrix of post-burn-in draws with one row per chain, so they are usable both
on real traces and on synthetic chains in tests.  Summary helpers bundle the
per-parameter statistics, pairwise correlations, trajectory fit error and
the discrepancy-versus-residual comparison used in reports.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft
from scipy.special import ndtri
from scipy.stats import rankdata

from .forward import PhysicalConstants
from .model import CALIBRATION, POLLUTION, predicted_level_series

__all__ = [
    "DiagnosticError",
    "split_rhat",
    "gelman_rubin",
    "effective_sample_size",
    "credible_interval",
    "posterior_correlation",
    "pooled_constrained",
    "trajectory_mae",
    "DiscrepancyResidualTable",
    "discrepancy_vs_residuals",
    "ParameterSummary",
    "PosteriorSummary",
    "build_posterior_summary",
]


class DiagnosticError(ValueError):
    """A diagnostic cannot be computed from the given draws."""


def _chain_matrix(chains, min_draws=4):
    mat = np.asarray(chains, dtype=float)
    if mat.ndim != 2:
        raise DiagnosticError(
            f"expected per-chain rows of draws (2-D), got shape {mat.shape}"
        )
    if mat.shape[0] < 2:
        raise DiagnosticError(f"need at least 2 chains, got {mat.shape[0]}")
    if mat.shape[1] < min_draws:
        raise DiagnosticError(
            f"need at least {min_draws} draws per chain, got {mat.shape[1]}"
        )
    return mat


def _psrf(mat):
    # Potential scale reduction factor on a (chains, draws) matrix.
    m, n = mat.shape
    within = float(np.mean(np.var(mat, axis=1, ddof=1)))
    between = n * float(np.var(np.mean(mat, axis=1), ddof=1))
    if within == 0.0:
        return 1.0 if between == 0.0 else math.inf
    var_plus = (n - 1) / n * within + between / n
    return math.sqrt(var_plus / within)


def gelman_rubin(chains):
    """Classic potential scale reduction factor on raw (unsplit) chains."""
    return _psrf(_chain_matrix(chains, min_draws=2))


def split_rhat(chains):
    """Rank-normalized split R-hat; approaches 1 at convergence.

    Each chain is split in half, the pooled draws are rank-normalized
    through the standard normal quantile function, and the potential scale
    reduction factor is computed on the result.  Monotone transformations of
    the draws leave the value unchanged.
    """
    mat = _chain_matrix(chains, min_draws=4)
    if float(np.var(mat)) == 0.0:
        raise DiagnosticError("zero variance draws have no rank structure")
    half = mat.shape[1] // 2
    split = np.vstack([mat[:, :half], mat[:, half : 2 * half]])
    ranks = rankdata(split, method="average", axis=None).reshape(split.shape)
    z = ndtri((ranks - 0.375) / (split.size + 0.25))
    return _psrf(z)


def _autocovariance(row):
    # Biased (1/n) autocovariance via FFT.
    n = row.size
    centered = row - row.mean()
    nfft = next_fast_len(2 * n)
    spectrum = rfft(centered, nfft)
    acov = irfft(spectrum * np.conj(spectrum), nfft)[:n]
    return acov / n


def effective_sample_size(chains):
    """Pooled effective sample size from chain autocorrelations.

    Uses the multi-chain autocovariance estimate with Geyer's initial
    monotone positive sequence truncation.  Antithetic chains can be
    super-efficient (ESS above the draw count); reporting is capped at
    ``total * log10(total)``.
    """
    mat = _chain_matrix(chains, min_draws=4)
    m, n = mat.shape
    total = m * n
    within = float(np.mean(np.var(mat, axis=1, ddof=1)))
    between = n * float(np.var(np.mean(mat, axis=1), ddof=1))
    var_plus = (n - 1) / n * within + between / n
    if var_plus == 0.0:
        raise DiagnosticError("zero variance draws have no effective sample size")

    acov = np.vstack([_autocovariance(row) for row in mat])
    s = acov.mean(axis=0) * n / (n - 1)
    rho = 1.0 - (within - s) / var_plus

    total_pairs = 0.0
    prev = math.inf
    for k in range(n // 2):
        pair = min(rho[2 * k] + rho[2 * k + 1], prev)
        if pair <= 0.0:
            break
        total_pairs += pair
        prev = pair
    tau = -1.0 + 2.0 * total_pairs
    cap = total * math.log10(max(total, 10))
    if tau <= 0.0:
        return cap
    return float(min(total / tau, cap))


def credible_interval(samples, mass):
    """Equal-tailed interval holding the given posterior mass.

    Quantiles interpolate linearly between order statistics with the
    midpoint plotting convention, so samples 1..100 at mass 0.9 give
    exactly (5.5, 95.5).
    """
    if not 0.0 < mass < 1.0:
        raise ValueError(f"mass must be in (0, 1), got {mass}")
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("no samples")
    tail = (1.0 - mass) / 2.0
    lo, hi = np.quantile(s, [tail, 1.0 - tail], method="hazen")
    return float(lo), float(hi)


def posterior_correlation(x, y):
    """Pearson correlation of two equally long draw sequences."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size or x.size < 2:
        raise DiagnosticError("need two equally long sequences of at least 2 draws")
    if np.var(x) == 0.0 or np.var(y) == 0.0:
        raise DiagnosticError("correlation undefined for zero-variance draws")
    return float(np.corrcoef(x, y)[0, 1])


def pooled_constrained(traces):
    """Post-burn-in constrained draws of all chains stacked into one matrix."""
    return np.vstack([t.post_constrained for t in traces])


def _even_indices(n, k):
    if k >= n:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, k)).astype(int))


def trajectory_mae(
    traces, dataset, space, experiment_id, n_posterior_draws=100, constants=PhysicalConstants()
):
    """Mean absolute deviation between one calibration series and the fit.

    Averages |observed - predicted| over the series, then over
    ``n_posterior_draws`` evenly spaced post-burn-in draws (evenly spaced
    rather than random so the statistic is reproducible from the traces).
    """
    experiment = dataset.experiment(experiment_id)
    if experiment.kind == POLLUTION:
        raise ValueError(
            "the pollution experiment has a single observation; inspect its residual directly"
        )
    pooled = pooled_constrained(traces)
    maes = []
    for i in _even_indices(pooled.shape[0], n_posterior_draws):
        beta = space.unpack(pooled[i])
        means = predicted_level_series(beta, dataset, experiment_id, experiment.times, constants)
        maes.append(float(np.mean(np.abs(experiment.levels - means))))
    return float(np.mean(maes))


@dataclass
class DiscrepancyResidualTable:
    """Posterior discrepancy on a level grid next to binned data residuals.

    ``level_grid`` spans [0, posterior-mean h_max] inclusive.  Residuals are
    observed level minus the posterior-mean physics-only level, binned by
    that model level; empty bins hold nan.
    """

    level_grid: np.ndarray
    delta_mean: np.ndarray
    delta_low: np.ndarray
    delta_high: np.ndarray
    bin_centers: np.ndarray
    bin_mean_residual: np.ndarray
    bin_count: np.ndarray


def discrepancy_vs_residuals(
    traces,
    dataset,
    space,
    n_grid=15,
    n_bins=14,
    n_posterior_draws=50,
    band_mass=0.9,
    constants=PhysicalConstants(),
):
    """Compare the inferred level correction against raw calibration residuals."""
    pooled = pooled_constrained(traces)
    h_ref = float(np.mean(pooled[:, 0]))
    u_grid = np.linspace(0.0, 1.0, n_grid)
    degree = space.degree
    coeff_cols = pooled[:, 5 : 5 + space.n_coefficients]
    delta_draws = np.zeros((pooled.shape[0], n_grid))
    for nu in range(space.n_coefficients):
        basis = math.comb(degree, nu) * u_grid**nu * (1.0 - u_grid) ** (degree - nu)
        delta_draws += np.outer(coeff_cols[:, nu], basis)
    tail = (1.0 - band_mass) / 2.0
    delta_low, delta_high = np.quantile(
        delta_draws, [tail, 1.0 - tail], axis=0, method="hazen"
    )

    residuals = []
    model_levels = []
    draw_idx = _even_indices(pooled.shape[0], n_posterior_draws)
    for experiment in dataset.calibration_experiments:
        level_sum = np.zeros(experiment.times.shape)
        for i in draw_idx:
            beta = space.unpack(pooled[i])
            level_sum += predicted_level_series(
                beta,
                dataset,
                experiment.id,
                experiment.times,
                constants,
                include_discrepancy=False,
            )
        mean_levels = level_sum / draw_idx.size
        residuals.append(experiment.levels - mean_levels)
        model_levels.append(mean_levels)

    edges = np.linspace(0.0, h_ref, n_bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    mean_residual = np.full(n_bins, np.nan)
    counts = np.zeros(n_bins, dtype=int)
    if residuals:
        res = np.concatenate(residuals)
        lev = np.concatenate(model_levels)
        which = np.clip(np.digitize(lev, edges) - 1, 0, n_bins - 1)
        for b in range(n_bins):
            mask = which == b
            counts[b] = int(mask.sum())
            if counts[b]:
                mean_residual[b] = float(res[mask].mean())

    return DiscrepancyResidualTable(
        level_grid=u_grid * h_ref,
        delta_mean=delta_draws.mean(axis=0),
        delta_low=delta_low,
        delta_high=delta_high,
        bin_centers=centers,
        bin_mean_residual=mean_residual,
        bin_count=counts,
    )


@dataclass
class ParameterSummary:
    name: str
    mean: float
    sd: float
    ci90: tuple
    ci95: tuple
    rhat: float
    ess: float


@dataclass
class PosteriorSummary:
    """Per-parameter statistics plus fit-level health information."""

    parameters: list
    names: tuple
    correlation: np.ndarray
    mae: dict
    acceptance_rate: float
    n_chains: int
    n_iterations: int
    n_burn_in: int
    rhat_gate: float
    ess_gate: float
    gate_failures: list

    @property
    def healthy(self):
        return not self.gate_failures

    def parameter(self, name):
        for p in self.parameters:
            if p.name == name:
                return p
        raise ValueError(f"unknown parameter {name!r}")

    def correlation_between(self, name_a, name_b):
        i = self.names.index(name_a)
        j = self.names.index(name_b)
        return float(self.correlation[i, j])


def build_posterior_summary(
    traces,
    space,
    dataset=None,
    constants=PhysicalConstants(),
    mae_draws=100,
    rhat_gate=1.05,
    ess_gate=400.0,
):
    """Summarize traces: moments, intervals, diagnostics, gates, fit error.

    Gate failures (any split R-hat above ``rhat_gate`` or ESS below
    ``ess_gate``) are collected rather than raised so callers can still
    write the full report and signal ill health separately.
    """
    names = space.names
    parameters = []
    gate_failures = []
    for j, name in enumerate(names):
        per_chain = np.vstack([t.post_constrained[:, j] for t in traces])
        pooled = per_chain.ravel()
        # A degenerate trace (single chain, stuck chains) yields nan here,
        # which fails the gates below instead of aborting the report.
        try:
            rhat = split_rhat(per_chain)
        except DiagnosticError:
            rhat = float("nan")
        try:
            ess = effective_sample_size(per_chain)
        except DiagnosticError:
            ess = float("nan")
        parameters.append(
            ParameterSummary(
                name=name,
                mean=float(pooled.mean()),
                sd=float(pooled.std(ddof=1)),
                ci90=credible_interval(pooled, 0.90),
                ci95=credible_interval(pooled, 0.95),
                rhat=rhat,
                ess=ess,
            )
        )
        if not rhat <= rhat_gate:
            gate_failures.append(f"rhat({name})={rhat:.4f} exceeds {rhat_gate}")
        if not ess >= ess_gate:
            gate_failures.append(f"ess({name})={ess:.1f} below {ess_gate:g}")

    pooled_all = pooled_constrained(traces)
    with np.errstate(invalid="ignore", divide="ignore"):
        correlation = np.corrcoef(pooled_all, rowvar=False)

    mae = {}
    if dataset is not None:
        for experiment in dataset.experiments:
            if experiment.kind == CALIBRATION:
                mae[experiment.id] = trajectory_mae(
                    traces, dataset, space, experiment.id, mae_draws, constants
                )

    first = traces[0]
    return PosteriorSummary(
        parameters=parameters,
        names=names,
        correlation=correlation,
        mae=mae,
        acceptance_rate=float(np.mean([t.acceptance_rate for t in traces])),
        n_chains=len(traces),
        n_iterations=first.n_iterations,
        n_burn_in=first.n_burn_in,
        rhat_gate=rhat_gate,
        ess_gate=ess_gate,
        gate_failures=gate_failures,
    )
