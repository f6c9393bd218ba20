"""Joint Bayesian model for drainage inference.

Binds the physics of :mod:`drainback.forward` and the level correction of
:mod:`drainback.discrepancy` into an unnormalized posterior over the full
parameter vector

    beta = (h_max, x_t, x_b, c, r, a_0..a_n, sigma,
            pollution (t0, h0), one (t0, h0) per calibration experiment).

Observed levels are modeled as the corrected model level plus i.i.d. Gaussian
noise of standard deviation ``sigma``.  Two priors are genuinely conditional
and are evaluated with the currently sampled values: the pollution starting
level is uniform on [0, h_max], and each calibration starting level is
Gaussian around a known fill height with standard deviation ``sigma``.

:class:`ParameterSpace` maps parameter vectors to an unconstrained real
vector (log for sigma, logit for c, scaled logit for the pollution level)
so samplers can move freely; the Jacobian correction keeps densities exact.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import betaln, expit, logit

from .discrepancy import DiscrepancyCoefficients, evaluate_discrepancy
from .forward import (
    InitialCondition,
    Orifice,
    PhysicalConstants,
    SolverError,
    TankGeometry,
    simulate_level,
)

_log = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)

POLLUTION = "pollution"
CALIBRATION = "calibration"
KINDS = (POLLUTION, CALIBRATION)

__all__ = [
    "POLLUTION",
    "CALIBRATION",
    "GaussianPrior",
    "BetaPrior",
    "ExponentialPrior",
    "LaplacePrior",
    "PriorSpec",
    "default_prior_spec",
    "ParameterVector",
    "Experiment",
    "Dataset",
    "ObservationDesign",
    "ParameterSpace",
    "log_prior",
    "log_likelihood",
    "log_posterior_unnorm",
    "predicted_observation_mean",
    "predicted_level_series",
    "sample_prior",
    "simulate_dataset",
    "PosteriorDensity",
]


# ---------------------------------------------------------------------------
# Prior building blocks


@dataclass(frozen=True)
class GaussianPrior:
    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError(f"sd must be positive, got {self.sd}")

    def log_pdf(self, x):
        z = (x - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - 0.5 * _LOG_2PI

    def sample(self, rng):
        return self.mean + self.sd * rng.standard_normal()


@dataclass(frozen=True)
class BetaPrior:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("Beta shapes must be positive")

    @property
    def mean(self):
        return self.alpha / (self.alpha + self.beta)

    def log_pdf(self, x):
        if not 0.0 < x < 1.0:
            return -math.inf
        return (
            (self.alpha - 1.0) * math.log(x)
            + (self.beta - 1.0) * math.log1p(-x)
            - betaln(self.alpha, self.beta)
        )

    def sample(self, rng):
        return rng.beta(self.alpha, self.beta)


@dataclass(frozen=True)
class ExponentialPrior:
    """Exponential with the given rate (1/cm); mean is 1/rate."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")

    @property
    def mean(self):
        return 1.0 / self.rate

    def log_pdf(self, x):
        if x < 0.0:
            return -math.inf
        return math.log(self.rate) - self.rate * x

    def sample(self, rng):
        return rng.exponential(1.0 / self.rate)


@dataclass(frozen=True)
class LaplacePrior:
    loc: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def log_pdf(self, x):
        return -math.log(2.0 * self.scale) - abs(x - self.loc) / self.scale

    def sample(self, rng):
        return rng.laplace(self.loc, self.scale)


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of every prior in the model.

    Defaults encode the reference tank: geometry priors centered on measured
    dimensions, a 5 percent relative uncertainty on the orifice radius, a
    Beta(6, 4) discharge coefficient (mean 0.6), an Exponential noise scale
    with mean 0.25 cm, zero-centered Laplace priors on the discrepancy
    coefficients, a diffuse +-5 s start time for the pollution episode, and
    tightly known calibration starts.  ``calibration_h0_mean`` is the fill
    height the calibration runs start from; its spread is the sampled sigma.
    """

    h_max: GaussianPrior = GaussianPrior(14.0, 0.1)
    x_t: GaussianPrior = GaussianPrior(8.7, 0.1)
    x_b: GaussianPrior = GaussianPrior(8.4, 0.1)
    r: GaussianPrior = GaussianPrior(0.12, 0.006)
    c: BetaPrior = BetaPrior(6.0, 4.0)
    sigma: ExponentialPrior = ExponentialPrior(4.0)
    a: tuple = (
        LaplacePrior(0.0, 0.25),
        LaplacePrior(0.0, 0.25),
        LaplacePrior(0.0, 0.25),
    )
    pollution_t0: GaussianPrior = GaussianPrior(0.0, 5.0)
    calibration_t0: GaussianPrior = GaussianPrior(0.0, 0.25)
    calibration_h0_mean: float = 14.0

    @property
    def degree(self):
        return len(self.a) - 1


def default_prior_spec():
    """The full default prior configuration."""
    return PriorSpec()


# ---------------------------------------------------------------------------
# Parameters and data


@dataclass(frozen=True)
class ParameterVector:
    """One point in the inference space.

    Deliberately unvalidated: samplers must be able to represent points
    outside the support, which :func:`log_prior` maps to -inf.  The
    ``geometry``/``orifice`` accessors do validate and are meant to be called
    only for in-support vectors.
    """

    h_max: float
    x_t: float
    x_b: float
    c: float
    r: float
    a: DiscrepancyCoefficients
    sigma: float
    pollution_ic: InitialCondition
    calib_ic: tuple

    def geometry(self):
        return TankGeometry(self.h_max, self.x_t, self.x_b)

    def orifice(self):
        return Orifice(self.r, self.c)


@dataclass(frozen=True, eq=False)
class Experiment:
    """Observed (time, level) records of one drainage episode.

    ``kind`` is pollution (a single post-drainage observation) or calibration
    (a full time series).  Held-out rows are validation data and never enter
    the likelihood.  ``level_cutoff`` records the threshold at or below which
    calibration rows were discarded at ingestion.
    """

    id: str
    kind: str
    times: np.ndarray
    levels: np.ndarray
    held_out_times: np.ndarray = ()
    held_out_levels: np.ndarray = ()
    level_cutoff: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"experiment {self.id!r}: unknown kind {self.kind!r}")
        times = np.asarray(self.times, dtype=float)
        levels = np.asarray(self.levels, dtype=float)
        if times.ndim != 1 or times.shape != levels.shape:
            raise ValueError(f"experiment {self.id!r}: times/levels must be matching 1-D arrays")
        if times.size == 0:
            raise ValueError(f"experiment {self.id!r}: no observations")
        if self.kind == POLLUTION and times.size != 1:
            raise ValueError(
                f"experiment {self.id!r}: a pollution experiment carries exactly one "
                f"observation, got {times.size}"
            )
        if np.any(times < 0):
            raise ValueError(f"experiment {self.id!r}: observation times must be non-negative")
        if np.any(np.diff(times) <= 0):
            raise ValueError(f"experiment {self.id!r}: observation times must be increasing")
        ho_t = np.asarray(self.held_out_times, dtype=float)
        ho_h = np.asarray(self.held_out_levels, dtype=float)
        if ho_t.shape != ho_h.shape:
            raise ValueError(f"experiment {self.id!r}: held-out arrays must match")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "held_out_times", ho_t)
        object.__setattr__(self, "held_out_levels", ho_h)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Pooled experiments; at most one of them the pollution episode."""

    experiments: tuple

    def __post_init__(self):
        experiments = tuple(self.experiments)
        ids = [e.id for e in experiments]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate experiment ids: {ids}")
        n_pollution = sum(1 for e in experiments if e.kind == POLLUTION)
        if n_pollution > 1:
            raise ValueError("at most one pollution experiment is allowed")
        object.__setattr__(self, "experiments", experiments)

    @property
    def pollution_experiment(self):
        for e in self.experiments:
            if e.kind == POLLUTION:
                return e
        return None

    @property
    def calibration_experiments(self):
        return tuple(e for e in self.experiments if e.kind == CALIBRATION)

    def experiment(self, experiment_id):
        for e in self.experiments:
            if e.id == experiment_id:
                return e
        raise ValueError(f"unknown experiment id {experiment_id!r}")


@dataclass(frozen=True)
class ObservationDesign:
    """Observation times (s) of one experiment to synthesize.

    ``record_initial`` stores the true (t0, h0) as a held-out validation row.
    """

    experiment_id: str
    kind: str
    times: tuple
    record_initial: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))


# ---------------------------------------------------------------------------
# Parameter packing and the unconstrained bijection


def _softplus(v):
    return math.log1p(math.exp(-abs(v))) + max(v, 0.0)


def _log_logistic_slope(v):
    # log of s * (1 - s) for s = expit(v), stable for any v.
    return -_softplus(v) - _softplus(-v)


@dataclass(frozen=True)
class ParameterSpace:
    """Canonical flat ordering of a ParameterVector and its unconstrained map.

    Order: h_max, x_t, x_b, c, r, a_0..a_n, sigma, then (t0, h0) for the
    pollution experiment followed by each calibration experiment.  The
    unconstrained bijection is log on sigma, logit on c, a scaled logit
    taking the pollution h0 onto (0, h_max), and the identity elsewhere.
    """

    calibration_ids: tuple
    pollution_id: str = POLLUTION
    degree: int = 2

    @classmethod
    def from_dataset(cls, dataset, degree=2):
        pollution = dataset.pollution_experiment
        if pollution is None:
            raise ValueError("dataset has no pollution experiment")
        return cls(
            calibration_ids=tuple(e.id for e in dataset.calibration_experiments),
            pollution_id=pollution.id,
            degree=degree,
        )

    @property
    def n_coefficients(self):
        return self.degree + 1

    @property
    def _i_sigma(self):
        return 5 + self.n_coefficients

    @property
    def _i_pollution_t0(self):
        return self._i_sigma + 1

    @property
    def _i_pollution_h0(self):
        return self._i_sigma + 2

    @property
    def dim(self):
        return 8 + self.n_coefficients + 2 * len(self.calibration_ids)

    @property
    def names(self):
        base = ["h_max", "x_t", "x_b", "c", "r"]
        base += [f"a{i}" for i in range(self.n_coefficients)]
        base += ["sigma", f"{self.pollution_id}_t0", f"{self.pollution_id}_h0"]
        for cid in self.calibration_ids:
            base += [f"{cid}_t0", f"{cid}_h0"]
        return tuple(base)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise ValueError(f"unknown parameter name {name!r}") from None

    def pack(self, beta):
        """Flatten a ParameterVector into the canonical (constrained) order."""
        if len(beta.a.a) != self.n_coefficients:
            raise ValueError(
                f"expected {self.n_coefficients} discrepancy coefficients, got {len(beta.a.a)}"
            )
        if len(beta.calib_ic) != len(self.calibration_ids):
            raise ValueError(
                f"expected {len(self.calibration_ids)} calibration initial conditions, "
                f"got {len(beta.calib_ic)}"
            )
        vec = [beta.h_max, beta.x_t, beta.x_b, beta.c, beta.r]
        vec += list(beta.a.a)
        vec += [beta.sigma, beta.pollution_ic.t0, beta.pollution_ic.h0]
        for ic in beta.calib_ic:
            vec += [ic.t0, ic.h0]
        return np.asarray(vec, dtype=float)

    def unpack(self, vec):
        """Inverse of :meth:`pack`."""
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.dim,):
            raise ValueError(f"expected a vector of length {self.dim}, got shape {vec.shape}")
        n = self.n_coefficients
        i = self._i_sigma
        calib = []
        for k in range(len(self.calibration_ids)):
            calib.append(InitialCondition(vec[i + 3 + 2 * k], vec[i + 4 + 2 * k]))
        return ParameterVector(
            h_max=float(vec[0]),
            x_t=float(vec[1]),
            x_b=float(vec[2]),
            c=float(vec[3]),
            r=float(vec[4]),
            a=DiscrepancyCoefficients(tuple(vec[5 : 5 + n])),
            sigma=float(vec[i]),
            pollution_ic=InitialCondition(float(vec[i + 1]), float(vec[i + 2])),
            calib_ic=tuple(calib),
        )

    def to_unconstrained(self, beta):
        """Map ``beta`` to an unconstrained vector plus the log Jacobian.

        The returned scalar is log|d constrained / d unconstrained| at this
        point, the term added to the constrained log density to sample on
        the unconstrained space.
        """
        vec = self.pack(beta)
        if not np.all(np.isfinite(vec)):
            raise ValueError("parameter vector has non-finite entries")
        if not beta.sigma > 0:
            raise ValueError(f"sigma must be positive, got {beta.sigma}")
        if not 0.0 < beta.c < 1.0:
            raise ValueError(f"c must be inside (0, 1), got {beta.c}")
        if not 0.0 < beta.pollution_ic.h0 < beta.h_max:
            raise ValueError(
                f"pollution h0 must be inside (0, h_max), got {beta.pollution_ic.h0}"
            )
        u = vec.copy()
        u[self._i_sigma] = math.log(beta.sigma)
        u[3] = logit(beta.c)
        u[self._i_pollution_h0] = logit(beta.pollution_ic.h0 / beta.h_max)
        return u, self.unconstrained_log_jacobian(u)

    def from_unconstrained(self, u):
        """Map any real vector back to a ParameterVector."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            raise ValueError(f"expected a vector of length {self.dim}, got shape {u.shape}")
        if not np.all(np.isfinite(u)):
            raise ValueError("unconstrained vector has non-finite entries")
        vec = u.copy()
        vec[self._i_sigma] = math.exp(u[self._i_sigma])
        vec[3] = expit(u[3])
        vec[self._i_pollution_h0] = u[0] * expit(u[self._i_pollution_h0])
        return self.unpack(vec)

    def unconstrained_log_jacobian(self, u):
        """log|d constrained / d unconstrained| at the unconstrained point ``u``.

        The map is lower triangular (the pollution level depends on h_max,
        which is the identity), so the determinant is the product of the
        diagonal slopes.  Requires h_max > 0; returns -inf otherwise, which
        only arises outside the prior support.
        """
        u = np.asarray(u, dtype=float)
        h_max = u[0]
        if not h_max > 0:
            return -math.inf
        return (
            u[self._i_sigma]
            + _log_logistic_slope(u[3])
            + math.log(h_max)
            + _log_logistic_slope(u[self._i_pollution_h0])
        )

    def constrain_array(self, mat):
        """Vectorized from_unconstrained over the rows of a (draws, dim) array."""
        mat = np.asarray(mat, dtype=float)
        out = mat.copy()
        out[..., self._i_sigma] = np.exp(mat[..., self._i_sigma])
        out[..., 3] = expit(mat[..., 3])
        out[..., self._i_pollution_h0] = mat[..., 0] * expit(mat[..., self._i_pollution_h0])
        return out


# ---------------------------------------------------------------------------
# Densities


def log_prior(beta, spec):
    """Joint log prior density of ``beta``; -inf outside the support.

    Support: positive geometry and orifice radius, c inside (0, 1), positive
    sigma, pollution h0 inside [0, h_max].  The pollution level contributes
    the conditional uniform density 1/h_max; calibration levels are Gaussian
    around the known fill height with the sampled sigma as spread.
    """
    if len(beta.a.a) != len(spec.a):
        raise ValueError(
            f"prior has {len(spec.a)} discrepancy coefficients, beta has {len(beta.a.a)}"
        )
    if beta.h_max <= 0 or beta.x_t <= 0 or beta.x_b <= 0 or beta.r <= 0:
        return -math.inf
    if not 0.0 < beta.c < 1.0:
        return -math.inf
    if beta.sigma <= 0:
        return -math.inf
    if not 0.0 <= beta.pollution_ic.h0 <= beta.h_max:
        return -math.inf
    total = (
        spec.h_max.log_pdf(beta.h_max)
        + spec.x_t.log_pdf(beta.x_t)
        + spec.x_b.log_pdf(beta.x_b)
        + spec.r.log_pdf(beta.r)
        + spec.c.log_pdf(beta.c)
        + spec.sigma.log_pdf(beta.sigma)
        + spec.pollution_t0.log_pdf(beta.pollution_ic.t0)
        - math.log(beta.h_max)
    )
    for prior, a_nu in zip(spec.a, beta.a.a):
        total += prior.log_pdf(a_nu)
    for ic in beta.calib_ic:
        z = (ic.h0 - spec.calibration_h0_mean) / beta.sigma
        total += spec.calibration_t0.log_pdf(ic.t0)
        total += -0.5 * z * z - math.log(beta.sigma) - 0.5 * _LOG_2PI
    return float(total)


def _initial_condition_for(beta, dataset, experiment):
    if experiment.kind == POLLUTION:
        return beta.pollution_ic
    calibs = dataset.calibration_experiments
    if len(beta.calib_ic) != len(calibs):
        raise ValueError(
            f"beta has {len(beta.calib_ic)} calibration initial conditions, "
            f"dataset has {len(calibs)} calibration experiments"
        )
    for k, e in enumerate(calibs):
        if e.id == experiment.id:
            return beta.calib_ic[k]
    raise ValueError(f"experiment {experiment.id!r} not in dataset")


def _mean_levels(beta, ic, times, constants, include_discrepancy=True):
    """Corrected model levels at ``times`` (1-D array), with constant extension.

    Times before the episode start score the undrained level h0, which keeps
    the likelihood continuous in t0 when observations straddle it.
    """
    t_max = float(times.max())
    if t_max <= ic.t0:
        levels = np.full(times.shape, float(ic.h0))
    else:
        traj = simulate_level(beta.geometry(), beta.orifice(), constants, ic, t_max)
        levels = np.atleast_1d(traj.level(np.clip(times, ic.t0, t_max)))
    if not include_discrepancy:
        return levels
    # The correction is defined on [0, h_max]; an overfull starting level
    # (possible for calibration episodes) saturates at the rim value.
    delta = evaluate_discrepancy(beta.a, np.clip(levels, 0.0, beta.h_max), beta.h_max)
    return levels + delta


def predicted_level_series(
    beta, dataset, experiment_id, times, constants=PhysicalConstants(), include_discrepancy=True
):
    """Predicted observation means for one experiment at arbitrary times.

    Times before the experiment's start time return the undrained starting
    level.  With ``include_discrepancy=False`` the bare physics level is
    returned instead of the corrected one.
    """
    experiment = dataset.experiment(experiment_id)
    ic = _initial_condition_for(beta, dataset, experiment)
    times_arr = np.atleast_1d(np.asarray(times, dtype=float))
    out = _mean_levels(beta, ic, times_arr, constants, include_discrepancy)
    if np.ndim(times) == 0:
        return float(out[0])
    return out


def predicted_observation_mean(beta, dataset, experiment_id, t, constants=PhysicalConstants()):
    """Mean observed level at time ``t`` for one experiment under ``beta``.

    ``t`` must not precede that experiment's start time.
    """
    experiment = dataset.experiment(experiment_id)
    ic = _initial_condition_for(beta, dataset, experiment)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < ic.t0):
        raise ValueError(f"t precedes the episode start t0={ic.t0}")
    out = _mean_levels(beta, ic, t_arr, constants, include_discrepancy=True)
    if np.ndim(t) == 0:
        return float(out[0])
    return out


def log_likelihood(beta, dataset, constants=PhysicalConstants()):
    """Gaussian log likelihood of all non-held-out observations.

    Each experiment contributes independent Gaussian terms centered on the
    corrected model level.  A forward-solve failure anywhere is treated as a
    zero-likelihood region: the function logs a warning and returns -inf
    instead of raising, so a sampling chain survives pathological corners.
    """
    sigma = beta.sigma
    if not sigma > 0:
        return -math.inf
    total = 0.0
    for experiment in dataset.experiments:
        ic = _initial_condition_for(beta, dataset, experiment)
        try:
            means = _mean_levels(beta, ic, experiment.times, constants)
        except (SolverError, ValueError) as exc:
            _log.warning("forward solve failed for experiment %s: %s", experiment.id, exc)
            return -math.inf
        z = (experiment.levels - means) / sigma
        total += -0.5 * float(z @ z) - experiment.times.size * (
            math.log(sigma) + 0.5 * _LOG_2PI
        )
    return float(total)


def log_posterior_unnorm(beta, dataset, spec, constants=PhysicalConstants()):
    """log prior plus log likelihood; the likelihood is skipped at -inf prior."""
    lp = log_prior(beta, spec)
    if not math.isfinite(lp):
        return -math.inf
    ll = log_likelihood(beta, dataset, constants)
    if not math.isfinite(ll):
        return -math.inf
    return lp + ll


# ---------------------------------------------------------------------------
# Generative direction


def sample_prior(rng, spec, n_calibration=2):
    """One joint draw from the prior.

    Draw order is fixed (geometry, c, r, discrepancy, sigma, pollution ICs,
    then calibration ICs) so a seeded generator reproduces the same vector.
    The conditional structure is respected: the pollution level is uniform on
    [0, drawn h_max] and calibration levels use the drawn sigma as spread.
    """
    h_max = spec.h_max.sample(rng)
    x_t = spec.x_t.sample(rng)
    x_b = spec.x_b.sample(rng)
    c = spec.c.sample(rng)
    r = spec.r.sample(rng)
    a = DiscrepancyCoefficients(tuple(p.sample(rng) for p in spec.a))
    sigma = spec.sigma.sample(rng)
    pollution_t0 = spec.pollution_t0.sample(rng)
    pollution_h0 = rng.uniform(0.0, h_max)
    calib = []
    for _ in range(n_calibration):
        t0 = spec.calibration_t0.sample(rng)
        h0 = spec.calibration_h0_mean + sigma * rng.standard_normal()
        calib.append(InitialCondition(t0, h0))
    return ParameterVector(
        h_max=h_max,
        x_t=x_t,
        x_b=x_b,
        c=c,
        r=r,
        a=a,
        sigma=sigma,
        pollution_ic=InitialCondition(pollution_t0, pollution_h0),
        calib_ic=tuple(calib),
    )


def simulate_dataset(rng, beta, designs, constants=PhysicalConstants()):
    """Synthesize a Dataset from ``beta`` on the given observation designs.

    Observations are the corrected model levels plus i.i.d. Gaussian noise of
    scale ``beta.sigma`` (exact means when sigma is zero).  Calibration
    designs consume ``beta.calib_ic`` in order of appearance.
    """
    calib_designs = [d for d in designs if d.kind == CALIBRATION]
    if len(calib_designs) != len(beta.calib_ic):
        raise ValueError(
            f"{len(calib_designs)} calibration designs but beta carries "
            f"{len(beta.calib_ic)} calibration initial conditions"
        )
    calib_index = 0
    experiments = []
    for design in designs:
        if design.kind == POLLUTION:
            ic = beta.pollution_ic
        else:
            ic = beta.calib_ic[calib_index]
            calib_index += 1
        times = np.asarray(design.times, dtype=float)
        means = _mean_levels(beta, ic, times, constants)
        noise = rng.normal(0.0, beta.sigma, size=times.shape)
        held_t, held_h = ((ic.t0,), (ic.h0,)) if design.record_initial else ((), ())
        experiments.append(
            Experiment(
                id=design.experiment_id,
                kind=design.kind,
                times=times,
                levels=means + noise,
                held_out_times=held_t,
                held_out_levels=held_h,
            )
        )
    return Dataset(tuple(experiments))


# ---------------------------------------------------------------------------
# Sampler-facing posterior


class PosteriorDensity:
    """Callable unnormalized log posterior on the unconstrained space.

    The object is the MCMC target: calling it with an unconstrained vector
    returns log prior + log likelihood + the Jacobian correction of the
    bijection.  It is pure (no mutable state), so one instance can serve
    many chains.
    """

    def __init__(self, dataset, spec=None, constants=PhysicalConstants()):
        self.dataset = dataset
        self.spec = spec if spec is not None else default_prior_spec()
        self.constants = constants
        self.space = ParameterSpace.from_dataset(dataset, degree=self.spec.degree)

    def log_posterior(self, beta):
        return log_posterior_unnorm(beta, self.dataset, self.spec, self.constants)

    def __call__(self, u):
        beta = self.space.from_unconstrained(u)
        lp = log_prior(beta, self.spec)
        if not math.isfinite(lp):
            return -math.inf
        ll = log_likelihood(beta, self.dataset, self.constants)
        if not math.isfinite(ll):
            return -math.inf
        return lp + ll + self.space.unconstrained_log_jacobian(u)

    def draw_unconstrained(self, rng):
        """Unconstrained image of one prior draw (for chain initialization)."""
        beta = sample_prior(rng, self.spec, n_calibration=len(self.space.calibration_ids))
        u, _ = self.space.to_unconstrained(beta)
        return u

    def prior_central(self):
        """A central in-support vector (componentwise prior means).

        The pollution start level sits at half the rim height, the center of
        its conditional-uniform prior.  Useful as a mode-search start.
        """
        spec = self.spec
        h_max = spec.h_max.mean
        return ParameterVector(
            h_max=h_max,
            x_t=spec.x_t.mean,
            x_b=spec.x_b.mean,
            c=spec.c.mean,
            r=spec.r.mean,
            a=DiscrepancyCoefficients(tuple(p.loc for p in spec.a)),
            sigma=spec.sigma.mean,
            pollution_ic=InitialCondition(spec.pollution_t0.mean, 0.5 * h_max),
            calib_ic=tuple(
                InitialCondition(spec.calibration_t0.mean, spec.calibration_h0_mean)
                for _ in self.space.calibration_ids
            ),
        )

    def flow_ridge_move(self, scale=0.05):
        """Reversible Metropolis move along the c * r**2 degeneracy.

        Only the product c * r**2 enters the drainage dynamics, so the
        posterior concentrates on a curved ridge that a straight Gaussian
        proposal crosses in tiny steps.  This kernel multiplies r by e^d and
        c by e^(-2d) with d ~ N(0, scale^2), leaving the likelihood nearly
        unchanged and letting the priors arbitrate the move.  Acceptance
        uses the change-of-variables Metropolis rule on the unconstrained
        coordinates (log-Jacobian d + log(1-c) - log(1-c')), so the chain's
        stationary distribution is preserved exactly.

        Returns a callable suitable for the sampler's ``extra_moves``.
        """
        i_c = self.space.index("c")
        i_r = self.space.index("r")

        def move(rng, x, lp):
            delta = scale * rng.standard_normal()
            c = expit(x[i_c])
            c_new = c * math.exp(-2.0 * delta)
            if not 0.0 < c_new < 1.0:
                return x, lp
            y = np.array(x, dtype=float, copy=True)
            y[i_c] = math.log(c_new) - math.log1p(-c_new)
            y[i_r] = x[i_r] * math.exp(delta)
            lp_new = self(y)
            if not math.isfinite(lp_new):
                return x, lp
            log_alpha = (lp_new - lp) + delta + math.log1p(-c) - math.log1p(-c_new)
            if rng.random() < math.exp(min(0.0, log_alpha)):
                return y, lp_new
            return x, lp

        return move

    def start_ridge_move(self, scale=2.0):
        """Reversible Metropolis move along the pollution (t0, h0) degeneracy.

        A single post-drainage observation fixes how much liquid drained,
        not when the episode started: starting earlier from a higher level
        gives the same level at the observation time.  This kernel shifts
        the start time by e ~ N(0, scale^2) seconds and solves for the start
        level that keeps the drain duration condition G(h0') = G(h0) - k*e
        exact, where G(h) is the area-weighted head integral whose increments
        are proportional to drain time and k = c*pi*r^2*sqrt(2g).  The
        likelihood is thus (nearly) invariant and the priors arbitrate.
        Acceptance carries the change-of-variables Jacobian of the map on
        the unconstrained coordinates, preserving the stationary law.
        """
        space = self.space
        i_t0 = space.index(f"{space.pollution_id}_t0")
        i_h0 = space.index(f"{space.pollution_id}_h0")
        t_obs = float(self.dataset.pollution_experiment.times[0])
        g = self.constants.g

        def move(rng, x, lp):
            h_max, x_t, x_b, r = x[0], x[1], x[2], x[4]
            if h_max <= 0.0 or x_t <= 0.0 or x_b <= 0.0 or r <= 0.0:
                return x, lp
            eps = scale * rng.standard_normal()
            t0 = x[i_t0]
            t0_new = t0 + eps
            if t_obs <= t0 or t_obs <= t0_new:
                return x, lp
            u = expit(x[i_h0])
            h0 = h_max * u
            c = expit(x[3])
            k = c * math.pi * r * r * math.sqrt(2.0 * g)
            d = x_t - x_b

            def head_integral(h):
                # integral of area(z)/sqrt(z) from 0 to h; drain time from
                # h0 down to h is (head_integral(h0) - head_integral(h)) / k
                return (
                    2.0 * x_b * x_b * math.sqrt(h)
                    + (4.0 / 3.0) * (x_b * d / h_max) * h**1.5
                    + (2.0 / 5.0) * (d * d / (h_max * h_max)) * h**2.5
                )

            def head_slope(h):
                side = (h / h_max) * x_t + (1.0 - h / h_max) * x_b
                return side * side / math.sqrt(h)

            target_value = head_integral(h0) - k * eps
            if not 0.0 < target_value < head_integral(h_max):
                return x, lp
            h0_new = brentq(
                lambda h: head_integral(h) - target_value,
                1e-12,
                h_max,
                xtol=1e-13,
                rtol=8.9e-16,
            )
            u_new = h0_new / h_max
            if not 0.0 < u_new < 1.0:
                return x, lp
            y = np.array(x, dtype=float, copy=True)
            y[i_t0] = t0_new
            y[i_h0] = math.log(u_new) - math.log1p(-u_new)
            lp_new = self(y)
            if not math.isfinite(lp_new):
                return x, lp
            log_jac = (
                math.log(u * (1.0 - u))
                - math.log(u_new * (1.0 - u_new))
                + math.log(head_slope(h0))
                - math.log(head_slope(h0_new))
            )
            log_alpha = (lp_new - lp) + log_jac
            if rng.random() < math.exp(min(0.0, log_alpha)):
                return y, lp_new
            return x, lp

        return move

    def prior_proposal_scales(self):
        """Per-coordinate prior spread on the unconstrained space.

        Used to seed proposal covariances before adaptation has any history.
        The two closed-form constants: the logit of a uniform variate is
        standard logistic (sd pi/sqrt(3)), and the log of an exponential
        variate is a shifted Gumbel (sd pi/sqrt(6)).
        """
        spec = self.spec
        c_mean = spec.c.mean
        c_sd = math.sqrt(
            spec.c.alpha * spec.c.beta
            / ((spec.c.alpha + spec.c.beta) ** 2 * (spec.c.alpha + spec.c.beta + 1.0))
        )
        scales = [spec.h_max.sd, spec.x_t.sd, spec.x_b.sd]
        scales.append(c_sd / (c_mean * (1.0 - c_mean)))
        scales.append(spec.r.sd)
        scales += [p.scale * math.sqrt(2.0) for p in spec.a]
        scales.append(math.pi / math.sqrt(6.0))
        scales.append(spec.pollution_t0.sd)
        scales.append(math.pi / math.sqrt(3.0))
        for _ in self.space.calibration_ids:
            scales.append(spec.calibration_t0.sd)
            scales.append(spec.sigma.mean)
        return np.asarray(scales)
