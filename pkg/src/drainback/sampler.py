"""Multi-chain MCMC on an unconstrained parameter space.

The default algorithm is random-walk Metropolis with adaptation during
burn-in only: the proposal covariance tracks the empirical covariance of the
visited states (scaled by the classic 2.38^2/d factor) while a stochastic
update steers a global scale toward a target acceptance rate.  Both are
frozen when burn-in ends, so the post-burn-in segment is a plain Metropolis
chain with the correct stationary distribution.

``proposals_per_iteration`` composes several Metropolis updates into one
recorded iteration.  That keeps a fixed iteration protocol while buying
extra decorrelation per recorded draw, similar in spirit to gradient
samplers taking many internal steps per iteration.

An optional Hamiltonian mode (``algorithm="hmc"``) with finite-difference
gradients is provided for smooth targets; it is not the default because the
drainage posterior is only piecewise smooth through the numeric solver.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

__all__ = [
    "InitializationError",
    "SamplerConfig",
    "ChainTrace",
    "run_chain",
    "run_chains",
    "initialize_from_prior",
    "maximize_log_density",
    "laplace_covariance",
]


class InitializationError(RuntimeError):
    """A chain could not start from a finite-density point."""


_ALGORITHMS = ("adaptive-metropolis", "hmc")


@dataclass(frozen=True)
class SamplerConfig:
    """Protocol and tuning knobs shared by all chains."""

    n_chains: int = 4
    n_iterations: int = 5000
    burn_in_fraction: float = 1.0 / 3.0
    seed: int = 0
    target_acceptance: float = 0.234
    adaptation_window: int = 50
    proposals_per_iteration: int = 1
    algorithm: str = "adaptive-metropolis"
    initial_proposal_scales: tuple | None = None
    hmc_leapfrog_steps: int = 20
    hmc_step_size: float = 0.1
    hmc_target_acceptance: float = 0.7

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError(f"n_chains must be >= 1, got {self.n_chains}")
        if self.n_iterations < 1:
            raise ValueError(f"n_iterations must be >= 1, got {self.n_iterations}")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ValueError(f"burn_in_fraction must be in [0, 1), got {self.burn_in_fraction}")
        if not 0.0 < self.target_acceptance < 1.0:
            raise ValueError("target_acceptance must be in (0, 1)")
        if self.proposals_per_iteration < 1:
            raise ValueError("proposals_per_iteration must be >= 1")
        if self.adaptation_window < 1:
            raise ValueError("adaptation_window must be >= 1")
        if self.algorithm not in _ALGORITHMS:
            raise ValueError(f"algorithm must be one of {_ALGORITHMS}, got {self.algorithm!r}")
        if self.initial_proposal_scales is not None:
            object.__setattr__(
                self,
                "initial_proposal_scales",
                tuple(float(s) for s in self.initial_proposal_scales),
            )

    @property
    def n_burn_in(self):
        return int(self.burn_in_fraction * self.n_iterations)


@dataclass
class ChainTrace:
    """Recorded states of one chain.

    ``unconstrained`` has one row per iteration (burn-in included);
    ``acceptance`` holds the accepted fraction of each iteration's proposals.
    ``constrained`` is the back-transformed view, filled in by
    :func:`run_chains` when a constraining map is supplied.
    """

    chain_id: int
    seed: int
    n_burn_in: int
    unconstrained: np.ndarray
    log_posterior: np.ndarray
    acceptance: np.ndarray
    constrained: np.ndarray | None = None

    @property
    def n_iterations(self):
        return self.unconstrained.shape[0]

    @property
    def dim(self):
        return self.unconstrained.shape[1]

    @property
    def post_burn_in(self):
        return self.unconstrained[self.n_burn_in :]

    @property
    def post_constrained(self):
        if self.constrained is None:
            raise ValueError("trace has no constrained view")
        return self.constrained[self.n_burn_in :]

    @property
    def post_log_posterior(self):
        return self.log_posterior[self.n_burn_in :]

    @property
    def acceptance_rate(self):
        """Mean accepted fraction over the post-burn-in iterations."""
        return float(np.mean(self.acceptance[self.n_burn_in :]))


def _initial_cholesky(d, config, initial_covariance=None):
    if initial_covariance is not None:
        cov = np.asarray(initial_covariance, dtype=float)
        if cov.shape != (d, d):
            raise ValueError(f"initial covariance has shape {cov.shape}, expected ({d}, {d})")
        return np.linalg.cholesky(cov)
    if config.initial_proposal_scales is not None:
        scales = np.asarray(config.initial_proposal_scales, dtype=float)
        if scales.shape != (d,):
            raise ValueError(
                f"initial_proposal_scales has length {scales.size}, expected {d}"
            )
        return np.diag(scales)
    return np.eye(d)


def _run_chain_metropolis(
    target, init, config, rng, chain_id, initial_covariance=None, extra_moves=()
):
    x = np.array(init, dtype=float).copy()
    d = x.size
    lp = float(target(x))
    if not math.isfinite(lp):
        raise InitializationError(
            f"log density is {lp} at the initial point; start from a prior draw "
            "or the prior mode instead"
        )

    n_iter = config.n_iterations
    n_burn = config.n_burn_in
    substeps = config.proposals_per_iteration
    chol = _initial_cholesky(d, config, initial_covariance)
    base_diag = np.diag(chol @ chol.T)
    log_s2 = math.log(2.38**2 / d)

    # Running moments of the visited states, used for covariance adaptation.
    mean = x.copy()
    m2 = np.zeros((d, d))
    n_seen = 1

    states = np.empty((n_iter, d))
    log_posts = np.empty(n_iter)
    acc_frac = np.empty(n_iter)

    t_prop = 0
    for i in range(n_iter):
        adapting = i < n_burn
        accepted = 0
        for _ in range(substeps):
            t_prop += 1
            step = math.exp(0.5 * log_s2) * (chol @ rng.standard_normal(d))
            y = x + step
            lpy = float(target(y))
            if math.isfinite(lpy):
                alpha = math.exp(min(0.0, lpy - lp))
            else:
                alpha = 0.0
            if rng.random() < alpha:
                x = y
                lp = lpy
                accepted += 1
            if adapting:
                log_s2 += (alpha - config.target_acceptance) * t_prop**-0.6
                n_seen += 1
                delta = x - mean
                mean += delta / n_seen
                m2 += np.outer(delta, x - mean)
                if n_seen >= 10 * d and t_prop % config.adaptation_window == 0:
                    cov = m2 / (n_seen - 1) + 1e-10 * np.diag(base_diag)
                    try:
                        chol = np.linalg.cholesky(cov)
                    except np.linalg.LinAlgError:
                        pass
        # Specialized reversible kernels (for example moves along a known
        # degeneracy) compose with the random walk; they keep the same
        # stationary distribution, so mixing them in each iteration is safe.
        for move in extra_moves:
            x, lp = move(rng, x, lp)
        states[i] = x
        log_posts[i] = lp
        acc_frac[i] = accepted / substeps

    return ChainTrace(
        chain_id=chain_id,
        seed=config.seed,
        n_burn_in=n_burn,
        unconstrained=states,
        log_posterior=log_posts,
        acceptance=acc_frac,
    )


def _fd_gradient(target, x, eps):
    g = np.empty(x.size)
    for j in range(x.size):
        step = np.zeros(x.size)
        step[j] = eps[j]
        hi = target(x + step)
        lo = target(x - step)
        if not (math.isfinite(hi) and math.isfinite(lo)):
            return None
        g[j] = (hi - lo) / (2.0 * eps[j])
    return g


def _run_chain_hmc(target, init, config, rng, chain_id):
    x = np.array(init, dtype=float).copy()
    d = x.size
    lp = float(target(x))
    if not math.isfinite(lp):
        raise InitializationError(
            f"log density is {lp} at the initial point; start from a prior draw "
            "or the prior mode instead"
        )

    n_iter = config.n_iterations
    n_burn = config.n_burn_in
    scales = (
        np.asarray(config.initial_proposal_scales, dtype=float)
        if config.initial_proposal_scales is not None
        else np.ones(d)
    )
    fd_eps = 1e-5 * scales
    log_eps = math.log(config.hmc_step_size)
    n_leap = config.hmc_leapfrog_steps

    states = np.empty((n_iter, d))
    log_posts = np.empty(n_iter)
    acc_frac = np.empty(n_iter)

    grad = _fd_gradient(target, x, fd_eps)
    for i in range(n_iter):
        adapting = i < n_burn
        eps = math.exp(log_eps)
        p0 = rng.standard_normal(d)
        q, p = x.copy(), p0.copy()
        g = grad
        diverged = g is None
        if not diverged:
            for _ in range(n_leap):
                p = p + 0.5 * eps * g
                q = q + eps * p
                g = _fd_gradient(target, q, fd_eps)
                if g is None:
                    diverged = True
                    break
                p = p + 0.5 * eps * g
        if diverged:
            alpha = 0.0
        else:
            lpq = float(target(q))
            if math.isfinite(lpq):
                h0 = -lp + 0.5 * float(p0 @ p0)
                h1 = -lpq + 0.5 * float(p @ p)
                alpha = math.exp(min(0.0, h0 - h1))
            else:
                alpha = 0.0
        accepted = rng.random() < alpha
        if accepted:
            x, lp, grad = q, lpq, g
        if adapting:
            log_eps += (alpha - config.hmc_target_acceptance) * (i + 1) ** -0.6
        states[i] = x
        log_posts[i] = lp
        acc_frac[i] = float(accepted)

    return ChainTrace(
        chain_id=chain_id,
        seed=config.seed,
        n_burn_in=n_burn,
        unconstrained=states,
        log_posterior=log_posts,
        acceptance=acc_frac,
    )


def run_chain(target, init, config, rng, chain_id=0, initial_covariance=None, extra_moves=()):
    """One Markov chain for ``target`` started at ``init``.

    ``target`` maps an unconstrained vector to a log density (-inf allowed).
    ``initial_covariance`` seeds the Metropolis proposal shape before any
    adaptation (for example a local Laplace approximation); without it the
    proposal starts from ``initial_proposal_scales`` or the identity.
    ``extra_moves`` are additional reversible kernels, each a callable
    ``(rng, x, log_density) -> (x, log_density)`` that preserves the target;
    they run once per iteration (Metropolis algorithm only).  Deterministic
    given the generator state.  Raises InitializationError if the density is
    not finite at ``init``.
    """
    if config.algorithm == "hmc":
        return _run_chain_hmc(target, init, config, rng, chain_id)
    return _run_chain_metropolis(
        target, init, config, rng, chain_id, initial_covariance, extra_moves
    )


def run_chains(
    target,
    config,
    inits=None,
    init_sampler=None,
    constrain=None,
    initial_covariance=None,
    extra_moves=(),
):
    """Run ``config.n_chains`` independent chains with spawned RNG streams.

    Starting points come from ``inits`` (one vector per chain) or, when that
    is None, from ``init_sampler(rng)`` evaluated with each chain's own
    generator.  ``constrain`` optionally maps the recorded unconstrained
    draws (as an array of rows) to their constrained view, stored on each
    trace.  Chain order and content are deterministic for a fixed seed; the
    target must be pure, so chains could equally run concurrently.
    """
    if inits is not None and len(inits) != config.n_chains:
        raise ValueError(f"need {config.n_chains} initial points, got {len(inits)}")
    if inits is None and init_sampler is None:
        raise ValueError("provide inits or an init_sampler")
    children = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    traces = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        try:
            x0 = np.asarray(inits[i], dtype=float) if inits is not None else init_sampler(rng)
            trace = run_chain(
                target,
                x0,
                config,
                rng,
                chain_id=i,
                initial_covariance=initial_covariance,
                extra_moves=extra_moves,
            )
        except InitializationError as exc:
            raise InitializationError(f"chain {i}: {exc}") from exc
        if constrain is not None:
            trace.constrained = constrain(trace.unconstrained)
        traces.append(trace)
    return traces


def maximize_log_density(target, x0, max_evals=6000, xtol=1e-6):
    """Climb to a local mode of ``target`` starting from ``x0``.

    Derivative-free (Powell), so it tolerates the small kinks a numeric
    forward solver leaves in the density; zero-density regions act as a
    large-penalty plateau.  Returns the best point found, or ``x0`` itself
    if the search ends somewhere the density is not finite.
    """
    x0 = np.asarray(x0, dtype=float)
    if not math.isfinite(float(target(x0))):
        raise InitializationError("mode search must start at a finite-density point")

    def objective(u):
        lp = float(target(u))
        return -lp if math.isfinite(lp) else 1e12

    result = minimize(
        objective,
        x0,
        method="Powell",
        options={"maxfev": int(max_evals), "xtol": xtol, "ftol": 1e-8},
    )
    best = np.asarray(result.x, dtype=float)
    if not math.isfinite(float(target(best))):
        return x0
    return best


def laplace_covariance(target, x, scales, rel_step=0.05, floor_ratio=1e-4):
    """Local inverse curvature of ``-target`` at ``x``, as an SPD matrix.

    Central second differences with per-coordinate steps ``rel_step *
    scales`` estimate the Hessian of the negative log density; its spectrum
    is floored at ``floor_ratio`` times the largest eigenvalue so the
    inverse is a usable proposal covariance even along locally flat
    directions.  Falls back to ``diag(scales**2)`` whenever an evaluation
    fails or the curvature is not informative.
    """
    x = np.asarray(x, dtype=float)
    scales = np.asarray(scales, dtype=float)
    d = x.size
    if scales.shape != (d,):
        raise ValueError(f"scales has length {scales.size}, expected {d}")
    h = rel_step * scales
    fallback = np.diag(scales**2)

    def f(u):
        v = float(target(u))
        return v if math.isfinite(v) else None

    f0 = f(x)
    if f0 is None:
        return fallback

    hessian = np.zeros((d, d))
    f_plus = np.empty(d)
    f_minus = np.empty(d)
    for j in range(d):
        step = np.zeros(d)
        step[j] = h[j]
        a, b = f(x + step), f(x - step)
        if a is None or b is None:
            return fallback
        f_plus[j], f_minus[j] = a, b
        hessian[j, j] = -(a - 2.0 * f0 + b) / h[j] ** 2
    for j in range(d):
        ej = np.zeros(d)
        ej[j] = h[j]
        for k in range(j + 1, d):
            ek = np.zeros(d)
            ek[k] = h[k]
            pp, mm = f(x + ej + ek), f(x - ej - ek)
            if pp is None or mm is None:
                return fallback
            mixed = pp - f_plus[j] - f_plus[k] + 2.0 * f0 - f_minus[j] - f_minus[k] + mm
            hessian[j, k] = hessian[k, j] = -mixed / (2.0 * h[j] * h[k])

    eigvals, eigvecs = np.linalg.eigh(hessian)
    if not np.all(np.isfinite(eigvals)) or eigvals.max() <= 0.0:
        return fallback
    eigvals = np.maximum(eigvals, floor_ratio * eigvals.max())
    cov = (eigvecs / eigvals) @ eigvecs.T
    return 0.5 * (cov + cov.T)


def initialize_from_prior(rng, draw, target, max_retries=100):
    """Draw unconstrained starting points until the target is finite there.

    ``draw(rng)`` produces one candidate (for the drainage model: the
    unconstrained image of a prior sample).  ``max_retries`` extra attempts
    are allowed after the first; exhausting them raises InitializationError.
    """
    attempts = int(max_retries) + 1
    for _ in range(attempts):
        u = np.asarray(draw(rng), dtype=float)
        if math.isfinite(float(target(u))):
            return u
    raise InitializationError(
        f"no finite-density starting point in {attempts} prior draws; "
        "check the data against the model or start from the prior mode"
    )
