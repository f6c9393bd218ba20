"""Physics of gravity drainage through a small orifice in a square-section tank.

The tank has square horizontal cross sections whose side length varies
linearly from ``x_b`` at the floor to ``x_t`` at height ``h_max``.  Liquid at
level ``h`` leaves through a floor orifice of radius ``r`` at the Torricelli
rate ``c * pi * r**2 * sqrt(2 * g * h)``, so the level obeys

    dh/dt = -c * pi * r**2 * sqrt(2 * g * h) / alpha(h)

where ``alpha(h)`` is the cross-section area at level ``h``.  All lengths are
centimeters and times seconds, hence the default ``g`` of 981 cm/s^2.

:func:`simulate_level` integrates this with an adaptive Dormand-Prince 4(5)
scheme.  The square-root rate is non-Lipschitz at ``h = 0``, so instead of
letting the step size collapse near an empty tank the integration stops once
the level falls to a small floor and the trajectory is clamped to zero from
that moment on.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

GRAVITY_CM_S2 = 981.0

# Level (cm) at which a draining tank is declared empty.  Keeps the adaptive
# integrator away from the sqrt singularity at h = 0.
DEPLETION_FLOOR = 1e-6

_MAX_STEPS = 100_000

__all__ = [
    "GRAVITY_CM_S2",
    "DEPLETION_FLOOR",
    "TankGeometry",
    "Orifice",
    "PhysicalConstants",
    "InitialCondition",
    "LevelTrajectory",
    "SolverError",
    "cross_section_area",
    "tank_volume",
    "drain_rate",
    "simulate_level",
    "level_at",
    "prism_level_closed_form",
]


@dataclass(frozen=True)
class TankGeometry:
    """Truncated square pyramid: side ``x_b`` at the floor, ``x_t`` at ``h_max``.

    Levels above ``h_max`` extrapolate the walls linearly, so a modestly
    overfull tank still has a well-defined cross section.
    """

    h_max: float
    x_t: float
    x_b: float

    def __post_init__(self):
        if not (self.h_max > 0 and self.x_t > 0 and self.x_b > 0):
            raise ValueError(
                f"tank dimensions must be positive, got h_max={self.h_max}, "
                f"x_t={self.x_t}, x_b={self.x_b}"
            )


@dataclass(frozen=True)
class Orifice:
    """Circular hole of radius ``r`` (cm) with discharge coefficient ``c``."""

    r: float
    c: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"orifice radius must be positive, got {self.r}")
        if not 0.0 <= self.c <= 1.0:
            raise ValueError(f"discharge coefficient must be in [0, 1], got {self.c}")


@dataclass(frozen=True)
class PhysicalConstants:
    """Known physical constants; gravity in cm/s^2."""

    g: float = GRAVITY_CM_S2

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError(f"g must be positive, got {self.g}")


@dataclass(frozen=True)
class InitialCondition:
    """Starting time ``t0`` (s) and level ``h0`` (cm) of a drainage episode.

    Carries no validation of its own: whether a given ``h0`` makes sense
    depends on the tank it is paired with, so the checks live in
    :func:`simulate_level` and in the statistical layer.
    """

    t0: float
    h0: float


class SolverError(RuntimeError):
    """Adaptive integration failed; carries the last valid state."""

    def __init__(self, message, t_last, h_last):
        super().__init__(f"{message} (last state t={t_last!r}, h={h_last!r})")
        self.t_last = t_last
        self.h_last = h_last


def _side_length(geom, h):
    # Linear wall profile; intentionally unchecked so the integrator and the
    # statistical layer can evaluate slightly overfull levels.
    u = h / geom.h_max
    return u * geom.x_t + (1.0 - u) * geom.x_b


def cross_section_area(geom, h):
    """Horizontal cross-section area (cm^2) at level ``h`` in [0, h_max]."""
    if not 0.0 <= h <= geom.h_max:
        raise ValueError(f"level {h} outside [0, {geom.h_max}]")
    s = _side_length(geom, h)
    return s * s


def tank_volume(geom, h):
    """Liquid volume (cm^3) below level ``h``, the integral of the area.

    With d = x_t - x_b and u = h / h_max the side is x_b + d*u, so

        V(h) = x_b^2 h + x_b d h^2 / h_max + d^2 h^3 / (3 h_max^2)
    """
    if not 0.0 <= h <= geom.h_max:
        raise ValueError(f"level {h} outside [0, {geom.h_max}]")
    d = geom.x_t - geom.x_b
    return (
        geom.x_b**2 * h
        + geom.x_b * d * h**2 / geom.h_max
        + d**2 * h**3 / (3.0 * geom.h_max**2)
    )


def drain_rate(geom, orifice, constants, h):
    """Instantaneous level change rate dh/dt (cm/s) at level ``h >= 0``.

    Exactly zero at ``h = 0``: Torricelli outflow vanishes with the head.
    """
    if h < 0:
        raise ValueError(f"level must be non-negative, got {h}")
    if h == 0:
        return 0.0
    s = _side_length(geom, h)
    return -orifice.c * math.pi * orifice.r**2 * math.sqrt(2.0 * constants.g * h) / (s * s)


@dataclass
class LevelTrajectory:
    """Numeric solution of the drainage problem on ``[t_start, t_end]``.

    ``times``/``levels``/``slopes`` are the accepted integrator knots with the
    exact right-hand side at each knot.  Queries interpolate with a cubic
    Hermite and are clamped between neighboring knot values, so interpolation
    never overshoots and stays non-increasing wherever the knots are.
    """

    t_start: float
    t_end: float
    times: np.ndarray
    levels: np.ndarray
    slopes: np.ndarray
    depleted: bool
    t_depletion: float | None = None
    _spline: CubicHermiteSpline | None = field(
        default=None, init=False, repr=False, compare=False
    )

    def level(self, t):
        """Level at time(s) ``t`` within the trajectory span."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        tol = 1e-9 * max(1.0, abs(self.t_end - self.t_start))
        if np.any(t_arr < self.t_start - tol) or np.any(t_arr > self.t_end + tol):
            raise ValueError(
                f"time outside trajectory span [{self.t_start}, {self.t_end}]"
            )
        if self._spline is None:
            self._spline = CubicHermiteSpline(self.times, self.levels, self.slopes)
        tq = np.clip(t_arr, self.times[0], self.times[-1])
        vals = self._spline(tq)
        idx = np.clip(np.searchsorted(self.times, tq, side="right") - 1, 0, len(self.times) - 2)
        vals = np.clip(vals, self.levels[idx + 1], self.levels[idx])
        if np.ndim(t) == 0:
            return float(vals[0])
        return vals


def level_at(traj, t):
    """Interpolated level of ``traj`` at time(s) ``t``; see LevelTrajectory.level."""
    return traj.level(t)


# Dormand-Prince 4(5) coefficients (the classic RK45 pair with FSAL).
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


def _hermite_point(t_a, h_a, d_a, t_b, h_b, d_b, s):
    # Cubic Hermite value at s within [t_a, t_b].
    w = t_b - t_a
    u = (s - t_a) / w
    u2 = u * u
    u3 = u2 * u
    return (
        h_a * (2 * u3 - 3 * u2 + 1)
        + d_a * w * (u3 - 2 * u2 + u)
        + h_b * (-2 * u3 + 3 * u2)
        + d_b * w * (u3 - u2)
    )


def simulate_level(geom, orifice, constants, ic, t_end, rtol=1e-8, atol=1e-10):
    """Integrate the drainage problem from ``ic`` up to ``t_end``.

    Parameters
    ----------
    geom, orifice, constants : model description.
    ic : InitialCondition
        Start time and level.  ``h0`` must be non-negative; levels above
        ``h_max`` are allowed (walls extrapolate).
    t_end : float
        End of the integration window, strictly after ``ic.t0``.
    rtol, atol : float
        Local error tolerances of the adaptive 4(5) stepper.

    Returns
    -------
    LevelTrajectory
        Queryable on [t0, t_end].  If the level reaches the depletion floor
        the crossing time is located on the last step's Hermite interpolant,
        the level is set to zero there and held at zero afterwards, and the
        ``depleted`` flag is set.

    Raises
    ------
    ValueError
        For ``t_end <= t0`` or a negative starting level.
    SolverError
        On step-size underflow or step-count exhaustion.
    """
    t0 = float(ic.t0)
    h0 = float(ic.h0)
    t_end = float(t_end)
    if not t_end > t0:
        raise ValueError(f"t_end={t_end} must exceed t0={t0}")
    if h0 < 0:
        raise ValueError(f"initial level must be non-negative, got {h0}")

    out_coeff = orifice.c * math.pi * orifice.r**2 * math.sqrt(2.0 * constants.g)
    h_max = geom.h_max
    x_t = geom.x_t
    x_b = geom.x_b

    def rate(h):
        # Clamped at zero head; stage values may dip below zero transiently.
        if h <= 0.0:
            return 0.0
        s = (h / h_max) * x_t + (1.0 - h / h_max) * x_b
        return -out_coeff * math.sqrt(h) / (s * s)

    if h0 <= DEPLETION_FLOOR:
        # Effectively empty from the start.
        times = np.array([t0, t_end])
        zeros = np.zeros(2)
        return LevelTrajectory(t0, t_end, times, zeros.copy(), zeros.copy(), True, t0)

    ts = [t0]
    hs = [h0]
    ds = [rate(h0)]

    t, h = t0, h0
    f1 = ds[0]
    if f1 != 0.0:
        dt = min(t_end - t0, 0.01 * h0 / abs(f1))
    else:
        dt = t_end - t0

    depleted = False
    t_depletion = None
    steps = 0
    while t < t_end - 1e-12 * max(1.0, abs(t_end)):
        steps += 1
        if steps > _MAX_STEPS:
            raise SolverError("step budget exhausted", t, h)
        last = dt >= t_end - t
        if last:
            dt = t_end - t

        k1 = f1
        k2 = rate(h + dt * (_A21 * k1))
        k3 = rate(h + dt * (_A31 * k1 + _A32 * k2))
        k4 = rate(h + dt * (_A41 * k1 + _A42 * k2 + _A43 * k3))
        k5 = rate(h + dt * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
        k6 = rate(h + dt * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
        h_new = h + dt * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        k7 = rate(h_new)
        err = dt * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
        scale = atol + rtol * max(abs(h), abs(h_new))
        enorm = abs(err) / scale

        if enorm <= 1.0:
            t_new = t_end if last else t + dt
            if h_new <= DEPLETION_FLOOR:
                if h_new == DEPLETION_FLOOR:
                    t_cross = t_new
                else:
                    t_cross = brentq(
                        lambda s: _hermite_point(t, h, f1, t_new, h_new, k7, s)
                        - DEPLETION_FLOOR,
                        t,
                        t_new,
                    )
                ts.append(t_cross)
                hs.append(0.0)
                ds.append(0.0)
                depleted = True
                t_depletion = t_cross
                break
            h_new = min(h_new, h)
            ts.append(t_new)
            hs.append(h_new)
            ds.append(k7)
            t, h, f1 = t_new, h_new, k7
            factor = 5.0 if enorm == 0.0 else min(5.0, max(0.2, 0.9 * enorm**-0.2))
            dt *= factor
        else:
            dt *= max(0.2, 0.9 * enorm**-0.2)
        if dt < 1e-12 * max(1.0, abs(t)):
            raise SolverError("step size underflow near the depletion point", t, h)

    if depleted and t_depletion < t_end:
        ts.append(t_end)
        hs.append(0.0)
        ds.append(0.0)

    return LevelTrajectory(
        t0,
        t_end,
        np.asarray(ts),
        np.asarray(hs),
        np.asarray(ds),
        depleted,
        t_depletion,
    )


def prism_level_closed_form(x, orifice, constants, ic, t):
    """Exact level for a constant cross section (square prism of side ``x``).

    Separating the prism equation dh/dt = -k sqrt(h), k = c pi r^2 sqrt(2g) / x^2,
    gives h(t) = max(0, sqrt(h0) - k (t - t0) / 2)^2.  Serves as an independent
    reference for the numeric integrator.
    """
    if not x > 0:
        raise ValueError(f"side length must be positive, got {x}")
    if ic.h0 < 0:
        raise ValueError(f"initial level must be non-negative, got {ic.h0}")
    dt = np.asarray(t, dtype=float) - ic.t0
    if np.any(dt < 0):
        raise ValueError("t must not precede the initial time")
    k = orifice.c * math.pi * orifice.r**2 * math.sqrt(2.0 * constants.g) / (x * x)
    root = np.maximum(0.0, math.sqrt(ic.h0) - 0.5 * k * dt)
    out = root * root
    if np.ndim(t) == 0:
        return float(out)
    return out
