"""Monte Carlo oracle for linear kinetic Fokker-Planck equations.

The representation

    f(t, x, u) = E[ f0(X_t, U_t) exp(int_0^t c dr) ] + E[ int_0^t F exp(int_0^r c) dr ],
    X_r = x - int_0^r U,   dU_r = phi(t - r, X_r, U_r) dr + sigma dW_r,

solves d_t f + u d_x f - phi d_u f - sigma^2/2 d_u^2 f = c f + F.  For the
unweighted equation of the solver, phi = D = d_x Q + beta (u - alpha H) and c = beta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import interpolate_x
from .linear import CoefficientFields, ModelParams, Trajectory
from .rng import BLOCK, block_generator, map_blocks
from .weight import WeightModel

Field = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
FLAG_LIMIT = 1e-3


@dataclass(frozen=True)
class ProbeRequest:
    t: float
    x: float
    u: float
    paths: int = 100_000
    dt_sde: float = 1e-3
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if self.paths < 1000:
            raise ValueError("paths must be >= 1000")
        if not self.dt_sde > 0:
            raise ValueError("dt_sde must be positive")
        if self.t < 0:
            raise ValueError("t must be nonnegative")


@dataclass(frozen=True)
class FKResult:
    mean: float
    stderr: float
    flagged: int
    paths: int


class PeriodicSeries:
    """Periodic cubic spline in x of stored slices, linear in t."""

    def __init__(self, times: np.ndarray, values: np.ndarray):
        self.times = np.asarray(times, dtype=float)
        values = np.atleast_2d(values)
        nx = values.shape[1]
        xs = np.arange(nx + 1) / nx
        self._splines = [CubicSpline(xs, np.append(v, v[0]), bc_type="periodic") for v in values]

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        ts = self.times
        x = np.mod(x, 1.0)
        if ts.size == 1 or t <= ts[0]:
            return self._splines[0](x)
        if t >= ts[-1]:
            return self._splines[-1](x)
        i = int(np.searchsorted(ts, t, side="right")) - 1
        theta = (t - ts[i]) / (ts[i + 1] - ts[i])
        a = self._splines[i](x)
        return a + theta * (self._splines[i + 1](x) - a)


def solver_drift(coeffs: CoefficientFields, params: ModelParams) -> Field:
    """phi(t, x, u) = d_x Q + beta (u - alpha H) from stored coefficient slices."""
    dQ = PeriodicSeries(coeffs.times, coeffs.dQ)
    H = PeriodicSeries(coeffs.times, coeffs.H) if coeffs.H is not None and params.alpha else None

    def phi(t, x, u):
        out = dQ(t, x) + params.beta * u
        if H is not None:
            out = out - params.beta * H(t, x)
        return out

    return phi


def _as_field(value) -> Field | None:
    if value is None:
        return None
    if callable(value):
        return value
    const = float(value)
    if const == 0:
        return None
    return lambda t, x, u: np.full(np.shape(u), const)


def fk_estimate(
    request: ProbeRequest,
    phi: Field | float | None,
    c: Field | float | None,
    F: Field | float | None,
    f0: Callable[[np.ndarray, np.ndarray], np.ndarray],
    sigma: float,
    threads: int = 1,
) -> FKResult:
    """Euler-Maruyama estimate of f(t, x, u); the exponential weight uses the midpoint rule."""
    phi_f, c_f, F_f = _as_field(phi), _as_field(c), _as_field(F)
    t = request.t
    n_steps = max(1, math.ceil(t / request.dt_sde - 1e-12)) if t > 0 else 0
    h = t / n_steps if n_steps else 0.0
    sq = sigma * math.sqrt(h)

    def run(block: int, sl: slice) -> np.ndarray:
        n = sl.stop - sl.start
        rng = block_generator(request.seed, "feynman_kac", request.stream, block)
        X = np.full(n, float(request.x))
        U = np.full(n, float(request.u))
        logw = np.zeros(n)
        acc = np.zeros(n)
        for k in range(n_steps):
            tau = t - k * h
            Xn = X - U * h
            Un = U + (phi_f(tau, X, U) * h if phi_f is not None else 0.0)
            if sigma != 0:
                Un = Un + sq * rng.standard_normal(n)
            tm = tau - 0.5 * h
            cm = c_f(tm, 0.5 * (X + Xn), 0.5 * (U + Un)) * h if c_f is not None else 0.0
            if F_f is not None:
                acc = acc + F_f(tm, 0.5 * (X + Xn), 0.5 * (U + Un)) * np.exp(logw + 0.5 * cm) * h
            logw = logw + cm
            X, U = np.mod(Xn, 1.0), Un
        with np.errstate(over="ignore", invalid="ignore"):
            return f0(X, U) * np.exp(logw) + acc

    parts = map_blocks(run, request.paths, threads, BLOCK)
    vals = np.concatenate(parts)
    bad = ~np.isfinite(vals)
    flagged = int(bad.sum())
    if flagged > FLAG_LIMIT * request.paths:
        raise FloatingPointError(f"{flagged} of {request.paths} paths produced non-finite weights")
    vals = vals[~bad]
    n = vals.size
    mean = float(np.sum(vals) / n)
    stderr = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return FKResult(mean, stderr, flagged, n)


@dataclass(frozen=True)
class ProbeResult:
    t: float
    x: float
    u: float
    pde: float
    mean: float
    stderr: float
    tol: float

    @property
    def diff(self) -> float:
        return abs(self.pde - self.mean)

    @property
    def z(self) -> float:
        return self.diff / self.stderr if self.stderr > 0 else (0.0 if self.diff == 0 else math.inf)

    @property
    def passed(self) -> bool:
        return self.diff <= self.tol


@dataclass(frozen=True)
class OracleReport:
    probes: tuple[ProbeResult, ...]
    eps_disc: float
    scale: float

    @property
    def ok(self) -> bool:
        return all(p.passed for p in self.probes)

    @property
    def max_diff(self) -> float:
        return max(p.diff for p in self.probes)

    def to_text(self) -> str:
        lines = ["# t x u pde mc_mean stderr z pass"]
        for p in self.probes:
            lines.append(f"{p.t!r} {p.x!r} {p.u!r} {p.pde!r} {p.mean!r} {p.stderr!r} {p.z:.3f} {int(p.passed)}")
        return "\n".join(lines) + "\n"


def pde_value(traj: Trajectory, weight: WeightModel | None, t: float, x: float, u: float) -> float:
    """f = g/omega of the stored slice at time t, trigonometric in x and cubic in u."""
    idx = int(np.argmin(np.abs(traj.times - t)))
    if abs(traj.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"no stored slice at t={t!r}")
    field = traj.fields[idx]
    grid = field.grid
    w = np.ones(grid.nu) if weight is None else weight.omega(grid.u)
    col = interpolate_x(field.samples / w, x)
    return float(CubicSpline(grid.u, col)(u))


def oracle_compare(
    traj: Trajectory,
    probes: list[ProbeRequest],
    coeffs: CoefficientFields,
    params: ModelParams,
    weight: WeightModel | None,
    f0: Callable[[np.ndarray, np.ndarray], np.ndarray],
    eps_disc: float = 5e-3,
    scale: float | None = None,
    threads: int = 1,
) -> OracleReport:
    """Compare the solver's f with the Monte Carlo oracle at each probe."""
    grid = traj.fields[0].grid
    T = float(traj.times[-1] - traj.times[0])
    margin = 2.0 * abs(params.sigma) * math.sqrt(T)
    for p in probes:
        if abs(p.u) > grid.u_max - margin:
            raise ValueError(f"probe u={p.u!r} within {margin:.3g} of the velocity cutoff")
        if traj.dt and p.dt_sde > traj.dt * (1 + 1e-12):
            raise ValueError("dt_sde must not exceed the solver time step")
    if scale is None:
        w = np.ones(grid.nu) if weight is None else weight.omega(grid.u)
        scale = float(np.abs(traj.fields[-1].samples / w).max())
    phi = solver_drift(coeffs, params)
    out = []
    for p in probes:
        pde = pde_value(traj, weight, traj.times[0] + p.t, p.x, p.u)
        res = fk_estimate(p, phi, params.beta, None, f0, params.sigma, threads)
        out.append(ProbeResult(p.t, p.x, p.u, pde, res.mean, res.stderr, 3 * res.stderr + eps_disc * scale))
    return OracleReport(tuple(out), eps_disc, scale)
