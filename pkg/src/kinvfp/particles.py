"""Particle simulation of the incompressible Langevin model on the torus.

    X <- wrap(X + U dt),
    U <- U + [-d_x P(X) - beta (U - alpha V(X))] dt + sigma sqrt(dt) xi,

with (d_x P, V) taken from a PDE solution (field-coupled) or estimated from the
ensemble itself every step (self-consistent).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .feynman_kac import PeriodicSeries
from .grid import NEG_TOL_REL, InitialDataSpec
from .linear import CoefficientFields, ModelParams
from .rng import BLOCK, block_generator, map_blocks

MODES = ("field_coupled", "self_consistent")
MIN_PER_BIN = 50


@dataclass(frozen=True)
class ParticleEnsemble:
    x: np.ndarray
    u: np.ndarray
    t: float
    seed: int
    step_counter: int = 0

    def __post_init__(self):
        if self.x.shape != self.u.shape or self.x.ndim != 1:
            raise ValueError("x and u must be 1D arrays of equal length")
        if self.x.size and (self.x.min() < 0 or self.x.max() >= 1):
            raise ValueError("positions must lie in [0, 1)")

    @property
    def N(self) -> int:
        return int(self.x.size)


def wrap(x: np.ndarray) -> np.ndarray:
    """Reduce to [0, 1); guards the x = 1.0 rounding case of np.mod."""
    y = np.mod(x, 1.0)
    y[y >= 1.0] = 0.0
    return y


def _rho0(spec: InitialDataSpec, nx: int = 4096, nu: int = 4001) -> tuple[np.ndarray, np.ndarray]:
    x = np.arange(nx) / nx
    umax = 10.0 * math.sqrt(spec.thermal_var)
    u = np.linspace(-umax, umax, nu)
    vals = np.maximum(spec(x[:, None], u[None, :]), 0.0)
    return x, np.trapezoid(vals, u, axis=1)


def init_ensemble(N: int, spec: InitialDataSpec, seed: int, threads: int = 1) -> ParticleEnsemble:
    """Sample (x, u) from f0: inverse CDF of rho0 in x, rejection in u against N(0, 2 var)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    v = spec.thermal_var
    uu = np.linspace(-12 * math.sqrt(v), 12 * math.sqrt(v), 48001)
    psi = (uu * uu - v) / v
    Mu = spec.maxwellian(uu)
    lowest = np.min(Mu * (1 - spec.eps * np.abs(psi)))
    if lowest < -NEG_TOL_REL * Mu.max():
        raise ValueError(f"eps={spec.eps} makes f0 negative beyond tolerance")
    env_sd = math.sqrt(2 * v)
    env = stats.norm.pdf(uu, scale=env_sd)
    # bound of max(f0, 0)/rho0 over the envelope (rho0 = amplitude for this family)
    cenv = 1.01 * float(np.max(Mu * (1 + spec.eps * np.abs(psi)) / env))
    xs, rho = _rho0(spec)
    uniform = np.ptp(rho) <= 1e-12 * rho.mean()
    cdf = np.concatenate([[0.0], np.cumsum(rho)])
    cdf /= cdf[-1]
    grid_x = np.append(xs, 1.0)

    def run(block: int, sl: slice):
        n = sl.stop - sl.start
        rng = block_generator(seed, "init", block)
        r = rng.random(n)
        x = r if uniform else np.interp(r, cdf, grid_x)
        x = wrap(x)
        rho_at = np.full(n, rho.mean()) if uniform else np.interp(x, grid_x, np.append(rho, rho[0]))
        u = np.empty(n)
        todo = np.arange(n)
        while todo.size:
            prop = rng.normal(0.0, env_sd, todo.size)
            acc = rng.random(todo.size)
            f = np.maximum(spec(x[todo], prop), 0.0) / rho_at[todo]
            keep = acc * cenv * stats.norm.pdf(prop, scale=env_sd) <= f
            u[todo[keep]] = prop[keep]
            todo = todo[~keep]
        return x, u

    parts = map_blocks(run, N, threads, BLOCK)
    return ParticleEnsemble(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]), 0.0, seed)


@dataclass(frozen=True)
class ConditionalMoments:
    centers: np.ndarray
    V: np.ndarray
    S: np.ndarray
    counts: np.ndarray

    def V_at(self, x: np.ndarray) -> np.ndarray:
        return _interp_periodic(self.centers, self.V, x)

    def S_at(self, x: np.ndarray) -> np.ndarray:
        return _interp_periodic(self.centers, self.S, x)


def _interp_periodic(centers: np.ndarray, values: np.ndarray, x: np.ndarray) -> np.ndarray:
    xp = np.concatenate([[centers[-1] - 1.0], centers, [centers[0] + 1.0]])
    fp = np.concatenate([[values[-1]], values, [values[0]]])
    return np.interp(x, xp, fp)


def conditional_moments(ens: ParticleEnsemble, n_bins: int = 32) -> ConditionalMoments:
    """Binned means of u and u^2 per x-bin."""
    if ens.N < MIN_PER_BIN * n_bins:
        raise ValueError(f"need N >= {MIN_PER_BIN} * n_bins particles")
    idx = np.minimum((ens.x * n_bins).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    if np.any(counts == 0):
        raise ValueError("empty bin; use more particles or fewer bins")
    V = np.bincount(idx, weights=ens.u, minlength=n_bins) / counts
    S = np.bincount(idx, weights=ens.u * ens.u, minlength=n_bins) / counts
    centers = (np.arange(n_bins) + 0.5) / n_bins
    return ConditionalMoments(centers, V, S, counts)


def smoothed_derivative(values: np.ndarray, cutoff: float | None = None) -> np.ndarray:
    """Spectral derivative of a periodic binned profile after Gaussian low-pass filtering."""
    n = values.size
    k = np.fft.rfftfreq(n, d=1.0 / n)
    kc = n / 8 if cutoff is None else cutoff
    c = np.fft.rfft(values) * np.exp(-((k / kc) ** 2)) * (2j * math.pi * k)
    if n % 2 == 0:
        c[-1] = 0.0
    return np.fft.irfft(c, n=n)


@dataclass(frozen=True)
class PDEFields:
    """d_x P and V from a PDE run, periodic cubic in x and linear in t."""

    dP: PeriodicSeries
    V: PeriodicSeries | None

    @classmethod
    def from_coefficients(cls, coeffs: CoefficientFields) -> PDEFields:
        V = PeriodicSeries(coeffs.times, coeffs.H) if coeffs.H is not None else None
        return cls(PeriodicSeries(coeffs.times, coeffs.dQ), V)


def step_trajectory(
    ens: ParticleEnsemble,
    drift_mode: str,
    params: ModelParams,
    dt: float,
    n_steps: int,
    fields: PDEFields | None = None,
    n_bins: int = 32,
    threads: int = 1,
) -> ParticleEnsemble:
    """Euler-Maruyama steps; per-step noise streams are keyed by (seed, step, block)."""
    if drift_mode not in MODES:
        raise ValueError(f"drift_mode must be one of {MODES}")
    if drift_mode == "field_coupled" and fields is None:
        raise ValueError("field_coupled mode needs PDE fields")
    if not dt > 0 or n_steps < 0:
        raise ValueError("need dt > 0 and n_steps >= 0")
    x, u, t = ens.x.copy(), ens.u.copy(), ens.t
    b, ab, sig = params.beta, params.alpha * params.beta, params.sigma
    sq = sig * math.sqrt(dt)
    counter = ens.step_counter
    for _ in range(n_steps):
        if drift_mode == "self_consistent":
            cm = conditional_moments(replace(ens, x=x, u=u), n_bins)
            dS = smoothed_derivative(cm.S)
            dP_fn = lambda xx, cm=cm, dS=dS: -_interp_periodic(cm.centers, dS, xx)
            V_fn = cm.V_at
        else:
            dP_fn = lambda xx, t=t: fields.dP(t, xx)
            V_fn = (lambda xx, t=t: fields.V(t, xx)) if fields.V is not None else None

        def run(block: int, sl: slice, counter=counter, dP_fn=dP_fn, V_fn=V_fn):
            xb, ub = x[sl], u[sl]
            acc = -dP_fn(xb) - b * ub
            if ab and V_fn is not None:
                acc = acc + ab * V_fn(xb)
            un = ub + acc * dt
            if sig != 0:
                un = un + sq * block_generator(ens.seed, "langevin", counter, block).standard_normal(ub.size)
            return wrap(xb + ub * dt), un

        parts = map_blocks(run, x.size, threads, BLOCK)
        x = np.concatenate([p[0] for p in parts]) if parts else x
        u = np.concatenate([p[1] for p in parts]) if parts else u
        bad = np.flatnonzero(~np.isfinite(u))
        if bad.size:
            raise FloatingPointError(f"non-finite velocity for particle {int(bad[0])} at step {counter}")
        counter += 1
        t += dt
    return ParticleEnsemble(x, u, t, ens.seed, counter)


@dataclass(frozen=True)
class UniformityResult:
    chi2: float
    p_value: float
    ks: float
    ks_p_value: float
    n_bins: int

    def passed(self, level: float = 0.01) -> bool:
        return self.p_value >= level


def uniformity_test(ens: ParticleEnsemble, n_bins: int = 32) -> UniformityResult:
    """Chi-square of the position histogram and KS statistic against U[0, 1)."""
    if ens.N < 10_000:
        raise ValueError("uniformity_test needs N >= 1e4")
    counts = np.bincount(np.minimum((ens.x * n_bins).astype(np.int64), n_bins - 1), minlength=n_bins)
    expected = ens.N / n_bins
    chi2 = float(np.sum((counts - expected) ** 2) / expected)
    ks = stats.kstest(ens.x, "uniform")
    return UniformityResult(chi2, float(stats.chi2.sf(chi2, n_bins - 1)), float(ks.statistic), float(ks.pvalue), n_bins)


def chi2_quantile(n_bins: int, q: float = 0.99) -> float:
    return float(stats.chi2.ppf(q, n_bins - 1))


def write_ensemble(path: str | Path, ens: ParticleEnsemble) -> None:
    lines = [f"KINVFP-P v1 {ens.N} {float(ens.t)!r} {ens.seed}"]
    lines += [f"{float(a)!r} {float(b)!r}" for a, b in zip(ens.x, ens.u)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_ensemble(path: str | Path) -> ParticleEnsemble:
    text = Path(path).read_text(encoding="ascii").splitlines()
    head = text[0].split()
    if len(head) != 5 or head[:2] != ["KINVFP-P", "v1"]:
        raise ValueError(f"{path}: not a KINVFP-P v1 ensemble")
    N = int(head[2])
    rows = [line.split() for line in text[1 : 1 + N]]
    if len(rows) != N or any(len(r) != 2 for r in rows):
        raise ValueError(f"{path}: expected {N} rows of 2 values")
    data = np.array([[float(a), float(b)] for a, b in rows]).reshape(N, 2)
    return ParticleEnsemble(data[:, 0], data[:, 1], float(head[3]), int(head[4]))


def write_stats_csv(path: str | Path, rows: list[dict]) -> None:
    if not rows:
        raise ValueError("no statistics rows")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
