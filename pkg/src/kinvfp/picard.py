"""Fixed-point iteration g_{n+1} = Phi(g_n) for the nonlinear weighted equation.

Phi(g) solves the linear equation with Q = -int u^2/omega g du and, when
alpha = 1, H = int u/omega g du extracted from g at every stored time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import PhaseField, velocity_integral
from .linear import CoefficientFields, ModelParams, Trajectory, solve_linear
from .norms import build_stack, ladder_value, norm_family
from .weight import WeightModel


class PicardDivergence(RuntimeError):
    def __init__(self, message: str, state: PicardState):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class PicardConfig:
    lambda0: float
    K: float
    T: float
    M: float
    A: int = 4
    nt: int = 8
    tol_fp_rel: float = 1e-8
    max_iter: int = 50
    scheme: str = "sg"

    def __post_init__(self):
        if not self.lambda0 > 0 or not self.K > 0 or not self.T > 0:
            raise ValueError("lambda0, K and T must be positive")
        if not self.lambda0 - (1 + self.K) * self.T > 0:
            raise ValueError("need lambda0 - (1 + K) T > 0")
        if self.M < 0:
            raise ValueError("M must be nonnegative")
        if self.nt < 1 or self.max_iter < 1 or self.A < 1:
            raise ValueError("nt, max_iter and A must be >= 1")

    def lam(self, t: float) -> float:
        return self.lambda0 - (1 + self.K) * t

    @property
    def lam_prime(self) -> float:
        return -(1 + self.K)


@dataclass
class PicardState:
    n: int = 0
    trajectory: Trajectory | None = None
    Q_history: list[np.ndarray] = field(default_factory=list)
    H_history: list[np.ndarray | None] = field(default_factory=list)
    metrics: list[float] = field(default_factory=list)
    tol_fp: float = 0.0
    converged: bool = False
    residual: float = math.nan
    M_hat: float = math.nan

    @property
    def ratios(self) -> list[float]:
        D = self.metrics
        return [D[i + 1] / D[i] if D[i] > 0 else math.nan for i in range(len(D) - 1)]

    def write_csv(self, path: str | Path) -> None:
        r = [math.nan] + self.ratios
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "D_n", "r_n"])
            for i, d in enumerate(self.metrics):
                w.writerow([i + 1, repr(float(d)), repr(float(r[i]))])


def source_fields(traj: Trajectory | list[PhaseField], weight: WeightModel, params: ModelParams) -> CoefficientFields:
    """Q and (alpha = 1) H at every stored slice by Simpson quadrature."""
    fields = traj.fields if isinstance(traj, Trajectory) else traj
    if any(f.kind != "g" for f in fields):
        raise ValueError("source_fields expects g fields")
    grid = fields[0].grid
    u = grid.u
    w = weight.omega(u)
    times = np.array([f.t for f in fields])
    Q = np.array([-velocity_integral(grid, f.samples * (u * u / w)) for f in fields])
    H = np.array([velocity_integral(grid, f.samples * (u / w)) for f in fields]) if params.alpha else None
    return CoefficientFields(times, Q, H)


@dataclass(frozen=True)
class DominationReport:
    Q_over_g: float
    H_over_g: float | None
    C_omega: float

    @property
    def ok(self) -> bool:
        hq = self.Q_over_g <= 1 + 1e-6
        hh = self.H_over_g is None or self.H_over_g <= self.C_omega * (1 + 1e-6)
        return hq and hh


def domination_check(g: PhaseField, coeffs: CoefficientFields, weight: WeightModel, lam: float, A: int, index: int = 0) -> DominationReport:
    """Ratios ||Q||_{H,lam} / ||g||_{H,lam} (<= 1) and ||H||/||g|| (<= C_omega) at one slice."""
    gH = norm_family(build_stack(g, A), lam, A).H
    qH = norm_family(build_stack(coeffs.Q[index], A), lam, A).H
    hq = None
    if coeffs.H is not None:
        hq = norm_family(build_stack(coeffs.H[index], A), lam, A).H / gH if gH else 0.0
    return DominationReport(qH / gH if gH else 0.0, hq, weight.C_omega)


def _slice_norms(samples: np.ndarray, grid, lam: float, A: int) -> tuple[float, float]:
    st = build_stack(samples, A, grid)
    return ladder_value(st, lam, 0), ladder_value(st, lam, 1)


def contraction_metric(psi: list[PhaseField] | list[np.ndarray], times, config: PicardConfig, grid=None) -> float:
    """max{ max_t ||psi(t)||_{lam(t),0}, int_0^T ||psi(t)||_{lam(t),1} dt } with A-truncated norms."""
    times = np.asarray(times, dtype=float)
    n0, n1 = [], []
    for p, t in zip(psi, times):
        samples, g = (p.samples, p.grid) if isinstance(p, PhaseField) else (p, grid)
        a, b = _slice_norms(samples, g, config.lam(t), config.A)
        n0.append(a)
        n1.append(b)
    integral = float(np.trapezoid(n1, times)) if len(times) > 1 else 0.0
    return float(max(max(n0), integral))


@dataclass(frozen=True)
class BallReport:
    sup_H: float
    int_Htilde: float
    M: float

    @property
    def member(self) -> bool:
        return self.sup_H <= self.M and self.int_Htilde <= self.M


def ball_membership(traj: Trajectory, config: PicardConfig) -> BallReport:
    Hs, Hts = [], []
    for f in traj.fields:
        lad = norm_family(build_stack(f, config.A), config.lam(f.t), config.A)
        Hs.append(lad.H)
        Hts.append(lad.Htilde)
    integral = float(np.trapezoid(Hts, traj.times)) if len(traj.times) > 1 else 0.0
    return BallReport(float(max(Hs)), integral, config.M)


def _difference_metric(a: Trajectory, b: Trajectory, config: PicardConfig) -> float:
    diffs = [fa.samples - fb.samples for fa, fb in zip(a.fields, b.fields)]
    return contraction_metric(diffs, a.times, config, a.fields[0].grid)


def _constant_trajectory(g0: PhaseField, config: PicardConfig) -> Trajectory:
    dt = config.T / config.nt
    fields = [g0.with_samples(g0.samples, g0.t + n * dt) for n in range(config.nt + 1)]
    return Trajectory(fields, np.array([f.t for f in fields]), dt, 1, np.zeros(config.nt + 1), config.scheme)


def iterate(
    g0: PhaseField,
    config: PicardConfig,
    params: ModelParams,
    weight: WeightModel,
    waive_ball: bool = False,
    gammas=None,
) -> tuple[Trajectory, PicardState]:
    """Picard iteration started from the time-constant trajectory g(t) = g0."""
    if g0.kind != "g":
        raise ValueError("iterate expects a g field")
    current = _constant_trajectory(g0, config)
    if not waive_ball:
        ball = ball_membership(current, config)
        if not ball.member:
            raise ValueError(f"g0 outside the M-ball (sup H={ball.sup_H!r}, int Htilde={ball.int_Htilde!r}, M={config.M!r})")
    state = PicardState()
    scale = contraction_metric([g0], [0.0], config, g0.grid)
    state.tol_fp = config.tol_fp_rel * scale
    if gammas is not None:
        gH = norm_family(build_stack(g0, config.A), config.lambda0, config.A).H
        g1 = gammas.gamma1 if params.beta == 0 else gammas.gamma1_hat
        expo = config.T * (g1 + 16 * gammas.gamma0) + (16 + gammas.gamma0) * config.M
        state.M_hat = gH * math.exp(expo) if expo < 700 else math.inf
    rises = 0
    for n in range(config.max_iter):
        coeffs = source_fields(current, weight, params)
        state.Q_history.append(coeffs.Q)
        state.H_history.append(coeffs.H)
        nxt = solve_linear(g0, coeffs, params, weight, config.T, config.nt, scheme=config.scheme)
        D = _difference_metric(nxt, current, config)
        state.metrics.append(D)
        state.n = n + 1
        current = nxt
        state.trajectory = current
        if not math.isfinite(D):
            raise PicardDivergence(f"non-finite metric at iteration {n + 1}", state)
        if len(state.metrics) > 1 and D > state.metrics[-2]:
            rises += 1
            if rises >= 3:
                raise PicardDivergence(f"metric increased three times in a row (D={D!r} at iteration {n + 1})", state)
        else:
            rises = 0
        if D <= state.tol_fp:
            state.converged = True
            break
    # one more application of Phi measures the fixed-point residual
    coeffs = source_fields(current, weight, params)
    again = solve_linear(g0, coeffs, params, weight, config.T, config.nt, scheme=config.scheme)
    state.residual = _difference_metric(again, current, config)
    return current, state
