"""Monitors for the incompressibility conditions, the moment system and the norm Gronwall inequality."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import PhaseField, dx_spectral, moments, velocity_integral
from .linear import CoefficientFields, ModelParams, Trajectory
from .norms import build_stack, norm_family
from .weight import WeightModel


def _f_field(field: PhaseField, weight: WeightModel | None) -> PhaseField:
    if field.kind == "f":
        return field
    if weight is None:
        return PhaseField(field.grid, "f", field.samples, field.t)
    return PhaseField(field.grid, "f", field.samples / weight.omega(field.grid.u), field.t)


def check_Hu(field: PhaseField, tol: float = 1e-7) -> tuple[bool, dict[str, float]]:
    """sup_x |rho - 1| and sup_x |d_x V|; pass iff both are <= tol."""
    if field.kind != "f":
        raise ValueError("check_Hu expects an f field")
    m = moments(field)
    details = {
        "mass_uniformity": float(np.abs(m.rho - 1.0).max()),
        "incompressibility": float(np.abs(dx_spectral(m.V, 1)).max()),
    }
    return details["mass_uniformity"] <= tol and details["incompressibility"] <= tol, details


def _time_derivative(values: np.ndarray, dt: float) -> np.ndarray:
    """Second-order differences along axis 0 (centered inside, one-sided at the ends)."""
    if values.shape[0] < 3:
        raise ValueError("need at least three slices for time derivatives")
    return np.gradient(values, dt, axis=0, edge_order=2)


@dataclass(frozen=True)
class MomentResiduals:
    times: np.ndarray
    continuity: np.ndarray
    second_moment: np.ndarray


def moment_residuals(
    traj: Trajectory,
    params: ModelParams,
    weight: WeightModel | None,
    coeffs: CoefficientFields | None = None,
) -> MomentResiduals:
    """sup_x residuals of d_t rho + d_x V = 0 and
    d_t d_x V + beta d_x V + d_x(rho (d_x P - alpha beta H)) + d_x^2 S = 0.

    P = -S and H = V unless linear coefficient fields are supplied.
    """
    if traj.stride != 1:
        raise ValueError("moment residuals need stride 1")
    ms = [moments(_f_field(f, weight)) for f in traj.fields]
    rho = np.array([m.rho for m in ms])
    V = np.array([m.V for m in ms])
    S = np.array([m.S for m in ms])
    dt = traj.dt
    dxV = dx_spectral(V.T, 1).T
    cont = _time_derivative(rho, dt) + dxV
    if coeffs is None:
        P = -S
        H = V
    else:
        P = np.array([coeffs.Q_at(t) for t in traj.times])
        H = np.array([coeffs.H_at(t) for t in traj.times]) if coeffs.H is not None else V
    dxP = dx_spectral(P.T, 1).T
    flux = rho * (dxP - params.alpha * params.beta * H)
    second = _time_derivative(dxV, dt) + params.beta * dxV + dx_spectral(flux.T, 1).T + dx_spectral(S.T, 2).T
    return MomentResiduals(traj.times, np.abs(cont).max(axis=1), np.abs(second).max(axis=1))


@dataclass(frozen=True)
class GronwallReport:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    tol: float

    @property
    def slacks(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def ok(self) -> bool:
        return bool(np.all(self.slacks >= -self.tol))


def gronwall_diagnostic(
    traj: Trajectory,
    coeffs: CoefficientFields,
    config,
    params: ModelParams,
    gammas,
    tol_rel: float = 1e-2,
) -> GronwallReport:
    """Slack of d/dt ||g||_{H,lam(t);A} against the displayed right-hand side.

    beta = 0: (lam + 1 + lam' + 4 g0 + 16 ||Q||_H) ||g||_Ht + (g1 + 16 g0 + (g0 + 16) ||Q||_Ht) ||g||_H.
    beta != 0: ((1+|beta|)(lam + 1 + lam') + 4 g0 + 16 ||Q||_H + alpha |beta| ||H||_H) ||g||_Ht
               + (g1_hat + 16 g0 + (g0 + 16) ||Q||_Ht + alpha |beta| g0 ||H||_H) ||g||_H.
    """
    A = config.A
    g0, b = gammas.gamma0, abs(params.beta)
    g1 = gammas.gamma1 if params.beta == 0 else gammas.gamma1_hat
    lp = config.lam_prime
    N, Nt, rhs = [], [], []
    for f in traj.fields:
        lam = config.lam(f.t)
        lad = norm_family(build_stack(f, A), lam, A)
        q = norm_family(build_stack(coeffs.Q_at(f.t), A), lam, A)
        N.append(lad.H)
        Nt.append(lad.Htilde)
        if params.beta == 0:
            r = (lam + 1 + lp + 4 * g0 + 16 * q.H) * lad.Htilde + (g1 + 16 * g0 + (g0 + 16) * q.Htilde) * lad.H
        else:
            hH = 0.0
            if params.alpha and coeffs.H is not None:
                hH = norm_family(build_stack(coeffs.H_at(f.t), A), lam, A).H
            ab = params.alpha * b
            r = ((1 + b) * (lam + 1 + lp) + 4 * g0 + 16 * q.H + ab * hH) * lad.Htilde
            r += (g1 + 16 * g0 + (g0 + 16) * q.Htilde + ab * g0 * hH) * lad.H
        rhs.append(r)
    N = np.array(N)
    lhs = _time_derivative(N, traj.dt * traj.stride) if N.size >= 3 else np.zeros_like(N)
    scale = float(max(np.abs(N).max(), np.abs(rhs).max(), 1e-300)) if N.size else 0.0
    if not np.any(N):
        scale = 0.0
    return GronwallReport(traj.times, lhs, np.array(rhs), tol_rel * scale)


@dataclass(frozen=True)
class DriftReport:
    times: np.ndarray
    mass_uniformity: np.ndarray
    incompressibility: np.ndarray
    total_mass_drift: np.ndarray
    tol: float

    @property
    def max_mass(self) -> float:
        return float(self.mass_uniformity.max())

    @property
    def max_incompressibility(self) -> float:
        return float(self.incompressibility.max())

    @property
    def ok(self) -> bool:
        return self.max_mass <= self.tol and self.max_incompressibility <= self.tol


def drift_decay(traj: Trajectory, weight: WeightModel | None, tol: float = 5e-4) -> DriftReport:
    """Per-slice sup_x|rho - 1|, sup_x|d_x V| and |int int f - 1|."""
    mu, inc, mass = [], [], []
    for field in traj.fields:
        f = _f_field(field, weight)
        _, d = check_Hu(f, tol)
        mu.append(d["mass_uniformity"])
        inc.append(d["incompressibility"])
        mass.append(abs(float(np.mean(velocity_integral(f.grid, f.samples))) - 1.0))
    return DriftReport(traj.times, np.array(mu), np.array(inc), np.array(mass), tol)


@dataclass(frozen=True)
class InvariantReport:
    times: np.ndarray
    mass_uniformity: np.ndarray
    incompressibility: np.ndarray
    total_mass_drift: np.ndarray
    continuity_residual: np.ndarray
    second_moment_residual: np.ndarray
    gronwall_slacks: np.ndarray

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mass_uniformity", "incompressibility", "total_mass_drift", "continuity_residual", "second_moment_residual", "gronwall_slack"])
            for row in zip(self.times, self.mass_uniformity, self.incompressibility, self.total_mass_drift, self.continuity_residual, self.second_moment_residual, self.gronwall_slacks):
                w.writerow([repr(float(v)) for v in row])


def invariant_report(
    traj: Trajectory,
    params: ModelParams,
    weight: WeightModel | None,
    coeffs: CoefficientFields | None = None,
    gronwall: GronwallReport | None = None,
) -> InvariantReport:
    d = drift_decay(traj, weight)
    n = len(traj.fields)
    if traj.stride == 1 and n >= 3:
        mr = moment_residuals(traj, params, weight, coeffs)
        cont, sec = mr.continuity, mr.second_moment
    else:
        cont = sec = np.full(n, np.nan)
    slack = gronwall.slacks if gronwall is not None else np.full(n, np.nan)
    return InvariantReport(traj.times, d.mass_uniformity, d.incompressibility, d.total_mass_drift, cont, sec, slack)
