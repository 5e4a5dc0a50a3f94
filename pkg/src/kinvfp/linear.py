"""Time stepper for the linear weighted kinetic Fokker-Planck equation with given Q, H.

The weighted unknown g = omega f solves

    d_t g + u d_x g - [D - sigma^2 d_u ln omega] d_u g - sigma^2/2 d_u^2 g
        = -g D d_u ln omega + g (beta - sigma^2 h),

with D = d_x Q + beta (u - alpha H).  This is the exact conjugate of the
conservative equation d_t f + u d_x f = d_u(D f + sigma^2/2 d_u f).

Strang splitting: half x-transport (spectral phase shift), full velocity step
with coefficients frozen at the midpoint, half x-transport.  Two velocity
schemes are provided:

* ``"sg"`` (default): the velocity step acts on f = g/omega with an
  exponentially fitted (Scharfetter-Gummel) flux and Crank-Nicolson in time,
  no-flux ends.  Sampled Maxwellians in equilibrium are exact discrete steady
  states and mass is conserved to rounding.  For sigma = 0 the affine drift is
  integrated exactly along characteristics.
* ``"semi_lagrangian"``: reaction / cubic semi-Lagrangian advection /
  Crank-Nicolson diffusion directly on g, zero-Dirichlet ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates

from .grid import PhaseField, PhaseGrid, dx_spectral, shift_x
from .weight import WeightModel

SCHEMES = ("sg", "semi_lagrangian")
DT_SAFETY = 2.0


@dataclass(frozen=True)
class ModelParams:
    sigma: float = 1.0
    beta: float = 0.0
    alpha: int = 0

    def __post_init__(self):
        if self.alpha not in (0, 1):
            raise ValueError("alpha must be 0 or 1")
        if not math.isfinite(self.sigma) or not math.isfinite(self.beta):
            raise ValueError("sigma and beta must be finite")


@dataclass(frozen=True)
class CoefficientFields:
    """Q and H stored at ``times`` (shape (nt,) and (nt, nx)), linear in t in between."""

    times: np.ndarray
    Q: np.ndarray
    H: np.ndarray | None = None
    dQ: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if Q.shape[0] != times.shape[0]:
            raise ValueError("Q needs one row per stored time")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("times must be increasing")
        if not np.all(np.isfinite(Q)):
            raise ValueError("Q must be finite")
        H = None if self.H is None else np.atleast_2d(np.asarray(self.H, dtype=float))
        if H is not None and (H.shape != Q.shape or not np.all(np.isfinite(H))):
            raise ValueError("H must be finite with the shape of Q")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "dQ", dx_spectral(Q.T, 1).T)

    @classmethod
    def zeros(cls, nx: int) -> CoefficientFields:
        return cls(np.array([0.0]), np.zeros((1, nx)))

    @classmethod
    def frozen(cls, Q: np.ndarray, H: np.ndarray | None = None) -> CoefficientFields:
        return cls(np.array([0.0]), np.asarray(Q)[None, :], None if H is None else np.asarray(H)[None, :])

    def _interp(self, values: np.ndarray, t: float) -> np.ndarray:
        ts = self.times
        if ts.size == 1:
            return values[0]
        if t <= ts[0]:
            return values[0]
        if t >= ts[-1]:
            return values[-1]
        i = int(np.searchsorted(ts, t, side="right")) - 1
        theta = (t - ts[i]) / (ts[i + 1] - ts[i])
        # exact whenever the two slices agree
        return values[i] + theta * (values[i + 1] - values[i])

    def Q_at(self, t: float) -> np.ndarray:
        return self._interp(self.Q, t)

    def dQ_at(self, t: float) -> np.ndarray:
        return self._interp(self.dQ, t)

    def H_at(self, t: float) -> np.ndarray:
        if self.H is None:
            return np.zeros(self.Q.shape[1])
        return self._interp(self.H, t)


def _lnw_terms(grid: PhaseGrid, weight: WeightModel | None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """omega, d_u ln omega and h on the velocity nodes (1, 0, 0 when the weight is disabled)."""
    u = grid.u
    if weight is None:
        return np.ones_like(u), np.zeros_like(u), np.zeros_like(u)
    return weight.omega(u), weight.dlnw(u), weight.h(u)


def drift(grid: PhaseGrid, coeffs: CoefficientFields, params: ModelParams, t: float, u: np.ndarray | None = None) -> np.ndarray:
    """D(t, x, u) = d_x Q + beta (u - alpha H), shape (nx, len(u))."""
    u = grid.u if u is None else u
    c0 = coeffs.dQ_at(t) - params.alpha * params.beta * coeffs.H_at(t)
    return c0[:, None] + params.beta * u[None, :]


def dt_limit(grid: PhaseGrid, coeffs: CoefficientFields, params: ModelParams, weight: WeightModel | None, t: float) -> float:
    """DT_SAFETY * min(dx / u_max, du / max|b|) with b the g-drift D - sigma^2 d_u ln omega."""
    _, L, _ = _lnw_terms(grid, weight)
    b = drift(grid, coeffs, params, t) - params.sigma**2 * L[None, :]
    bmax = float(np.abs(b).max())
    lim = grid.dx / grid.u_max
    if bmax > 0:
        lim = min(lim, grid.du / bmax)
    return DT_SAFETY * lim


def _bernoulli(z: np.ndarray) -> np.ndarray:
    """B(z) = z / (e^z - 1), B(0) = 1."""
    out = np.ones_like(z)
    nz = np.abs(z) > 1e-12
    out[nz] = z[nz] / np.expm1(z[nz])
    return out


def _thomas(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve tridiagonal systems row by row; arrays (nrows, n), lower[:, 0] and upper[:, -1] unused."""
    n = diag.shape[1]
    c = np.empty_like(diag)
    d = np.empty_like(rhs)
    c[:, 0] = upper[:, 0] / diag[:, 0]
    d[:, 0] = rhs[:, 0] / diag[:, 0]
    for j in range(1, n):
        den = diag[:, j] - lower[:, j] * c[:, j - 1]
        c[:, j] = upper[:, j] / den if j < n - 1 else 0.0
        d[:, j] = (rhs[:, j] - lower[:, j] * d[:, j - 1]) / den
    x = np.empty_like(rhs)
    x[:, -1] = d[:, -1]
    for j in range(n - 2, -1, -1):
        x[:, j] = d[:, j] - c[:, j] * x[:, j + 1]
    return x


def _tri_apply(lower, diag, upper, f):
    out = diag * f
    out[:, 1:] += lower[:, 1:] * f[:, :-1]
    out[:, :-1] += upper[:, :-1] * f[:, 1:]
    return out


def _sg_operator(grid: PhaseGrid, D_half: np.ndarray, sigma: float):
    """Tridiagonal L f = d_u(D f + sigma^2/2 d_u f) with fitted fluxes and no-flux ends."""
    a = 0.5 * sigma * sigma
    du = grid.du
    delta = D_half * du / a
    bp, bm = _bernoulli(delta), _bernoulli(-delta)
    nx, nu = D_half.shape[0], grid.nu
    k = a / du**2
    lower = np.zeros((nx, nu))
    diag = np.zeros((nx, nu))
    upper = np.zeros((nx, nu))
    # flux through face j+1/2 is k du (bm f_{j+1} - bp f_j)
    upper[:, :-1] = k * bm
    diag[:, :-1] -= k * bp
    lower[:, 1:] = k * bp
    diag[:, 1:] -= k * bm
    return lower, diag, upper


def _velocity_step_sg(f: np.ndarray, grid: PhaseGrid, coeffs, params: ModelParams, t_mid: float, dt: float) -> np.ndarray:
    if params.sigma != 0:
        u_half = grid.u[:-1] + 0.5 * grid.du
        lower, diag, upper = _sg_operator(grid, drift(grid, coeffs, params, t_mid, u_half), params.sigma)
        h = 0.5 * dt
        rhs = f + h * _tri_apply(lower, diag, upper, f)
        return _thomas(-h * lower, 1.0 - h * diag, -h * upper, rhs)
    # sigma = 0: f is multiplied by e^(beta dt) along du/dt = -(c0 + beta u)
    b = params.beta
    c0 = coeffs.dQ_at(t_mid) - params.alpha * b * coeffs.H_at(t_mid)
    if b == 0 and not np.any(c0):
        return f.copy()
    u = grid.u[None, :]
    if b == 0:
        back = u + c0[:, None] * dt
    else:
        r = (c0 / b)[:, None]
        back = (u + r) * math.exp(b * dt) - r
    return math.exp(b * dt) * _interp_u(f, grid, back)


def _interp_u(values: np.ndarray, grid: PhaseGrid, u_points: np.ndarray) -> np.ndarray:
    """Cubic spline interpolation along u per row, zero beyond the cutoff."""
    rows = np.broadcast_to(np.arange(values.shape[0])[:, None], u_points.shape)
    cols = (u_points + grid.u_max) / grid.du
    return map_coordinates(values, [rows, cols], order=3, mode="grid-constant", cval=0.0)


def _velocity_step_sl(g: np.ndarray, grid: PhaseGrid, coeffs, params: ModelParams, weight, t_mid: float, dt: float) -> np.ndarray:
    _, L, h = _lnw_terms(grid, weight)
    s2 = params.sigma**2
    ab = params.alpha * params.beta
    c0 = (coeffs.dQ_at(t_mid) - ab * coeffs.H_at(t_mid))[:, None]
    react = -(c0 + params.beta * grid.u[None, :]) * L[None, :] + params.beta - s2 * h[None, :]
    half = np.exp(0.5 * dt * react)
    g = g * half

    def b(uq):
        if weight is None:
            Lq = 0.0
        else:
            Lq = weight.dlnw(uq)
        return c0 + params.beta * uq - s2 * Lq

    u = np.broadcast_to(grid.u[None, :], g.shape)
    # characteristics du/dt = -b; midpoint backtracking
    u_mid = u + 0.5 * dt * b(u)
    g = _interp_u(g, grid, u + dt * b(u_mid))
    if params.sigma != 0:
        k = 0.5 * s2 / grid.du**2
        n = grid.nu
        lower = np.full_like(g, k)
        upper = np.full_like(g, k)
        diag = np.full_like(g, -2 * k)
        lower[:, 0] = upper[:, -1] = 0.0
        hdt = 0.5 * dt
        rhs = g + hdt * _tri_apply(lower, diag, upper, g)
        g = _thomas(-hdt * lower, 1.0 - hdt * diag, -hdt * upper, rhs)
        g[:, 0] = g[:, n - 1] = 0.0
    return g * half


def step(
    g: PhaseField,
    coeffs: CoefficientFields,
    params: ModelParams,
    weight: WeightModel | None,
    t: float,
    dt: float,
    scheme: str = "sg",
    check_dt: bool = True,
) -> PhaseField:
    """One Strang step of size dt from time t.  ``weight=None`` disables the omega terms."""
    if g.kind != "g":
        raise ValueError("step expects a g field")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    grid = g.grid
    t_mid = t + 0.5 * dt
    if check_dt:
        lim = dt_limit(grid, coeffs, params, weight, t_mid)
        if abs(dt) > lim * (1 + 1e-12):
            raise ValueError(f"dt={dt!r} exceeds the accuracy limit {lim!r}")
    shifts = 0.5 * dt * grid.u
    vals = shift_x(g.samples, shifts)
    if scheme == "sg":
        w, _, _ = _lnw_terms(grid, weight)
        vals = _velocity_step_sg(vals / w, grid, coeffs, params, t_mid, dt) * w
    else:
        vals = _velocity_step_sl(vals, grid, coeffs, params, weight, t_mid, dt)
    vals = shift_x(vals, shifts)
    if not np.all(np.isfinite(vals)):
        bad = np.argwhere(~np.isfinite(vals))[0]
        raise FloatingPointError(f"non-finite value at t={t!r}, dt={dt!r}, node (ix, iu)={tuple(int(i) for i in bad)}")
    return g.with_samples(vals, t + dt)


def sup_norm(samples: np.ndarray, refine: int = 16) -> float:
    """Sup over x of a band-limited field (per velocity column), maximized over the u nodes.

    The x-sup is located on a refined trigonometric interpolant and polished by
    Newton steps, so that exact x-translations leave it invariant.
    """
    nx = samples.shape[0]
    coeffs = np.fft.rfft(samples, axis=0) / nx
    m = np.fft.rfftfreq(nx, d=1.0 / nx)
    wts = np.full(m.shape, 2.0)
    wts[0] = 1.0
    if nx % 2 == 0:
        wts[-1] = 1.0
    fine = np.fft.irfft(coeffs * nx, n=nx * refine, axis=0) * refine
    absfine = np.abs(fine)
    col = int(np.argmax(absfine.max(axis=0)))
    best = float(absfine[:, col].max())
    # polish the few columns whose refined max is close to the best
    cand = np.nonzero(absfine.max(axis=0) >= best * (1 - 1e-2))[0]
    k = 2j * math.pi * m
    for j in cand:
        c = coeffs[:, j] * wts
        x = np.argmax(absfine[:, j]) / (nx * refine)
        for _ in range(4):
            e = np.exp(k * x)
            d1 = float(np.real(np.sum(c * k * e)))
            d2 = float(np.real(np.sum(c * k * k * e)))
            if d2 == 0:
                break
            x -= d1 / d2
        val = abs(float(np.real(np.sum(c * np.exp(k * x)))))
        best = max(best, val)
    return best


@dataclass
class Trajectory:
    fields: list[PhaseField]
    times: np.ndarray
    dt: float
    stride: int
    sup_f: np.ndarray
    scheme: str = "sg"

    @property
    def final(self) -> PhaseField:
        return self.fields[-1]


def solve_linear(
    g0: PhaseField,
    coeffs: CoefficientFields,
    params: ModelParams,
    weight: WeightModel | None,
    T: float,
    nt: int,
    stride: int = 1,
    scheme: str = "sg",
    check_dt: bool = True,
) -> Trajectory:
    """Advance g0 over [0, T] in nt equal steps, keeping every stride-th slice and the last one."""
    if T < 0 or nt < 0 or (T > 0 and nt == 0):
        raise ValueError("need T >= 0 and nt >= 1 when T > 0")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    w, _, _ = _lnw_terms(g0.grid, weight)
    dt = T / nt if nt else 0.0
    g = g0
    fields, times = [g0], [g0.t]
    sups = [sup_norm(g0.samples / w)]
    for n in range(nt):
        g = step(g, coeffs, params, weight, g0.t + n * dt, dt, scheme, check_dt)
        sups.append(sup_norm(g.samples / w))
        if (n + 1) % stride == 0 or n + 1 == nt:
            fields.append(g)
            times.append(g.t)
    return Trajectory(fields, np.array(times), dt, stride, np.array(sups), scheme)


@dataclass(frozen=True)
class MaxPrincipleReport:
    slacks: np.ndarray
    tol: float
    scale: float

    @property
    def min_slack(self) -> float:
        return float(self.slacks.min()) if self.slacks.size else 0.0

    @property
    def ok(self) -> bool:
        return self.min_slack >= -self.tol


def max_principle_residual(traj: Trajectory, c_norm=0.0, F_norm=0.0, tol_rel: float = 1e-3, scale: float | None = None) -> MaxPrincipleReport:
    """Per-step slack of d/dt ||f||_inf <= ||c|| ||f||_inf + ||F||.

    ``c_norm`` and ``F_norm`` are numbers or callables of t.  The difference
    quotient is compared with the right side evaluated at the larger end value.
    """
    m = traj.sup_f
    dt = traj.dt
    if m.size < 2 or dt == 0:
        return MaxPrincipleReport(np.zeros(0), 0.0, 0.0)
    t0 = traj.times[0]
    cf = c_norm if callable(c_norm) else (lambda t, v=c_norm: v)
    Ff = F_norm if callable(F_norm) else (lambda t, v=F_norm: v)
    slacks = np.empty(m.size - 1)
    for n in range(m.size - 1):
        ta, tb = t0 + n * dt, t0 + (n + 1) * dt
        c = max(abs(cf(ta)), abs(cf(tb)))
        F = max(abs(Ff(ta)), abs(Ff(tb)))
        slacks[n] = c * max(m[n], m[n + 1]) + F - (m[n + 1] - m[n]) / dt
    if scale is None:
        scale = max(float(m[0]), float(Ff(t0)) * dt * (m.size - 1), 1e-300)
    return MaxPrincipleReport(slacks, tol_rel * scale, scale)
