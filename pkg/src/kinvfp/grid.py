"""Phase-space grid on the torus x [-u_max, u_max], fields, moments and initial data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.polynomial import hermite_e
from scipy.integrate import simpson

from .weight import WeightModel

# admissible undershoot of f0 relative to its maximum (Gaussian tails of eps * psi * M)
NEG_TOL_REL = 1e-3
SPECTRAL_FLOOR = 1e-13


@dataclass(frozen=True)
class PhaseGrid:
    nx: int
    nu: int
    u_max: float

    def __post_init__(self):
        if self.nx < 8 or self.nx & (self.nx - 1):
            raise ValueError(f"nx must be a power of two >= 8, got {self.nx}")
        if self.nu < 5 or self.nu % 2 == 0:
            raise ValueError(f"nu must be odd and >= 5, got {self.nu}")
        if not self.u_max > 0:
            raise ValueError("u_max must be positive")

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def du(self) -> float:
        return 2.0 * self.u_max / (self.nu - 1)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) / self.nx

    @property
    def u(self) -> np.ndarray:
        return np.linspace(-self.u_max, self.u_max, self.nu)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.u, indexing="ij")


@dataclass(frozen=True)
class PhaseField:
    """Samples of f or g = omega f, shape (nx, nu)."""

    grid: PhaseGrid
    kind: str
    samples: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.kind not in ("f", "g"):
            raise ValueError(f"kind must be 'f' or 'g', got {self.kind!r}")
        if self.samples.shape != (self.grid.nx, self.grid.nu):
            raise ValueError(f"samples shape {self.samples.shape} does not match grid")
        if not np.all(np.isfinite(self.samples)):
            raise FloatingPointError("non-finite samples in phase field")

    def with_samples(self, samples: np.ndarray, t: float | None = None) -> PhaseField:
        return replace(self, samples=samples, t=self.t if t is None else t)


@dataclass(frozen=True)
class MomentFields:
    rho: np.ndarray
    V: np.ndarray
    S: np.ndarray

    @property
    def P(self) -> np.ndarray:
        return -self.S


@dataclass(frozen=True)
class InitialDataSpec:
    """f0 = amplitude * M(u) (1 + eps cos(2 pi mode x) (u^2 - var)/var).

    C0, lambda_bar, m, n are the claimed analyticity constants of the
    certificate hypothesis.  ``amplitude`` scales the total mass; unit mass is
    the incompressible setting.
    """

    s: int = 4
    eps: float = 0.05
    mode: int = 1
    thermal_var: float = 1.0
    C0: float = 1.0
    lambda_bar: float = 0.5
    m: int = 0
    n: int = 0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.mode < 1:
            raise ValueError("mode must be >= 1")
        if not self.thermal_var > 0:
            raise ValueError("thermal_var must be > 0")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be > 0")

    def maxwellian(self, u):
        v = self.thermal_var
        return np.exp(-np.asarray(u) ** 2 / (2 * v)) / math.sqrt(2 * math.pi * v)

    def __call__(self, x, u):
        """Pointwise f0(x, u)."""
        v = self.thermal_var
        u = np.asarray(u, dtype=float)
        psi = (u * u - v) / v
        pert = 1.0 + self.eps * np.cos(2 * math.pi * self.mode * np.asarray(x)) * psi
        return self.amplitude * self.maxwellian(u) * pert


def default_u_max(thermal_var: float) -> float:
    return 8.0 * math.sqrt(thermal_var)


def make_initial_data(spec: InitialDataSpec, grid: PhaseGrid) -> PhaseField:
    if grid.u_max < 6.0 * math.sqrt(spec.thermal_var):
        raise ValueError("u_max must be at least 6 thermal widths")
    X, U = grid.mesh()
    f0 = spec(X, U)
    if f0.min() < -NEG_TOL_REL * f0.max():
        raise ValueError(f"eps={spec.eps} makes f0 negative (min {f0.min():.3e})")
    return PhaseField(grid, "f", f0, 0.0)


def velocity_integral(grid: PhaseGrid, values: np.ndarray) -> np.ndarray:
    """Simpson quadrature over u (last axis)."""
    return simpson(values, dx=grid.du, axis=-1)


def moments(field: PhaseField) -> MomentFields:
    if field.kind != "f":
        raise ValueError("moments require kind 'f'; apply weight_transform first")
    u = field.grid.u
    f = field.samples
    return MomentFields(
        rho=velocity_integral(field.grid, f),
        V=velocity_integral(field.grid, f * u),
        S=velocity_integral(field.grid, f * u * u),
    )


def weight_transform(field: PhaseField, weight: WeightModel, direction: str) -> PhaseField:
    """direction 'to_g' multiplies by omega, 'to_f' divides by it."""
    w = weight.omega(field.grid.u)
    if direction == "to_g":
        if field.kind != "f":
            raise ValueError("to_g expects an f field")
        return replace(field, kind="g", samples=field.samples * w)
    if direction == "to_f":
        if field.kind != "g":
            raise ValueError("to_f expects a g field")
        return replace(field, kind="f", samples=field.samples / w)
    raise ValueError(f"unknown direction {direction!r}")


# -- spectral operations in x ------------------------------------------------


def _denoise(coeffs: np.ndarray) -> np.ndarray:
    scale = np.abs(coeffs).max()
    if scale == 0:
        return coeffs
    out = coeffs.copy()
    out[np.abs(out) < SPECTRAL_FLOOR * scale] = 0.0
    return out


def dx_spectral(values: np.ndarray, order: int = 1) -> np.ndarray:
    """order-th x-derivative of 1-periodic samples along axis 0."""
    nx = values.shape[0]
    if order == 0:
        return np.array(values, dtype=float, copy=True)
    coeffs = _denoise(np.fft.rfft(values, axis=0))
    m = np.fft.rfftfreq(nx, d=1.0 / nx)
    factor = (2j * math.pi * m) ** order
    if order % 2:
        factor[-1] = 0.0
    shape = (-1,) + (1,) * (values.ndim - 1)
    return np.fft.irfft(coeffs * factor.reshape(shape), n=nx, axis=0)


def shift_x(samples: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Periodic translation: column j becomes samples(x - shifts[j], u_j)."""
    nx = samples.shape[0]
    m = np.fft.rfftfreq(nx, d=1.0 / nx)
    phase = np.exp(-2j * math.pi * np.outer(m, shifts))
    return np.fft.irfft(np.fft.rfft(samples, axis=0) * phase, n=nx, axis=0)


def interpolate_x(values: np.ndarray, x: float) -> np.ndarray:
    """Trigonometric interpolation of 1-periodic samples (axis 0) at a point x."""
    nx = values.shape[0]
    coeffs = np.fft.rfft(values, axis=0)
    m = np.fft.rfftfreq(nx, d=1.0 / nx)
    w = np.exp(2j * math.pi * m * x) * 2.0
    w[0] = 1.0
    if nx % 2 == 0:
        w[-1] = math.cos(math.pi * nx * x)
    shape = (-1,) + (1,) * (values.ndim - 1)
    return (coeffs * w.reshape(shape)).real.sum(axis=0) / nx


# -- analyticity hypothesis on the initial data -------------------------------


@dataclass(frozen=True)
class InitialBoundReport:
    """Entries keyed by (k, l) with k the u-order and l the x-order."""

    table: dict[tuple[int, int], float]
    bound_unit: dict[tuple[int, int], float]
    claimed_C0: float
    smallest_C0: float
    failures: tuple[tuple[int, int], ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.failures


def _maxwellian_derivative(spec: InitialDataSpec, k: int, u: np.ndarray) -> np.ndarray:
    v = spec.thermal_var
    z = u / math.sqrt(v)
    he = hermite_e.hermeval(z, [0] * k + [1])
    return (-1) ** k * he * spec.maxwellian(u) / v ** (k / 2)


def verify_initial_bounds(spec: InitialDataSpec, grid: PhaseGrid, k_range, l_range) -> InitialBoundReport:
    """Check ||(1+u^2)^(s/2) d_x^l d_u^k f0|| <= C0 (k+m)! (l+n)! / lambda_bar^(k+l).

    Derivatives of the perturbed Maxwellian are exact (Hermite polynomials);
    the sup is taken over the velocity nodes refined eightfold.
    """
    u = np.linspace(-grid.u_max, grid.u_max, 8 * (grid.nu - 1) + 1)
    w = (1.0 + u * u) ** (spec.s // 2)
    v = spec.thermal_var
    kx = 2 * math.pi * spec.mode
    table, unit, failures = {}, {}, []
    smallest = 0.0
    for k in k_range:
        base = _maxwellian_derivative(spec, k, u)
        pert = spec.eps * v * _maxwellian_derivative(spec, k + 2, u)
        for l in l_range:
            if l == 0:
                val = np.max(w * (np.abs(base) + np.abs(pert)))
            else:
                val = kx**l * np.max(w * np.abs(pert))
            val *= spec.amplitude
            b = math.factorial(k + spec.m) * math.factorial(l + spec.n) / spec.lambda_bar ** (k + l)
            table[(k, l)] = float(val)
            unit[(k, l)] = b
            smallest = max(smallest, float(val / b))
            if val > spec.C0 * b:
                failures.append((k, l))
    return InitialBoundReport(table, unit, spec.C0, smallest, tuple(failures))


# -- snapshot files ------------------------------------------------------------


def write_snapshot(path: str | Path, field: PhaseField) -> None:
    g = field.grid
    lines = [f"KINVFP v1 {g.nx} {g.nu} {g.u_max!r} {float(field.t)!r} {field.kind}"]
    for row in field.samples:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_snapshot(path: str | Path) -> PhaseField:
    text = Path(path).read_text(encoding="ascii").splitlines()
    head = text[0].split()
    if len(head) != 7 or head[0] != "KINVFP" or head[1] != "v1":
        raise ValueError(f"{path}: not a KINVFP v1 snapshot")
    nx, nu = int(head[2]), int(head[3])
    grid = PhaseGrid(nx, nu, float(head[4]))
    rows = [line.split() for line in text[1 : 1 + nx]]
    if len(rows) != nx or any(len(r) != nu for r in rows):
        raise ValueError(f"{path}: expected {nx} rows of {nu} values")
    samples = np.array([[float(v) for v in r] for r in rows])
    return PhaseField(grid, head[6], samples, float(head[5]))
