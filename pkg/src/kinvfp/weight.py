"""Velocity weight omega(u) = c (1 + u^2)^(s/2) and its exact derivative ladders.

Every derivative of ln(omega), of h and of s/(1+u^2) is a rational function
N(u) / (1+u^2)^p.  The numerators N are generated by the recurrence

    N_next = (1 + u^2) N' - 2 p u N,

stored as tuples of ``Fraction`` coefficients (lowest degree first) and
converted to floating point only at evaluation time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

Poly = tuple[Fraction, ...]

KINDS = ("dlnw", "h", "inv1pu2")


def _trim(p: list[Fraction]) -> Poly:
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return tuple(p)


def poly_derivative(p: Poly) -> Poly:
    if len(p) == 1:
        return (Fraction(0),)
    return _trim([k * p[k] for k in range(1, len(p))])


def ladder_step(p: Poly, power: int) -> Poly:
    """Numerator of d/du [p(u) / (1+u^2)^power], over (1+u^2)^(power+1)."""
    dp = poly_derivative(p)
    out = [Fraction(0)] * (len(p) + 2)
    for k, ck in enumerate(dp):
        out[k] += ck
        out[k + 2] += ck
    for k, ck in enumerate(p):
        out[k + 1] -= 2 * power * ck
    return _trim(out)


def poly_eval(p: Poly | np.ndarray, u):
    """Horner evaluation of a coefficient vector (lowest degree first)."""
    coeffs = np.asarray([float(c) for c in p], dtype=float)
    return np.polynomial.polynomial.polyval(u, coeffs)


def rational_sup(num: Poly, power: int, grid: np.ndarray | None = None) -> float:
    """sup over the real line of |num(u) / (1+u^2)^power|.

    Candidates are the real critical points (roots of the next ladder numerator),
    the limit at infinity and, optionally, a sampling grid.
    """
    crit = ladder_step(num, power)
    coeffs = [float(c) for c in crit]
    candidates = [0.0]
    if any(coeffs):
        roots = np.polynomial.polynomial.polyroots(coeffs) if len(coeffs) > 1 else []
        candidates.extend(r.real for r in np.atleast_1d(roots) if abs(r.imag) < 1e-9)
    u = np.asarray(candidates, dtype=float)
    if grid is not None:
        u = np.concatenate([u, grid])
    vals = np.abs(poly_eval(num, u)) / (1.0 + u * u) ** power
    best = float(vals.max())
    deg = len(num) - 1
    if deg == 2 * power:
        best = max(best, abs(float(num[-1])))
    elif deg > 2 * power:
        return math.inf
    return best


def normalization_constant(s: int) -> float:
    """c(s) with int u^2 (1+u^2)^(-s/2) du / c = 1 (Beta-function closed form)."""
    p = s / 2.0
    return math.sqrt(math.pi) * math.exp(math.lgamma(p - 1.5) - math.lgamma(p)) / 2.0


@dataclass(frozen=True)
class WeightModel:
    """The weight omega and the ladders for ln(omega), h and s/(1+u^2).

    ``dlnw_coeffs[l-1]``: numerator of d^l ln(omega), denominator (1+u^2)^l.
    ``h_coeffs[l]``: numerator of d^l h, denominator (1+u^2)^(l+2).
    ``jl_coeffs[l]``: numerator of d^l (s/(1+u^2)), denominator (1+u^2)^(l+1).
    """

    s: int
    c: float
    beta: float
    l_max: int
    dlnw_coeffs: tuple[Poly, ...]
    h_coeffs: tuple[Poly, ...]
    jl_coeffs: tuple[Poly, ...]

    @property
    def C_omega(self) -> float:
        """int |u| / omega du = 2 / (c (s - 2))."""
        return 2.0 / (self.c * (self.s - 2))

    def omega(self, u):
        u = np.asarray(u, dtype=float)
        return self.c * (1.0 + u * u) ** (self.s // 2)

    def dlnw(self, u):
        u = np.asarray(u, dtype=float)
        return self.s * u / (1.0 + u * u)

    def h(self, u):
        u = np.asarray(u, dtype=float)
        s = self.s
        return (s - (s + s * s) * u * u) / (2.0 * (1.0 + u * u) ** 2)

    def h_hat(self, u, beta: float | None = None):
        u = np.asarray(u, dtype=float)
        b = self.beta if beta is None else beta
        return self.h(u) - b * (1.0 + u * self.dlnw(u))

    def poly_coeffs(self, kind: str, l: int) -> Poly:
        if kind not in KINDS:
            raise ValueError(f"unknown ladder kind {kind!r}; expected one of {KINDS}")
        if l > self.l_max:
            raise ValueError(f"order {l} exceeds l_max={self.l_max}")
        if kind == "dlnw":
            if l < 1:
                raise ValueError("dlnw ladder starts at l=1")
            return self.dlnw_coeffs[l - 1]
        if l < 0:
            raise ValueError("order must be nonnegative")
        return self.h_coeffs[l] if kind == "h" else self.jl_coeffs[l]

    def ladder_power(self, kind: str, l: int) -> int:
        return {"dlnw": l, "h": l + 2, "inv1pu2": l + 1}[kind]

    def ladder_eval(self, kind: str, l: int, u):
        u = np.asarray(u, dtype=float)
        num = self.poly_coeffs(kind, l)
        return poly_eval(num, u) / (1.0 + u * u) ** self.ladder_power(kind, l)

    def ladder_sup(self, kind: str, l: int) -> float:
        grid = np.linspace(-50.0, 50.0, 20001)
        return rational_sup(self.poly_coeffs(kind, l), self.ladder_power(kind, l), grid)

    def h_hat_sup(self, l: int, beta: float | None = None) -> float:
        """sup |d^l h_hat| using h_hat = h - beta (1 + s) + beta s/(1+u^2)."""
        b = Fraction(self.beta if beta is None else beta)
        r = list(self.h_coeffs[l]) + [Fraction(0)] * 4
        j = self.jl_coeffs[l]
        # bring beta d^l(s/(1+u^2)) onto the denominator (1+u^2)^(l+2)
        for k, ck in enumerate(j):
            r[k] += b * ck
            r[k + 2] += b * ck
        if l == 0:
            shift = b * (1 + self.s)
            for k, ck in enumerate((1, 0, 2, 0, 1)):
                r[k] -= shift * ck
        grid = np.linspace(-50.0, 50.0, 20001)
        return rational_sup(_trim(r), l + 2, grid)

    def omega_poly(self) -> Poly:
        """Coefficients of (1+u^2)^(s/2), without the factor c."""
        half = self.s // 2
        out = [Fraction(0)] * (self.s + 1)
        for j in range(half + 1):
            out[2 * j] = Fraction(math.comb(half, j))
        return tuple(out)

    @property
    def kappa(self) -> float:
        """Max absolute coefficient over omega and its first s derivatives."""
        p = self.omega_poly()
        best = max(abs(c) for c in p)
        for _ in range(self.s):
            p = poly_derivative(p)
            best = max(best, max(abs(c) for c in p))
        return self.c * float(best)


def make_weight(s: int, beta: float = 0.0, l_max: int = 12) -> WeightModel:
    if not isinstance(s, (int, np.integer)) or s < 4 or s % 2:
        raise ValueError("s must be even and >= 4")
    if l_max < 2:
        raise ValueError("l_max must be at least 2")
    s = int(s)
    dlnw = [(Fraction(0), Fraction(s))]
    for l in range(1, l_max):
        dlnw.append(ladder_step(dlnw[-1], l))
    h = [(Fraction(s, 2), Fraction(0), Fraction(-(s + s * s), 2))]
    for l in range(l_max):
        h.append(ladder_step(h[-1], l + 2))
    jl = [(Fraction(s),)]
    for l in range(l_max):
        jl.append(ladder_step(jl[-1], l + 1))
    return WeightModel(
        s=s,
        c=normalization_constant(s),
        beta=float(beta),
        l_max=l_max,
        dlnw_coeffs=tuple(dlnw),
        h_coeffs=tuple(h),
        jl_coeffs=tuple(jl),
    )


@dataclass(frozen=True)
class BoundReport:
    kind: str
    orders: tuple[int, ...]
    sups: tuple[float, ...]
    bounds: tuple[float, ...]

    @property
    def margins(self) -> tuple[float, ...]:
        return tuple(b - v for v, b in zip(self.sups, self.bounds))

    @property
    def ok(self) -> bool:
        return all(m > 0 for m in self.margins)

    @property
    def failing(self) -> tuple[int, ...]:
        return tuple(l for l, m in zip(self.orders, self.margins) if m <= 0)


def check_derivative_bounds(weight: WeightModel, l_range) -> dict[str, BoundReport]:
    """Compare sup |d^l (d ln omega)| and sup |d^l h| with their factorial bounds."""
    s = weight.s
    orders = tuple(int(l) for l in l_range)
    if any(l < 0 or l + 1 > weight.l_max for l in orders):
        raise ValueError(f"orders must lie in [0, {weight.l_max - 1}]")
    dl_sup = tuple(weight.ladder_sup("dlnw", l + 1) for l in orders)
    dl_bnd = tuple(s * 4.0**l * math.factorial(l + 2) for l in orders)
    h_sup = tuple(weight.ladder_sup("h", l) for l in orders)
    h_bnd = tuple((s + s * s) / 4.0 * 4.0**l * math.factorial(l + 3) for l in orders)
    return {
        "dlnw": BoundReport("dlnw", orders, dl_sup, dl_bnd),
        "h": BoundReport("h", orders, h_sup, h_bnd),
    }


def coefficient_bound_margins(weight: WeightModel) -> list[float]:
    """(s/4) 4^l l! - max_n |a_n^(l)| for every stored l >= 1."""
    s = weight.s
    out = []
    for l in range(1, weight.l_max + 1):
        a = max(abs(float(c)) for c in weight.poly_coeffs("dlnw", l))
        out.append(s / 4.0 * 4.0**l * math.factorial(l) - a)
    return out
