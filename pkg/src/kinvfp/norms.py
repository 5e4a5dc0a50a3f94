"""Truncated analytic norms built from sup-norm derivative tables.

For a table T[k, l] = ||d_x^k d_u^l psi||_inf the lambda-ladder is

    ||psi||_{lambda,a} = sum_{k+l >= a} (k+l)!/(k+l-a)! lambda^(k+l-a)/(k! l!) T[k, l],

i.e. the a-th lambda-derivative of the polynomial ||psi||_lambda, and

    H = sum_{a<=A} ||psi||_{lambda,a} / (a!)^2,   Htilde = sum_{1<=a<=A} a^2 ||psi||_{lambda,a} / (a!)^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import PhaseField, PhaseGrid, dx_spectral


@dataclass(frozen=True)
class DerivativeStack:
    """sup_table[k, l] = ||d_x^k d_u^l psi||_inf on the grid."""

    sup_table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.sup_table, dtype=float)
        if t.ndim != 2 or not np.all(np.isfinite(t)) or np.any(t < 0):
            raise ValueError("sup table must be a finite nonnegative matrix")

    @property
    def k_max(self) -> int:
        return self.sup_table.shape[0] - 1

    @property
    def l_max(self) -> int:
        return self.sup_table.shape[1] - 1

    @property
    def A(self) -> int:
        return max(self.k_max, self.l_max)

    def d_x(self) -> DerivativeStack:
        """Table of d_x psi (orders k <= k_max - 1)."""
        return DerivativeStack(self.sup_table[1:, :])

    def d_u(self) -> DerivativeStack:
        return DerivativeStack(self.sup_table[:, 1:])


@lru_cache(maxsize=64)
def fd_first_derivative(nu: int, du: float) -> np.ndarray:
    """Sixth-order first-derivative matrix with one-sided 7-point closures."""
    if nu < 7:
        raise ValueError("need at least 7 velocity points")
    D = np.zeros((nu, nu))
    for i in range(nu):
        start = min(max(i - 3, 0), nu - 7)
        offsets = np.arange(start, start + 7) - i
        # weights w solving sum_j w_j offsets_j^p = p! delta_{p,1}
        V = np.vander(offsets.astype(float), 7, increasing=True).T
        rhs = np.zeros(7)
        rhs[1] = 1.0
        D[i, start : start + 7] = np.linalg.solve(V, rhs)
    return D / du


def u_derivatives(values: np.ndarray, du: float, order: int) -> list[np.ndarray]:
    """[psi, d_u psi, ..., d_u^order psi] along the last axis."""
    D = fd_first_derivative(values.shape[-1], du)
    out = [values]
    for _ in range(order):
        out.append(out[-1] @ D.T)
    return out


def build_stack(field: PhaseField | np.ndarray, A: int, grid: PhaseGrid | None = None) -> DerivativeStack:
    """Sup-norm table up to order A in both variables.

    x-derivatives are spectral, u-derivatives are repeated sixth-order
    central differences.  A 1D array is treated as a function of x only.
    """
    if isinstance(field, PhaseField):
        grid, values = field.grid, field.samples
    else:
        values = np.asarray(field, dtype=float)
    if values.ndim == 1:
        if values.shape[0] < 4 * A:
            raise ValueError(f"A={A} needs at least {4 * A} x-points")
        table = np.zeros((A + 1, A + 1))
        for k in range(A + 1):
            table[k, 0] = np.abs(dx_spectral(values, k)).max()
        return DerivativeStack(table)
    if grid is None:
        raise ValueError("a grid is required for 2D samples")
    if grid.nx < 4 * A or grid.nu < 8 * A:
        raise ValueError(f"A={A} needs nx >= {4 * A} and nu >= {8 * A}")
    table = np.zeros((A + 1, A + 1))
    for k in range(A + 1):
        dk = dx_spectral(values, k)
        for l, d in enumerate(u_derivatives(dk, grid.du, A)):
            table[k, l] = np.abs(d).max()
    return DerivativeStack(table)


def _shell_sums(stack: DerivativeStack) -> np.ndarray:
    """S_n = sum_{k+l=n} T[k,l] / (k! l!)."""
    T = stack.sup_table
    out = np.zeros(T.shape[0] + T.shape[1] - 1)
    for k in range(T.shape[0]):
        for l in range(T.shape[1]):
            out[k + l] += T[k, l] / (math.factorial(k) * math.factorial(l))
    return out


def ladder_value(stack: DerivativeStack, lam: float, a: int) -> float:
    """||psi||_{lambda,a} over the table's full (rectangular) truncation."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    S = _shell_sums(stack)
    total = 0.0
    for n in range(a, len(S)):
        total += math.factorial(n) / math.factorial(n - a) * lam ** (n - a) * S[n]
    return total


@dataclass(frozen=True)
class NormLadder:
    lam: float
    A: int
    values_a: tuple[float, ...]
    H: float
    Htilde: float
    boundary: float

    def __getitem__(self, a: int) -> float:
        return self.values_a[a]


def norm_family(stack: DerivativeStack, lam: float, A: int | None = None) -> NormLadder:
    """Ladder a = 0..A plus the a = A+1 value needed for dH/dlambda."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    A = stack.A if A is None else A
    vals = [float(ladder_value(stack, lam, a)) for a in range(A + 2)]
    H = sum(vals[a] / math.factorial(a) ** 2 for a in range(A + 1))
    Ht = sum(a * a * vals[a] / math.factorial(a) ** 2 for a in range(1, A + 1))
    return NormLadder(lam, A, tuple(vals[: A + 1]), H, Ht, vals[A + 1])


def ladder_derivs(stack: DerivativeStack, lam: float, top: int) -> np.ndarray:
    """N^(j) = ||psi||_{lambda,j} for j = 0..top (zero beyond the table)."""
    return np.array([ladder_value(stack, lam, j) for j in range(top + 1)])


def _product_series(factors: list[np.ndarray], shifts: list[int], A: int) -> float:
    """sum_{a<=A} (1/(a!)^2) d^a/dlambda^a prod_i N_i^(shift_i) by Leibniz' rule.

    factors[i][j] holds N_i^(j); shift 1 stands for the ||.||_{lambda,1} factor.
    """
    total = 0.0
    for a in range(A + 1):
        acc = 0.0
        for combo in _compositions(a, len(factors)):
            coef = math.factorial(a)
            term = 1.0
            for r, N, sh in zip(combo, factors, shifts):
                coef /= math.factorial(r)
                term *= N[r + sh]
            acc += coef * term
        total += acc / math.factorial(a) ** 2
    return total


def _compositions(a: int, parts: int):
    if parts == 1:
        yield (a,)
        return
    for r in range(a + 1):
        for rest in _compositions(a - r, parts - 1):
            yield (r,) + rest


@dataclass(frozen=True)
class LemmaReport:
    slacks: dict[str, float]

    @property
    def min_slack(self) -> float:
        return min(self.slacks.values())

    def ok(self, tol: float = 1e-9) -> bool:
        return self.min_slack >= -tol


def lemma_checks(
    psi: DerivativeStack,
    psi1: DerivativeStack,
    psi2: DerivativeStack,
    psi12: DerivativeStack,
    f: DerivativeStack,
    v: DerivativeStack,
    w: DerivativeStack,
    lam: float,
    A: int,
    fd_step: float = 1e-5,
) -> LemmaReport:
    """Slack (right minus left, relative where the left side is an identity) of the norm algebra.

    psi12 must be the stack of the product psi1 * psi2.
    """
    stacks = (psi, psi1, psi2, psi12, f, v, w)
    if any(s.sup_table.shape != (A + 1, A + 1) for s in stacks):
        raise ValueError("all stacks must share the truncation A")
    slacks: dict[str, float] = {}
    # (i) finite rearrangement on the compatible rectangular truncation
    worst = 0.0
    for a in range(2 * A):
        lhs = ladder_value(psi, lam, a + 1)
        rhs = ladder_value(psi.d_x(), lam, a) + ladder_value(psi.d_u(), lam, a)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    slacks["decomposition"] = -worst if worst > 1e-12 else 0.0
    # (ii) dH/dlambda = Htilde + ||psi||_{lambda,A+1} / (A!)^2
    hi = norm_family(psi, lam + fd_step, A).H
    lo = norm_family(psi, max(lam - fd_step, 0.0), A).H
    fd = (hi - lo) / (lam + fd_step - max(lam - fd_step, 0.0))
    lad = norm_family(psi, lam, A)
    exact = lad.Htilde + lad.boundary / math.factorial(A) ** 2
    rel = abs(fd - exact) / max(abs(exact), 1e-300)
    slacks["dH_dlambda"] = 0.0 if rel <= 1e-6 else -rel
    # (iii) ||psi1 psi2||_lambda <= ||psi1||_lambda ||psi2||_lambda
    slacks["product"] = ladder_value(psi1, lam, 0) * ladder_value(psi2, lam, 0) - ladder_value(psi12, lam, 0)
    top = A + 2
    Nf, Nv, Nw = (ladder_derivs(s, lam, top) for s in (f, v, w))
    Lf, Lv, Lw = (norm_family(s, lam, A) for s in (f, v, w))
    lhs = _product_series([Nf, Nv, Nw], [0, 1, 1], A)
    slacks["three_factor"] = Lf.H * Lv.Htilde * Lw.Htilde - lhs
    lhs = _product_series([Nf, Nv], [1, 1], A)
    slacks["two_factor_i"] = 16 * (Lf.H * Lv.Htilde + Lf.Htilde * Lv.H) - lhs
    slacks["two_factor_ii"] = 4 * Lv.Htilde * (4 * Lf.H + Lf.Htilde) - lhs
    lhs = _product_series([Nf, Nv], [0, 1], A)
    slacks["kinetic_i"] = Lf.H * Lv.Htilde - lhs
    lhs = _product_series([Nf, Nw, Nv], [0, 0, 1], A)
    slacks["kinetic_ii"] = Lf.H * Lw.H * Lv.Htilde - lhs
    return LemmaReport(slacks)


@dataclass(frozen=True)
class CriterionReport:
    violations: tuple[tuple[int, int], ...]
    H: float
    Htilde: float
    mu_bound_H: float
    mu_bound_Htilde: float
    radius_bound_H: float
    radius_bound_Htilde: float

    @property
    def hypothesis_holds(self) -> bool:
        return not self.violations

    @property
    def bound_holds(self) -> bool:
        return self.H <= self.radius_bound_H and self.Htilde <= self.radius_bound_Htilde


def norm_criterion_bound(C: float, lam_bar: float, m: int, n: int, stack: DerivativeStack, lam: float) -> CriterionReport:
    """Check the factorial hypothesis on the table and the resulting H, Htilde bounds.

    The hypothesis reads T[kx, ku] <= C (ku+m)! (kx+n)! / lam_bar^(kx+ku).
    Two bounds are reported: the lambda = 0 form C mu(lam_bar, m+n+1) and the
    form valid for every lambda < lam_bar, where the geometric series is
    evaluated at r = lambda/lam_bar instead of r = 0.
    """
    from .certificates import mu

    if not lam < lam_bar:
        raise ValueError("need lambda < lambda_bar")
    T = stack.sup_table
    bad = []
    for kx in range(T.shape[0]):
        for ku in range(T.shape[1]):
            bound = C * math.factorial(ku + m) * math.factorial(kx + n) / lam_bar ** (kx + ku)
            if T[kx, ku] > bound * (1 + 1e-12):
                bad.append((kx, ku))
    lad = norm_family(stack, lam)
    r = lam / lam_bar
    p = m + n
    return CriterionReport(
        violations=tuple(bad),
        H=lad.H,
        Htilde=lad.Htilde,
        mu_bound_H=C * mu(lam_bar, p + 1),
        mu_bound_Htilde=C / lam_bar * mu(lam_bar, p + 2),
        radius_bound_H=C * mu(lam_bar - lam, p + 1) / (1 - r) ** (p + 2),
        radius_bound_Htilde=C * mu(lam_bar - lam, p + 2) / (lam_bar * (1 - r) ** (p + 3)),
    )
