"""Explicit existence certificates: gamma constants, mu series, kappa bundles, conditions a)-e).

Formulas follow the beta = 0 statement and, when beta != 0, the kinetic-potential
variant in which every beta is replaced by |beta|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .norms import DerivativeStack, norm_family
from .weight import WeightModel, make_weight


def mu_series(lam_bar: float, p: int, tol: float = 1e-16) -> tuple[float, int]:
    """mu(lam_bar, p) = sum_a (a+1)...(a+p) / (a! lam_bar^a) and the last index used."""
    if not lam_bar > 0 or p < 1:
        raise ValueError("need lam_bar > 0 and p >= 1")
    term = float(math.factorial(p))
    total = term
    a = 0
    while True:
        term *= (a + 1 + p) / ((a + 1) ** 2 * lam_bar)
        a += 1
        total += term
        # past the peak the terms decay at least geometrically
        if (a + 1 + p) / ((a + 1) ** 2 * lam_bar) < 0.5 and term < tol * total:
            return total, a


def mu(lam_bar: float, p: int, tol: float = 1e-16) -> float:
    return mu_series(lam_bar, p, tol)[0]


def _log_tail(log_bound, lam: float, A: int, log_weight, a_min: int, l_stop: int = 600) -> float:
    """sum over l > A, a_min <= a <= l of weight(a) lam^(l-a)/(l-a)! * bound(l)."""
    total = 0.0
    for l in range(A + 1, l_stop):
        lb = log_bound(l)
        inner = 0.0
        for a in range(a_min, l + 1):
            la = log_weight(a) - math.lgamma(l - a + 1) + lb
            la += (l - a) * math.log(lam) if l > a else 0.0
            inner += math.exp(la)
        total += inner
        if inner < 1e-18 * max(total, 1e-300) and l > A + 20:
            break
    return total


@dataclass(frozen=True)
class GammaConstants:
    gamma0: float
    gamma1: float
    gamma1_hat: float
    C_omega: float
    tail0: float
    tail1: float
    tail1_hat: float
    lambda0: float
    A: int


def _x_free_stack(values: list[float]) -> DerivativeStack:
    A = len(values) - 1
    table = np.zeros((A + 1, A + 1))
    table[0, :] = values
    return DerivativeStack(table)


def gamma_constants(weight: WeightModel, lambda0: float, A: int = 12, beta: float | None = None) -> GammaConstants:
    """A-truncated gamma0 = ||ln omega||_Htilde, gamma1 = ||h||_H, gamma1_hat = ||h_hat||_H.

    Tails beyond A are bounded with the factorial estimates
    |d^l d_u ln omega| <= s 4^l (l+2)!, |d^l h| <= (s+s^2)/4 4^l (l+3)! and
    |d^l (s/(1+u^2))| <= s l!.
    """
    if not 0 < lambda0 < 0.25:
        raise ValueError("lambda0 must lie in (0, 1/4) for the weight to be analytic in the norm sense")
    if A > weight.l_max:
        raise ValueError(f"A={A} exceeds the weight ladder l_max={weight.l_max}")
    b = weight.beta if beta is None else beta
    s = weight.s
    # the a = 0 entry of ln omega never enters Htilde; stored as 0
    lnw = _x_free_stack([0.0] + [weight.ladder_sup("dlnw", l) for l in range(1, A + 1)])
    hs = _x_free_stack([weight.ladder_sup("h", l) for l in range(A + 1)])
    hh = _x_free_stack([weight.h_hat_sup(l, b) for l in range(A + 1)])
    g0 = float(norm_family(lnw, lambda0, A).Htilde)
    g1 = float(norm_family(hs, lambda0, A).H)
    g1h = float(norm_family(hh, lambda0, A).H)

    def log_b0(l):
        return math.log(s) + (l - 1) * math.log(4) + math.lgamma(l + 2)

    def log_b1(l):
        return math.log((s + s * s) / 4) + l * math.log(4) + math.lgamma(l + 4)

    def log_b1h(l):
        extra = abs(b) * s * math.exp(math.lgamma(l + 1) - log_b1(l))
        return log_b1(l) + math.log1p(extra)

    def wt_tilde(a):
        return 2 * math.log(a) - 2 * math.lgamma(a + 1)

    def wt_h(a):
        return -2 * math.lgamma(a + 1)

    return GammaConstants(
        gamma0=g0,
        gamma1=g1,
        gamma1_hat=g1h,
        C_omega=weight.C_omega,
        tail0=_log_tail(log_b0, lambda0, A, wt_tilde, 1),
        tail1=_log_tail(log_b1, lambda0, A, wt_h, 0),
        tail1_hat=_log_tail(log_b1h, lambda0, A, wt_h, 0),
        lambda0=lambda0,
        A=A,
    )


@dataclass(frozen=True)
class KappaBundle:
    kappa0: float
    kappa1: float
    branches: tuple[float, ...]
    M: float
    K: float
    primed: bool
    hypothesis_ok: bool
    degenerate: bool
    gammas: GammaConstants
    kappa_s: float
    mu1: float
    mu2: float


def kappa_bundle(
    C0: float,
    lambda_bar: float,
    s: int,
    m: int,
    n: int,
    lambda0: float,
    beta: float = 0.0,
    alpha: int = 0,
    A: int = 12,
    weight: WeightModel | None = None,
) -> KappaBundle:
    """kappa0, kappa1 (or the primed pair when beta != 0) and the K of the recipe."""
    if not lambda0 < min(lambda_bar, 0.25):
        raise ValueError("need lambda0 < min(lambda_bar, 1/4)")
    weight = weight or make_weight(s, beta)
    gam = gamma_constants(weight, lambda0, A, beta)
    g0 = gam.gamma0
    ks = weight.kappa
    mu1, mu2 = mu(lambda_bar, m + n + 1), mu(lambda_bar, m + n + 2)
    kappa0 = math.log(2) / (2 * ks * math.exp(lambda_bar) * mu1 * (16 + g0))
    M = 2 * C0 * ks * math.exp(lambda_bar) * mu1
    b = abs(beta)
    primed = beta != 0
    cab = gam.C_omega * alpha * b

    def neglog(x: float) -> float:
        return math.inf if x <= 0 else -math.log(x)

    second = 2 * lambda_bar * mu1 / mu2
    if not primed:
        g1 = gam.gamma1
        branches = (
            lambda0 / (16 * M + lambda0 + 4 * g0 + 2),
            second,
            neglog(M * (1 + g0)) / (M * g0 + g1),
            (math.log(2) - M * (16 + g0)) / (g1 + 16 * g0),
        )
        K = 16 * M + lambda0 + 4 * g0 + 1
    else:
        kappa0 /= 1 + cab
        g1 = gam.gamma1_hat
        branches = (
            (1 + b) * lambda0 / (1 + 4 * g0 + (1 + b) * (1 + lambda0) + (16 + alpha * b) * M),
            second,
            1.0,
            neglog(M * (1 + g0) * (1 + cab)) / (M * (1 + cab) * g0 + g1),
            (math.log(2) - M * (16 + g0)) / (g1 + 16 * g0 + alpha * b * gam.C_omega * M),
        )
        K = (1 + 4 * g0 + M * (16 + alpha * b)) / (1 + b) + lambda0
    return KappaBundle(
        kappa0=kappa0,
        kappa1=min(branches),
        branches=branches,
        M=M,
        K=K,
        primed=primed,
        hypothesis_ok=C0 < kappa0,
        degenerate=C0 == 0,
        gammas=gam,
        kappa_s=ks,
        mu1=mu1,
        mu2=mu2,
    )


@dataclass(frozen=True)
class Condition:
    name: str
    lhs: float
    rhs: float
    passed: bool
    relation: str = "<"


@dataclass(frozen=True)
class CertificateReport:
    gammas: GammaConstants
    mu_values: dict[int, float]
    kappa0: float
    kappa1: float
    primed: bool
    K_chosen: float
    M: float
    T: float
    lambda0: float
    g0_H: float
    g0_Htilde: float
    conditions: tuple[Condition, ...]
    notes: tuple[str, ...] = field(default=())

    @property
    def certified(self) -> bool:
        return all(c.passed for c in self.conditions)

    @property
    def failing(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.conditions if not c.passed)

    def to_text(self) -> str:
        g = self.gammas
        lines = [
            "# KINVFP certificate report",
            f"primed = {self.primed}",
            f"lambda0 = {self.lambda0!r}",
            f"T = {self.T!r}",
            f"M = {self.M!r}",
            f"K = {self.K_chosen!r}",
            f"gamma0 = {g.gamma0!r}  (tail <= {g.tail0:.3e}, A = {g.A})",
            f"gamma1 = {g.gamma1!r}  (tail <= {g.tail1:.3e})",
            f"gamma1_hat = {g.gamma1_hat!r}  (tail <= {g.tail1_hat:.3e})",
            f"C_omega = {g.C_omega!r}",
            f"kappa0 = {self.kappa0!r}",
            f"kappa1 = {self.kappa1!r}",
            f"g0_H = {self.g0_H!r}",
            f"g0_Htilde = {self.g0_Htilde!r}",
        ]
        lines += [f"mu[{p}] = {v!r}" for p, v in sorted(self.mu_values.items())]
        for c in self.conditions:
            state = "pass" if c.passed else "FAIL"
            lines.append(f"condition {c.name}: {c.lhs!r} {c.relation} {c.rhs!r} -> {state}")
        lines.append(f"certified = {self.certified}")
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"


def default_K(M: float, lambda0: float, gamma0: float, beta: float, alpha: int) -> float:
    b = abs(beta)
    if beta == 0:
        return 16 * M + lambda0 + 4 * gamma0 + 1
    return (1 + 4 * gamma0 + M * (16 + alpha * b)) / (1 + b) + lambda0


def check_conditions(
    spec,
    g0_stack: DerivativeStack,
    T: float,
    lambda0: float,
    M: float | None,
    K: float | None,
    beta: float = 0.0,
    alpha: int = 0,
    A: int | None = None,
    A_gamma: int = 12,
    weight: WeightModel | None = None,
) -> CertificateReport:
    """Evaluate conditions a)-e) with truncated norms of g0 = omega f0."""
    if not T > 0:
        raise ValueError("T must be positive")
    weight = weight or make_weight(spec.s, beta)
    A = g0_stack.A if A is None else A
    gam = gamma_constants(weight, lambda0, A_gamma, beta)
    bundle = kappa_bundle(spec.C0, spec.lambda_bar, spec.s, spec.m, spec.n, lambda0, beta, alpha, A_gamma, weight) if spec.lambda_bar > lambda0 else None
    notes = []
    if M is None:
        if bundle is None:
            raise ValueError("M not given and lambda_bar <= lambda0 prevents the recipe")
        M = bundle.M
        notes.append("M from the recipe 2 C0 kappa(s) e^lambda_bar mu(lambda_bar, m+n+1)")
    g0, g1 = gam.gamma0, (gam.gamma1 if beta == 0 else gam.gamma1_hat)
    if K is None:
        K = default_K(M, lambda0, g0, beta, alpha)
        notes.append("K chosen so that condition b) holds with equality")
    lad = norm_family(g0_stack, lambda0, A)
    gH, gHt = float(lad.H), float(lad.Htilde)
    b = abs(beta)
    cab = gam.C_omega * alpha * b
    hi = lambda0 / T - 1 if T > 0 else math.inf
    conds = []
    if beta == 0:
        a_rhs = lambda0 / (2 + lambda0 + 4 * g0)
        lo = 1 + lambda0 + 4 * g0
        b_rhs = (K - lambda0 - 4 * g0 - 1) / 16
        c_lhs = M * (1 + g0) * math.exp((M * g0 + g1) * T)
        e_lhs = gH * math.exp(T * (g1 + 16 * g0))
    else:
        a_rhs = (1 + b) * lambda0 / (1 + 4 * g0 + (1 + b) * (1 + lambda0))
        lo = (1 + 4 * g0) / (1 + b) + lambda0
        b_rhs = ((1 + b) * (K - lambda0) - 4 * g0 - 1) / (16 + alpha * b)
        c_lhs = M * (1 + g0) * (1 + T * cab) * math.exp((M * (1 + cab) * g0 + g1) * T)
        e_lhs = gH * math.exp(T * (g1 + 16 * g0 + alpha * b * g0 * gam.C_omega * M))
    e_rhs = M * math.exp(-(16 + g0) * M)
    c_lhs, e_lhs, a_rhs, b_rhs = float(c_lhs), float(e_lhs), float(a_rhs), float(b_rhs)
    conds.append(Condition("a", T, a_rhs, T < a_rhs))
    in_interval = lo < K < hi
    # b_rhs is a difference of O(K) terms; allow its rounding error
    b_tol = 1e-13 * (abs(K) + lambda0 + 4 * g0 + 1)
    conds.append(Condition("b", M, b_rhs, in_interval and M <= b_rhs + b_tol, "<="))
    if not in_interval:
        notes.append(f"K={K!r} outside the open interval ({lo!r}, {hi!r})")
    conds.append(Condition("c", c_lhs, 1.0, c_lhs < 1.0))
    d_lhs = max(gH, T * gHt)
    conds.append(Condition("d", d_lhs, M, d_lhs <= M, "<="))
    e_ok = e_lhs <= e_rhs if beta == 0 else e_lhs < e_rhs
    conds.append(Condition("e", e_lhs, e_rhs, e_ok, "<=" if beta == 0 else "<"))
    mu_values = {}
    if bundle is not None:
        mu_values = {spec.m + spec.n + 1: bundle.mu1, spec.m + spec.n + 2: bundle.mu2}
        if not bundle.hypothesis_ok:
            notes.append("hypothesis C0 < kappa0 fails")
    return CertificateReport(
        gammas=gam,
        mu_values=mu_values,
        kappa0=bundle.kappa0 if bundle else math.nan,
        kappa1=bundle.kappa1 if bundle else math.nan,
        primed=beta != 0,
        K_chosen=K,
        M=M,
        T=T,
        lambda0=lambda0,
        g0_H=gH,
        g0_Htilde=gHt,
        conditions=tuple(conds),
        notes=tuple(notes),
    )
