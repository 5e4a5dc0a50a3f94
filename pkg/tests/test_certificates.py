import math

import numpy as np
import pytest
import sympy as sp

from kinvfp.certificates import check_conditions, gamma_constants, kappa_bundle, mu, mu_series
from kinvfp.grid import InitialDataSpec
from kinvfp.norms import build_stack
from kinvfp.weight import make_weight

from conftest import CERT_SPEC, build_g0

u = sp.symbols("u", real=True)


def oracle_gamma(expr, lam, A, tilde):
    """Truncated H / Htilde of an x-free profile from dense samples of symbolic derivatives."""
    grid = np.linspace(-60, 60, 240001)
    sups = []
    e = expr
    for _ in range(A + 1):
        sups.append(float(np.abs(sp.lambdify(u, e, "numpy")(grid) * np.ones_like(grid)).max()))
        e = sp.diff(e, u)
    if tilde:
        sups[0] = 0.0
    total = 0.0
    for a in range(A + 1):
        lad = sum(lam ** (l - a) / math.factorial(l - a) * sups[l] for l in range(a, A + 1))
        wgt = a * a if tilde else 1
        total += wgt * lad / math.factorial(a) ** 2
    return total


# frozen from the oracle above (s = 4, lambda0 = 0.1, A = 12)
GAMMA0_S4 = 10.6127343532515
GAMMA1_S4 = 30.8125938525197


def test_gamma_constants_against_symbolic_oracle():
    L = sp.diff(sp.log((1 + u**2) ** 2), u)
    lnw = sp.log((1 + u**2) ** 2)
    h = (sp.diff(L, u) - L**2) / 2
    g0 = oracle_gamma(lnw, 0.1, 12, tilde=True)
    g1 = oracle_gamma(h, 0.1, 12, tilde=False)
    gam = gamma_constants(make_weight(4), 0.1, 12)
    assert gam.gamma0 == pytest.approx(g0, rel=1e-6)
    assert gam.gamma1 == pytest.approx(g1, rel=1e-6)
    assert gam.gamma0 == pytest.approx(GAMMA0_S4, rel=1e-12)
    assert gam.gamma1 == pytest.approx(GAMMA1_S4, rel=1e-12)


def test_gamma1_hat_uses_beta_terms():
    w = make_weight(4, beta=1.0)
    gam = gamma_constants(w, 0.1, 12)
    uu = sp.symbols("u", real=True)
    L = sp.diff(sp.log((1 + uu**2) ** 2), uu)
    hhat = (sp.diff(L, uu) - L**2) / 2 - (1 + uu * L)
    assert gam.gamma1_hat == pytest.approx(oracle_gamma(hhat, 0.1, 12, tilde=False), rel=1e-6)


def test_truncation_consistency_within_tail():
    w = make_weight(4, l_max=14)
    lo, hi = gamma_constants(w, 0.1, 8), gamma_constants(w, 0.1, 12)
    assert abs(hi.gamma0 - lo.gamma0) <= lo.tail0
    assert abs(hi.gamma1 - lo.gamma1) <= lo.tail1


def test_mu_values():
    assert mu(1.0, 1) == pytest.approx(2 * math.e, rel=1e-12)
    # p = 2 at lambda_bar = 1: sum (a+1)(a+2)/a! = 7e
    assert mu(1.0, 2) == pytest.approx(7 * math.e, rel=1e-12)
    total, last = mu_series(0.5, 1)
    assert last > 10 and math.isfinite(total)


def test_kappa_bundle_structure():
    b = kappa_bundle(2e-6, 0.5, 4, 0, 0, 0.1)
    assert b.kappa1 == min(b.branches)
    assert b.hypothesis_ok
    g0 = b.gammas.gamma0
    assert b.kappa0 == pytest.approx(math.log(2) / (2 * b.kappa_s * math.exp(0.5) * b.mu1 * (16 + g0)), rel=1e-14)
    assert b.K == pytest.approx(16 * b.M + 0.1 + 4 * g0 + 1, rel=1e-14)
    bp = kappa_bundle(2e-6, 0.5, 4, 0, 0, 0.1, beta=1.0, alpha=1)
    assert bp.primed and len(bp.branches) == 5
    assert bp.kappa0 < b.kappa0


def test_kappa_bundle_reports_failed_hypothesis():
    b = kappa_bundle(1.0, 0.5, 4, 0, 0, 0.1)
    assert not b.hypothesis_ok


def _report(T, beta=0.0, alpha=0):
    spec, grid, w, f0, g0 = build_g0(nx=32, nu=65, beta=beta)
    return check_conditions(spec, build_stack(g0, 4), T, 0.1, None, None, beta, alpha, A=4, weight=w)


def test_certified_default_and_failure_beyond_kappa1():
    k1 = kappa_bundle(2e-6, 0.5, 4, 0, 0, 0.1).kappa1
    ok = _report(0.5 * k1)
    assert ok.certified, ok.to_text()
    text = ok.to_text()
    for name in "abcde":
        assert f"condition {name}:" in text
    bad = _report(1.1 * k1)
    assert not bad.certified
    assert "a" in bad.failing


@pytest.mark.parametrize("beta,alpha", [(1.0, 0), (1.0, 1)])
def test_certified_primed(beta, alpha):
    k1 = kappa_bundle(2e-6, 0.5, 4, 0, 0, 0.1, beta, alpha).kappa1
    assert _report(0.5 * k1, beta, alpha).certified


def test_nonpositive_T_rejected():
    with pytest.raises(ValueError):
        _report(0.0)


def test_unit_mass_data_cannot_certify():
    spec, grid, w, f0, g0 = build_g0({"amplitude": 1.0, "C0": 1.0}, nx=32, nu=65)
    rep = check_conditions(spec, build_stack(g0, 4), 1e-4, 0.1, 0.01, None, A=4, weight=w)
    assert not rep.certified
    assert "e" in rep.failing and "d" in rep.failing
