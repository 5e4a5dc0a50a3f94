import math

import numpy as np
import pytest

from kinvfp.grid import InitialDataSpec, PhaseGrid, make_initial_data, weight_transform
from kinvfp.weight import make_weight

# small-amplitude data satisfying the analyticity hypothesis with C0 below kappa0
CERT_SPEC = dict(s=4, eps=0.05, mode=1, thermal_var=1.0, C0=2e-6, lambda_bar=0.5, m=0, n=0, amplitude=1e-6)

_ACCEPTANCE: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[name] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        num = int(name.split("_")[2])
        terminalreporter.write_line(f"criterion {num:2d}: {_ACCEPTANCE[name]}  ({name})")


def build_g0(spec_kwargs=None, nx=32, nu=65, u_max=8.0, beta=0.0, s=4):
    kw = dict(CERT_SPEC)
    kw.update(spec_kwargs or {})
    kw["s"] = s
    spec = InitialDataSpec(**kw)
    grid = PhaseGrid(nx, nu, u_max)
    weight = make_weight(s, beta)
    f0 = make_initial_data(spec, grid)
    return spec, grid, weight, f0, weight_transform(f0, weight, "to_g")


def band_limited_samples(rng, grid, kx_max=3, ku_max=2.0):
    """Random trigonometric polynomial in x times a smooth trigonometric profile in u."""
    x, u = grid.mesh()
    out = np.zeros_like(x)
    for _ in range(3):
        k = rng.integers(0, kx_max + 1)
        w = rng.uniform(0.0, ku_max)
        a = rng.normal()
        out += a * np.cos(2 * math.pi * k * x + rng.uniform(0, 2 * math.pi)) * np.cos(w * u + rng.uniform(0, 2 * math.pi))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
