import math

import numpy as np
import pytest

from kinvfp.grid import InitialDataSpec
from kinvfp.linear import CoefficientFields, ModelParams
from kinvfp.particles import (
    ParticleEnsemble,
    PDEFields,
    chi2_quantile,
    conditional_moments,
    init_ensemble,
    read_ensemble,
    smoothed_derivative,
    step_trajectory,
    uniformity_test,
    wrap,
    write_ensemble,
)


def test_wrap_stays_in_unit_interval():
    x = np.array([-1e-17, 1.0, 2.5, -0.25, 1 - 1e-17])
    y = wrap(x)
    assert np.all((y >= 0) & (y < 1))
    assert y[2] == 0.5 and y[3] == 0.75


def test_straight_line_transport_without_noise():
    x0 = np.linspace(0, 0.99, 100)
    u0 = np.linspace(-3, 3, 100)
    ens = ParticleEnsemble(x0, u0, 0.0, 1)
    zero = PDEFields.from_coefficients(CoefficientFields.zeros(16))
    out = step_trajectory(ens, "field_coupled", ModelParams(sigma=0.0), 0.125, 8, zero)
    assert np.allclose(out.x, wrap(x0 + u0), atol=1e-14)
    assert np.array_equal(out.u, u0)


def test_initial_sampling_matches_density_moments():
    spec = InitialDataSpec(eps=0.1)
    ens = init_ensemble(100_000, spec, seed=4, threads=2)
    assert abs(ens.u.mean()) < 4 * 1 / math.sqrt(ens.N)
    assert abs(ens.u.var() - 1) < 4 * math.sqrt(2 / ens.N)
    cm = conditional_moments(ens, 32)
    S_exact = 1 + 0.2 * np.cos(2 * math.pi * cm.centers)
    band = 3 * math.sqrt(2 * 1.5**2 / (ens.N / 32))
    # bins average S over their width; the cosine loses a factor sinc(1/32)
    assert np.abs(cm.S - S_exact).max() < band + 0.2 * (1 - np.sinc(1 / 32))
    assert uniformity_test(ens).passed(0.01)


def test_conditional_moments_of_constant_velocity():
    x = np.random.default_rng(0).random(3200)
    ens = ParticleEnsemble(x, np.ones(3200), 0.0, 0)
    cm = conditional_moments(ens, 32)
    assert np.all(cm.V == 1.0) and np.all(cm.S == 1.0)


def test_conditional_moments_errors():
    ens = ParticleEnsemble(np.full(3200, 0.5), np.zeros(3200), 0.0, 0)
    with pytest.raises(ValueError, match="empty bin"):
        conditional_moments(ens, 32)
    with pytest.raises(ValueError):
        conditional_moments(ParticleEnsemble(np.zeros(10), np.zeros(10), 0.0, 0), 32)


def test_smoothed_derivative_of_low_mode():
    c = (np.arange(32) + 0.5) / 32
    d = smoothed_derivative(np.sin(2 * math.pi * c))
    assert np.allclose(d, 2 * math.pi * np.cos(2 * math.pi * c) * math.exp(-1 / 16), atol=1e-12)


def test_reproducible_across_threads():
    spec = InitialDataSpec(eps=0.05)
    params = ModelParams(1.0, 1.0, 1)
    a = init_ensemble(30_000, spec, 9, threads=1)
    b = init_ensemble(30_000, spec, 9, threads=4)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.u, b.u)
    a = step_trajectory(a, "self_consistent", params, 0.01, 3, threads=1)
    b = step_trajectory(b, "self_consistent", params, 0.01, 3, threads=3)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.u, b.u)


def test_uniformity_rejects_point_mass():
    ens = ParticleEnsemble(np.full(20_000, 0.5), np.zeros(20_000), 0.0, 0)
    res = uniformity_test(ens, 32)
    assert res.chi2 == pytest.approx(20_000 * 31)
    assert res.chi2 > chi2_quantile(32)
    assert not res.passed(0.01)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_velocity_aborts_with_index():
    ens = ParticleEnsemble(np.array([0.1, 0.2]), np.array([0.0, np.inf]), 0.0, 0)
    zero = PDEFields.from_coefficients(CoefficientFields.zeros(16))
    with pytest.raises(FloatingPointError, match="particle 1"):
        step_trajectory(ens, "field_coupled", ModelParams(1.0, 1.0, 0), 0.1, 1, zero)


def test_ensemble_roundtrip(tmp_path):
    ens = init_ensemble(500, InitialDataSpec(), 2)
    write_ensemble(tmp_path / "e.txt", ens)
    back = read_ensemble(tmp_path / "e.txt")
    assert np.array_equal(back.x, ens.x) and np.array_equal(back.u, ens.u)
    assert back.seed == 2
