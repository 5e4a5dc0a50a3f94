import math

import numpy as np
import pytest

import kinvfp.picard as picard
from kinvfp.certificates import check_conditions, kappa_bundle
from kinvfp.linear import ModelParams
from kinvfp.norms import build_stack
from kinvfp.picard import PicardConfig, PicardDivergence, ball_membership, contraction_metric, iterate, source_fields

from conftest import build_g0


def certified_config(g0, spec, w, beta=0.0, alpha=0, nt=8):
    k1 = kappa_bundle(spec.C0, spec.lambda_bar, 4, 0, 0, 0.1, beta, alpha).kappa1
    rep = check_conditions(spec, build_stack(g0, 4), 0.5 * k1, 0.1, None, None, beta, alpha, A=4, weight=w)
    assert rep.certified
    return rep, PicardConfig(0.1, rep.K_chosen, 0.5 * k1, rep.M, A=4, nt=nt)


def test_config_validation():
    with pytest.raises(ValueError):
        PicardConfig(0.1, 50.0, 0.01, 1.0)
    with pytest.raises(ValueError):
        PicardConfig(0.1, 1.0, 0.01, -1.0)
    pc = PicardConfig(0.1, 1.0, 0.01, 1.0)
    assert pc.lam(0.01) == pytest.approx(0.08)
    assert pc.lam_prime == -2.0


def test_certified_iteration_contracts(tmp_path):
    spec, grid, w, f0, g0 = build_g0(nx=32, nu=65)
    rep, pc = certified_config(g0, spec, w)
    traj, state = iterate(g0, pc, ModelParams(), w, gammas=rep.gammas)
    assert state.converged
    assert all(r < 1 for r in state.ratios[:6])
    assert state.residual <= 2 * state.tol_fp
    assert ball_membership(traj, pc).member
    assert math.isfinite(state.M_hat)
    state.write_csv(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "n,D_n,r_n"


def test_ball_gate():
    spec, grid, w, f0, g0 = build_g0({"amplitude": 1.0, "C0": 1.0}, nx=32, nu=65)
    pc = PicardConfig(0.1, 1.0, 0.01, 1e-3, A=4, nt=4)
    with pytest.raises(ValueError, match="M-ball"):
        iterate(g0, pc, ModelParams(), w)


def test_unit_mass_science_run_converges():
    spec, grid, w, f0, g0 = build_g0({"amplitude": 1.0, "C0": 1.0, "eps": 0.05}, nx=32, nu=65, beta=1.0)
    pc = PicardConfig(0.1, 1.0, 0.02, 10.0, A=4, nt=16)
    traj, state = iterate(g0, pc, ModelParams(1.0, 1.0, 1), w, waive_ball=True)
    assert state.converged
    assert max(state.ratios) < 0.1


def test_source_fields_of_maxwellian():
    spec, grid, w, f0, g0 = build_g0({"amplitude": 1.0, "eps": 0.0}, nx=16, nu=129)
    src = source_fields([g0], w, ModelParams(alpha=1))
    assert np.allclose(src.Q, -1.0, atol=1e-10)
    assert np.abs(src.H).max() < 1e-15


def test_divergence_abort(monkeypatch):
    spec, grid, w, f0, g0 = build_g0(nx=32, nu=65)
    real = picard.solve_linear
    calls = {"n": 0}

    def growing(*args, **kwargs):
        calls["n"] += 1
        tr = real(*args, **kwargs)
        for i, f in enumerate(tr.fields):
            tr.fields[i] = f.with_samples(f.samples * 10.0 ** calls["n"])
        return tr

    monkeypatch.setattr(picard, "solve_linear", growing)
    pc = PicardConfig(0.1, 1.0, 0.001, 1.0, A=4, nt=2, max_iter=20)
    with pytest.raises(PicardDivergence) as exc:
        iterate(g0, pc, ModelParams(), w)
    # D_1 then three consecutive rises
    assert exc.value.state.n == 4


def test_contraction_metric_of_zero():
    spec, grid, w, f0, g0 = build_g0(nx=32, nu=65)
    pc = PicardConfig(0.1, 1.0, 0.01, 1.0, A=4)
    z = np.zeros_like(g0.samples)
    assert contraction_metric([z, z], [0.0, 0.01], pc, grid) == 0.0
