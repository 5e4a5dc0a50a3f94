"""Command-line front end: certify, solve, oracle-check, norms, particles, verify, report.

Every command writes into an output directory and records its files (with
sha256), timings, checks and seeds in ``manifest.json``.  Exit codes: 0 success,
1 invalid input, 2 assertion failure, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .certificates import CertificateReport, check_conditions, kappa_bundle
from .config import Config, ConfigError, parse_config, resolve_threads
from .feynman_kac import ProbeRequest, oracle_compare
from .grid import (
    InitialDataSpec,
    PhaseField,
    PhaseGrid,
    make_initial_data,
    moments,
    read_snapshot,
    verify_initial_bounds,
    weight_transform,
    write_snapshot,
)
from .invariants import check_Hu, gronwall_diagnostic, invariant_report
from .linear import CoefficientFields, ModelParams, Trajectory, solve_linear
from .norms import build_stack, norm_family
from .particles import (
    PDEFields,
    init_ensemble,
    read_ensemble,
    step_trajectory,
    uniformity_test,
    write_ensemble,
    write_stats_csv,
)
from .picard import PicardConfig, PicardDivergence, ball_membership, iterate, source_fields
from .weight import make_weight

EXIT_OK, EXIT_INPUT, EXIT_ASSERT, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("certify", "solve", "oracle-check", "norms", "particles", "verify", "report")
MANIFEST = "manifest.json"
FORMAT = "kinvfp-manifest v1"
CONTRACTION_ITERS = 6
CSV_RTOL = 1e-9


class AssertionFailure(RuntimeError):
    pass


# -- run context ---------------------------------------------------------------


@dataclass
class Context:
    cfg: Config
    out: Path
    threads: int
    outputs: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    checks: dict[str, dict] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    certificate: dict | None = None

    def __post_init__(self):
        c = self.cfg
        self.weight = make_weight(c.get("s"), c.get("beta"), c.get("l_max"))
        self.grid = PhaseGrid(c.get("nx"), c.get("nu"), c.get("u_max"))
        self.spec = InitialDataSpec(
            s=c.get("s"),
            eps=c.get("eps"),
            mode=c.get("mode"),
            thermal_var=c.get("thermal_var"),
            C0=c.get("C0"),
            lambda_bar=c.get("lambda_bar"),
            m=c.get("m"),
            n=c.get("n"),
            amplitude=c.get("amplitude"),
        )
        self.params = ModelParams(c.get("sigma"), c.get("beta"), c.get("alpha"))
        self.f0 = make_initial_data(self.spec, self.grid)
        self.g0 = weight_transform(self.f0, self.weight, "to_g")
        self.A = int(c.get("A"))
        self.seed = int(c.get("seed"))

    def path(self, rel: str) -> Path:
        p = self.out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def record(self, rel: str) -> None:
        self.outputs[rel] = sha256(self.out / rel)

    def check(self, name: str, value: float, threshold: float, passed: bool, relation: str = "<=") -> None:
        self.checks[name] = {"value": float(value), "threshold": float(threshold), "relation": relation, "passed": bool(passed)}

    def timed(self, name: str, t0: float) -> None:
        self.timings[name] = round(time.perf_counter() - t0, 6)


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def gamma_A(ctx: Context) -> int:
    return min(12, ctx.weight.l_max)


def certificate(ctx: Context) -> tuple[CertificateReport, float]:
    """Certificate for the configured data; T = T_fraction kappa1 when T is 0."""
    c = ctx.cfg
    lam0 = c.get("lambda0")
    T = c.get("T")
    if T == 0:
        if not lam0 < ctx.spec.lambda_bar:
            raise ConfigError(["[picard] T=0 (auto) needs lambda0 < lambda_bar"])
        b = kappa_bundle(ctx.spec.C0, ctx.spec.lambda_bar, ctx.spec.s, ctx.spec.m, ctx.spec.n, lam0, ctx.params.beta, ctx.params.alpha, gamma_A(ctx), ctx.weight)
        if not b.kappa1 > 0:
            raise ConfigError([f"[picard] T=0 (auto) but kappa1={b.kappa1!r} is not positive; set T explicitly"])
        T = c.get("T_fraction") * b.kappa1
    M = c.get("M") or None
    K = c.get("K") or None
    if M is None and not lam0 < ctx.spec.lambda_bar:
        raise ConfigError(["[picard] M=0 (recipe) needs lambda0 < lambda_bar"])
    rep = check_conditions(ctx.spec, build_stack(ctx.g0, ctx.A), T, lam0, M, K, ctx.params.beta, ctx.params.alpha, ctx.A, gamma_A(ctx), ctx.weight)
    return rep, T


def write_certificate(ctx: Context) -> tuple[CertificateReport, float, bool]:
    t0 = time.perf_counter()
    rep, T = certificate(ctx)
    r = range(min(9, ctx.A + 5))
    bounds = verify_initial_bounds(ctx.spec, ctx.grid, r, r)
    certified = rep.certified and bounds.ok
    text = rep.to_text()
    text += f"initial_bound_C0_claimed = {bounds.claimed_C0!r}\n"
    text += f"initial_bound_C0_smallest = {bounds.smallest_C0!r}\n"
    text += f"initial_bound_failures = {list(bounds.failures)}\n"
    text += f"certified_overall = {certified}\n"
    ctx.path("certificate.txt").write_text(text, encoding="ascii")
    ctx.record("certificate.txt")
    ctx.certificate = {
        "certified": certified,
        "conditions_passed": rep.certified,
        "initial_bounds_ok": bounds.ok,
        "failing": list(rep.failing),
        "kappa0": rep.kappa0,
        "kappa1": rep.kappa1,
        "T": T,
        "M": rep.M,
        "K": rep.K_chosen,
        "lambda0": rep.lambda0,
    }
    if not certified:
        ctx.notes.append("uncertified: results carry no existence guarantee")
    ctx.timed("certificate", t0)
    return rep, T, certified


def picard_config(ctx: Context, rep: CertificateReport, T: float) -> PicardConfig:
    c = ctx.cfg
    return PicardConfig(
        lambda0=rep.lambda0,
        K=rep.K_chosen,
        T=T,
        M=rep.M,
        A=ctx.A,
        nt=c.get("nt"),
        tol_fp_rel=c.get("tol_fp_rel"),
        max_iter=c.get("max_iter"),
        scheme=c.get("scheme"),
    )


# -- commands --------------------------------------------------------------------


def cmd_certify(ctx: Context) -> None:
    write_certificate(ctx)


def _snapshot_name(i: int) -> str:
    return f"snapshots/g_{i:04d}.txt"


def _write_invariants(ctx: Context, traj: Trajectory, pc: PicardConfig, rep: CertificateReport, rel: str):
    coeffs = source_fields(traj, ctx.weight, ctx.params)
    gron = gronwall_diagnostic(traj, coeffs, pc, ctx.params, rep.gammas)
    inv = invariant_report(traj, ctx.params, ctx.weight, None, gron)
    inv.write_csv(ctx.path(rel))
    ctx.record(rel)
    return inv, gron


def cmd_solve(ctx: Context) -> None:
    rep, T, certified = write_certificate(ctx)
    pc = picard_config(ctx, rep, T)
    t0 = time.perf_counter()
    try:
        traj, state = iterate(ctx.g0, pc, ctx.params, ctx.weight, waive_ball=not certified, gammas=rep.gammas)
    finally:
        ctx.timed("picard", t0)
    state.write_csv(ctx.path("picard.csv"))
    ctx.record("picard.csv")
    t0 = time.perf_counter()
    for i, f in enumerate(traj.fields):
        write_snapshot(ctx.path(_snapshot_name(i)), f)
        ctx.record(_snapshot_name(i))
    ctx.timed("snapshots", t0)
    t0 = time.perf_counter()
    inv, gron = _write_invariants(ctx, traj, pc, rep, "invariants.csv")
    ctx.timed("invariants", t0)
    ctx.check("picard_converged", state.metrics[-1], state.tol_fp, state.converged)
    ctx.check("fixed_point_residual", state.residual, 2 * state.tol_fp, state.residual <= 2 * state.tol_fp)
    if not certified:
        return
    ratios = [r for r in state.ratios[:CONTRACTION_ITERS] if math.isfinite(r)]
    worst = max(ratios, default=0.0)
    ctx.check("contraction_ratio", worst, 1.0, worst < 1.0, "<")
    ball = ball_membership(traj, pc)
    ctx.check("ball_membership", max(ball.sup_H, ball.int_Htilde), ball.M, ball.member)
    ctx.check("gronwall_slack", float(gron.slacks.min()), -gron.tol, gron.ok, ">=")
    h0, _ = check_Hu(ctx.f0, 1e-9)
    if h0:
        tol = ctx.cfg.get("tol_invariant")
        worst = max(float(inv.mass_uniformity.max()), float(inv.incompressibility.max()))
        ctx.check("incompressibility", worst, tol, worst <= tol)


def _probes(ctx: Context, T: float, dt: float) -> list[ProbeRequest]:
    n = ctx.cfg.get("n_probes")
    us = np.linspace(-1.5, 1.5, n) if n > 1 else np.zeros(1)
    return [
        ProbeRequest(T, (i + 0.5) / n, float(us[i]), ctx.cfg.get("paths"), dt, ctx.seed, stream=i)
        for i in range(n)
    ]


def cmd_oracle(ctx: Context) -> None:
    """Linear problem with Q (and H) frozen at the values extracted from g0."""
    rep, T, _ = write_certificate(ctx)
    src = source_fields([ctx.g0], ctx.weight, ctx.params)
    coeffs = CoefficientFields.frozen(src.Q[0], None if src.H is None else src.H[0])
    t0 = time.perf_counter()
    traj = solve_linear(ctx.g0, coeffs, ctx.params, ctx.weight, T, ctx.cfg.get("nt"))
    ctx.timed("linear_solve", t0)
    t0 = time.perf_counter()
    report = oracle_compare(traj, _probes(ctx, T, traj.dt), coeffs, ctx.params, ctx.weight, ctx.spec, threads=ctx.threads)
    ctx.timed("monte_carlo", t0)
    ctx.path("oracle.txt").write_text(report.to_text(), encoding="ascii")
    ctx.record("oracle.txt")
    worst = max(p.diff / p.tol for p in report.probes)
    ctx.check("oracle_agreement", worst, 1.0, report.ok)


def cmd_norms(ctx: Context, snapshot: str | None) -> None:
    rep, _, _ = write_certificate(ctx)
    g = ctx.g0
    if snapshot is not None:
        g = read_snapshot(snapshot)
        if g.kind == "f":
            g = weight_transform(g, ctx.weight, "to_g")
    lam = rep.lambda0 - (1 + rep.K_chosen) * g.t
    if lam < 0:
        raise ConfigError([f"snapshot time {g.t!r} lies beyond the radius lambda(t) > 0"])
    lad = norm_family(build_stack(g, ctx.A), lam, ctx.A)
    lines = [f"# norm ladder of g at t={g.t!r} lambda={lam!r} A={ctx.A}", "# a value"]
    lines += [f"{a} {v!r}" for a, v in enumerate(lad.values_a)]
    lines += [f"H {lad.H!r}", f"Htilde {lad.Htilde!r}", f"boundary {lad.boundary!r}"]
    ctx.path("norms.txt").write_text("\n".join(lines) + "\n", encoding="ascii")
    ctx.record("norms.txt")


def _particle_row(ens, step: int) -> dict:
    row = {"step": step, "t": repr(float(ens.t)), "mean_u": repr(float(ens.u.mean())), "var_u": repr(float(ens.u.var()))}
    if ens.N >= 10_000:
        res = uniformity_test(ens)
        row.update(chi2=repr(res.chi2), p_value=repr(res.p_value), ks=repr(res.ks))
    else:
        row.update(chi2="nan", p_value="nan", ks="nan")
    return row


def cmd_particles(ctx: Context) -> None:
    c = ctx.cfg
    rep, T, certified = write_certificate(ctx)
    mode = c.get("drift_mode")
    fields = None
    if mode == "field_coupled":
        pc = picard_config(ctx, rep, T)
        t0 = time.perf_counter()
        traj, _ = iterate(ctx.g0, pc, ctx.params, ctx.weight, waive_ball=not certified, gammas=rep.gammas)
        ctx.timed("pde_fields", t0)
        fields = PDEFields.from_coefficients(source_fields(traj, ctx.weight, ctx.params))
    if ctx.params.sigma == 0:
        ctx.notes.append("sigma = 0: outside the hypothesis of the stochastic representation")
    n_steps = c.get("n_steps") or c.get("nt")
    dt = c.get("dt_particles") or T / n_steps
    t0 = time.perf_counter()
    ens = init_ensemble(c.get("N"), ctx.spec, ctx.seed, ctx.threads)
    write_ensemble(ctx.path("particles/ensemble_0000.txt"), ens)
    ctx.record("particles/ensemble_0000.txt")
    rows = [_particle_row(ens, 0)]
    for k in range(1, n_steps + 1):
        ens = step_trajectory(ens, mode, ctx.params, dt, 1, fields, c.get("n_bins"), ctx.threads)
        rows.append(_particle_row(ens, k))
    ctx.timed("particles", t0)
    write_ensemble(ctx.path("particles/ensemble_final.txt"), ens)
    ctx.record("particles/ensemble_final.txt")
    write_stats_csv(ctx.path("particle_stats.csv"), rows)
    ctx.record("particle_stats.csv")
    if ens.N >= 10_000:
        res = uniformity_test(ens)
        ctx.check("uniformity", res.p_value, 0.01, res.passed(0.01), ">=")


# -- verify ------------------------------------------------------------------------


def _read_csv_columns(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in (rows[0] if rows else {})}


def _close(a: np.ndarray, b: np.ndarray) -> bool:
    if a.shape != b.shape:
        return False
    both_nan = np.isnan(a) & np.isnan(b)
    return bool(np.all(both_nan | (np.abs(a - b) <= CSV_RTOL * np.maximum(np.abs(a), np.abs(b)) + 1e-300)))


def _verify_solve(ctx: Context, entry: dict, failures: list[str]) -> None:
    names = sorted(k for k in entry["outputs"] if k.startswith("snapshots/"))
    try:
        fields = [read_snapshot(ctx.out / n) for n in names]
    except (ValueError, FloatingPointError) as exc:
        failures.append(f"snapshot format: {exc}")
        return
    if not fields:
        failures.append("snapshot format: no snapshots listed")
        return
    times = np.array([f.t for f in fields])
    dt = float(times[1] - times[0]) if times.size > 1 else 0.0
    traj = Trajectory(fields, times, dt, 1, np.zeros(times.size))
    rep, T = certificate(ctx)
    pc = picard_config(ctx, rep, T)
    coeffs = source_fields(traj, ctx.weight, ctx.params)
    gron = gronwall_diagnostic(traj, coeffs, pc, ctx.params, rep.gammas)
    inv = invariant_report(traj, ctx.params, ctx.weight, None, gron)
    stored = _read_csv_columns(ctx.out / "invariants.csv")
    recomputed = {
        "t": inv.times,
        "mass_uniformity": inv.mass_uniformity,
        "incompressibility": inv.incompressibility,
        "total_mass_drift": inv.total_mass_drift,
        "continuity_residual": inv.continuity_residual,
        "second_moment_residual": inv.second_moment_residual,
        "gronwall_slack": inv.gronwall_slacks,
    }
    for name, values in recomputed.items():
        if name not in stored or not _close(stored[name], values):
            failures.append(f"invariant {name}: recomputed from snapshots does not match invariants.csv")
    checks = entry.get("checks", {})
    if "incompressibility" in checks:
        tol = checks["incompressibility"]["threshold"]
        if inv.mass_uniformity.max() > tol:
            failures.append(f"invariant mass_uniformity: {inv.mass_uniformity.max():.3e} > {tol:.1e}")
        if inv.incompressibility.max() > tol:
            failures.append(f"invariant incompressibility: {inv.incompressibility.max():.3e} > {tol:.1e}")
    if "gronwall_slack" in checks and not gron.ok:
        failures.append(f"invariant gronwall_slack: min {gron.slacks.min():.3e} < {-gron.tol:.3e}")
    if "ball_membership" in checks and not ball_membership(traj, pc).member:
        failures.append("invariant ball_membership: stored trajectory leaves the M-ball")


def _verify_particles(ctx: Context, entry: dict, failures: list[str]) -> None:
    try:
        ens = read_ensemble(ctx.out / "particles/ensemble_final.txt")
    except (ValueError, IndexError) as exc:
        failures.append(f"invariant torus_positions: {exc}")
        return
    if not np.all(np.isfinite(ens.u)):
        failures.append("invariant finite_velocities: non-finite velocity in final ensemble")
    if "uniformity" in entry.get("checks", {}):
        res = uniformity_test(ens)
        stored = entry["checks"]["uniformity"]["value"]
        if res.p_value != stored:
            failures.append("invariant uniformity: recomputed p-value differs from the manifest")
        if not res.passed(0.01):
            failures.append(f"invariant uniformity: p={res.p_value:.3g} < 0.01")


def _verify_certificate(ctx: Context, failures: list[str]) -> None:
    rep, _ = certificate(ctx)
    stored = (ctx.out / "certificate.txt").read_text(encoding="ascii")
    if not stored.startswith(rep.to_text()):
        failures.append("invariant certificate: recomputed report differs from certificate.txt")


def cmd_verify(ctx: Context, manifest: dict) -> None:
    """Read-only: integrity of every listed file, then invariants recomputed from stored data."""
    failures: list[str] = []
    for name, entry in manifest["commands"].items():
        for rel, digest in entry["outputs"].items():
            p = ctx.out / rel
            if not p.is_file():
                failures.append(f"integrity {rel}: missing")
            elif sha256(p) != digest:
                failures.append(f"integrity {rel}: sha256 mismatch")
    cmds = manifest["commands"]
    if any(k.endswith("certificate.txt") for e in cmds.values() for k in e["outputs"]) and (ctx.out / "certificate.txt").is_file():
        _verify_certificate(ctx, failures)
    if "solve" in cmds:
        _verify_solve(ctx, cmds["solve"], failures)
    if "particles" in cmds:
        _verify_particles(ctx, cmds["particles"], failures)
    for name, entry in cmds.items():
        for check, val in entry.get("checks", {}).items():
            if not val["passed"]:
                failures.append(f"check {name}/{check}: recorded as failed")
    if failures:
        raise AssertionFailure("verify failed:\n  " + "\n  ".join(failures))


# -- report ------------------------------------------------------------------------


def _copy_csv(ctx: Context, src: str, dst: str) -> dict[str, np.ndarray]:
    data = (ctx.out / src).read_bytes()
    ctx.path(dst).write_bytes(data)
    ctx.record(dst)
    return _read_csv_columns(ctx.out / src)


def cmd_report(ctx: Context, manifest: dict) -> None:
    """CSV bundles under report/ plus PNG figures."""
    from . import plotting

    cmds = manifest["commands"]
    if not any(k in cmds for k in ("certify", "solve", "particles", "oracle-check")):
        raise ConfigError(["manifest lists no command with reportable outputs"])
    cert_src = next((k for e in cmds.values() for k in e["outputs"] if k == "certificate.txt"), None)
    if cert_src:
        rows = []
        for line in (ctx.out / cert_src).read_text(encoding="ascii").splitlines():
            if line.startswith("condition "):
                name, rest = line[len("condition ") :].split(":", 1)
                lhs, rel, rhs, _, state = rest.split()
                rows.append({"condition": name, "lhs": lhs, "relation": rel, "rhs": rhs, "passed": int(state == "pass")})
        write_stats_csv(ctx.path("report/conditions.csv"), rows)
        ctx.record("report/conditions.csv")
    if "solve" in cmds:
        pic = _copy_csv(ctx, "picard.csv", "report/picard_contraction.csv")
        plotting.line_figure(ctx.path("report/contraction.png"), pic["n"], {"$D_n$": pic["D_n"]}, "iteration $n$", "metric", logy=True)
        ctx.record("report/contraction.png")
        inv = _copy_csv(ctx, "invariants.csv", "report/invariants.csv")
        series = {r"$\sup|\rho-1|$": inv["mass_uniformity"], r"$\sup|\partial_x V|$": inv["incompressibility"]}
        plotting.line_figure(ctx.path("report/invariants.png"), inv["t"], series, "$t$", "residual", logy=True)
        ctx.record("report/invariants.png")
        last = sorted(k for k in cmds["solve"]["outputs"] if k.startswith("snapshots/"))[-1]
        g = read_snapshot(ctx.out / last)
        f = weight_transform(g, ctx.weight, "to_f")
        mom = moments(f)
        rows = [{"x": repr(float(x)), "rho": repr(float(r)), "V": repr(float(v)), "S": repr(float(s))} for x, r, v, s in zip(g.grid.x, mom.rho, mom.V, mom.S)]
        write_stats_csv(ctx.path("report/moments_final.csv"), rows)
        ctx.record("report/moments_final.csv")
        plotting.field_figure(ctx.path("report/f_final.png"), g.grid.x, g.grid.u, f.samples, "$f(T)$")
        ctx.record("report/f_final.png")
    if "particles" in cmds:
        st = _copy_csv(ctx, "particle_stats.csv", "report/particle_stats.csv")
        plotting.line_figure(ctx.path("report/particle_variance.png"), st["t"], {"var $u$": st["var_u"], "mean $u$": st["mean_u"]}, "$t$", "moment")
        ctx.record("report/particle_variance.png")
        ens = read_ensemble(ctx.out / "particles/ensemble_final.txt")
        nb = int(ctx.cfg.get("n_bins"))
        counts = np.bincount(np.minimum((ens.x * nb).astype(np.int64), nb - 1), minlength=nb)
        rows = [{"bin": i, "x_center": repr((i + 0.5) / nb), "count": int(cnt)} for i, cnt in enumerate(counts)]
        write_stats_csv(ctx.path("report/position_histogram.csv"), rows)
        ctx.record("report/position_histogram.csv")
    if "oracle-check" in cmds:
        rows = []
        for line in (ctx.out / "oracle.txt").read_text(encoding="ascii").splitlines()[1:]:
            t, x, u, pde, mc, se, z, ok = line.split()
            rows.append({"t": t, "x": x, "u": u, "pde": pde, "mc_mean": mc, "stderr": se, "z": z, "passed": ok})
        write_stats_csv(ctx.path("report/oracle_probes.csv"), rows)
        ctx.record("report/oracle_probes.csv")


# -- manifest and entry point ------------------------------------------------------------


def load_manifest(path: Path) -> dict:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"{path}: cannot read manifest ({exc})"]) from exc
    if data.get("format") != FORMAT or "config" not in data or "commands" not in data:
        raise ConfigError([f"{path}: not a {FORMAT} file"])
    return data


def _same_run(a: dict, b: dict) -> bool:
    """Configurations equal up to the thread count, which never changes outputs."""
    strip = lambda c: {s: {k: v for k, v in keys.items() if k != "threads"} for s, keys in c.items()}
    return strip(a) == strip(b)


def _check_out_dir(out: Path, cfg: Config) -> None:
    path = out / MANIFEST
    if path.is_file() and not _same_run(load_manifest(path)["config"], cfg.echo()):
        raise ConfigError([f"{path} records a different configuration; choose another --out"])


def _write_manifest(ctx: Context, command: str, status: int) -> None:
    path = ctx.out / MANIFEST
    echo = ctx.cfg.echo()
    data = {"format": FORMAT, "version": __version__, "config": echo, "seeds": {}, "commands": {}}
    if path.is_file():
        old = load_manifest(path)
        if _same_run(old["config"], echo):
            data = old
            data["version"] = __version__
    data["seeds"] = {"run": ctx.seed, "streams": ["init", "langevin", "feynman_kac"]}
    data["commands"][command] = {
        "status": status,
        "outputs": dict(sorted(ctx.outputs.items())),
        "timings": ctx.timings,
        "checks": ctx.checks,
        "notes": ctx.notes,
        "certificate": ctx.certificate,
        "threads": ctx.threads,
    }
    certs = [e["certificate"]["certified"] for e in data["commands"].values() if e.get("certificate")]
    data["certified"] = bool(certs) and all(certs)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _parse_overrides(extra: list[str]) -> dict[str, str]:
    out, problems = {}, []
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            problems.append(f"unexpected argument {tok!r}")
            continue
        key, eq, val = tok[2:].partition("=")
        if not eq:
            val = next(it, None)
            if val is None:
                problems.append(f"flag {tok!r} needs a value")
                continue
        out[key] = val
    if problems:
        raise ConfigError(problems)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="kinvfp",
        allow_abbrev=False,
        description="Weighted kinetic Fokker-Planck solver with existence certificates. Any config key can be overridden with --key=value or --section.key=value.",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="config file with [weight] [grid] [model] [picard] [particles] [oracle] [run] sections")
    p.add_argument("--out", help="output directory (default: kinvfp_out, or the manifest directory)")
    p.add_argument("--from-manifest", dest="manifest", help="reuse the configuration recorded in a manifest")
    p.add_argument("--snapshot", help="snapshot file for the norms command")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    ctx = None
    status = EXIT_OK
    try:
        overrides = _parse_overrides(extra)
        manifest = None
        if args.command in ("verify", "report") and not args.manifest and args.out:
            args.manifest = str(Path(args.out) / "manifest.json")
        if args.manifest:
            manifest = load_manifest(Path(args.manifest))
        if args.command in ("verify", "report") and manifest is None:
            raise ConfigError([f"{args.command} requires --from-manifest or --out"])
        cfg = parse_config(args.config, overrides, manifest["config"] if manifest else None)
        default_out = Path(args.manifest).parent if args.command in ("verify", "report") else Path("kinvfp_out")
        out = Path(args.out) if args.out else default_out
        _check_out_dir(out, cfg)
        out.mkdir(parents=True, exist_ok=True)
        ctx = Context(cfg, out, resolve_threads(cfg))
        t0 = time.perf_counter()
        if args.command == "certify":
            cmd_certify(ctx)
        elif args.command == "solve":
            cmd_solve(ctx)
        elif args.command == "oracle-check":
            cmd_oracle(ctx)
        elif args.command == "norms":
            cmd_norms(ctx, args.snapshot)
        elif args.command == "particles":
            cmd_particles(ctx)
        elif args.command == "verify":
            cmd_verify(ctx, manifest)
        else:
            cmd_report(ctx, manifest)
        ctx.timed("total", t0)
        failed = [k for k, v in ctx.checks.items() if not v["passed"]]
        if failed:
            raise AssertionFailure("failed checks: " + ", ".join(failed))
        for n in ctx.notes:
            print(f"warning: {n}", file=sys.stderr)
        print(f"{args.command}: ok ({out})")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_INPUT
    except AssertionFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_ASSERT
    except (PicardDivergence, FloatingPointError, OverflowError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        status = EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_INPUT
    if ctx is not None and args.command != "verify":
        _write_manifest(ctx, args.command, status)
    return status


if __name__ == "__main__":
    sys.exit(main())
