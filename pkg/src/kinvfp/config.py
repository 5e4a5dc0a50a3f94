"""Run configuration: sectioned key=value files, flag overrides, aggregated validation."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path

# section -> key -> (type, default)
SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "weight": {"s": (int, 4), "l_max": (int, 12)},
    "grid": {"nx": (int, 128), "nu": (int, 129), "u_max": (float, 8.0)},
    "model": {
        "sigma": (float, 1.0),
        "beta": (float, 0.0),
        "alpha": (int, 0),
        "eps": (float, 0.05),
        "mode": (int, 1),
        "thermal_var": (float, 1.0),
        "amplitude": (float, 1e-6),
        "C0": (float, 2e-6),
        "lambda_bar": (float, 0.5),
        "m": (int, 0),
        "n": (int, 0),
    },
    "picard": {
        "lambda0": (float, 0.1),
        "T": (float, 0.0),
        "T_fraction": (float, 0.5),
        "K": (float, 0.0),
        "M": (float, 0.0),
        "nt": (int, 8),
        "A": (int, 4),
        "tol_fp_rel": (float, 1e-8),
        "max_iter": (int, 50),
        "scheme": (str, "sg"),
        "tol_invariant": (float, 5e-4),
    },
    "particles": {
        "N": (int, 100_000),
        "dt_particles": (float, 0.0),
        "n_steps": (int, 0),
        "n_bins": (int, 32),
        "drift_mode": (str, "field_coupled"),
    },
    "oracle": {"paths": (int, 100_000), "n_probes": (int, 8)},
    "run": {"seed": (int, 0), "threads": (int, 0)},
}

KEY_SECTION = {k: sec for sec, keys in SCHEMA.items() for k in keys}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class Config:
    values: dict[str, dict[str, object]]

    def __getitem__(self, section: str) -> dict[str, object]:
        return self.values[section]

    def get(self, key: str):
        return self.values[KEY_SECTION[key]][key]

    def echo(self) -> dict[str, dict[str, object]]:
        return {sec: dict(v) for sec, v in self.values.items()}


def _coerce(typ: type, raw) -> object:
    if isinstance(raw, typ) and not isinstance(raw, bool):
        return raw
    if typ is int:
        if isinstance(raw, float) and raw.is_integer():
            return int(raw)
        return int(str(raw).strip())
    if typ is float:
        return float(str(raw).strip())
    return str(raw).strip()


def _validate(v: dict[str, dict[str, object]]) -> list[str]:
    p = []
    w, g, m, pc, pt, o, r = (v[s] for s in ("weight", "grid", "model", "picard", "particles", "oracle", "run"))
    if w["s"] < 4 or w["s"] % 2:
        p.append("[weight] s: must be even and >= 4")
    if w["l_max"] < 2:
        p.append("[weight] l_max: must be >= 2")
    if g["nx"] < 8 or g["nx"] & (g["nx"] - 1):
        p.append("[grid] nx: must be a power of two >= 8")
    if g["nu"] < 5 or g["nu"] % 2 == 0:
        p.append("[grid] nu: must be odd and >= 5")
    if not g["u_max"] > 0:
        p.append("[grid] u_max: must be positive")
    if m["alpha"] not in (0, 1):
        p.append("[model] alpha: must be 0 or 1")
    if m["sigma"] < 0:
        p.append("[model] sigma: must be >= 0")
    if m["eps"] < 0:
        p.append("[model] eps: must be >= 0")
    if m["mode"] < 1:
        p.append("[model] mode: must be >= 1")
    if not m["thermal_var"] > 0:
        p.append("[model] thermal_var: must be positive")
    if not m["amplitude"] > 0:
        p.append("[model] amplitude: must be positive")
    if m["C0"] < 0 or not m["lambda_bar"] > 0:
        p.append("[model] C0 >= 0 and lambda_bar > 0 required")
    if not 0 < pc["lambda0"] < 0.25:
        p.append("[picard] lambda0: must lie in (0, 1/4)")
    if pc["T"] < 0 or not 0 < pc["T_fraction"] <= 1:
        p.append("[picard] T >= 0 and T_fraction in (0, 1] required")
    if pc["nt"] < 2 or pc["A"] < 1 or pc["max_iter"] < 1:
        p.append("[picard] nt >= 2, A >= 1 and max_iter >= 1 required")
    if pc["scheme"] not in ("sg", "semi_lagrangian"):
        p.append("[picard] scheme: must be sg or semi_lagrangian")
    if pt["N"] < 1 or pt["n_bins"] < 2 or pt["dt_particles"] < 0 or pt["n_steps"] < 0:
        p.append("[particles] N >= 1, n_bins >= 2, dt_particles >= 0 and n_steps >= 0 required")
    if pt["drift_mode"] not in ("field_coupled", "self_consistent"):
        p.append("[particles] drift_mode: must be field_coupled or self_consistent")
    if o["paths"] < 1000 or o["n_probes"] < 1:
        p.append("[oracle] paths >= 1000 and n_probes >= 1 required")
    if r["seed"] < 0 or r["threads"] < 0:
        p.append("[run] seed and threads must be >= 0")
    return p


def parse_config(path: str | Path | None = None, overrides: dict[str, str] | None = None, echo: dict | None = None) -> Config:
    """Defaults, then file (or a manifest echo), then flag overrides; all problems reported together."""
    raw: dict[str, dict[str, object]] = {sec: {} for sec in SCHEMA}
    problems: list[str] = []
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            read = cp.read(path)
        except configparser.Error as exc:
            raise ConfigError([f"{path}: {exc}"]) from exc
        if not read:
            raise ConfigError([f"{path}: cannot read config file"])
        for sec in cp.sections():
            if sec not in SCHEMA:
                problems.append(f"unknown section [{sec}]")
                continue
            for k, val in cp.items(sec):
                raw[sec][k] = val
    if echo is not None:
        for sec, keys in echo.items():
            if sec not in SCHEMA:
                problems.append(f"unknown section [{sec}]")
                continue
            raw[sec].update(keys)
    for k, val in (overrides or {}).items():
        sec, _, key = k.rpartition(".")
        if not sec:
            sec = KEY_SECTION.get(key, "")
        if sec not in SCHEMA:
            problems.append(f"unknown key {k!r}")
            continue
        raw[sec][key] = val
    values: dict[str, dict[str, object]] = {}
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for k in raw[sec]:
            if k not in keys:
                problems.append(f"[{sec}] {k}: unknown key")
        for k, (typ, default) in keys.items():
            if k in raw[sec]:
                try:
                    values[sec][k] = _coerce(typ, raw[sec][k])
                except (TypeError, ValueError):
                    problems.append(f"[{sec}] {k}: expected {typ.__name__}, got {raw[sec][k]!r}")
                    values[sec][k] = default
            else:
                values[sec][k] = default
    problems += _validate(values)
    if problems:
        raise ConfigError(problems)
    return Config(values)


def resolve_threads(cfg: Config) -> int:
    t = int(cfg.get("threads"))
    if t > 0:
        return t
    env = os.environ.get("KINVFP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError([f"KINVFP_THREADS: expected int, got {env!r}"]) from exc
    return os.cpu_count() or 1
