"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Every error names the
offending key.  Study files may add ``study.mode``, ``study.sizes``,
``study.dts`` and ``study.dt_power``.
"""
from __future__ import annotations

import math

from .exceptions import ConfigError
from .harness import AppliedField, ConvergencePlan, RunSpec

__all__ = ["parse_config", "load_config", "run_spec", "study_plan", "DEFAULTS", "parse_mesh_arg"]

DEFAULTS = {
    "Re": "1", "kappa": "1", "T": "1", "dt": "0.1", "scheme": "1", "k_u": "2", "k_J": "1",
    "mesh.type": "cube", "mesh.n": "4", "mesh.jitter": "0.2", "mesh.seed": "0", "mesh.path": "",
    "case": "ms1", "B": "1, 1, 1", "out.dir": ".", "workers": "1",
    "study.mode": "temporal", "study.sizes": "4", "study.dts": "0.2, 0.1, 0.05, 0.025, 0.0125",
    "study.dt_power": "",
}


def parse_config(text, source="<config>"):
    """Return a dict of raw string values, defaults filled in."""
    out = dict(DEFAULTS)
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}",
                              key=line.split()[0])
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}", key=key)
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}", key=key)
        seen.add(key)
        out[key] = val
    return out


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def _num(cfg, key, kind=float, positive=True, allowed=None):
    raw = cfg[key]
    try:
        val = kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: not a valid {kind.__name__}: {raw!r}", key=key) from None
    if kind is float and not math.isfinite(val):
        raise ConfigError(f"{key}: must be finite", key=key)
    if allowed is not None and val not in allowed:
        raise ConfigError(f"{key}: must be one of {sorted(allowed)}, got {raw!r}", key=key)
    if positive and allowed is None and val <= 0:
        raise ConfigError(f"{key}: must be positive, got {raw!r}", key=key)
    return val


def _list(cfg, key, kind):
    try:
        vals = [kind(v) for v in cfg[key].split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected a comma-separated list, got {cfg[key]!r}", key=key) from None
    if not vals or any(v <= 0 for v in vals):
        raise ConfigError(f"{key}: expected positive entries", key=key)
    return tuple(vals)


def run_spec(cfg):
    _num(cfg, "k_u", int, allowed={2})
    mtype = cfg["mesh.type"]
    if mtype not in ("cube", "dtp", "file"):
        raise ConfigError(f"mesh.type: expected cube, dtp or file, got {mtype!r}", key="mesh.type")
    if mtype == "file" and not cfg["mesh.path"]:
        raise ConfigError("mesh.path: required when mesh.type = file", key="mesh.path")
    if cfg["case"] not in ("ms1", "ms2", "decay"):
        raise ConfigError(f"case: expected ms1, ms2 or decay, got {cfg['case']!r}", key="case")
    AppliedField(cfg["B"])  # validates
    jitter = _num(cfg, "mesh.jitter", positive=False)
    if not 0 <= jitter < 0.3:
        raise ConfigError("mesh.jitter: must lie in [0, 0.3)", key="mesh.jitter")
    return RunSpec(
        mesh_type=mtype, n=_num(cfg, "mesh.n", int), jitter=jitter,
        seed=_num(cfg, "mesh.seed", int, positive=False), mesh_path=cfg["mesh.path"] or None,
        case=cfg["case"], order=_num(cfg, "scheme", int, allowed={1, 2}),
        dt=_num(cfg, "dt"), T=_num(cfg, "T"), Re=_num(cfg, "Re"), kappa=_num(cfg, "kappa"),
        kJ=_num(cfg, "k_J", int, allowed={0, 1}), B=cfg["B"],
    )


def study_plan(cfg):
    mode = cfg["study.mode"]
    if mode not in ("temporal", "spatial"):
        raise ConfigError(f"study.mode: expected temporal or spatial, got {mode!r}", key="study.mode")
    power = _num(cfg, "study.dt_power") if cfg["study.dt_power"] else None
    return ConvergencePlan(mode=mode, base=run_spec(cfg), sizes=_list(cfg, "study.sizes", int),
                           dts=_list(cfg, "study.dts", float), dt_power=power,
                           workers=_num(cfg, "workers", int))


def parse_mesh_arg(text):
    """``cube:4``, ``dtp:4`` or ``file:path`` -> config overrides."""
    kind, _, rest = text.partition(":")
    if kind in ("cube", "dtp"):
        return {"mesh.type": kind, "mesh.n": rest or "4"}
    if kind == "file" and rest:
        return {"mesh.type": "file", "mesh.path": rest}
    raise ConfigError(f"--mesh: expected cube:N, dtp:N or file:PATH, got {text!r}", key="mesh.type")
