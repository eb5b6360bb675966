"""Run configuration: TOML loading, defaults, validation and sweep expansion.

Grammar (TOML)::

    kind = "classical"          # optional; must match the subcommand
    seed = 42                   # --seed and CDW_LAB_SEED take precedence; 0 if absent

    [classical]                 # one block, named after the kind
    n_sites = 64
    e_dc = 0.5

    [sweep]                     # optional; Cartesian product of the axes
    e_dc = [0.1, 0.2, 0.3]      # explicit values
    omega = {start = 0.01, stop = 0.1, num = 10}   # inclusive linspace

    [meta]                      # ignored on load, written by runs

Values may be overridden from the environment with ``CDW_LAB_SEED`` and
``CDW_LAB_<KIND>_<KEY>`` (upper case, e.g. ``CDW_LAB_CLASSICAL_E_DC=0.4``);
the value is read as a TOML literal, falling back to a bare string.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np
import tomli

from .errors import ConfigError

ENV_PREFIX = "CDW_LAB_"
KINDS = ("classical", "quantum", "soliton", "variational", "fit")

DEFAULTS = {
    "classical": {
        "n_sites": 64, "concentration": 1.0, "grid_length": 64.0, "min_gap": -1.0,
        "e_dc": 0.0, "e_ac": 0.0, "omega": 0.01, "v_strength": 1.0, "g1": 1.0,
        "dt": 0.0, "n_steps": 10_000, "stride": 1, "method": "midpoint",
        "probe_frequencies": [], "threshold_fields": [], "threshold_steps": 50_000,
        "threshold_bisections": 8,
    },
    "quantum": {
        "scheme": "cn", "d_coeff": 1.0, "mu_e_sq": 20.0, "omega_p_sq": 200.0, "omega_d": 1.0,
        "hbar": 1.0, "x_min": -2.0 * math.pi, "x_max": 3.0 * math.pi, "n_points": 1024,
        "dt": 1e-3, "n_steps": 6000, "stride": 1, "center": 0.0, "width": 0.0, "k0": 0.0,
        "periodic": False, "cn_variant": "standard", "df_form": "consistent", "df_neighbors": "sum",
    },
    "soliton": {
        "beta": -0.5, "sign": 1, "z_half": 10.0, "profile_points": 401, "omega0_sq": 100.0,
        "omega1_sq": 1.0, "d": 1.0, "n": 400, "center_index": 100.0, "dt": 0.0, "n_steps": 0,
        "stride": 10, "clamped": True, "residual_h": [0.2, 0.1, 0.05, 0.025],
    },
    "variational": {
        "d1": 174.091, "e1": 1e-5, "e2": 1e-6, "delta_p": 0.005, "n_chains": 2, "hbar": 1.0,
        "m_max": 2, "eta": 20.0, "points_per_axis": 128, "rule": "trapezoid",
        "theta_start_pi": -4.0, "theta_stop_pi": 4.0, "theta_points": 33, "n_restarts": 8,
        "max_evals": 20_000, "omega_d": 0.0,
    },
    "fit": {
        "law": "ss", "data": "", "loss": "linear", "e_t": 1.0, "c_v": 1.0, "c_tilde": 1.0,
        "g_p": 1.0, "free": [], "curve_points": 200,
    },
}

CHOICES = {
    ("classical", "method"): ("midpoint", "heun"),
    ("quantum", "scheme"): ("cn", "df", "crank_nicolson", "dufort_frankel"),
    ("quantum", "cn_variant"): ("standard", "printed"),
    ("quantum", "df_form"): ("consistent", "printed"),
    ("quantum", "df_neighbors"): ("sum", "difference"),
    ("variational", "rule"): ("trapezoid", "simpson"),
    ("fit", "law"): ("ss", "zener"),
    ("fit", "loss"): ("linear", "log"),
}


@dataclass
class RunConfig:
    kind: str
    seed: int
    params: dict
    sweep: dict = field(default_factory=dict)
    out: str = "out"
    source: str = ""

    def children(self) -> list:
        """(coordinates, params, seed) per sweep point; one entry when there is no sweep."""
        if not self.sweep:
            return [((), dict(self.params), self.seed)]
        keys = list(self.sweep)
        out = []
        for values in itertools.product(*(self.sweep[k] for k in keys)):
            coords = tuple(zip(keys, values))
            p = dict(self.params)
            p.update(coords)
            out.append((coords, p, child_seed(self.seed, coords)))
        return out


def child_seed(seed: int, coords) -> int:
    """Stable 63-bit seed from the parent seed and sweep coordinates."""
    text = f"{int(seed)}|" + "|".join(f"{k}={v!r}" for k, v in coords)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little") >> 1


def coords_label(coords) -> str:
    return "__".join(f"{k}={v!r}" for k, v in coords) or "run"


def _key_line(text: str, section: str | None, key: str):
    """Line number (1-based) of ``key = ...`` inside ``[section]``, if found."""
    current = None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and re.match(rf"^{re.escape(key)}\s*=", s):
            return n
    return None


def _coerce(kind, key, value, default, line=None):
    where = f"{kind}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false", key=key, line=line)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer", key=key, line=line)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number", key=key, line=line)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string", key=key, line=line)
        allowed = CHOICES.get((kind, key))
        if allowed and value not in allowed:
            raise ConfigError(f"{where} must be one of {allowed}, got {value!r}", key=key, line=line)
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list", key=key, line=line)
        return list(value)
    return value


def _sweep_values(key, spec, line):
    if isinstance(spec, list):
        if not spec:
            raise ConfigError(f"sweep axis {key} is empty", key=key, line=line)
        return list(spec)
    if isinstance(spec, dict):
        extra = set(spec) - {"start", "stop", "num"}
        if extra or len(spec) != 3:
            raise ConfigError(f"sweep axis {key} needs exactly start, stop, num", key=key, line=line)
        num = spec["num"]
        if not isinstance(num, int) or num < 1:
            raise ConfigError(f"sweep axis {key}: num must be a positive integer", key=key, line=line)
        return [float(v) for v in np.linspace(spec["start"], spec["stop"], num)]
    raise ConfigError(f"sweep axis {key} must be a list or a start/stop/num table", key=key, line=line)


def _env_value(raw: str):
    try:
        return tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        return raw


def build_config(kind: str, data: dict, text: str = "", env=None, seed=None, out=None) -> RunConfig:
    """Validate a parsed mapping into a RunConfig (defaults filled, unknown keys rejected)."""
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}", key="kind")
    env = os.environ if env is None else env
    data = dict(data)
    declared = data.pop("kind", kind)
    if declared != kind:
        raise ConfigError(f"config declares kind {declared!r} but the subcommand is {kind!r}",
                          key="kind", line=_key_line(text, None, "kind"))
    file_seed = data.pop("seed", None)
    block = data.pop(kind, {})
    sweep_raw = data.pop("sweep", {})
    data.pop("meta", None)
    for key in data:
        where = key if not isinstance(data[key], dict) else f"[{key}]"
        raise ConfigError(f"unknown key {where}", key=key, line=_key_line(text, None, key)
                          or _key_line_section(text, key))
    if not isinstance(block, dict):
        raise ConfigError(f"{kind} must be a table", key=kind)

    defaults = DEFAULTS[kind]
    params = dict(defaults)
    for key, value in block.items():
        line = _key_line(text, kind, key)
        if key not in defaults:
            raise ConfigError(f"unknown key {kind}.{key}", key=key, line=line)
        params[key] = _coerce(kind, key, value, defaults[key], line)

    prefix = f"{ENV_PREFIX}{kind.upper()}_"
    for name in sorted(env):
        if name.startswith(prefix):
            key = name[len(prefix):].lower()
            if key not in defaults:
                raise ConfigError(f"environment override {name} names unknown key {kind}.{key}", key=key)
            params[key] = _coerce(kind, key, _env_value(env[name]), defaults[key])

    sweep = {}
    if not isinstance(sweep_raw, dict):
        raise ConfigError("sweep must be a table", key="sweep")
    for key, spec in sweep_raw.items():
        line = _key_line(text, "sweep", key)
        if key not in defaults:
            raise ConfigError(f"sweep axis names unknown key {kind}.{key}", key=key, line=line)
        sweep[key] = [_coerce(kind, key, v, defaults[key], line) for v in _sweep_values(key, spec, line)]

    if seed is None and f"{ENV_PREFIX}SEED" in env:
        seed = _env_value(env[f"{ENV_PREFIX}SEED"])
    if seed is None:
        seed = file_seed
    if seed is None:
        seed = 0
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}", key="seed",
                          line=_key_line(text, None, "seed"))
    return RunConfig(kind, int(seed), params, sweep, out or "out", text)


def _key_line_section(text, name):
    for n, line in enumerate(text.splitlines(), 1):
        if re.match(rf"^\s*\[{re.escape(name)}\]", line):
            return n
    return None


def load_config(path, kind: str | None = None, env=None, seed=None, out=None) -> RunConfig:
    """Read and validate a TOML run file.

    ``kind`` defaults to the file's ``kind`` key. Parse errors and unknown
    keys raise ConfigError carrying the offending key and line.
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    text = raw.decode("utf-8", errors="replace")
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"{path}: {exc}", line=int(m.group(1)) if m else None) from None
    if kind is None:
        kind = data.get("kind")
        if kind is None:
            raise ConfigError("config has no `kind` and none was given", key="kind")
    return build_config(kind, data, text, env, seed, out)


def _toml_value(v) -> str:
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(float(v))
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {type(v).__name__} to TOML")


def dump_config(kind: str, seed: int, params: dict, sweep: dict | None = None, meta: dict | None = None) -> str:
    """TOML text that :func:`load_config` reads back to the same run."""
    lines = [f"kind = {_toml_value(kind)}", f"seed = {int(seed)}", "", f"[{kind}]"]
    lines += [f"{k} = {_toml_value(v)}" for k, v in params.items()]
    if sweep:
        lines += ["", "[sweep]"] + [f"{k} = {_toml_value(v)}" for k, v in sweep.items()]
    if meta:
        lines += ["", "[meta]"] + [f"{k} = {_toml_value(v)}" for k, v in meta.items()]
    return "\n".join(lines) + "\n"
