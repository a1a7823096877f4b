"""Run configuration files.

Line-based `key = value` format under `[section]` headers; blank lines and
`#` comments are skipped. Unknown sections or keys are errors carrying the
line number, and numeric preconditions are validated before any solve so a
bad run fails before it starts.

Sections and keys (defaults in parentheses):

[grid]    dim (1), extents ("0 1", per axis "lo hi" pairs), n (255 per axis)
[domain]  omega0 (empty; semicolon-separated boxes, each "lo hi" per axis),
          b_kind (indicator; constant|indicator|samples), b0 (1.0),
          b_file (path to a snapshot with per-node samples)
[evolve]  a (20.0), p (256.0), dt (1e-3), t_end (2.0), snapshot_every (10),
          cg_tol (1e-10), u0 (phi1; phi1|constant|file), u0_scale (0.5),
          u0_file (path)
[vi]      dt (min(1/(2a), 1e-2)), tol (1e-8), omega (1.5),
          steady_tol (1e-7), eps (1e-6), t_max (500.0)
[sweep]   p_list ("2 4 8 16 32 64 128 256"), regime (intermediate),
          p_max (256), t_max_transient (2.0), growth_threshold (2.0),
          monotone_from (8.0), ratio_p_hi (256), ratio_p_lo (8),
          ratio (0.25), sup_excess_cap (0.05), terminal_cells (2.0),
          h1_cap (1e-3), sup_tol (1e-2), rate_rtol (0.1),
          discrepancy_cap (5e-2), out_dir (path; --out overrides)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError
from .mesh import Grid, build_grid, sample_domain
from .obstacle import default_vi_dt

_FLOAT = "float"
_INT = "int"
_STR = "str"
_FLOATS = "floats"
_PATH = "path"

SCHEMA = {
    "grid": {"dim": _INT, "extents": _FLOATS, "n": _FLOATS},
    "domain": {"omega0": _STR, "b_kind": _STR, "b0": _FLOAT, "b_file": _PATH},
    "evolve": {"a": _FLOAT, "p": _FLOAT, "dt": _FLOAT, "t_end": _FLOAT,
               "snapshot_every": _INT, "cg_tol": _FLOAT, "u0": _STR,
               "u0_scale": _FLOAT, "u0_file": _PATH},
    "vi": {"dt": _FLOAT, "tol": _FLOAT, "omega": _FLOAT, "steady_tol": _FLOAT,
           "eps": _FLOAT, "t_max": _FLOAT},
    "sweep": {"p_list": _FLOATS, "regime": _STR, "p_max": _FLOAT,
              "t_max_transient": _FLOAT, "growth_threshold": _FLOAT,
              "monotone_from": _FLOAT, "ratio_p_hi": _FLOAT,
              "ratio_p_lo": _FLOAT, "ratio": _FLOAT, "sup_excess_cap": _FLOAT,
              "terminal_cells": _FLOAT, "h1_cap": _FLOAT, "sup_tol": _FLOAT,
              "rate_rtol": _FLOAT, "discrepancy_cap": _FLOAT, "out_dir": _PATH},
}

DEFAULTS = {
    "grid": {"dim": 1, "extents": [0.0, 1.0], "n": [255.0]},
    "domain": {"omega0": "", "b_kind": "indicator", "b0": 1.0, "b_file": None},
    "evolve": {"a": 20.0, "p": 256.0, "dt": 1e-3, "t_end": 2.0,
               "snapshot_every": 10, "cg_tol": 1e-10, "u0": "phi1",
               "u0_scale": 0.5, "u0_file": None},
    "vi": {"dt": None, "tol": 1e-8, "omega": 1.5, "steady_tol": 1e-7,
           "eps": 1e-6, "t_max": 500.0},
    "sweep": {"p_list": [2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0],
              "regime": "intermediate", "p_max": 256.0,
              "t_max_transient": 2.0, "growth_threshold": 2.0,
              "monotone_from": 8.0, "ratio_p_hi": 256.0, "ratio_p_lo": 8.0,
              "ratio": 0.25, "sup_excess_cap": 0.05, "terminal_cells": 2.0,
              "h1_cap": 1e-3, "sup_tol": 1e-2, "rate_rtol": 0.1,
              "discrepancy_cap": 5e-2, "out_dir": None},
}


@dataclass
class RunConfig:
    """Parsed, validated configuration with defaults resolved."""

    grid: dict
    domain: dict
    evolve: dict
    vi: dict
    sweep: dict
    source: str = ""

    def section(self, name: str) -> dict:
        return getattr(self, name)

    def to_dict(self) -> dict:
        out = {}
        for name in SCHEMA:
            sec = dict(self.section(name))
            for key, value in sec.items():
                if isinstance(value, Path):
                    sec[key] = str(value)
            out[name] = sec
        return out

    def build_grid(self) -> Grid:
        dim = self.grid["dim"]
        ext = self.grid["extents"]
        n = [int(v) for v in self.grid["n"]]
        if len(ext) != 2 * dim:
            raise ConfigurationError(
                f"extents needs {2 * dim} numbers for dim={dim}, got {len(ext)}")
        if len(n) == 1 and dim == 2:
            n = n * 2
        extents = [(ext[2 * k], ext[2 * k + 1]) for k in range(dim)]
        return build_grid(dim, extents, n)

    def build_domain(self, grid: Grid):
        boxes = _parse_boxes(self.domain["omega0"], grid.dim)
        kind = self.domain["b_kind"]
        if kind == "samples":
            from .fieldio import load_field

            if self.domain["b_file"] is None:
                raise ConfigurationError("b_kind samples needs b_file")
            samples = load_field(self.domain["b_file"], grid).values
            return sample_domain(grid, boxes, "samples", b_samples=samples)
        return sample_domain(grid, boxes, kind, b0=self.domain["b0"])

    def vi_dt(self) -> float:
        return (self.vi["dt"] if self.vi["dt"] is not None
                else default_vi_dt(self.evolve["a"]))


def _parse_boxes(text: str, dim: int):
    text = text.strip()
    if not text:
        return ()
    boxes = []
    for part in text.split(";"):
        nums = [float(tok) for tok in part.split()]
        if len(nums) != 2 * dim:
            raise ConfigurationError(
                f"omega0 box '{part.strip()}' needs {2 * dim} numbers for dim={dim}")
        boxes.append(tuple((nums[2 * k], nums[2 * k + 1]) for k in range(dim)))
    return tuple(boxes)


def _convert(kind: str, raw: str, where: str):
    try:
        if kind == _FLOAT:
            return float(raw)
        if kind == _INT:
            return int(raw)
        if kind == _FLOATS:
            return [float(tok) for tok in raw.split()]
        if kind == _PATH:
            return Path(raw)
        return raw
    except ValueError as exc:
        raise ConfigurationError(f"{where}: cannot parse {raw!r}: {exc}") from None


def parse_config(path) -> RunConfig:
    """Parse and validate a config file, resolving all defaults."""
    sections = {name: dict(values) for name, values in DEFAULTS.items()}
    current = None
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        where = f"{path}:{lineno}"
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigurationError(f"{where}: unknown section [{current}]")
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{where}: expected 'key = value'")
        if current is None:
            raise ConfigurationError(f"{where}: key outside any [section]")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in SCHEMA[current]:
            raise ConfigurationError(f"{where}: unknown key {key!r} in [{current}]")
        sections[current][key] = _convert(SCHEMA[current][key], raw, where)

    cfg = RunConfig(source=str(path), **sections)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.grid["dim"] not in (1, 2):
        raise ConfigurationError("grid dim must be 1 or 2")
    grid = cfg.build_grid()  # checks extents and node counts
    cfg.build_domain(grid)  # checks boxes and coefficients
    ev = cfg.evolve
    if not ev["p"] > 1:
        raise ConfigurationError("evolve p must exceed 1")
    if not ev["dt"] > 0 or not ev["t_end"] >= ev["dt"]:
        raise ConfigurationError("evolve needs 0 < dt <= t_end")
    cap = 1.0 / max(ev["a"], 1.0)
    if ev["dt"] > cap * (1 + 1e-12):
        raise ConfigurationError(
            f"evolve dt={ev['dt']} violates the splitting cap 1/max(a,1)={cap}")
    if ev["u0"] not in ("phi1", "phi1-scaled", "constant", "file"):
        raise ConfigurationError(f"unknown u0 choice {ev['u0']!r}")
    if ev["u0"] == "file":
        if ev["u0_file"] is None or not Path(ev["u0_file"]).exists():
            raise ConfigurationError("u0 file does not exist")
    if cfg.domain["b_kind"] == "samples":
        if cfg.domain["b_file"] is None or not Path(cfg.domain["b_file"]).exists():
            raise ConfigurationError("b_file does not exist")
    a = ev["a"]
    vi_dt = cfg.vi_dt()
    if a > 0 and not vi_dt < 1.0 / a:
        raise ConfigurationError(
            f"vi dt={vi_dt} must be strictly below 1/a={1.0 / a} (coercivity)")
    if not 0.0 < cfg.vi["omega"] < 2.0:
        raise ConfigurationError("vi omega must lie in (0, 2)")
    for key in ("tol", "steady_tol", "eps", "t_max"):
        if not cfg.vi[key] > 0:
            raise ConfigurationError(f"vi {key} must be positive")
    if not cfg.sweep["p_list"]:
        raise ConfigurationError("sweep p_list is empty")
    if any(p <= 1 for p in cfg.sweep["p_list"]):
        raise ConfigurationError("sweep p_list entries must exceed 1")
    if math.isfinite(cfg.sweep["p_max"]) and cfg.sweep["p_max"] <= 1:
        raise ConfigurationError("sweep p_max must exceed 1")
