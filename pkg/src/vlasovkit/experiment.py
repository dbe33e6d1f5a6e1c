"""Flat ``key = value`` experiment configuration.

Lines are ``key = value``; ``#`` starts a comment.  ``include PATH`` reads a
generator description from PATH (relative to the config file) and makes it
the model.  Every key is validated before any work starts.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .config import Box
from .dsl import GeneratorSpec, parse, parse_file
from .kinetic import DensityField, Grid
from .sim.ensemble import CosineProfile


class ConfigError(ValueError):
    pass


KEYS = {
    "model": str, "d": int, "L": float, "n": int, "eps": "floats", "t_end": float, "times": "floats",
    "replicas": int, "seed": int, "dt": float, "rho0": str, "max_particles": int, "bins": int,
    "reference": str, "format": str,
}

DEFAULTS = {
    "n": 256, "eps": [1.0], "t_end": 1.0, "replicas": 20, "seed": 0, "dt": 1e-2, "rho0": "1",
    "max_particles": 100_000, "bins": 32, "format": "jsonl",
}

_COS_RE = re.compile(r"cos\(\s*([^,()]+)\s*,\s*([^,()]+)\s*,\s*([^,()]+)\s*\)$")


@dataclass
class ExperimentConfig:
    values: dict
    params: dict = field(default_factory=dict)
    model_text: str | None = None
    model_path: Path | None = None
    source: Path | None = None

    def __getattr__(self, key):
        values = self.__dict__.get("values", {})
        if key in values:
            return values[key]
        if key in DEFAULTS:
            return DEFAULTS[key]
        if key in KEYS:
            return None
        raise AttributeError(key)

    # resolved pieces
    def spec(self) -> GeneratorSpec:
        from .catalog import PRESETS, preset_name

        if self.model_text is not None:
            base = self.model_path.parent if self.model_path else None
            spec = parse(self.model_text, base_dir=base)
        elif self.model is None:
            raise ConfigError("no model given (model = NAME or include PATH)")
        elif _is_alias(self.model):
            spec = parse(PRESETS[preset_name(self.model)].text)
        else:
            path = Path(self.model)
            if not path.is_absolute() and self.source is not None:
                path = self.source.parent / path
            if not path.exists():
                raise ConfigError(f"model {self.model!r} is neither a preset nor a file")
            spec = parse_file(path)
        d = self.d if self.d is not None else (spec.box.d if spec.box else 1)
        L = self.L if self.L is not None else (spec.box.L if spec.box else 10.0)
        spec = replace(spec, box=Box(d, L))
        consts = {k: v for k, v in self.params.items() if k in spec.consts}
        amps = {k: v for k, v in self.params.items() if k in spec.kernels}
        unknown = set(self.params) - set(consts) - set(amps)
        if unknown:
            raise ConfigError(f"param.{sorted(unknown)[0]} names no constant or kernel of the model")
        try:
            return spec.with_values(consts, amps)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def model_name(self) -> str:
        if self.model:
            return Path(self.model).stem if ("/" in self.model or self.model.endswith(".dsl")) else self.model
        return self.model_path.stem if self.model_path else "model"

    def grid(self, box: Box) -> Grid:
        try:
            return Grid(box.d, box.L, self.n)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def rho0_profile(self, box: Box):
        """A float or a ``CosineProfile``."""
        text = str(self.rho0).strip()
        m = _COS_RE.match(text)
        try:
            if m:
                base, amp, mode = float(m.group(1)), float(m.group(2)), int(float(m.group(3)))
            else:
                v = float(text)
        except ValueError:
            raise ConfigError(f"rho0 must be a number or cos(base, amp, mode), got {text!r}") from None
        if m:
            if abs(amp) > base:
                raise ConfigError("rho0 = cos(base, amp, mode) needs |amp| <= base")
            return CosineProfile(base, amp, mode, box.L)
        if v < 0 or not math.isfinite(v):
            raise ConfigError("rho0 must be nonnegative")
        return v

    def rho0_field(self, grid: Grid) -> DensityField:
        prof = self.rho0_profile(grid.box)
        if isinstance(prof, float):
            return DensityField.constant(grid, prof)
        return DensityField.from_function(grid, prof)

    def snapshot_times(self) -> list:
        times = list(self.times) if self.times is not None else []
        return sorted(set(times) | {float(self.t_end)})

    def resolved(self) -> dict:
        out = {k: DEFAULTS.get(k) for k in KEYS if k in DEFAULTS}
        out.update(self.values)
        out["params"] = dict(sorted(self.params.items()))
        if self.model_text is not None:
            out["model_text"] = self.model_text
        return out


def _is_alias(name: str) -> bool:
    from .catalog import preset_name

    try:
        preset_name(name)
        return True
    except KeyError:
        return False


def _convert(key: str, raw: str, lineno: int):
    kind = KEYS[key]
    try:
        if kind == "floats":
            vals = [float(v) for v in raw.split(",") if v.strip()]
            if not vals:
                raise ValueError
            return vals
        if kind is int:
            f = float(raw)
            if f != int(f):
                raise ValueError
            return int(f)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {raw!r} for {key}") from None


def _validate(cfg: ExperimentConfig) -> None:
    v = cfg.values
    if "eps" in v:
        if any(not 0 < e <= 1 for e in v["eps"]):
            raise ConfigError("eps values must lie in (0, 1]")
    if "d" in v and v["d"] not in (1, 2):
        raise ConfigError("d must be 1 or 2")
    for key in ("L", "t_end", "dt"):
        if key in v and not v[key] > 0:
            raise ConfigError(f"{key} must be positive")
    for key in ("replicas", "max_particles", "bins", "n"):
        if key in v and v[key] < 1:
            raise ConfigError(f"{key} must be at least 1")
    if "times" in v and any(t < 0 or t > cfg.t_end for t in v["times"]):
        raise ConfigError("times must lie in [0, t_end]")
    if "format" in v and v["format"] not in ("jsonl", "binary", "both"):
        raise ConfigError("format must be jsonl, binary or both")


def parse_config(text: str, source: Path | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig({}, source=source)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("include ") or line.startswith("include\t"):
            path = Path(line[len("include"):].strip())
            if not path.is_absolute() and source is not None:
                path = source.parent / path
            try:
                cfg.model_text = path.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"line {lineno}: cannot include {path}: {exc.strerror}") from None
            cfg.model_path = path
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key.startswith("param."):
            name = key[len("param."):]
            try:
                cfg.params[name] = float(raw)
            except ValueError:
                raise ConfigError(f"line {lineno}: bad value {raw!r} for {key}") from None
            continue
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in cfg.values:
            raise ConfigError(f"line {lineno}: {key} given twice")
        cfg.values[key] = _convert(key, raw, lineno)
    _validate(cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, source=path)
