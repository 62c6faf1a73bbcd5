"""Run configuration and deterministic CSV/JSON output."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import DomainError
from .model import ModelParams


@dataclass
class RunConfig:
    """Everything a CLI run depends on.

    Model parameters use the names of :class:`~limcom.model.ModelParams`;
    the remaining keys are solver and simulation knobs.
    """

    rho: float = 0.04
    r: float = 0.04
    mu: float = 0.02
    sigma: float = 0.1
    gamma: float = 3.0
    T: float = 30.0
    y0: float = 1.0
    w0: float = -5.0
    boundary_steps: int = 256
    quad_tol: float = 1e-9
    tail_tol: float = 1e-9
    fd_time: int = 400
    fd_space: int = 400
    sim_steps: int = 600
    paths: int = 10_000
    csv_paths: int = 5
    seed: int = 0
    fb_path: int = -1  # -1: scan for a rising-income path
    value_times: int = 7
    value_nz: int = 60
    value_z_max: float = 5.0
    verify_scale: float = 1.0
    out: str = "out"

    def params(self) -> ModelParams:
        return ModelParams(**{f.name: getattr(self, f.name) for f in fields(ModelParams)})

    def validate(self) -> None:
        model = {f.name for f in fields(ModelParams)}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in model or f.type == "str":
                continue
            if f.name == "seed":
                if v < 0:
                    raise DomainError("KNOB_NEGATIVE", "seed must be nonnegative")
            elif f.name == "fb_path":
                if v < -1:
                    raise DomainError("KNOB_NEGATIVE", "fb_path must be a path index or -1")
            elif not v > 0:
                raise DomainError("KNOB_NONPOSITIVE", f"{f.name} must be positive")

    def sha256(self) -> str:
        """Hash of every field except the output directory."""
        items = sorted((k, v) for k, v in asdict(self).items() if k != "out")
        text = "\n".join(f"{k}={v!r}" for k, v in items)
        return hashlib.sha256(text.encode()).hexdigest()


_CASTS = {"int": int, "float": float, "str": str}


def _cast(name: str, value: str):
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise DomainError("UNKNOWN_KEY", f"unknown configuration key {name!r}")
    kind = types[name]
    try:
        if kind == "int":
            x = float(value)
            if x != int(x):
                raise ValueError(value)
            return int(x)
        return _CASTS[kind](value)
    except ValueError:
        raise DomainError("BAD_VALUE", f"cannot read {name}={value!r} as {kind}") from None


def parse_assignment(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise DomainError("BAD_ASSIGNMENT", f"expected key=value, got {text!r}")
    key, value = (s.strip() for s in text.split("=", 1))
    return key, _cast(key, value)


def load_config(path: str | None = None, overrides=()) -> RunConfig:
    """Read a flat ``key = value`` file (``#`` starts a comment), then apply overrides."""
    cfg = RunConfig()
    if path:
        for line in Path(path).read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                key, val = parse_assignment(line)
                setattr(cfg, key, val)
    for item in overrides:
        key, val = parse_assignment(item)
        setattr(cfg, key, val)
    cfg.validate()
    return cfg


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, bool):
        return str(int(v))
    return f"{float(v):.15g}"


def write_csv(path, header, rows, config_hash: str) -> Path:
    """CSV with a ``# config_sha256=...`` comment line, a header and 15-digit values."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# config_sha256={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path, payload: dict) -> Path:
    """JSON with shortest round-trip float representations."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def read_csv(path):
    """Inverse of :func:`write_csv`: ``(config_hash, header, rows)`` with rows as strings."""
    lines = Path(path).read_text().splitlines()
    config_hash = lines[0].split("=", 1)[1]
    reader = csv.reader(lines[1:])
    header = next(reader)
    return config_hash, header, list(reader)
