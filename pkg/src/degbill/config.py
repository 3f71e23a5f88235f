"""Run configuration: schema, loading with diagnostics, and manifests.

Configurations are JSON documents.  Unknown keys are rejected at every level
and every default is materialized, so the dumped model fully determines a run.
"""

from __future__ import annotations

import hashlib
import json
import platform
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, \
    model_validator

from . import __version__
from .errors import ConfigError

ProblemKind = Literal["n-centers-2d", "n-centers-3d", "wires-3d", "rc-restricted-3bp"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class WireConfig(_Strict):
    point: list[float]
    direction: list[float]
    alpha: float = 1.0
    frame: list[list[float]] | None = Field(
        None, description="Normal frame vectors (rows); defaults to an orthonormal completion.")


class ProblemConfig(_Strict):
    kind: ProblemKind
    name: str = ""
    centers: list[list[float]] = Field(default_factory=list)
    masses: list[float] | None = None
    frames: list[list[list[float]]] | None = None
    wires: list[WireConfig] = Field(default_factory=list)
    omega: float = 1.0
    kepler: float = 1.0
    mu_range: tuple[float, float] = (-1e-2, 1e-2)

    @model_validator(mode="after")
    def _shape(self):
        if self.kind == "wires-3d":
            if not self.wires:
                raise ValueError("wires-3d needs at least one wire")
        elif not self.centers:
            raise ValueError(f"{self.kind} needs at least one center")
        if self.masses is not None and self.kind != "wires-3d" and \
                len(self.masses) != len(self.centers):
            raise ValueError("masses and centers differ in length")
        lo, hi = self.mu_range
        if not lo < hi:
            raise ValueError("mu_range must be an increasing pair")
        return self


class Tolerances(_Strict):
    integration: float = Field(1e-12, gt=0)
    newton: float = Field(1e-10, gt=0)
    event: float = Field(1e-13, gt=0)


class TubeConfig(_Strict):
    rho: float | None = Field(None, gt=0)
    C: float = Field(10.0, gt=0)
    delta: float = Field(0.1, gt=0)
    eps_factor: float = Field(0.2, gt=0, lt=1)


class ChainConfig(_Strict):
    name: str
    kind: Literal["periodic", "finite"] = "periodic"
    components: list[int]
    points: list[list[float]] | None = None
    tags: list[str] | None = None
    a: list[float] | None = None
    b: list[float] | None = None

    @model_validator(mode="after")
    def _ends(self):
        if self.kind == "finite" and (self.a is None or self.b is None):
            raise ValueError("finite chains need endpoints a and b")
        if self.points is not None and len(self.points) != len(self.components):
            raise ValueError("one point per collision is required")
        return self


class LogRange(_Strict):
    sign: Literal[-1, 1]
    kmin: int
    kmax: int

    @model_validator(mode="after")
    def _order(self):
        if self.kmin > self.kmax:
            raise ValueError("kmin exceeds kmax")
        return self

    def values(self) -> list[float]:
        return [self.sign * 10.0 ** (-k) for k in range(self.kmin, self.kmax + 1)]


class ScanConfig(_Strict):
    mu: list[float] | None = None
    log_range: LogRange | None = None
    warm_start: bool = True
    max_iter: int = Field(20, ge=1)

    @field_validator("mu")
    @classmethod
    def _nonzero(cls, v):
        if v is not None and any(m == 0.0 for m in v):
            raise ValueError("mu = 0 is excluded from scans")
        return v

    def values(self) -> list[float]:
        if self.mu is not None:
            return list(self.mu)
        if self.log_range is not None:
            return self.log_range.values()
        return []


class RegularizationConfig(_Strict):
    order: Literal[5, 8] = 5


class RunConfig(_Strict):
    problem: ProblemConfig
    energy: float = 0.5
    tolerances: Tolerances = Field(default_factory=Tolerances)
    tube: TubeConfig = Field(default_factory=TubeConfig)
    regularization: RegularizationConfig = Field(default_factory=RegularizationConfig)
    chains: list[ChainConfig] = Field(default_factory=list)
    scan: ScanConfig = Field(default_factory=ScanConfig)
    output: str = "out"
    seed: int = 0

    @model_validator(mode="after")
    def _unique(self):
        names = [c.name for c in self.chains]
        if len(set(names)) != len(names):
            raise ValueError("chain names must be unique")
        return self

    # -- derived objects ----------------------------------------------------
    def build_problem(self):
        from .geometry import problem_from_dict
        p = self.problem
        data = {"kind": p.kind, "name": p.name, "energy": self.energy, "rho": self.tube.rho,
                "mu_range": p.mu_range, "centers": p.centers or None, "masses": p.masses,
                "omega": p.omega, "kepler": p.kepler,
                "wires": [w.model_dump() for w in p.wires]}
        if p.frames is not None:
            # rows in the file, columns in the component
            data["frames"] = [np.asarray(f, dtype=float).T for f in p.frames]
        return problem_from_dict(data)

    def chain(self, name: str) -> ChainConfig:
        for c in self.chains:
            if c.name == name:
                return c
        raise ConfigError(f"unknown chain {name!r}; configured: "
                          f"{', '.join(c.name for c in self.chains) or 'none'}")

    def canonical(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_overrides(self, overrides: dict) -> "RunConfig":
        """Apply ``{"section.key" or "key": value}`` tolerance/tube overrides."""
        data = self.model_dump()
        for key, val in overrides.items():
            section, _, field = key.rpartition(".")
            section = section or "tolerances"
            if section not in ("tolerances", "tube", "regularization") or \
                    field not in data[section]:
                raise ConfigError(f"unknown override key {key!r}")
            data[section][field] = val
        return _validate(data, "<overrides>")


def _diagnostics(err: ValidationError, text: str | None) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        where = ""
        if text is not None and e["loc"]:
            key = e["loc"][-1]
            if isinstance(key, str):
                for i, line in enumerate(text.splitlines(), 1):
                    if f'"{key}"' in line:
                        where = f" (line {i})"
                        break
        lines.append(f"{loc}{where}: {e['msg']}")
    return "\n".join(lines)


def _validate(data, source: str, text: str | None = None) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{source}: invalid configuration\n{_diagnostics(exc, text)}") \
            from exc


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") \
            from exc
    return _validate(data, source, text)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(text, str(path))


def manifest(cfg: RunConfig, command: str, extra: dict | None = None) -> dict:
    """Reproducibility record: config hash, resolved config, versions."""
    import scipy

    from . import kernels
    out = {"tool": "degbill", "version": __version__, "command": command,
           "config_sha256": cfg.digest(), "config": cfg.model_dump(mode="json"),
           "tolerances": cfg.tolerances.model_dump(), "seed": cfg.seed,
           "kernel_backend": kernels.BACKEND, "python": platform.python_version(),
           "numpy": np.__version__, "scipy": scipy.__version__,
           "platform": platform.platform()}
    if extra:
        out.update(extra)
    return out
