"""Run configuration: parsing, validation and the canonical echo written into outputs."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError
from .hamiltonian import ModelParams

COMMANDS = ("single-cavity", "rho-mu", "correlations", "fidelity", "cmft-scan", "phase-diagram")


@dataclass
class ModelSection:
    beta01: float = 1.0
    beta12: float = math.sqrt(2.0)
    delta: float = 0.4
    kappa: float | None = None
    kappa_grid: list[float] | None = None
    beta12_grid: list[float] | None = None


@dataclass
class GeometrySection:
    kind: str = "chain"
    L: int | None = None
    boundary: str = "open"
    shape: str = "2x2"


@dataclass
class SectorSection:
    N: int | None = None
    N_range: list[int] | None = None


@dataclass
class SolverSection:
    tol: float = 1e-10
    max_iter: int = 5000
    max_nnz: int = 100_000_000


@dataclass
class CMFTSection:
    tol_psi: float = 1e-8
    max_sweeps: int = 500
    mixing: float = 0.5
    dmu: float = 1e-3


@dataclass
class RunConfig:
    command: str
    model: ModelSection = field(default_factory=ModelSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    n_max: int | None = None
    sector: SectorSection = field(default_factory=SectorSection)
    mu: float = -1.0
    mu_grid: list[float] | None = None
    n_values: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    dk: float = 1e-3
    solver: SolverSection = field(default_factory=SolverSection)
    cmft: CMFTSection = field(default_factory=CMFTSection)
    seed: int = 0

    def params(self, kappa: float | None = None) -> ModelParams:
        k = self.model.kappa if kappa is None else kappa
        return ModelParams(self.model.beta01, self.model.beta12, self.model.delta, k or 0.0)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


_SECTIONS = {
    "model": ModelSection,
    "geometry": GeometrySection,
    "sector": SectorSection,
    "solver": SolverSection,
    "cmft": CMFTSection,
}


def _expand_grid(value, where: str) -> list[float] | None:
    """Accept an explicit list or {"start", "stop", "num"} (inclusive linspace)."""
    if value is None:
        return None
    if isinstance(value, dict):
        try:
            start, stop, num = float(value["start"]), float(value["stop"]), int(value["num"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{where}: grid object needs numeric start, stop, num") from None
        if num < 1:
            raise ConfigError(f"{where}: num must be >= 1")
        return [float(x) for x in np.linspace(start, stop, num)]
    if isinstance(value, list) and value and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
        if not all(math.isfinite(x) for x in value):
            raise ConfigError(f"{where}: grid values must be finite")
        return [float(x) for x in value]
    raise ConfigError(f"{where}: expected a non-empty list of numbers or a start/stop/num object")


def _build_section(cls, raw, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    known = cls.__dataclass_fields__
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {unknown}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def parse_config(doc: dict[str, Any]) -> RunConfig:
    """Validate a config document. A prior output document (with a "config" key) is accepted."""
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a JSON object")
    if "config" in doc and "results" in doc:
        doc = doc["config"]
    known = set(RunConfig.__dataclass_fields__)
    unknown = sorted(set(doc) - known)
    _require(not unknown, f"config: unknown field(s) {unknown}")
    cmd = doc.get("command")
    _require(cmd in COMMANDS, f"command: expected one of {list(COMMANDS)}, got {cmd!r}")

    kw: dict[str, Any] = {"command": cmd}
    for name, cls in _SECTIONS.items():
        kw[name] = _build_section(cls, doc.get(name), name)
    for name in ("n_max", "mu", "n_values", "dk", "seed"):
        if name in doc:
            kw[name] = doc[name]
    cfg = RunConfig(**kw)
    cfg.mu_grid = _expand_grid(doc.get("mu_grid"), "mu_grid")
    m = cfg.model
    m.kappa_grid = _expand_grid(m.kappa_grid, "model.kappa_grid")
    m.beta12_grid = _expand_grid(m.beta12_grid, "model.beta12_grid")
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    m, g, s = cfg.model, cfg.geometry, cfg.sector
    _require(m.beta01 == 1.0, "model.beta01: the energy unit is fixed to 1")
    for name in ("beta12", "delta"):
        _require(isinstance(getattr(m, name), (int, float)), f"model.{name}: expected a number")
    _require(m.beta12 >= 0, "model.beta12: must be >= 0")
    if m.kappa is not None:
        _require(isinstance(m.kappa, (int, float)) and m.kappa >= 0, "model.kappa: must be a number >= 0")
    if m.kappa_grid is not None:
        _require(all(k >= 0 for k in m.kappa_grid), "model.kappa_grid: values must be >= 0")
    if m.beta12_grid is not None:
        _require(all(b >= 0 for b in m.beta12_grid), "model.beta12_grid: values must be >= 0")
    _require(g.kind in ("chain", "cluster"), "geometry.kind: expected 'chain' or 'cluster'")
    _require(g.boundary in ("open", "periodic"), "geometry.boundary: expected 'open' or 'periodic'")
    _require(g.shape in ("1x1", "2x1", "2x2"), "geometry.shape: expected '1x1', '2x1' or '2x2'")
    if cfg.n_max is not None:
        _require(_is_int(cfg.n_max) and cfg.n_max >= 0, "n_max: expected a non-negative integer")
    _require(_is_int(cfg.seed) and cfg.seed >= 0, "seed: expected a non-negative integer")
    _require(isinstance(cfg.dk, (int, float)) and cfg.dk > 0, "dk: must be positive")
    _require(cfg.solver.tol > 0, "solver.tol: must be positive")
    _require(_is_int(cfg.solver.max_iter) and cfg.solver.max_iter > 0, "solver.max_iter: must be a positive integer")
    _require(cfg.cmft.tol_psi > 0, "cmft.tol_psi: must be positive")
    _require(0 < cfg.cmft.mixing <= 1, "cmft.mixing: must lie in (0, 1]")
    _require(cfg.cmft.dmu > 0, "cmft.dmu: must be positive")
    _require(
        isinstance(cfg.n_values, list) and cfg.n_values and all(_is_int(n) and n >= 1 for n in cfg.n_values),
        "n_values: expected a non-empty list of integers >= 1",
    )

    chain_cmds = ("rho-mu", "correlations", "fidelity")
    if cfg.command in chain_cmds and g.kind == "chain":
        _require(_is_int(g.L) and g.L >= 1, "geometry.L: a chain needs an integer length >= 1")
    if cfg.command == "correlations":
        _require(g.kind == "chain", "geometry.kind: correlations run on chains")
        _require(m.kappa is not None, "model.kappa: required")
        _require(_is_int(s.N) and s.N >= 0, "sector.N: required non-negative integer")
    if cfg.command == "fidelity":
        _require(g.kind == "chain", "geometry.kind: fidelity runs on chains")
        _require(m.kappa_grid is not None, "model.kappa_grid: required")
        _require(_is_int(s.N) and s.N >= 0, "sector.N: required non-negative integer")
    if cfg.command == "rho-mu":
        _require(m.kappa is not None, "model.kappa: required")
        if g.kind == "chain":
            if s.N_range is not None:
                _require(
                    isinstance(s.N_range, list) and len(s.N_range) == 2 and all(_is_int(x) for x in s.N_range)
                    and 0 <= s.N_range[0] < s.N_range[1],
                    "sector.N_range: expected [N_lo, N_hi] with 0 <= N_lo < N_hi",
                )
        _require(cfg.mu_grid is not None, "mu_grid: required")
    if cfg.command in ("cmft-scan", "phase-diagram"):
        _require(g.kind == "cluster", "geometry.kind: CMFT commands need a cluster")
        _require(cfg.mu_grid is not None, "mu_grid: required")
        if cfg.n_max is not None:
            _require(cfg.n_max >= 2, "n_max: the cluster needs n_max >= 2")
    if cfg.command == "cmft-scan":
        _require(m.kappa is not None, "model.kappa: required")
    if cfg.command == "phase-diagram":
        _require(m.kappa_grid is not None, "model.kappa_grid: required")
    if cfg.command == "single-cavity":
        _require(m.beta12_grid is not None, "model.beta12_grid: required")


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(doc)
