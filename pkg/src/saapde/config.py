"""Experiment configuration: JSON parsing, validation and problem construction."""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .mesh_fem import DOMAINS, build_mesh
from .random_field import CoefficientModel, Field, SourceModel, UniformBox, kl_model
from .reduced_objective import ProblemInstance


class ConfigError(ValueError):
    """Invalid configuration; ``where`` names the field or file position."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


def _require(cond, where, message):
    if not cond:
        raise ConfigError(where, message)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)


def _int_list(v, where, minimum=1):
    _require(isinstance(v, list) and v, where, "must be a nonempty list of integers")
    for i, x in enumerate(v):
        _require(_is_int(x) and x >= minimum, f"{where}[{i}]", f"must be an integer >= {minimum}")


def _profile(v, where):
    try:
        Field.from_spec(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from None


@dataclass
class MeshSection:
    domain: str = "interval"
    resolution: int = 32

    def check(self, w):
        _require(self.domain in DOMAINS, f"{w}.domain", f"must be one of {DOMAINS}")
        _require(_is_int(self.resolution) and self.resolution >= 2, f"{w}.resolution", "must be an integer >= 2")


@dataclass
class ParameterSection:
    lower: list = field(default_factory=lambda: [-1.0, -1.0])
    upper: list = field(default_factory=lambda: [1.0, 1.0])
    distribution: str = "uniform"

    def check(self, w):
        _require(self.distribution == "uniform", f"{w}.distribution", "only 'uniform' is supported")
        for k in ("lower", "upper"):
            v = getattr(self, k)
            _require(isinstance(v, list) and all(_is_num(x) for x in v), f"{w}.{k}", "must be a list of numbers")
        _require(len(self.lower) == len(self.upper), w, "lower and upper need equal length")
        for j, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            _require(lo < hi, f"{w}.lower[{j}]", "must be below upper")


@dataclass
class CoefficientSection:
    kind: str = "affine"
    base: object = 2.0
    modes: list = field(default_factory=lambda: [
        {"kind": "sin", "amplitude": 0.5, "frequency": 2.0},
        {"kind": "cos", "amplitude": 0.25, "frequency": 2.0},
    ])
    gamma: float | None = 1.25
    L: float | None = 2.75
    correlation_length: float = 0.5
    sigma: float = 0.5

    def check(self, w):
        _require(self.kind in ("affine", "kl"), f"{w}.kind", "must be 'affine' or 'kl'")
        _profile(self.base, f"{w}.base")
        _require(isinstance(self.modes, list), f"{w}.modes", "must be a list")
        for i, m in enumerate(self.modes):
            _profile(m, f"{w}.modes[{i}]")
        if self.gamma is not None:
            _require(_is_num(self.gamma) and self.gamma > 0, f"{w}.gamma", "must be positive")
        if self.L is not None:
            _require(_is_num(self.L) and (self.gamma is None or self.L >= self.gamma), f"{w}.L", "must be >= gamma")
        _require(_is_num(self.correlation_length) and self.correlation_length > 0,
                 f"{w}.correlation_length", "must be positive")
        _require(_is_num(self.sigma) and self.sigma >= 0, f"{w}.sigma", "must be nonnegative")
        if self.kind == "kl":
            _require(_is_num(self.base), f"{w}.base", "kl models need a constant base")


@dataclass
class SourceSection:
    base: object = 1.0
    modes: list = field(default_factory=lambda: [0.0, 0.5])

    def check(self, w):
        _profile(self.base, f"{w}.base")
        _require(isinstance(self.modes, list), f"{w}.modes", "must be a list")
        for i, m in enumerate(self.modes):
            _profile(m, f"{w}.modes[{i}]")


@dataclass
class BoundsSection:
    lower: float = -2.0
    upper: float = 2.0

    def check(self, w):
        _require(_is_num(self.lower) and _is_num(self.upper), w, "bounds must be numbers")
        _require(self.lower <= self.upper, f"{w}.lower", "must not exceed upper")


@dataclass
class QuadratureSection:
    nodes: object = "auto"
    value_tol: float = 1e-8

    def check(self, w):
        _require(self.nodes == "auto" or (_is_int(self.nodes) and self.nodes >= 2),
                 f"{w}.nodes", "must be 'auto' or an integer >= 2")
        _require(_is_num(self.value_tol) and self.value_tol > 0, f"{w}.value_tol", "must be positive")


@dataclass
class SolverSection:
    oracle_tol: float = 1e-9
    saa_tol: float = 1e-7
    max_iters: int = 10_000

    def check(self, w):
        for k in ("oracle_tol", "saa_tol"):
            _require(_is_num(getattr(self, k)) and getattr(self, k) > 0, f"{w}.{k}", "must be positive")
        _require(_is_int(self.max_iters) and self.max_iters >= 1, f"{w}.max_iters", "must be a positive integer")


@dataclass
class RateSection:
    n_list: list = field(default_factory=lambda: [128, 256, 512, 1024, 2048, 4096, 8192])
    replications: int = 40
    slope_band: list = field(default_factory=lambda: [-0.65, -0.35])

    def check(self, w):
        _int_list(self.n_list, f"{w}.n_list")
        _require(len(self.n_list) >= 3, f"{w}.n_list", "needs at least 3 sample sizes")
        _require(_is_int(self.replications) and self.replications >= 20, f"{w}.replications", "must be >= 20")
        _require(isinstance(self.slope_band, list) and len(self.slope_band) == 2
                 and all(_is_num(x) for x in self.slope_band) and self.slope_band[0] <= self.slope_band[1],
                 f"{w}.slope_band", "must be [low, high]")


@dataclass
class CltSection:
    n_list: list = field(default_factory=lambda: [512, 2048, 8192])
    replications: int = 200
    max_ratio: float = 2.0

    def check(self, w):
        _int_list(self.n_list, f"{w}.n_list")
        _require(max(self.n_list) >= 16 * min(self.n_list), f"{w}.n_list", "must span a factor of at least 16")
        _require(_is_int(self.replications) and self.replications >= 20, f"{w}.replications", "must be >= 20")
        _require(_is_num(self.max_ratio) and self.max_ratio >= 1, f"{w}.max_ratio", "must be >= 1")


@dataclass
class SubsampleSection:
    n: int = 4096
    b: int | None = 256
    m: int = 200
    kappa: float = 0.1
    replications: int = 200
    min_coverage: float = 0.85

    def check(self, w):
        _require(_is_int(self.n) and self.n >= 3, f"{w}.n", "must be an integer >= 3")
        if self.b is not None:
            _require(_is_int(self.b) and 2 <= self.b < self.n, f"{w}.b", "must satisfy 2 <= b < n")
        _require(_is_int(self.m) and self.m >= 50, f"{w}.m", "must be >= 50")
        _require(_is_num(self.kappa) and 0 < self.kappa < 1, f"{w}.kappa", "must lie in (0, 1)")
        _require(_is_int(self.replications) and self.replications >= 100, f"{w}.replications", "must be >= 100")
        _require(_is_num(self.min_coverage) and 0 <= self.min_coverage <= 1, f"{w}.min_coverage", "must lie in [0, 1]")


@dataclass
class StabilitySection:
    n_list: list = field(default_factory=lambda: [64, 256, 1024])
    seeds: int = 4
    grid_size: int = 50

    def check(self, w):
        _int_list(self.n_list, f"{w}.n_list")
        _require(_is_int(self.seeds) and self.seeds >= 1, f"{w}.seeds", "must be a positive integer")
        _require(_is_int(self.grid_size) and self.grid_size >= 0, f"{w}.grid_size", "must be >= 0")


@dataclass
class SolveSection:
    n: int = 1024
    growth_trials: int = 100

    def check(self, w):
        _require(_is_int(self.n) and self.n >= 1, f"{w}.n", "must be a positive integer")
        _require(_is_int(self.growth_trials) and self.growth_trials >= 0, f"{w}.growth_trials", "must be >= 0")


@dataclass
class FemSection:
    interval: list = field(default_factory=lambda: [16, 32, 64, 128])
    square: list = field(default_factory=lambda: [8, 16, 32])
    min_order: float = 1.9

    def check(self, w):
        _int_list(self.interval, f"{w}.interval", 2)
        _int_list(self.square, f"{w}.square", 2)
        _require(_is_num(self.min_order), f"{w}.min_order", "must be a number")


@dataclass
class ExperimentConfig:
    """Everything needed to rebuild a problem and rerun an experiment."""

    mesh: MeshSection = field(default_factory=MeshSection)
    parameters: ParameterSection = field(default_factory=ParameterSection)
    coefficient: CoefficientSection = field(default_factory=CoefficientSection)
    source: SourceSection = field(default_factory=SourceSection)
    target: object = field(default_factory=lambda: {"kind": "sin", "amplitude": 1.0, "frequency": 1.0})
    alpha: float = 0.1
    bounds: BoundsSection = field(default_factory=BoundsSection)
    quadrature: QuadratureSection = field(default_factory=QuadratureSection)
    solver: SolverSection = field(default_factory=SolverSection)
    rate: RateSection = field(default_factory=RateSection)
    clt: CltSection = field(default_factory=CltSection)
    subsample: SubsampleSection = field(default_factory=SubsampleSection)
    stability: StabilitySection = field(default_factory=StabilitySection)
    solve: SolveSection = field(default_factory=SolveSection)
    fem: FemSection = field(default_factory=FemSection)
    seed: int = 2024
    output_dir: str = "results"

    @property
    def dim(self) -> int:
        return len(self.parameters.lower)

    def check(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if hasattr(v, "check"):
                v.check(f.name)
        if isinstance(self.target, dict) and "file" in self.target:
            _require(set(self.target) == {"file"} and isinstance(self.target["file"], str),
                     "target", "file targets take only a 'file' path")
        else:
            _profile(self.target, "target")
        _require(_is_num(self.alpha) and self.alpha > 0, "alpha", "must be positive")
        _require(_is_int(self.seed) and self.seed >= 0, "seed", "must be a nonnegative integer")
        _require(isinstance(self.output_dir, str), "output_dir", "must be a string")
        d = self.dim
        if self.coefficient.kind == "affine":
            _require(len(self.coefficient.modes) == d, "coefficient.modes", f"need one mode per parameter ({d})")
        _require(len(self.source.modes) == d, "source.modes", f"need one mode per parameter ({d})")
        if self.coefficient.kind == "kl":
            _require(self.mesh.domain == "interval", "coefficient.kind", "kl models are defined on the interval")
        return self

    def to_dict(self) -> dict:
        return copy.deepcopy(dataclasses.asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def hash(self) -> str:
        """Digest of everything that affects results (not the output location)."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return _build(cls, data, "config").check()


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(where, "must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}", "unknown field")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, name if where == "config" else f"{where}.{name}")
        else:
            kwargs[name] = copy.deepcopy(value)
    return cls(**kwargs)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse JSON text. Result artifacts embedding a ``config`` are accepted."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}", exc.msg) from None
    if isinstance(data, dict) and "command" in data and "config" in data:
        data = data["config"]
    return ExperimentConfig.from_dict(data)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc.strerror}") from None
    return parse_config(text, str(path))


def default_config() -> ExperimentConfig:
    """The shipped default instance."""
    text = resources.files("saapde").joinpath("data/default.json").read_text()
    return parse_config(text, "default.json")


# --------------------------------------------------------------------------
# construction


def build_box(cfg: ExperimentConfig) -> UniformBox:
    return UniformBox(tuple(map(float, cfg.parameters.lower)), tuple(map(float, cfg.parameters.upper)))


def build_coefficient(cfg: ExperimentConfig) -> CoefficientModel:
    c = cfg.coefficient
    if c.kind == "kl":
        return kl_model(cfg.dim, c.correlation_length, c.sigma, float(c.base), c.gamma, build_box(cfg))
    return CoefficientModel(Field.from_spec(c.base), tuple(Field.from_spec(m) for m in c.modes), c.gamma, c.L)


def build_problem(cfg: ExperimentConfig, base_dir=None) -> tuple[ProblemInstance, UniformBox]:
    """Problem instance and parameter box described by ``cfg``."""
    mesh = build_mesh(cfg.mesh.domain, cfg.mesh.resolution)
    coef = build_coefficient(cfg)
    src = SourceModel(Field.from_spec(cfg.source.base), tuple(Field.from_spec(m) for m in cfg.source.modes))
    if isinstance(cfg.target, dict) and "file" in cfg.target:
        path = Path(cfg.target["file"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        try:
            target = np.loadtxt(path, ndmin=1)
        except OSError as exc:
            raise ConfigError("target.file", f"cannot read {path}: {exc}") from None
        if target.size != mesh.n_vertices:
            raise ConfigError("target.file", f"expected {mesh.n_vertices} nodal values, got {target.size}")
    else:
        target = Field.from_spec(cfg.target)(mesh.vertices)
    prob = ProblemInstance(mesh, coef, src, target, float(cfg.alpha), cfg.bounds.lower, cfg.bounds.upper)
    return prob, build_box(cfg)
