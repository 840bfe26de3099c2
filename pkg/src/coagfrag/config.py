"""Run configuration files (JSON) and their translation into solver objects."""

import hashlib
import json
from dataclasses import MISSING as _MISSING
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .analysis import AnalysisConfig
from .errors import ConfigError, DomainError
from .grid import build_geometric_grid
from .kernels import (BreakupKernel, CoagulationKernel, CollisionKernel, SamplePlan,
                      breakup_moment, number_of_fragments, truncate)
from .moments import EnvelopeParams
from .solver import SolverConfig

DEFAULT_THETA = 0.25


@dataclass
class GridSpec:
    x_min: float
    x_max: float
    n_cells: int


@dataclass
class CoagulationSpec:
    family: str
    k: float = 1.0
    a: float = 1.0
    b: float = 0.0
    k1: float = 1.0
    mu: float = 0.0
    sigma: float = 0.0
    masses: Optional[list] = None
    values: Optional[list] = None


@dataclass
class CollisionSpec:
    family: str
    k2: float = 0.0
    alpha: float = 0.0
    masses: Optional[list] = None
    values: Optional[list] = None


@dataclass
class BreakupSpec:
    family: str
    nu: float = 0.0
    B_tilde: Optional[float] = None
    u: Optional[list] = None
    beta: Optional[list] = None


@dataclass
class KernelsSpec:
    coagulation: CoagulationSpec
    collision: CollisionSpec
    breakup: BreakupSpec


@dataclass
class TruncationSpec:
    n: float = 1e6


@dataclass
class InitialSpec:
    """Initial density: ``zero``, ``exponential`` (amplitude * exp(-rate x)),
    ``gaussian`` (total number ``amplitude`` around ``center``), ``box``
    (``amplitude`` on ``[lower, upper]``) or ``cells`` (explicit cell densities)."""

    family: str = "exponential"
    amplitude: float = 1.0
    rate: float = 1.0
    center: float = 1.0
    width: float = 0.05
    lower: float = 0.5
    upper: float = 2.0
    values: Optional[list] = None
    scale: float = 1.0


@dataclass
class TimeSpec:
    t_end: float
    dt_init: float = 1e-3
    sample_count: int = 11
    dt_safety: float = 0.9
    rtol: float = 1e-6
    atol: float = 1e-12
    positivity_mode: str = "clip_and_report"
    max_steps: int = 1_000_000


@dataclass
class MomentSpec:
    xi: list = field(default_factory=list)
    omega: float = 0.75


@dataclass
class AnalysisSpec:
    """Analysis settings. The uniqueness conditions are only checked when ``theta`` is set."""

    theta: Optional[float] = None
    sigma1: float = 1.0
    sigma2: float = 0.5
    mass_tol: float = 1e-6
    contraction_tol: float = 1e-9
    n_list: list = field(default_factory=list)
    lambda1: Optional[float] = None
    lambda2: Optional[float] = None

    @property
    def theta_value(self):
        return DEFAULT_THETA if self.theta is None else self.theta


@dataclass
class RunConfig:
    grid: GridSpec
    kernels: KernelsSpec
    time: TimeSpec
    truncation: TruncationSpec = field(default_factory=TruncationSpec)
    initial_condition: InitialSpec = field(default_factory=InitialSpec)
    moments: MomentSpec = field(default_factory=MomentSpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)

    # serialisation

    def to_dict(self):
        return _prune(asdict(self))

    def emit(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @property
    def hash(self):
        return hashlib.sha256(self.emit().encode()).hexdigest()

    # builders

    def build_grid(self):
        return build_geometric_grid(self.grid.x_min, self.grid.x_max, self.grid.n_cells)

    def build_kernels(self):
        return (_build(lambda: _coagulation(self.kernels.coagulation), "kernels.coagulation"),
                _build(lambda: _collision(self.kernels.collision), "kernels.collision"),
                _build(lambda: _breakup(self.kernels.breakup), "kernels.breakup"))

    def solver_config(self, threads=1):
        K, C, B = self.build_kernels()
        t = self.time
        return SolverConfig(
            grid=self.build_grid(),
            kernels=_build(lambda: truncate(K, C, self.truncation.n), "truncation"),
            breakup=B, t_end=t.t_end, dt_init=t.dt_init, dt_safety=t.dt_safety,
            positivity_mode=t.positivity_mode, max_steps=t.max_steps, rtol=t.rtol,
            atol=t.atol, sample_count=t.sample_count, omega=self.moments.omega,
            xi=tuple(self.moments.xi), threads=threads, config_hash=self.hash)

    def initial_condition_fn(self):
        ic = self.initial_condition
        s = ic.scale
        if ic.family == "zero":
            return 0.0
        if ic.family == "exponential":
            return lambda x: s * ic.amplitude * np.exp(-ic.rate * x)
        if ic.family == "gaussian":
            norm = ic.amplitude / (np.sqrt(2 * np.pi) * ic.width)
            return lambda x: s * norm * np.exp(-0.5 * ((x - ic.center) / ic.width) ** 2)
        if ic.family == "box":
            return lambda x: s * ic.amplitude * ((x >= ic.lower) & (x <= ic.upper))
        if ic.family == "cells":
            if ic.values is None or len(ic.values) != self.grid.n_cells:
                raise ConfigError(f"needs {self.grid.n_cells} cell values",
                                  "initial_condition.values")
            return s * np.asarray(ic.values, dtype=float)
        raise ConfigError(f"unknown family {ic.family!r}", "initial_condition.family")

    def analysis_config(self):
        a = self.analysis
        return _build(lambda: AnalysisConfig(a.theta_value, a.sigma1, a.sigma2, a.mass_tol,
                                             a.contraction_tol), "analysis")

    def sample_plan(self):
        return SamplePlan(omega_values=(0.0, self.moments.omega))

    def envelope_params(self, breakup=None):
        """Constants for the moment envelopes over ``[0, t_end]``."""
        K = self.kernels.coagulation
        C = self.kernels.collision
        B = breakup or self.build_kernels()[2]
        omega = self.moments.omega
        lam1 = self.analysis.lambda1 if self.analysis.lambda1 is not None else self.grid.x_min
        lam2 = self.analysis.lambda2 if self.analysis.lambda2 is not None else self.grid.x_max
        return EnvelopeParams(
            T=self.time.t_end, k1=K.k1, mu=K.mu, sigma=K.sigma, k2=C.k2, alpha=C.alpha,
            N=sup_fragments(B), omega=omega, eta_omega=eta(B, omega),
            omega_p=omega_p(B, 2.0), lambda1=lam1, lambda2=lam2)


def sup_fragments(B, ys=SamplePlan.breakup_y):
    if B.family == "power_law":
        return B.N_total
    return max(number_of_fragments(B, y) for y in ys)


def eta(B, omega, ys=SamplePlan.breakup_y):
    if B.family == "power_law":
        return B.eta(omega)
    return max(breakup_moment(B, y, 1.0, -omega) * y ** omega for y in ys)


def omega_p(B, p, ys=SamplePlan.breakup_y):
    if B.family == "power_law":
        return B.omega_p(p)
    return max(breakup_moment(B, y, 1.0, p) / y ** p for y in ys)


def _build(fn, where):
    try:
        return fn()
    except (ConfigError, DomainError) as exc:
        field_name = getattr(exc, "field", None)
        path = f"{where}.{field_name}" if field_name and not field_name.startswith(where) else (
            field_name or where)
        raise ConfigError(str(exc).split(": ", 1)[-1], path) from exc


def _coagulation(s):
    if s.family == "custom":
        if s.masses is None or s.values is None:
            raise ConfigError("custom kernel needs masses and values", "masses")
        return CoagulationKernel.from_table(s.masses, s.values, s.k1, s.mu, s.sigma)
    return CoagulationKernel(s.family, s.k, s.a, s.b, s.k1, s.mu, s.sigma)


def _collision(s):
    if s.family == "custom":
        if s.masses is None or s.values is None:
            raise ConfigError("custom kernel needs masses and values", "masses")
        return CollisionKernel.from_table(s.masses, s.values, s.k2, s.alpha)
    return CollisionKernel(s.family, s.k2, s.alpha)


def _breakup(s):
    if s.family == "custom":
        if s.u is None or s.beta is None or s.B_tilde is None:
            raise ConfigError("custom breakup kernel needs u, beta and B_tilde", "u")
        return BreakupKernel.from_table(s.u, s.beta, s.B_tilde)
    return BreakupKernel(s.family, nu=s.nu, B_tilde=s.B_tilde)


# parsing

_NESTED = {
    RunConfig: {"grid": GridSpec, "kernels": KernelsSpec, "time": TimeSpec,
                "truncation": TruncationSpec, "initial_condition": InitialSpec,
                "moments": MomentSpec, "analysis": AnalysisSpec},
    KernelsSpec: {"coagulation": CoagulationSpec, "collision": CollisionSpec,
                  "breakup": BreakupSpec},
}
_INT_FIELDS = {"n_cells", "sample_count", "max_steps"}
_STR_FIELDS = {"family", "positivity_mode"}
_LIST_FIELDS = {"masses", "values", "u", "beta", "xi", "n_list"}


def _prune(obj):
    if isinstance(obj, dict):
        return {k: _prune(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, list):
        return [_prune(v) for v in obj]
    return obj


def _coerce(name, value, path):
    if name in _STR_FIELDS:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path)
        return value
    if name in _LIST_FIELDS:
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {value!r}", path)
        return value
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    if name in _INT_FIELDS:
        if int(value) != value:
            raise ConfigError(f"expected an integer, got {value!r}", path)
        return int(value)
    return float(value)


def _from_dict(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object, got {type(data).__name__}", path or "<root>")
    nested = _NESTED.get(cls, {})
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown field(s) {', '.join(unknown)}", path or "<root>")
    kwargs = {}
    for name, f in known.items():
        sub = f"{path}.{name}" if path else name
        if name not in data:
            if f.default is f.default_factory is _MISSING:
                raise ConfigError("missing required field", sub)
            continue
        if name in nested:
            kwargs[name] = _from_dict(nested[name], data[name], sub)
        else:
            kwargs[name] = _coerce(name, data[name], sub)
    return cls(**kwargs)



def parse_config(text):
    """Parse JSON text into a :class:`RunConfig`; errors name the offending field."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})",
                          "<file>") from exc
    return _from_dict(RunConfig, data, "")


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
