"""Sectional solver for the truncated coagulation / collisional-fragmentation system.

The state is the vector of cell-averaged densities ``g_i``; ``N_i = g_i w_i`` is
the number of particles in cell ``i``, all sitting at the pivot ``p_i``.

* Coagulation births use the fixed-pivot rule: a merger of mass
  ``v = p_j + p_k`` with ``p_i <= v < p_{i+1}`` is split between cells ``i``
  and ``i+1`` so that both number and mass are preserved. Mergers landing in
  ``(p_last, x_max]`` go to the last cell with mass preserved; mergers beyond
  ``x_max`` are removed and their mass is booked as overflow.
* Fragments of a parent at ``p_j`` are distributed the same way: on each
  pivot interval the exact number and mass of fragments is split between its
  two end pivots, and fragments below ``p_0`` go to cell 0 with mass
  preserved. Both discrete mass balances therefore close to rounding error.

Time stepping is the two-stage SSP Runge-Kutta scheme (Heun) with the
embedded Euler solution as error estimate.
"""

import os
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import sparse

from .errors import ConfigError, InputError, NumericalError, StiffnessError
from .grid import project_initial_condition
from .kernels import BreakupKernel, TruncatedKernelPair
from .moments import moment

POSITIVITY_MODES = ("clip_and_report", "reject_step")


@dataclass(frozen=True)
class State:
    t: float
    density: np.ndarray
    step_count: int = 0
    overflow_mass: float = 0.0
    clipped_mass: float = 0.0
    dt_last: float = 0.0

    def __post_init__(self):
        d = np.array(self.density, dtype=float)
        d.flags.writeable = False
        object.__setattr__(self, "density", d)


@dataclass
class SolverConfig:
    grid: object
    kernels: TruncatedKernelPair
    breakup: BreakupKernel
    t_end: float
    dt_init: float = 1e-3
    dt_safety: float = 0.9
    positivity_mode: str = "clip_and_report"
    max_steps: int = 1_000_000
    rtol: float = 1e-6
    atol: float = 1e-12
    sample_count: int = 11
    omega: float = 0.5
    xi: tuple = ()
    threads: int = 1
    config_hash: str = ""
    _operator: Optional["DiscreteOperator"] = field(default=None, init=False, repr=False,
                                                     compare=False)

    def __post_init__(self):
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive", "time.t_end")
        if not self.dt_init > 0:
            raise ConfigError("dt_init must be positive", "time.dt_init")
        if not 0 < self.dt_safety <= 1:
            raise ConfigError("dt_safety must lie in (0, 1]", "time.dt_safety")
        if self.positivity_mode not in POSITIVITY_MODES:
            raise ConfigError(f"positivity_mode must be one of {POSITIVITY_MODES}",
                              "time.positivity_mode")
        if self.sample_count < 2:
            raise ConfigError("sample_count must be at least 2", "time.sample_count")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1", "threads")

    def operator(self):
        if self._operator is None:
            self._operator = DiscreteOperator(self.grid, self.kernels, self.breakup, self.threads)
        return self._operator


def _row_blocks(n, threads):
    bounds = np.linspace(0, n, min(threads, n) + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def coagulation_split(grid):
    """Sparse map from the flattened pair rates ``F[j*n + k]`` to cell number rates.

    Returns ``(S, overflow_weight)`` where ``S`` is ``(n, n*n)`` and includes the
    factor 1/2 for ordered pairs, and ``overflow_weight[j*n+k]`` is the mass
    removed per unit pair rate (zero unless ``p_j + p_k > x_max``).
    """
    p = grid.pivots
    n = p.size
    v = (p[:, None] + p[None, :]).ravel()
    cols = np.arange(n * n)
    i = np.searchsorted(p, v, side="right") - 1
    inner = v <= p[-1]
    top = (v > p[-1]) & (v <= grid.x_max)
    over = v > grid.x_max

    rows, cc, vals = [], [], []
    ii = i[inner]
    upper = np.minimum(ii + 1, n - 1)
    span = p[upper] - p[ii]
    frac_hi = np.where(upper > ii, (v[inner] - p[ii]) / np.where(span > 0, span, 1.0), 0.0)
    frac_lo = 1.0 - frac_hi
    rows += [ii, upper]
    cc += [cols[inner], cols[inner]]
    vals += [0.5 * frac_lo, 0.5 * frac_hi]
    rows.append(np.full(top.sum(), n - 1))
    cc.append(cols[top])
    vals.append(0.5 * v[top] / p[-1])

    S = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cc))),
                          shape=(n, n * n)).tocsr()
    S.sum_duplicates()
    S.sort_indices()
    overflow_weight = np.where(over, 0.5 * v, 0.0)
    return S, overflow_weight


def fragment_weights(grid, breakup, z=1.0):
    """Matrix ``W[i, j]``: particles placed in cell ``i`` per breakup of a parent at ``p_j``."""
    p = grid.pivots
    n = p.size
    W = np.zeros((n, n))
    for j in range(n):
        _fill_fragment_column(W[:, j], p, j, breakup, z)
    return W


def fragment_weights_z(grid, breakup):
    """Tensor ``W[i, j, k]`` for breakup kernels that depend on the partner mass ``p_k``."""
    p = grid.pivots
    n = p.size
    W = np.zeros((n, n, n))
    for j in range(n):
        for k in range(n):
            _fill_fragment_column(W[:, j, k], p, j, breakup, p[k])
    return W


def _fill_fragment_column(col, p, j, breakup, z):
    y = p[j]
    _, mass0 = breakup.partial_moments(0.0, p[0], y, z)
    col[0] += mass0 / p[0]
    for m in range(j):
        number, mass = breakup.partial_moments(p[m], p[m + 1], y, z)
        hi = (mass - p[m] * number) / (p[m + 1] - p[m])
        col[m + 1] += hi
        col[m] += number - hi


class DiscreteOperator:
    """Precomputed kernel matrices and split weights for one (grid, kernels) pair.

    Row reductions are evaluated over fixed blocks of destination cells, one
    block per thread; each row is reduced by the same code path whatever the
    block layout, so the result does not depend on ``threads``.
    """

    def __init__(self, grid, pair, breakup, threads=1):
        self.grid = grid
        p = grid.pivots
        self.n = n = p.size
        self.K = np.ascontiguousarray(pair.K(p[:, None], p[None, :]), dtype=float)
        self.C = np.ascontiguousarray(pair.C(p[:, None], p[None, :]), dtype=float)
        self.has_coag = bool(np.any(self.K))
        self.has_frag = bool(np.any(self.C))
        self.S, self.overflow_weight = coagulation_split(grid)
        self.z_dependent = breakup.z_dependent
        if not self.has_frag:
            self.W = np.zeros((n, 1))
        elif self.z_dependent:
            self.W = np.ascontiguousarray(fragment_weights_z(grid, breakup).reshape(n, n * n))
        else:
            self.W = fragment_weights(grid, breakup)
        self.blocks = _row_blocks(n, threads)
        self.S_blocks = [self.S[a:b] for a, b in self.blocks]
        self._pool = None
        if len(self.blocks) > 1:
            self._pool = ThreadPoolExecutor(max_workers=len(self.blocks))
            weakref.finalize(self, self._pool.shutdown, wait=False)

    def _map(self, fn):
        if self._pool is None:
            return [fn(0, self.n, 0)]
        futures = [self._pool.submit(fn, a, b, k) for k, (a, b) in enumerate(self.blocks)]
        return [f.result() for f in futures]

    def __call__(self, density):
        """Return ``(dg/dt, overflow mass rate, loss rate per cell)``."""
        w = self.grid.widths
        N = density * w

        def losses(a, b, _k):
            return (self.K[a:b] * N).sum(axis=1), (self.C[a:b] * N).sum(axis=1)

        parts = self._map(losses)
        kn = np.concatenate([q[0] for q in parts])
        cn = np.concatenate([q[1] for q in parts])

        NN = np.multiply.outer(N, N)
        F = (self.K * NN).ravel()
        if self.has_frag:
            R = (self.C * NN).ravel() if self.z_dependent else N * cn
        else:
            R = None

        def births(a, b, k):
            out = self.S_blocks[k] @ F
            if R is not None:
                out = out + (self.W[a:b] * R).sum(axis=1)
            return out

        birth = np.concatenate(self._map(births))
        dN = birth - N * kn - N * cn
        overflow_rate = float(np.sum(F * self.overflow_weight))
        bad = ~np.isfinite(dN)
        if bad.any():
            cell = int(np.flatnonzero(bad)[0])
            raise NumericalError(f"non-finite rate in cell {cell}", cell=cell)
        return dN / w, overflow_rate, kn + cn


def rhs(state, config):
    """Time derivative of the cell densities."""
    return config.operator()(np.asarray(state.density))[0]


@dataclass
class _StepOutcome:
    state: State
    dt_next: float
    rejected: int


def _attempt(op, g, dt, grid, config, scale0):
    f0, o0, _ = op(g)
    g1 = g + dt * f0
    f1, o1, _ = op(g1)
    g2 = 0.5 * g + 0.5 * (g1 + dt * f1)
    w = grid.widths
    tol = config.atol * scale0 + config.rtol * np.maximum(np.abs(g), np.abs(g2)) * w
    err = float(np.max(np.abs(g2 - g1) * w / tol)) if g.size else 0.0
    return g2, 0.5 * dt * (o0 + o1), err


def _adaptive_step(state, config, dt, scale0):
    op = config.operator()
    grid = config.grid
    g = np.asarray(state.density)
    floor = 1e-12 * config.t_end
    rejected = 0
    while True:
        if dt < floor:
            raise StiffnessError(f"step size {dt:.3e} below {floor:.3e} at t={state.t:.6g}")
        g2, d_overflow, err = _attempt(op, g, dt, grid, config, scale0)
        if not np.all(np.isfinite(g2)):
            cell = int(np.flatnonzero(~np.isfinite(g2))[0])
            raise NumericalError(f"non-finite density in cell {cell} at t={state.t:.6g}", cell=cell)
        negative = g2 < 0
        if err > 1.0 or (config.positivity_mode == "reject_step" and negative.any()):
            dt *= 0.5
            rejected += 1
            continue
        clipped = 0.0
        if negative.any():
            clipped = float(np.sum(-g2[negative] * grid.pivots[negative] * grid.widths[negative]))
            g2 = np.where(negative, 0.0, g2)
        growth = 2.0 if err == 0 else min(2.0, config.dt_safety * err ** -0.5)
        new = State(state.t + dt, g2, state.step_count + 1,
                    state.overflow_mass + d_overflow, state.clipped_mass + clipped, dt)
        return _StepOutcome(new, dt * growth, rejected)


def _error_scale(state, grid):
    total = float(np.sum(np.asarray(state.density) * grid.widths))
    return total if total > 0 else 1.0


def step(state, config, dt):
    """Advance one accepted step, halving ``dt`` until the error test passes."""
    if not dt > 0:
        raise ConfigError("dt must be positive", "dt")
    return _adaptive_step(state, config, dt, _error_scale(state, config.grid)).state


@dataclass
class Trajectory:
    config_hash: str
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    moments: dict = field(default_factory=dict)
    overflow_mass: list = field(default_factory=list)
    clipped_mass: list = field(default_factory=list)
    mass_drift: list = field(default_factory=list)
    dt: list = field(default_factory=list)
    dt_history: list = field(default_factory=list)
    rejected_steps: int = 0
    failure: Optional[str] = None
    grid: object = None
    omega: float = 0.5
    xi: tuple = ()

    @property
    def ok(self):
        return self.failure is None

    def moment_names(self):
        return ["M_minus_omega", "M0", "M1", "M2"] + [xi_label(x) for x in self.xi]

    def record(self, state, dt=None):
        """Append a sample; ``dt`` is the controller step size in force (defaults to the last step)."""
        grid = self.grid
        values = {
            "M_minus_omega": moment(state, grid, -self.omega),
            "M0": moment(state, grid, 0.0),
            "M1": moment(state, grid, 1.0),
            "M2": moment(state, grid, 2.0),
        }
        for x in self.xi:
            values[xi_label(x)] = moment(state, grid, x)
        for name, val in values.items():
            self.moments.setdefault(name, []).append(val)
        m1_0 = self.moments["M1"][0]
        drift = values["M1"] - m1_0
        self.times.append(state.t)
        self.states.append(state)
        self.overflow_mass.append(state.overflow_mass)
        self.clipped_mass.append(state.clipped_mass)
        self.mass_drift.append(drift / m1_0 if m1_0 > 0 else drift)
        self.dt.append(state.dt_last if dt is None else dt)


def xi_label(xi):
    return f"M_xi={xi:g}"


def initial_state(config, g0):
    grid = config.grid
    if callable(g0) or np.isscalar(g0):
        density = project_initial_condition(grid, g0)
    else:
        density = np.array(g0, dtype=float)
        if density.shape != (grid.n_cells,):
            raise InputError(f"initial densities must have shape ({grid.n_cells},)")
        if not np.all(np.isfinite(density)) or np.any(density < 0):
            raise InputError("initial densities must be finite and nonnegative")
    return State(0.0, density)


def run(config, g0, sample_times=None):
    """Integrate from ``g0`` to ``config.t_end``, recording samples.

    ``g0`` is a density function of mass, a scalar, or an array of cell
    densities. Integration failures end the run early; the partial trajectory
    is returned with ``failure`` set.
    """
    if sample_times is None:
        sample_times = np.linspace(0.0, config.t_end, config.sample_count)
    sample_times = np.asarray(sample_times, dtype=float)
    if sample_times[0] != 0.0 or np.any(np.diff(sample_times) <= 0):
        raise ConfigError("sample times must start at 0 and increase strictly", "time.sample_count")

    state = initial_state(config, g0)
    traj = Trajectory(config.config_hash, grid=config.grid, omega=config.omega,
                      xi=tuple(config.xi))
    traj.record(state)
    scale0 = _error_scale(state, config.grid)
    dt = config.dt_init
    try:
        for target in sample_times[1:]:
            while state.t < target:
                if state.step_count >= config.max_steps:
                    raise StiffnessError(f"max_steps={config.max_steps} reached at t={state.t:.6g}")
                remaining = target - state.t
                h = min(dt, remaining)
                out = _adaptive_step(state, config, h, scale0)
                traj.rejected_steps += out.rejected
                state = out.state
                traj.dt_history.append(state.dt_last)
                if state.dt_last == remaining:
                    # land exactly on the sample time
                    state = replace(state, t=float(target))
                    dt = max(dt, out.dt_next) if out.rejected == 0 else out.dt_next
                else:
                    dt = out.dt_next
            traj.record(state, dt)
    except NumericalError as exc:
        traj.failure = f"{type(exc).__name__}: {exc}"
    return traj


def default_threads():
    return os.cpu_count() or 1
