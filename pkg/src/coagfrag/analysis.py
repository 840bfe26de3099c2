"""Post-run checks: mass conservation, the uniqueness distance and its Gronwall
bound, truncation studies, and two independent oracles.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from .errors import ConfigError
from .kernels import truncate
from .solver import State, Trajectory, initial_state, run

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is optional
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@dataclass(frozen=True)
class AnalysisConfig:
    theta: float = 0.25
    sigma1: float = 1.0
    sigma2: float = 0.5
    mass_tol: float = 1e-6
    contraction_tol: float = 1e-9

    def __post_init__(self):
        if not 0 <= self.theta < 1:
            raise ConfigError("theta must lie in [0, 1)", "analysis.theta")
        if self.sigma1 < 1:
            raise ConfigError("sigma1 must be >= 1", "analysis.sigma1")
        if not 0 < self.sigma2 < 1:
            raise ConfigError("sigma2 must lie in (0, 1)", "analysis.sigma2")

    def theta_constraints(self, sigma):
        """Which of the two stated upper limits on ``sigma + theta`` hold."""
        return {
            "sigma<=theta": sigma <= self.theta,
            "sigma+theta<=sigma1": sigma + self.theta <= self.sigma1,
            "sigma+theta<=sigma2": sigma + self.theta <= self.sigma2,
            "binding": "sigma2" if self.sigma2 <= self.sigma1 else "sigma1",
        }


# mass conservation


@dataclass
class MassReport:
    raw_drift: float
    adjusted_drift: float
    absolute: bool
    tolerance: float
    passed: bool
    worst_time: float

    def line(self):
        kind = "absolute" if self.absolute else "relative"
        status = "PASS" if self.passed else "FAIL"
        return (f"mass {status}: {kind} drift raw={self.raw_drift:.3e} "
                f"adjusted={self.adjusted_drift:.3e} (tol {self.tolerance:.1e}, worst at t={self.worst_time:g})")


def mass_conservation_report(traj, tol=1e-6):
    """Largest drift of ``M1`` from ``M1(0)``, raw and corrected for overflow and clipping.

    Drifts are signed (the largest in magnitude); relative unless ``M1(0) = 0``.
    """
    m1 = np.asarray(traj.moments["M1"])
    ovf = np.asarray(traj.overflow_mass)
    clip = np.asarray(traj.clipped_mass)
    raw = m1 - m1[0]
    adjusted = m1 + ovf - clip - m1[0]
    absolute = not m1[0] > 0
    scale = 1.0 if absolute else m1[0]
    k_raw = int(np.argmax(np.abs(raw)))
    k_adj = int(np.argmax(np.abs(adjusted)))
    r = raw[k_raw] / scale
    a = adjusted[k_adj] / scale
    return MassReport(float(r), float(a), absolute, tol, bool(abs(a) <= tol),
                      float(traj.times[k_adj]))


# uniqueness distance


def weighted_norm(state, grid, sigma1, sigma2):
    density = np.asarray(getattr(state, "density", state))
    p = grid.pivots
    return float(np.sum((p ** sigma1 + p ** -sigma2) * np.abs(density) * grid.widths))


def trajectory_norm(traj, sigma1, sigma2):
    """Sup over samples of :func:`weighted_norm`."""
    return max(weighted_norm(s, traj.grid, sigma1, sigma2) for s in traj.states)


def _distance(g, h, grid, theta):
    p = grid.pivots
    return float(np.sum((p + p ** -theta) * np.abs(g - h) * grid.widths))


def uniqueness_distance(run_g, run_h, theta):
    """``Q(t_k) = sum_i (p_i + p_i^-theta) |g_i - h_i| w_i`` at every common sample."""
    if not run_g.grid.same_as(run_h.grid):
        raise ConfigError("trajectories live on different grids", "grid")
    if len(run_g.times) != len(run_h.times) or not np.array_equal(run_g.times, run_h.times):
        raise ConfigError("trajectories have different sample times", "time")
    return np.array([_distance(np.asarray(a.density), np.asarray(b.density), run_g.grid, theta)
                     for a, b in zip(run_g.states, run_h.states)])


def gronwall_constant_psi(norm_g, norm_h, params, theta, eta_theta=None):
    """``4 [2^mu k1 (|g| + |h|) + 2 k2 |g| + k2 (eta(theta)+1) |g| + k2 eta(theta) |h|]``."""
    if eta_theta is None:
        eta_theta = params.eta_omega if math.isclose(params.omega, theta) else None
    if eta_theta is None:
        raise ConfigError("eta(theta) is required when theta differs from params.omega", "theta")
    two_mu = 2.0 ** params.mu
    return 4.0 * (two_mu * params.k1 * norm_g + two_mu * params.k1 * norm_h
                  + 2.0 * params.k2 * norm_g + params.k2 * (eta_theta + 1.0) * norm_g
                  + params.k2 * eta_theta * norm_h)


@dataclass
class ContractionReport:
    rows: list
    passed: bool
    witness_time: float = float("nan")
    worst_margin: float = float("inf")

    def line(self):
        status = "PASS" if self.passed else f"FAIL (first violation at t={self.witness_time:g})"
        return f"contraction {status}: worst margin {self.worst_margin:.6g}"


def contraction_check(times, Q, psi, tol=1e-9):
    """Check ``Q(t) <= Q(0) exp(psi t) (1 + tol)`` at every sample.

    Rows are ``(t, Q, bound, margin)``; the margin is ``bound - Q``.
    """
    times = np.asarray(times, dtype=float)
    Q = np.asarray(Q, dtype=float)
    rows = []
    witness = float("nan")
    worst = float("inf")
    for t, q in zip(times, Q):
        bound = Q[0] * math.exp(psi * t) * (1.0 + tol)
        margin = bound - q
        rows.append((float(t), float(q), bound, margin))
        worst = min(worst, margin)
        if margin < 0 and math.isnan(witness):
            witness = float(t)
    return ContractionReport(rows, math.isnan(witness), witness, worst)


# truncation study


@dataclass
class ConvergenceReport:
    n_list: list
    distances: list = field(default_factory=list)
    trajectories: dict = field(default_factory=dict, repr=False)

    @property
    def monotone(self):
        return all(b <= a for a, b in zip(self.distances, self.distances[1:]))

    @property
    def strictly_decreasing(self):
        return all(b < a for a, b in zip(self.distances, self.distances[1:]))


def truncation_convergence(base_config, n_list, g0, theta):
    """Run ``base_config`` at each truncation index and compare consecutive runs.

    ``distances[k]`` is ``sup_t Q`` between the runs at ``n_list[k]`` and
    ``n_list[k+1]``.
    """
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigError("n_list must be increasing", "analysis.n_list")
    if not n_list:
        return ConvergenceReport([])
    grid = base_config.grid
    n_max = n_list[-1]
    if not grid.covers(1.0 / n_max, n_max):
        raise ConfigError(f"grid [{grid.x_min:g}, {grid.x_max:g}] does not cover "
                          f"[1/{n_max:g}, {n_max:g}]", "grid")
    pair = base_config.kernels
    report = ConvergenceReport(n_list)
    for n in n_list:
        cfg = replace(base_config, kernels=truncate(pair.base_K, pair.base_C, n))
        report.trajectories[n] = run(cfg, g0)
    for a, b in zip(n_list, n_list[1:]):
        Q = uniqueness_distance(report.trajectories[a], report.trajectories[b], theta)
        report.distances.append(float(np.max(Q)))
    return report


# oracles


def oracle_constant_kernel_M0(k, M0_init, t):
    """Total number for ``K = k``, ``C = 0``: ``M0(0) / (1 + k M0(0) t / 2)``."""
    if k < 0:
        raise ConfigError("k must be nonnegative", "k")
    return M0_init / (1.0 + k * M0_init * t / 2.0)


ORACLE_MAX_CELLS = 6


def oracle_dense_ode(config, g0, steps_per_unit=1e6):
    """Fixed-step explicit Euler integration of the sectional system.

    Written independently of :mod:`coagfrag.solver`: merger and fragment
    weights are rebuilt with scalar loops (fragment integrals by adaptive
    quadrature rather than in closed form) and the time loop uses
    ``dt = t_end / steps_per_unit``. Only grids of at most six cells are
    accepted. Returns a :class:`Trajectory` sampled like :func:`run`.
    """
    grid = config.grid
    n = grid.n_cells
    if n > ORACLE_MAX_CELLS:
        raise ConfigError(f"oracle accepts at most {ORACLE_MAX_CELLS} cells", "grid.n_cells")
    p = [float(x) for x in grid.pivots]
    w = [float(x) for x in grid.widths]
    pair = config.kernels
    B = config.breakup

    K = np.zeros((n, n))
    C = np.zeros((n, n))
    for j in range(n):
        for k in range(n):
            K[j, k] = float(pair.K(p[j], p[k]))
            C[j, k] = float(pair.C(p[j], p[k]))

    # merger targets: (cell_lo, weight_lo, cell_hi, weight_hi, overflow mass)
    lo_cell = np.zeros((n, n), dtype=np.int64)
    hi_cell = np.zeros((n, n), dtype=np.int64)
    lo_w = np.zeros((n, n))
    hi_w = np.zeros((n, n))
    lost = np.zeros((n, n))
    for j in range(n):
        for k in range(n):
            v = p[j] + p[k]
            if v > grid.x_max:
                lost[j, k] = v
                continue
            if v > p[-1]:
                lo_cell[j, k] = hi_cell[j, k] = n - 1
                lo_w[j, k] = v / p[-1]
                continue
            i = 0
            while i + 1 < n and p[i + 1] <= v:
                i += 1
            lo_cell[j, k] = i
            if i == n - 1 or v == p[i]:
                hi_cell[j, k] = i
                lo_w[j, k] = 1.0
            else:
                hi_cell[j, k] = i + 1
                hi_w[j, k] = (v - p[i]) / (p[i + 1] - p[i])
                lo_w[j, k] = 1.0 - hi_w[j, k]

    # fragments of parent j (partner k) placed in cell i
    frag = np.zeros((n, n, n))
    any_c = bool(np.any(C))
    for j in range(n):
        for k in range(n if B.z_dependent else 1):
            if not any_c:
                break
            z = p[k]
            y = p[j]
            f = lambda x: float(B(x, y, z))
            mass0 = integrate.quad(lambda x: x * f(x), 0.0, p[0], limit=200, epsabs=0.0,
                                   epsrel=1e-13)[0]
            frag[0, j, k] += mass0 / p[0]
            for m in range(j):
                num = integrate.quad(f, p[m], p[m + 1], epsabs=0.0, epsrel=1e-13)[0]
                mass = integrate.quad(lambda x: x * f(x), p[m], p[m + 1], epsabs=0.0,
                                      epsrel=1e-13)[0]
                a = (p[m + 1] * num - mass) / (p[m + 1] - p[m])
                frag[m, j, k] += a
                frag[m + 1, j, k] += num - a
        if not B.z_dependent:
            frag[:, j, :] = frag[:, j, :1]

    state0 = initial_state(config, g0)
    number = np.asarray(state0.density) * np.asarray(w)
    t_end = config.t_end
    total_steps = int(round(steps_per_unit))
    sample_steps = np.linspace(0, total_steps, config.sample_count).round().astype(np.int64)
    dt = t_end / total_steps
    snaps, overflow = _euler_loop(number, K, C, lo_cell, hi_cell, lo_w, hi_w, lost, frag,
                                  dt, sample_steps)

    traj = Trajectory(config.config_hash, grid=grid, omega=config.omega, xi=tuple(config.xi))
    for s, steps in enumerate(sample_steps):
        traj.record(State(steps * dt, snaps[s] / np.asarray(w), int(steps), overflow[s]))
    return traj


@njit(cache=False)
def _euler_loop(number, K, C, lo_cell, hi_cell, lo_w, hi_w, lost, frag, dt, sample_steps):
    n = number.shape[0]
    N = number.copy()
    dN = np.zeros(n)
    snaps = np.zeros((sample_steps.shape[0], n))
    overflow = np.zeros(sample_steps.shape[0])
    lost_mass = 0.0
    s = 0
    for i in range(n):
        snaps[0, i] = N[i]
    s = 1
    for step in range(1, sample_steps[-1] + 1):
        for i in range(n):
            dN[i] = 0.0
        lost_rate = 0.0
        for j in range(n):
            for k in range(n):
                r = K[j, k] * N[j] * N[k]
                if r != 0.0:
                    dN[j] -= r
                    if lost[j, k] > 0.0:
                        lost_rate += 0.5 * r * lost[j, k]
                    else:
                        dN[lo_cell[j, k]] += 0.5 * r * lo_w[j, k]
                        dN[hi_cell[j, k]] += 0.5 * r * hi_w[j, k]
                c = C[j, k] * N[j] * N[k]
                if c != 0.0:
                    dN[j] -= c
                    for i in range(j + 1):
                        dN[i] += c * frag[i, j, k]
        for i in range(n):
            N[i] += dt * dN[i]
        lost_mass += dt * lost_rate
        if step == sample_steps[s]:
            for i in range(n):
                snaps[s, i] = N[i]
            overflow[s] = lost_mass
            s += 1
    return snaps, overflow


def relative_l1(a, b, grid=None):
    """``sum |a - b| w / sum |b| w`` (plain sums when ``grid`` is None)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w = np.ones_like(a) if grid is None else grid.widths
    denom = float(np.sum(np.abs(b) * w))
    num = float(np.sum(np.abs(a - b) * w))
    return num / denom if denom > 0 else num
