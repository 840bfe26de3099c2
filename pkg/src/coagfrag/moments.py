"""Discrete moments and the Gronwall envelopes that bound them.

The envelopes bound moments of the truncated problem on ``[0, T]`` in terms
of the initial moments and the kernel constants. They are diagnostics: a
trajectory that exceeds one is reported, never modified.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError


def _exp(v):
    """``exp`` that saturates to ``inf`` instead of raising."""
    return math.exp(v) if v < 709.0 else math.inf


def k_mu(mu):
    """Constant in ``(x+y)^mu <= k(mu) (x^mu + y^mu)``."""
    return max(1.0, 2.0 ** (mu - 1.0))


@dataclass(frozen=True)
class EnvelopeParams:
    T: float
    k1: float
    mu: float
    sigma: float
    k2: float
    alpha: float
    N: float
    omega: float
    eta_omega: float
    omega_p: float = float("nan")
    lambda1: float = 1e-3
    lambda2: float = 1e3

    def __post_init__(self):
        if not (0 <= self.sigma < 1):
            raise ConfigError("sigma must lie in [0, 1)", "sigma")
        if not (0 <= self.mu - self.sigma <= 1):
            raise ConfigError("mu - sigma must lie in [0, 1]", "mu")
        if not (self.sigma < self.omega < 1):
            raise ConfigError("omega must lie in (sigma, 1)", "omega")
        if not (0 < self.lambda1 < self.lambda2):
            raise ConfigError("need 0 < lambda1 < lambda2", "lambda1")
        if self.T < 0:
            raise ConfigError("T must be nonnegative", "T")

    @property
    def k_mu(self):
        return k_mu(self.mu)

    def with_T(self, T):
        return EnvelopeParams(**{**self.__dict__, "T": T})


def moment(state, grid, xi):
    """``sum_i pivot_i^xi * density_i * width_i``. ``state`` is a State or a density array."""
    density = getattr(state, "density", state)
    if xi <= -1:
        warnings.warn(f"moment of order {xi} <= -1 diverges for densities positive near zero",
                      stacklevel=2)
    return float(np.sum(grid.pivots ** xi * np.asarray(density) * grid.widths))


def envelope_P0(params, M0_init, P1):
    c = params.k2 * (params.N - 1.0)
    T = params.T
    return (M0_init + 4.0 * c * P1 ** 2 * T) * _exp(8.0 * c * P1 * T)


def envelope_P2(params, M2_init, P0, P1):
    km = params.k_mu
    lin = 3.0 ** params.mu * P0 + km * P1
    if lin <= 0:
        return M2_init
    growth = _exp(lin * 2.0 * params.k1 * params.T)
    quad = 3.0 ** params.mu * P0 ** 2 + km * P1 ** 2
    return M2_init * growth + 0.5 * quad / lin * (growth - 1.0)


def omega2(params, k, Omega, P0, P1, P2, Pk):
    """Constant term of the ``M_{k+1}`` differential inequality; ``Omega`` bounds the middle binomial terms."""
    kk = (k + 1) * params.k1
    return (Omega + kk * 3.0 * P0 ** 2 + 2.0 * kk * 3.0 ** params.mu * P0 * P2
            + kk * params.k_mu * Pk * P1 + kk * params.k_mu * Pk * P2)


def envelope_Pk_plus_1(params, k, Pk, P0, P1, P2, Mk1_init, Omega, form="gronwall"):
    """Bound on ``M_{k+1}`` from ``dM/dt <= b M + Omega2``, ``b = (k+1) k1 k(mu) P1``.

    ``form="gronwall"`` is the solution ``M(0) e^{bT} + Omega2 (e^{bT}-1)/b``,
    continuous at ``b = 0``. ``form="literal"`` keeps the ratio the other way
    up, ``e^{bT}(b/Omega2 + M(0)) - b/Omega2``.
    """
    if k < 2:
        raise DomainError("the recursion starts at k = 2")
    b = (k + 1) * params.k1 * params.k_mu * P1
    W = omega2(params, k, Omega, P0, P1, P2, Pk)
    T = params.T
    if form == "literal":
        if W == 0:
            return Mk1_init * _exp(b * T)
        return _exp(b * T) * (b / W + Mk1_init) - b / W
    if form != "gronwall":
        raise ValueError(f"unknown form {form!r}")
    if b == 0:
        return Mk1_init + W * T
    if b * T >= 709.0:
        return math.inf
    return Mk1_init * _exp(b * T) + W * math.expm1(b * T) / b


def envelope_P_negative(params, Mneg_init, P0, P1, form="literal"):
    """Bound on ``M_{-omega}`` from ``dM/dt <= beta (M + P1)``, ``beta = 2(eta-1) k2 (P0+P1)``.

    ``form="literal"`` uses ``1/P1`` as the additive shift; ``form="gronwall"``
    uses ``P1``, which is what the inequality integrates to. They agree when
    ``P1 = 1``.
    """
    if P1 <= 0:
        raise DomainError("P1 must be positive")
    beta = 2.0 * (params.eta_omega - 1.0) * params.k2 * (P0 + P1)
    shift = 1.0 / P1 if form == "literal" else P1
    if form not in ("literal", "gronwall"):
        raise ValueError(f"unknown form {form!r}")
    return _exp(beta * params.T) * (shift + Mneg_init) - shift


def uniform_bound_E(x, t, E0, params):
    """Pointwise bound on ``g_n(x, t) / x^sigma`` on ``[lambda1, lambda2] x [0, T]``."""
    if not (params.lambda1 <= x <= params.lambda2):
        raise DomainError(f"x={x} outside [{params.lambda1}, {params.lambda2}]")
    c = 0.5 * params.k1 * E0 * x * (1 + params.lambda2) ** params.mu * params.lambda1 ** -params.sigma
    return E0 * _exp(c * math.expm1(min(t, 709.0)) + t)


def bound_S(T, E0, params):
    """Uniform bound S(T) in its literal form, with ``lambda1^(1-sigma)`` in the exponent."""
    c = 0.5 * E0 * params.k1 * (1 + params.lambda2) ** params.mu * params.lambda1 ** (1 - params.sigma)
    return E0 * _exp(c * math.expm1(min(T, 709.0)) + T)


def bound_S_sup(T, E0, params):
    """``sup_x E(x, T)`` over ``[lambda1, lambda2]``, attained at ``x = lambda2``."""
    return uniform_bound_E(params.lambda2, T, E0, params)


def initial_E0(density, grid, params, P0, P1, B_tilde):
    """``max(sup_x g(x,0)/x^sigma, k2 lambda1^(-sigma-1) B_tilde (P0+P1)^2)`` over cells in the rectangle."""
    sel = (grid.pivots >= params.lambda1) & (grid.pivots <= params.lambda2)
    c0 = float(np.max(np.asarray(density)[sel] / grid.pivots[sel] ** params.sigma, initial=0.0))
    source = params.k2 * params.lambda1 ** (-params.sigma - 1) * B_tilde * (P0 + P1) ** 2
    return max(c0, source)


@dataclass
class EnvelopeTable:
    P1: float
    P0: float
    P2: float
    P_neg: float
    E0: float
    S_literal: float
    S_sup: float

    @property
    def S_discrepancy(self):
        return self.S_literal != self.S_sup


def envelope_table(params, M0_init, M1_init, M2_init, Mneg_init, density=None, grid=None,
                   B_tilde=None):
    P1 = M1_init
    P0 = envelope_P0(params, M0_init, P1)
    P2 = envelope_P2(params, M2_init, P0, P1)
    Pn = envelope_P_negative(params, Mneg_init, P0, P1) if P1 > 0 else float("nan")
    E0 = S1 = S2 = float("nan")
    if density is not None and grid is not None and B_tilde is not None:
        E0 = initial_E0(density, grid, params, P0, P1, B_tilde)
        S1 = bound_S(params.T, E0, params)
        S2 = bound_S_sup(params.T, E0, params)
    return EnvelopeTable(P1, P0, P2, Pn, E0, S1, S2)


def envelope_report(traj, params):
    """Rows ``(t, quantity, value, envelope, margin)`` for ``M0``, ``M2`` and ``M_{-omega}``.

    The envelopes are evaluated with the horizon ``params.T`` for every
    sample, as in the uniform bound.
    """
    m = traj.moments
    tab = envelope_table(params, m["M0"][0], m["M1"][0], m["M2"][0], m["M_minus_omega"][0])
    env = {"M0": tab.P0, "M2": tab.P2, "M_minus_omega": tab.P_neg}
    rows = []
    for k, t in enumerate(traj.times):
        for name in ("M0", "M2", "M_minus_omega"):
            value = float(m[name][k])
            rows.append((float(t), name, value, env[name], env[name] - value))
    return rows
