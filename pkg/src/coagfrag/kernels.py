"""Coagulation, collision and breakup kernels.

Kernels are immutable, vectorised callables. Besides evaluation they carry
the bound constants declared for them (``k1, mu, sigma`` for coagulation,
``k2, alpha`` for collision, ``B_tilde, nu`` for breakup), which are checked
on a sample lattice by :func:`check_admissibility` and consumed by the moment
envelopes in :mod:`coagfrag.moments`.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError

COAGULATION_FAMILIES = ("constant", "brownian_continuum", "brownian_free_molecular",
                        "granulation", "custom")
COLLISION_FAMILIES = ("zero", "constant", "product_bounded", "custom")
BREAKUP_FAMILIES = ("power_law", "custom")

QUAD_RTOL = 1e-10


def _positive(name, *values):
    for v in values:
        if np.any(np.asarray(v) <= 0):
            raise DomainError(f"{name} requires positive masses")


class _LogTable:
    """Symmetric table on a log-mass lattice with bilinear interpolation in log-mass.

    Queries outside the lattice are clamped to the boundary values.
    """

    def __init__(self, masses, values):
        masses = np.asarray(masses, dtype=float)
        values = np.asarray(values, dtype=float)
        if masses.ndim != 1 or masses.size < 2 or np.any(np.diff(masses) <= 0) or masses[0] <= 0:
            raise ConfigError("table masses must be positive and strictly increasing", "masses")
        if values.shape != (masses.size, masses.size):
            raise ConfigError(f"table values must have shape {(masses.size, masses.size)}", "values")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ConfigError("table values must be finite and nonnegative", "values")
        if not np.array_equal(values, values.T):
            raise ConfigError("table values must be symmetric", "values")
        self.masses = masses
        self.values = values
        self._log = np.log(masses)

    def _locate(self, x):
        lx = np.clip(np.log(x), self._log[0], self._log[-1])
        i = np.clip(np.searchsorted(self._log, lx, side="right") - 1, 0, self._log.size - 2)
        s = (lx - self._log[i]) / (self._log[i + 1] - self._log[i])
        return i, s

    def __call__(self, x, y):
        i, s = self._locate(x)
        j, u = self._locate(y)
        v = self.values
        return ((1 - s) * (1 - u) * v[i, j] + s * (1 - u) * v[i + 1, j]
                + (1 - s) * u * v[i, j + 1] + s * u * v[i + 1, j + 1])


@dataclass(frozen=True)
class CoagulationKernel:
    """Coagulation rate ``K(x, y)`` with declared bound ``K <= k1 (1+x+y)^mu / (xy)^sigma``."""

    family: str
    k: float = 1.0
    a: float = 1.0
    b: float = 0.0
    k1: float = 1.0
    mu: float = 0.0
    sigma: float = 0.0
    table: Optional[_LogTable] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in COAGULATION_FAMILIES:
            raise ConfigError(f"unknown coagulation family {self.family!r}", "family")
        if self.k < 0:
            raise ConfigError("rate prefactor must be nonnegative", "k")
        if self.family == "granulation":
            if not (0 <= self.a - self.b <= 1):
                raise ConfigError("granulation kernel requires a - b in [0, 1]", "a")
            if not (0 <= self.b < 1):
                raise ConfigError("granulation kernel requires b in [0, 1)", "b")
        if self.family == "custom" and self.table is None:
            raise ConfigError("custom coagulation kernel needs a table", "values")

    @classmethod
    def from_table(cls, masses, values, k1=1.0, mu=0.0, sigma=0.0):
        return cls("custom", k1=k1, mu=mu, sigma=sigma, table=_LogTable(masses, values))

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        f = self.family
        if f == "constant":
            return np.full(np.broadcast(x, y).shape, float(self.k))[()]
        if f == "brownian_continuum":
            cx, cy = np.cbrt(x), np.cbrt(y)
            return self.k * (cx + cy) * (1 / cx + 1 / cy)
        if f == "brownian_free_molecular":
            cx, cy = np.cbrt(x), np.cbrt(y)
            return self.k * (cx + cy) ** 2 * np.sqrt(1 / x + 1 / y)
        if f == "granulation":
            return self.k * (x + y) ** self.a / (x * y) ** self.b
        return self.table(x, y)

    def bound(self, x, y):
        """Right-hand side of the declared growth bound."""
        return self.k1 * (1 + x + y) ** self.mu / (x * y) ** self.sigma


@dataclass(frozen=True)
class CollisionKernel:
    """Collision rate ``C(x, y)`` with declared bound ``C <= k2 (1+x)^alpha (1+y)^alpha``.

    For the ``product_bounded`` family the kernel equals its bound.
    """

    family: str
    k2: float = 0.0
    alpha: float = 0.0
    table: Optional[_LogTable] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in COLLISION_FAMILIES:
            raise ConfigError(f"unknown collision family {self.family!r}", "family")
        if self.k2 < 0:
            raise ConfigError("k2 must be nonnegative", "k2")
        if self.family == "custom" and self.table is None:
            raise ConfigError("custom collision kernel needs a table", "values")

    @classmethod
    def from_table(cls, masses, values, k2=0.0, alpha=0.0):
        return cls("custom", k2=k2, alpha=alpha, table=_LogTable(masses, values))

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        if self.family == "zero":
            return np.zeros(shape)[()]
        if self.family == "constant":
            return np.full(shape, float(self.k2))[()]
        if self.family == "product_bounded":
            return self.k2 * (1 + x) ** self.alpha * (1 + y) ** self.alpha
        return self.table(x, y)

    def bound(self, x, y):
        return self.k2 * (1 + x) ** self.alpha * (1 + y) ** self.alpha


@dataclass(frozen=True)
class BreakupKernel:
    """Daughter distribution ``B(x | y; z)`` of fragments of mass ``x`` from a parent ``y``.

    ``power_law`` is ``((nu+2)/y) (x/y)^nu`` for ``0 < x < y``; all moments are
    closed form. ``custom`` wraps a vectorised callable ``func(x, y, z)`` (or a
    scaled table, see :meth:`from_table`) and integrates numerically.
    """

    family: str
    nu: float = 0.0
    B_tilde: Optional[float] = None
    func: Optional[Callable] = field(default=None, repr=False, compare=False)
    z_dependent: bool = False
    table: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in BREAKUP_FAMILIES:
            raise ConfigError(f"unknown breakup family {self.family!r}", "family")
        if self.family == "power_law":
            if not (-1 < self.nu <= 0):
                raise ConfigError("power-law breakup requires nu in (-1, 0]", "nu")
            if self.B_tilde is None:
                object.__setattr__(self, "B_tilde", self.nu + 2.0)
        elif self.func is None:
            raise ConfigError("custom breakup kernel needs a function or table", "func")
        if self.B_tilde is None or self.B_tilde <= 0:
            raise ConfigError("B_tilde must be positive", "B_tilde")

    @classmethod
    def power_law(cls, nu=0.0, B_tilde=None):
        return cls("power_law", nu=nu, B_tilde=B_tilde)

    @classmethod
    def from_function(cls, func, B_tilde, z_dependent=False):
        return cls("custom", func=func, B_tilde=B_tilde, z_dependent=z_dependent)

    @classmethod
    def from_table(cls, u, beta, B_tilde):
        """Scaled kernel ``B(x|y) = beta(x/y) / y`` tabulated on ``0 < u <= 1``.

        ``beta`` is interpolated linearly in ``log u`` and held constant below
        the first node.
        """
        u = np.asarray(u, dtype=float)
        beta = np.asarray(beta, dtype=float)
        if u.ndim != 1 or u.size < 2 or u[0] <= 0 or u[-1] > 1 or np.any(np.diff(u) <= 0):
            raise ConfigError("u must be strictly increasing in (0, 1]", "u")
        if beta.shape != u.shape or np.any(beta < 0) or not np.all(np.isfinite(beta)):
            raise ConfigError("beta must be finite, nonnegative and match u", "beta")
        log_u = np.log(u)

        def func(x, y, z):
            s = np.log(np.asarray(x, dtype=float) / y)
            return np.interp(s, log_u, beta) / y

        return cls("custom", func=func, B_tilde=B_tilde, table=(tuple(u), tuple(beta)))

    def __call__(self, x, y, z=1.0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = (x > 0) & (x < y)
        if self.family == "power_law":
            ratio = np.where(inside, x / y, 1.0)
            val = (self.nu + 2.0) / y * ratio ** self.nu
        else:
            val = self.func(np.where(inside, x, 0.5 * y), y, z)
        return np.where(inside, val, 0.0)[()]

    # closed-form constants (power law)

    @property
    def N_total(self):
        """Number of fragments per breakup, ``sup_y N(y)``."""
        if self.family == "power_law":
            return (self.nu + 2.0) / (self.nu + 1.0)
        return None

    def omega_p(self, p):
        if self.family != "power_law":
            raise DomainError("closed-form omega_p is only available for power_law")
        if p <= -(self.nu + 1):
            raise DomainError(f"moment of order {p} is not integrable")
        return (self.nu + 2.0) / (self.nu + p + 1.0)

    def eta(self, omega):
        if self.family != "power_law":
            raise DomainError("closed-form eta is only available for power_law")
        if omega >= self.nu + 1:
            raise DomainError(f"negative moment of order {omega} is not integrable")
        return (self.nu + 2.0) / (self.nu + 1.0 - omega)

    # integrals over sub-intervals, used for the fragment weights

    def partial_moments(self, lo, hi, y, z=1.0):
        """``(int_lo^hi B dx, int_lo^hi x B dx)`` with ``0 <= lo <= hi <= y``."""
        if self.family == "power_law":
            e = self.nu + 1.0
            a, b = lo / y, hi / y
            number = (self.nu + 2.0) / e * (b ** e - a ** e)
            mass = y * (b ** (e + 1) - a ** (e + 1))
            return number, mass
        if hi <= lo:
            return 0.0, 0.0
        opts = dict(epsabs=0.0, epsrel=1e-12, limit=200)
        f = lambda x: float(self(x, y, z))
        if lo == 0.0:
            # substitute x = hi * exp(-s) to tame algebraic singularities at zero
            g0 = lambda s: f(hi * np.exp(-s)) * hi * np.exp(-s)
            g1 = lambda s: f(hi * np.exp(-s)) * (hi * np.exp(-s)) ** 2
            return (integrate.quad(g0, 0.0, np.inf, **opts)[0],
                    integrate.quad(g1, 0.0, np.inf, **opts)[0])
        return (integrate.quad(f, lo, hi, **opts)[0],
                integrate.quad(lambda x: x * f(x), lo, hi, **opts)[0])


def eval_K(kernel, x, y):
    _positive("coagulation kernel", x, y)
    return kernel(x, y)


def eval_C(kernel, x, y):
    _positive("collision kernel", x, y)
    return kernel(x, y)


def eval_B(kernel, x, y, z=1.0):
    _positive("breakup kernel", x, y, z)
    return kernel(x, y, z)


def breakup_moment(kernel, y, z=1.0, p=1.0):
    """``int_0^y x^p B(x|y;z) dx``; closed form for the power law, quadrature otherwise."""
    _positive("breakup moment", y, z)
    if kernel.family == "power_law":
        if p <= -(kernel.nu + 1):
            raise DomainError(f"moment of order {p} diverges for nu={kernel.nu}")
        return (kernel.nu + 2.0) / (kernel.nu + p + 1.0) * y ** p

    # x = y * exp(-s): exponential decay in s replaces the power singularity at 0
    def integrand(s):
        x = y * np.exp(-s)
        return x ** (p + 1) * float(kernel(x, y, z))

    value, err = integrate.quad(integrand, 0.0, np.inf, epsabs=0.0,
                                epsrel=QUAD_RTOL * 1e-2, limit=500)
    if not np.isfinite(value) or err > QUAD_RTOL * abs(value) + 1e-300:
        raise DomainError(f"moment of order {p} did not converge (estimate {value}, error {err})")
    return value


def number_of_fragments(kernel, y, z=1.0):
    return breakup_moment(kernel, y, z, p=0.0)


# truncation


@dataclass(frozen=True)
class TruncatedKernelPair:
    """Kernels restricted to the square ``[1/n, n)^2`` and zero outside."""

    base_K: CoagulationKernel
    base_C: CollisionKernel
    n: float

    def _inside(self, x, y):
        lo, hi = 1.0 / self.n, self.n
        return (x >= lo) & (x < hi) & (y >= lo) & (y < hi)

    def K(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.where(self._inside(x, y), self.base_K(x, y), 0.0)[()]

    def C(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.where(self._inside(x, y), self.base_C(x, y), 0.0)[()]


def truncate(K, C, n):
    if not (n >= 1):
        raise ConfigError(f"truncation index must be >= 1, got {n!r}", "truncation.n")
    return TruncatedKernelPair(K, C, float(n))


# admissibility


@dataclass(frozen=True)
class SamplePlan:
    """Points at which the bound inequalities are tested.

    A log lattice on ``(x_low, 1)^2`` and on ``[1, x_high]^2`` plus the diagonal
    and a fixed-seed cloud of random log-uniform pairs over the whole range.
    """

    x_low: float = 1e-6
    x_high: float = 1e6
    per_decade: int = 8
    random_pairs: int = 2000
    seed: int = 20180110
    breakup_y: tuple = (1e-4, 1e-2, 1.0, 1e2, 1e4)
    p_values: tuple = (1.5, 2.0, 3.0)
    omega_values: tuple = (0.0, 0.25, 0.5)

    def lattices(self):
        lo_dec = int(np.ceil(-np.log10(self.x_low)))
        hi_dec = int(np.ceil(np.log10(self.x_high)))
        # open unit square: stop one lattice step short of 1
        below = np.logspace(np.log10(self.x_low), 0, lo_dec * self.per_decade + 1)[:-1]
        above = np.logspace(0, np.log10(self.x_high), hi_dec * self.per_decade + 1)
        return below, above

    def pairs(self):
        below, above = self.lattices()
        xs, ys = [], []
        for axis in (below, above):
            X, Y = np.meshgrid(axis, axis, indexing="ij")
            xs.append(X.ravel())
            ys.append(Y.ravel())
        full = np.concatenate([below, above])
        xs.append(full)
        ys.append(full)
        rng = np.random.default_rng(self.seed)
        lx = rng.uniform(np.log(self.x_low), np.log(self.x_high), size=(2, self.random_pairs))
        xs.append(np.exp(lx[0]))
        ys.append(np.exp(lx[1]))
        return np.concatenate(xs), np.concatenate(ys)


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst_ratio: float = float("nan")
    detail: str = ""
    witnesses: list = field(default_factory=list)


@dataclass
class AdmissibilityReport:
    checks: list
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self):
        out = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            line = f"{c.name:<6} {status}  worst_ratio={c.worst_ratio:.6g}"
            if c.detail:
                line += f"  {c.detail}"
            out.append(line)
            for w in c.witnesses[:3]:
                out.append(f"       witness {w}")
        out.extend(f"note: {n}" for n in self.notes)
        return out


def _worst(ratio, xs, ys, limit=1.0, n_witness=3):
    ratio = np.asarray(ratio, dtype=float)
    finite = np.where(np.isfinite(ratio), ratio, np.inf)
    worst = float(np.max(finite)) if finite.size else 0.0
    bad = np.flatnonzero(finite > limit)
    order = bad[np.argsort(-finite[bad])][:n_witness]
    witnesses = [(float(xs[i]), float(ys[i]), float(finite[i])) for i in order]
    return worst, witnesses


def check_admissibility(K, C, B, samples=None, theta=None, sigma1=None, sigma2=None):
    """Test the kernel assumptions on a finite sample set.

    Every assumption yields a :class:`CheckResult`; violations are report
    entries with witnesses ``(x, y, ratio)``, never exceptions. The uniqueness
    conditions are included when ``theta``, ``sigma1`` and ``sigma2`` are given.
    """
    samples = samples or SamplePlan()
    xs, ys = samples.pairs()
    checks, notes = [], []
    tiny = 1e-300

    # A0: nonnegative, finite, symmetric
    kv, kt = K(xs, ys), K(ys, xs)
    cv, ct = C(xs, ys), C(ys, xs)
    a0_ok = bool(np.all(np.isfinite(kv)) and np.all(kv >= 0) and np.all(np.isfinite(cv))
                 and np.all(cv >= 0) and np.array_equal(kv, kt) and np.array_equal(cv, ct))
    by = np.asarray(samples.breakup_y)
    bx = by[:, None] * np.logspace(-6, 0, 25)[None, :-1]
    bvals = B(bx, by[:, None])
    a0_ok = a0_ok and bool(np.all(np.isfinite(bvals)) and np.all(bvals >= 0))
    asym = float(max(np.max(np.abs(kv - kt), initial=0.0), np.max(np.abs(cv - ct), initial=0.0)))
    checks.append(CheckResult("A0", a0_ok, asym, "max |K(x,y)-K(y,x)|, |C(x,y)-C(y,x)|"))

    # A1: K <= k1 (1+x+y)^mu / (xy)^sigma
    param_ok = (0 <= K.mu - K.sigma <= 1) and (0 <= K.sigma < 1) and K.k1 > 0
    ratio = kv / np.maximum(K.bound(xs, ys), tiny)
    worst, wit = _worst(ratio, xs, ys)
    detail = f"k1={K.k1:g} mu={K.mu:g} sigma={K.sigma:g}"
    if not param_ok:
        detail += " (declared constants violate 0<=mu-sigma<=1, sigma in [0,1))"
    checks.append(CheckResult("A1", param_ok and worst <= 1.0, worst, detail, wit))

    # A2: C <= k2 (1+x)^a (1+y)^a, and K >= 2(N-1) C on the unit square
    N = _sup_fragments(B, samples)
    if C.family == "zero":
        worst = 0.0
        wit = []
    else:
        bound = C.bound(xs, ys)
        ratio = np.where(cv > 0, cv / np.maximum(bound, tiny), 0.0)
        worst, wit = _worst(ratio, xs, ys)
    param_ok = 0 <= C.alpha <= 1 and C.k2 >= 0
    checks.append(CheckResult("A2", param_ok and worst <= 1.0, worst,
                              f"k2={C.k2:g} alpha={C.alpha:g}", wit))

    below, _ = samples.lattices()
    X, Y = np.meshgrid(below, below, indexing="ij")
    ux, uy = X.ravel(), Y.ravel()
    need = 2.0 * (N - 1.0) * C(ux, uy)
    have = K(ux, uy)
    ratio = np.where(need > 0, need / np.maximum(have, tiny), 0.0)
    worst, wit = _worst(ratio, ux, uy)
    checks.append(CheckResult("A2sq", worst <= 1.0, worst,
                              f"2(N-1)C/K on (0,1)^2 with N={N:.6g}", wit))

    # A3: x B(x|y;z) <= B_tilde
    xb = bx * bvals / B.B_tilde
    worst, wit = _worst(xb.ravel(), bx.ravel(), np.broadcast_to(by[:, None], bx.shape).ravel())
    checks.append(CheckResult("A3", worst <= 1.0, worst, f"B_tilde={B.B_tilde:g}", wit))

    # A4: int x^p B <= omega_p y^p with omega_p < 1 for p > 1
    worst = 0.0
    wit = []
    for p in samples.p_values:
        for y in samples.breakup_y:
            r = breakup_moment(B, y, 1.0, p) / y ** p
            if r > worst:
                worst = r
            if r >= 1:
                wit.append((p, float(y), r))
    checks.append(CheckResult("A4", worst < 1.0, worst, "sup_y int x^p B / y^p over sampled p > 1", wit))

    # A5: int x^-w B <= eta(w) y^-w with finite eta(w) >= 1
    worst = 0.0
    wit = []
    ok = True
    for w in samples.omega_values:
        for y in samples.breakup_y:
            try:
                r = breakup_moment(B, y, 1.0, -w) * y ** w
            except DomainError:
                ok = False
                wit.append((w, float(y), float("inf")))
                continue
            worst = max(worst, r)
            if r < 1:
                ok = False
                wit.append((w, float(y), r))
    checks.append(CheckResult("A5", ok, worst, "sup_y int x^-w B * y^w over sampled w", wit))

    n_values = [number_of_fragments(B, y) for y in samples.breakup_y]
    if max(n_values) - min(n_values) > 1e-8 * max(n_values):
        notes.append(f"N(y) varies with y ({min(n_values):.6g}..{max(n_values):.6g}); "
                     f"A2sq uses N = sup N(y) = {N:.6g}")

    if theta is not None and sigma1 is not None and sigma2 is not None:
        s = K.sigma
        ok1 = (0 <= theta < 1) and (s + theta <= sigma2) and (s <= theta)
        checks.append(CheckResult(
            "A1'", ok1 and checks[1].passed, s + theta - sigma2,
            f"sigma+theta={s + theta:g} <= sigma2={sigma2:g}, sigma={s:g} <= theta={theta:g}"))
        ok2 = C.alpha + 1 <= sigma1
        checks.append(CheckResult("A2'", ok2 and checks[2].passed, C.alpha + 1 - sigma1,
                                  f"alpha+1={C.alpha + 1:g} <= sigma1={sigma1:g}"))
        binding = []
        if s + theta > sigma1:
            binding.append("sigma+theta <= sigma1 (uniqueness functional) violated")
        if s + theta > sigma2:
            binding.append("sigma+theta <= sigma2 (A1') violated")
        if binding:
            notes.extend(binding)
        else:
            which = "sigma2" if sigma2 <= sigma1 else "sigma1"
            notes.append(f"theta constraint binding on {which}")

    return AdmissibilityReport(checks, notes)


def _sup_fragments(B, samples):
    if B.family == "power_law":
        return B.N_total
    return max(number_of_fragments(B, y) for y in samples.breakup_y)
