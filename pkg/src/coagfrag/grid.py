"""Geometric mass grid and projection of initial data onto cell averages."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError

#: Gauss-Legendre points per cell used by :func:`project_initial_condition`.
GAUSS_POINTS = 16


@dataclass(frozen=True)
class MassGrid:
    """Cells ``[edges[i], edges[i+1]]`` with constant ratio ``edges[i+1]/edges[i]``.

    Each cell is represented by its geometric-mean pivot. Arrays are made
    read-only so a grid can be shared freely.
    """

    x_min: float
    x_max: float
    n_cells: int
    edges: np.ndarray = field(repr=False, compare=False)
    pivots: np.ndarray = field(repr=False, compare=False)
    widths: np.ndarray = field(repr=False, compare=False)

    @property
    def ratio(self):
        return (self.x_max / self.x_min) ** (1.0 / self.n_cells)

    def covers(self, lower, upper):
        """True if ``[lower, upper]`` lies inside ``[x_min, x_max]``."""
        return self.x_min <= lower and upper <= self.x_max

    def cell_of(self, x):
        """Index of the cell containing ``x`` (right edge belongs to the last cell)."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.edges, x, side="right") - 1
        return np.clip(idx, 0, self.n_cells - 1)

    def same_as(self, other):
        return (
            self.n_cells == other.n_cells
            and np.array_equal(self.edges, other.edges)
        )


def build_geometric_grid(x_min, x_max, n_cells):
    if not (np.isfinite(x_min) and x_min > 0):
        raise ConfigError(f"x_min must be positive and finite, got {x_min!r}", "grid.x_min")
    if not (np.isfinite(x_max) and x_max > x_min):
        raise ConfigError(f"x_max must exceed x_min, got {x_max!r}", "grid.x_max")
    if int(n_cells) != n_cells or n_cells < 1:
        raise ConfigError(f"n_cells must be a positive integer, got {n_cells!r}", "grid.n_cells")
    n_cells = int(n_cells)

    log_edges = np.linspace(np.log(x_min), np.log(x_max), n_cells + 1)
    edges = np.exp(log_edges)
    # pin the end points so edges[0] and edges[-1] are exactly the requested bounds
    edges[0] = x_min
    edges[-1] = x_max
    pivots = np.sqrt(edges[:-1] * edges[1:])
    widths = np.diff(edges)
    for arr in (edges, pivots, widths):
        arr.flags.writeable = False
    return MassGrid(float(x_min), float(x_max), n_cells, edges, pivots, widths)


def project_initial_condition(grid, g0):
    """Cell averages of ``g0`` by fixed 16-point Gauss-Legendre quadrature.

    ``g0`` must accept a numpy array of masses and return an array of the same
    shape. A scalar ``0`` is accepted as shorthand for the zero density.
    """
    if np.isscalar(g0):
        value = float(g0)
        if not np.isfinite(value) or value < 0:
            raise InputError(f"initial density must be finite and nonnegative, got {value!r}")
        return np.full(grid.n_cells, value)

    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_POINTS)
    lo = grid.edges[:-1, None]
    half = 0.5 * grid.widths[:, None]
    x = lo + half * (nodes[None, :] + 1.0)
    values = np.asarray(g0(x), dtype=float)
    if values.shape != x.shape:
        values = np.broadcast_to(values, x.shape)
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise InputError(f"initial density is not finite at x={x[tuple(bad)]:.6g}")
    if np.any(values < 0):
        bad = np.argwhere(values < 0)[0]
        raise InputError(f"initial density is negative at x={x[tuple(bad)]:.6g}")
    # average = (1/w) * (w/2) * sum(weights * f) = 0.5 * sum(weights * f)
    return 0.5 * (values @ weights)
