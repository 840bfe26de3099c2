"""Randomised invariants of the discrete operator."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coagfrag import (BreakupKernel, CoagulationKernel, CollisionKernel, SolverConfig, State,
                      build_geometric_grid, rhs, truncate)
from coagfrag.solver import coagulation_split, fragment_weights

densities = arrays(np.float64, 8, elements=st.floats(0.0, 10.0, allow_subnormal=False))


@st.composite
def configs(draw):
    grid = build_geometric_grid(draw(st.floats(1e-3, 1.0)), draw(st.floats(2.0, 1e3)), 8)
    K = CoagulationKernel("granulation", k=draw(st.floats(0.0, 2.0)), a=1.0,
                          b=draw(st.sampled_from([0.0, 0.25, 0.5])), k1=2.0, mu=1.0, sigma=0.5)
    C = CollisionKernel("constant", k2=draw(st.floats(0.0, 1.0)))
    B = BreakupKernel.power_law(draw(st.floats(-0.9, 0.0)))
    n = draw(st.floats(1.0, 1e4))
    return SolverConfig(grid, truncate(K, C, n), B, t_end=1.0)


@settings(max_examples=40, deadline=None)
@given(configs(), densities)
def test_mass_rate_balances_overflow(cfg, g):
    dg = rhs(State(0.0, g), cfg)
    _, overflow, _ = cfg.operator()(g)
    p, w = cfg.grid.pivots, cfg.grid.widths
    scale = max(1.0, float(np.sum(np.abs(dg) * w * p)))
    assert abs(np.sum(dg * w * p) + overflow) <= 1e-12 * scale


@settings(max_examples=40, deadline=None)
@given(configs(), densities)
def test_empty_cells_only_gain(cfg, g):
    dg = rhs(State(0.0, g), cfg)
    assert np.all(dg[g == 0] >= -1e-300)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-4, 1.0), st.floats(2.0, 1e4), st.integers(2, 30))
def test_split_weights_are_convex(x_min, x_max, n):
    grid = build_geometric_grid(x_min, x_max, n)
    S, overflow = coagulation_split(grid)
    assert S.data.min() >= 0
    assert np.all(overflow >= 0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.95, 0.0), st.integers(2, 20))
def test_fragment_mass_is_conserved(nu, n):
    grid = build_geometric_grid(0.01, 100.0, n)
    W = fragment_weights(grid, BreakupKernel.power_law(nu))
    np.testing.assert_allclose(grid.pivots @ W, grid.pivots, rtol=1e-11)
    assert np.all(W >= -1e-14)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_granulation_is_symmetric_and_bounded(x, y):
    K = CoagulationKernel("granulation", k=1.0, a=1.0, b=0.5, k1=1.0, mu=1.0, sigma=0.5)
    assert K(x, y) == K(y, x)
    assert K(x, y) <= K.bound(x, y) * (1 + 1e-12)
