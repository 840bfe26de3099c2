import math

import numpy as np
import pytest

from coagfrag import ConfigError, DomainError, EnvelopeParams, build_geometric_grid, moment
from coagfrag.moments import (bound_S, bound_S_sup, envelope_P0, envelope_P2,
                              envelope_P_negative, envelope_Pk_plus_1, k_mu, uniform_bound_E)


def params(**kw):
    base = dict(T=1.0, k1=1.0, mu=0.0, sigma=0.0, k2=0.1, alpha=0.0, N=2.0, omega=0.5,
                eta_omega=4.0, lambda1=1e-3, lambda2=1.0)
    base.update(kw)
    return EnvelopeParams(**base)


def test_k_mu():
    assert k_mu(0.5) == 1.0 and k_mu(1.0) == 1.0 and k_mu(2.0) == 2.0


def test_moments_of_known_density():
    g = build_geometric_grid(1.0, 2.0, 1)
    assert moment(np.array([3.0]), g, 0) == pytest.approx(3.0)
    assert moment(np.array([3.0]), g, 1) == pytest.approx(3.0 * math.sqrt(2))
    with pytest.warns(UserWarning):
        moment(np.array([3.0]), g, -1.5)


def test_P0_without_fragmentation_is_initial_value():
    assert envelope_P0(params(k2=0.0), 2.5, 1.0) == 2.5


def test_P0_hand_value():
    # c = k2 (N-1) = 0.1
    expected = (1.0 + 0.4) * math.exp(0.8)
    assert envelope_P0(params(), 1.0, 1.0) == pytest.approx(expected)


def test_P2_hand_value():
    p = params(mu=1.0, sigma=0.5, omega=0.75)
    lin = 3.0 * 1.0 + 1.0 * 1.0
    growth = math.exp(lin * 2.0)
    expected = 2.0 * growth + 0.5 * (3.0 + 1.0) / lin * (growth - 1)
    assert envelope_P2(p, 2.0, 1.0, 1.0) == pytest.approx(expected)


def test_Pk_plus_1_forms():
    p = params()
    g = envelope_Pk_plus_1(p, 2, 1.0, 1.0, 1.0, 1.0, 3.0, 0.5)
    b = 3.0
    W = 0.5 + 3 * 3 + 2 * 3 * 1 + 3 + 3
    assert g == pytest.approx(3.0 * math.exp(b) + W * math.expm1(b) / b)
    assert envelope_Pk_plus_1(params(T=0.0), 2, 1.0, 1.0, 1.0, 1.0, 3.0, 0.5) == pytest.approx(3.0)
    assert envelope_Pk_plus_1(p, 2, 1.0, 1.0, 0.0, 1.0, 3.0, 0.5) == pytest.approx(3.0 + 0.5 + 9 + 6 + 3)
    literal = envelope_Pk_plus_1(p, 2, 1.0, 1.0, 1.0, 1.0, 3.0, 0.5, form="literal")
    assert literal == pytest.approx(math.exp(b) * (b / W + 3.0) - b / W)
    with pytest.raises(DomainError):
        envelope_Pk_plus_1(p, 1, 1.0, 1.0, 1.0, 1.0, 3.0, 0.5)


def test_P_negative_forms_agree_when_P1_is_one():
    p = params()
    a = envelope_P_negative(p, 2.0, 1.0, 1.0, form="literal")
    b = envelope_P_negative(p, 2.0, 1.0, 1.0, form="gronwall")
    assert a == pytest.approx(b)
    beta = 2 * 3.0 * 0.1 * 2.0
    assert a == pytest.approx(math.exp(beta) * 3.0 - 1.0)


@pytest.mark.parametrize("mu, expected", [(0.0, 2 * math.e), (1.0, 2 * math.e ** 2)])
def test_uniform_bound_E_worked_example(mu, expected):
    # E0=1, k1=2, x=1, sigma=0, lambda2=1, t=ln 2; (1+lambda2)^mu is 1 for mu=0 and 2 for mu=1
    p = params(k1=2.0, mu=mu, sigma=0.0, lambda1=0.5, lambda2=1.0)
    assert uniform_bound_E(1.0, math.log(2.0), 1.0, p) == pytest.approx(expected, rel=1e-14)


def test_E_at_zero_time_and_domain():
    p = params()
    assert uniform_bound_E(0.5, 0.0, 3.0, p) == 3.0
    with pytest.raises(DomainError):
        uniform_bound_E(2.0, 0.0, 3.0, p)


def test_S_variants_and_overflow_saturates():
    p = params(lambda2=1e3, mu=1.0, sigma=0.5, omega=0.75)
    assert bound_S_sup(1.0, 1e5, p) == math.inf
    assert bound_S(0.0, 2.0, p) == 2.0


def test_params_validation():
    with pytest.raises(ConfigError):
        params(omega=0.0)
    with pytest.raises(ConfigError):
        params(mu=2.0)
