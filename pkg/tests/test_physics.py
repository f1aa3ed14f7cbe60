import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import erf

from hybridheat.physics import (
    DomainError,
    ReferenceValues,
    ScenarioConfig,
    burn_weight,
    homogenized_pi,
    pi_coefficients,
    pi_fb,
    pi_nb,
    pi_source,
)


def test_source_coefficients(params):
    assert params.T_max_hat == pytest.approx(240.0)
    # independent inverse-erf oracle by root finding
    C = brentq(lambda c: 0.5 * (1 + erf(c)) - 0.0005, -5, 0)
    assert params.C1 == pytest.approx(C, abs=1e-10)
    assert params.C1 == pytest.approx(-2.3268, abs=5e-5)
    assert params.C2 == pytest.approx(params.C1)
    assert params.A1 == pytest.approx(9.3073, abs=5e-4)
    assert params.A2 == pytest.approx(9.3073, abs=5e-4)
    assert params.B1 == pytest.approx(-2.3268, abs=5e-5)
    assert params.B2 == pytest.approx(-6.9805, abs=5e-4)


def test_pi_nb_examples(params):
    # hand oracle: base + (1 - base) * 0.0005 minus the negligible shutoff term
    assert float(pi_nb(0.0, params)) == pytest.approx(0.01 + 0.99 * 0.0005, abs=1e-9)
    assert float(pi_nb(0.0, params)) == pytest.approx(0.01049, abs=1e-5)
    assert float(pi_nb(0.5, params)) == pytest.approx(0.9990, abs=5e-5)
    assert float(pi_nb(1.0, params)) == pytest.approx(0.0005, abs=5e-5)


def test_pi_fb_is_one_below_max(params):
    assert float(pi_fb(0.0, params)) == pytest.approx(1.0, abs=1e-12)
    assert float(pi_fb(1.0, params)) == pytest.approx(0.0005, abs=5e-5)


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.1])
def test_eps_outside_unit_interval(eps):
    with pytest.raises(DomainError):
        pi_coefficients(ReferenceValues(eps_s1=eps))


def test_source_branch_selection(params, scenario):
    T = np.array([0.1, 0.1])
    x = np.array([scenario.x_burn - 0.01, scenario.x_burn + 0.01])
    v = pi_source(T, x, "full", params, scenario)
    assert v[0] == pytest.approx(float(pi_fb(0.1, params)))
    assert v[1] == pytest.approx(float(pi_nb(0.1, params)))
    with pytest.raises(ValueError):
        pi_source(T, x, "XX", params, scenario)


def test_dimensionless_groups(groups):
    assert groups.Bi_p == pytest.approx(1.0)
    assert groups.Bi_c == pytest.approx(1.0)
    assert groups.varrho == pytest.approx(1500 * 1500 / (2500 * 900))
    assert groups.varsigma == pytest.approx(1.0)
    assert groups.Q == pytest.approx(1e-5)
    assert groups.R0 == pytest.approx(20.0)
    assert groups.R_high == pytest.approx(200.0)


def test_R_profile_limits(groups):
    assert groups.R(np.array([-0.5]))[0] == pytest.approx(200.0, rel=1e-6)
    assert groups.R(np.array([0.5]))[0] == pytest.approx(20.0, rel=1e-6)


def test_homogenized_source(params, scenario, geom):
    phi_c = geom.fractions.phi_c
    far = scenario.x_burn + 0.1
    assert math.exp(-scenario.gamma * 0.1) == pytest.approx(math.exp(-18))
    T = np.linspace(0, 0.3, 7)
    nb = pi_nb(T / phi_c, params)
    assert np.abs(homogenized_pi(T, np.full(7, far), phi_c, params, scenario) - nb).max() <= 1e-7
    mid = homogenized_pi(T, np.full(7, scenario.x_burn), phi_c, params, scenario)
    assert np.allclose(mid, 0.5 * (nb + pi_fb(T / phi_c, params)), atol=1e-15)
    assert burn_weight(np.array([scenario.x_burn]), scenario)[0] == 0.5
    v = homogenized_pi(np.array([phi_c * 0.5]), np.array([far]), phi_c, params, scenario)
    assert v[0] == pytest.approx(0.9990, abs=5e-5)


def test_no_burn_region(params):
    sc = ScenarioConfig(x_burn=None)
    assert np.all(burn_weight(np.linspace(-1, 1, 5), sc) == 0.0)
