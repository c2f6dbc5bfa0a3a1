from __future__ import annotations

import numpy as np
import pytest

from singconn.almost_complex import MuField
from singconn.bundles import SectionData, standard_model, trivial_bundle
from singconn.cli import MAPS_2D, _flat_section, linear_perturbed_map, planar_test_function, scalar_map
from singconn.exterior import Chart, Form
from singconn.lelong import (
    VerificationError,
    almost_holomorphy_lambda,
    singular_potential,
    t1_t2_decomposition,
    verify_alhol_lp,
    verify_lp1,
)
from singconn.testforms import torus_panel
from singconn.theta import exact_theta_section, perturbed_theta_section, theta_bundle_data

PHI = planar_test_function()


def test_flat_lp1_for_z():
    s = _flat_section(scalar_map(*MAPS_2D["z"]), 2, 1)
    r = verify_lp1(s, phi=PHI)
    assert r["passed"] and r["residual"] < 1e-3
    assert r["c1_term"] == 0


def test_lp1_with_curved_connection():
    # the standard model connection has c_1 = dx ^ dy / 2 pi
    chart = Chart.uniform(2, (-1, 1), 64)
    D = standard_model(chart)
    s = SectionData(D, [scalar_map(*MAPS_2D["z"])])
    r = verify_lp1(s, phi=PHI)
    assert abs(r["c1_term"]) > 0.05
    assert r["residual"] < 1e-3


@pytest.mark.parametrize("k", [1, 2])
def test_theta_lp1(k):
    s = exact_theta_section(theta_bundle_data(k))
    r = verify_lp1(s, phi=torus_panel()[0])
    assert r["divisor"]["total"] == k
    assert r["residual"] < 1e-3


def test_tau_is_chart_independent():
    s = exact_theta_section(theta_bundle_data(2))
    assert singular_potential(s).overlap_defect() < 1e-9


def test_tau_requires_line_bundle_and_hermitian_connection():
    s2 = _flat_section(lambda x: (np.ones(x.shape[:-1] + (2,)), np.zeros(x.shape[:-1] + (2, 2))), 2, 2, res=16)
    with pytest.raises(ValueError):
        singular_potential(s2)
    chart = Chart.uniform(2, (-1, 1), 16)

    def real_conn(x):
        c = np.ones(np.shape(x)[:-1] + (1, 1), dtype=complex)
        return Form(2, 1, {(0,): c, (1,): 0 * c}, (1, 1))

    D = trivial_bundle(chart, 1, real_conn)
    with pytest.raises(VerificationError):
        singular_potential(SectionData(D, [scalar_map(*MAPS_2D["z"])]))


def test_alhol_for_antiholomorphic_section():
    s = _flat_section(scalar_map(*MAPS_2D["zbar"]), 2, 1)
    r = verify_alhol_lp(s, phi=PHI)
    assert r["residual"] < 5e-3
    assert r["divisor"]["total"] == -1


@pytest.mark.parametrize("l0", [0.025, 0.1])
def test_lambda_of_linear_family(l0):
    s = _flat_section(linear_perturbed_map(l0), 2, 1)
    assert almost_holomorphy_lambda(s) == pytest.approx(l0, rel=1e-9)


def test_lambda_with_constant_structure():
    # z + c zbar is J-holomorphic for mu = c
    c = 0.2
    s = _flat_section(linear_perturbed_map(c), 2, 1)
    mu = MuField.constant(s.bundle.charts[0], c)
    assert almost_holomorphy_lambda(s, mu=mu) < 1e-12


def test_t1_t2_split_sums_and_scales():
    out = {}
    for l0 in (0.025, 0.05):
        s = _flat_section(linear_perturbed_map(l0), 2, 1)
        r = t1_t2_decomposition(s, phi=PHI)
        assert r["sum_defect"] < 1e-8
        out[l0] = r["T1"] / l0
    assert abs(out[0.05] - out[0.025]) < 0.1 * abs(out[0.025])


def test_perturbed_theta_alhol():
    s = perturbed_theta_section(theta_bundle_data(2))
    r = verify_alhol_lp(s, phi=torus_panel()[1])
    assert r["residual"] < 5e-3
