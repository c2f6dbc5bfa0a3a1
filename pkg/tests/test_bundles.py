from __future__ import annotations

import json
import math

import numpy as np
import pytest

from singconn.bundles import (
    SectionData,
    chern_form_at,
    chern_integral,
    cocycle_defect,
    covariance_defect,
    covariant_at,
    curvature,
    gauge_law_defect,
    gauge_transform,
    hermitian_check,
    metric_compatibility_defect,
    section_compatibility,
    standard_model,
    tensor_power,
    trivial_bundle,
)
from singconn.exterior import Chart, Form
from singconn.theta import exact_theta_section, theta_bundle_data


def _rotation(x):
    t = 0.7 * np.cos(x[..., 0]) + 0.3 * x[..., 1]
    p = np.sin(x[..., 2]) if x.shape[-1] > 2 else 0.4 * x[..., 0]
    c, s, e = np.cos(t), np.sin(t), np.exp(1j * p)
    a = np.zeros(x.shape[:-1] + (2, 2), dtype=complex)
    a[..., 0, 0], a[..., 0, 1], a[..., 1, 0], a[..., 1, 1] = c * e, -s, s, c * np.conj(e)
    return a


def _fd_jacobian(fn, x, h=1e-5):
    out = []
    for c in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[c] = h
        out.append((8 * (fn(x + e) - fn(x - e)) - (fn(x + 2 * e) - fn(x - 2 * e))) / (12 * h))
    return np.stack(out, axis=-3)


def _su2_connection(x):
    # a non-abelian anti-hermitian connection on R^4
    m = x.shape[-1]
    coeffs = {}
    for c in range(m):
        A = np.zeros(x.shape[:-1] + (2, 2), dtype=complex)
        A[..., 0, 1] = 0.3 * x[..., (c + 1) % m] + 0.1j * x[..., c]
        A[..., 1, 0] = -np.conj(A[..., 0, 1])
        A[..., 0, 0] = 0.2j * x[..., (c + 2) % m]
        A[..., 1, 1] = -0.1j * x[..., c]
        coeffs[(c,)] = A
    return Form(m, 1, coeffs, (2, 2))


def test_flat_bundle_has_zero_curvature():
    D = trivial_bundle(Chart.uniform(2, (-1, 1), 16), 2)
    assert curvature(D).forms[0].max_norm() == 0.0
    assert hermitian_check(D).passed


def test_standard_model_curvature_and_chern():
    chart = Chart.uniform(2, (-1, 1), 33)
    D = standard_model(chart)
    grid = curvature(D).forms[0]
    assert np.allclose(grid.coeffs[(0, 1)][..., 0, 0], -1j)
    # c_1 = Omega_0 / 2pi on a box of area 4
    assert abs(chern_integral(D, 1) - 4 / (2 * math.pi)) < 1e-12


def test_tensor_power_scales_curvature():
    L = theta_bundle_data(1)
    L3 = tensor_power(L, 3)
    x = np.random.default_rng(0).uniform(0, 1, (10, 2))
    assert np.allclose(L3.curvature_at(0, x).coeffs[(0, 1)], 3 * L.curvature_at(0, x).coeffs[(0, 1)])
    with pytest.raises(ValueError):
        tensor_power(L, 0)


@pytest.mark.parametrize("n,k", [(1, 1), (1, 3), (2, 1), (2, 2)])
def test_theta_atlas_invariants(n, k):
    D = theta_bundle_data(k, n=n, resolution=6 if n == 2 else 24)
    s = exact_theta_section(D)
    assert gauge_law_defect(D) < 1e-8
    assert cocycle_defect(D) < 1e-8
    assert metric_compatibility_defect(D) < 1e-12
    assert section_compatibility(s) < 1e-8
    assert covariance_defect(s) < 1e-8
    assert abs(chern_integral(D, n) - k ** n) < 1e-9


def test_gauge_transform_preserves_curvature_orbit_and_chern():
    chart = Chart.uniform(4, (-1, 1), 6)
    D = trivial_bundle(chart, 2, _su2_connection)
    D2, _ = gauge_transform(D, _rotation, lambda x: _fd_jacobian(_rotation, x))
    x = np.random.default_rng(1).uniform(-0.8, 0.8, (15, 4))
    O1, O2 = D.curvature_at(0, x), D2.curvature_at(0, x)
    a = _rotation(x)
    ainv = np.linalg.inv(a)
    for key in O1.coeffs:
        assert np.abs(O2.coeffs[key] - ainv @ O1.coeffs[key] @ a).max() < 1e-6
    for r in (1, 2):
        c1, c2 = chern_form_at(D, r, 0, x), chern_form_at(D2, r, 0, x)
        assert (c1 - c2).max_norm() < 1e-6


def test_gauge_transform_maps_covariant_derivative():
    chart = Chart.uniform(4, (-1, 1), 6)
    D = trivial_bundle(chart, 2, _su2_connection)
    D2, remap = gauge_transform(D, _rotation, lambda x: _fd_jacobian(_rotation, x))

    def u(x):
        v = np.stack([x[..., 0] + 1j * x[..., 1], 1 + 0.5 * x[..., 2] ** 2 + 0j], -1)
        du = np.zeros(x.shape[:-1] + (4, 2), dtype=complex)
        du[..., 0, 0], du[..., 1, 0], du[..., 2, 1] = 1, 1j, x[..., 2]
        return v, du

    s, s2 = SectionData(D, [u]), SectionData(D2, [remap(u)])
    x = np.random.default_rng(2).uniform(-0.8, 0.8, (12, 4))
    Du, Du2 = covariant_at(s, 0, x), covariant_at(s2, 0, x)
    a = _rotation(x)
    for c in range(4):
        assert np.abs(Du2.coeffs[(c,)] - Du.coeffs[(c,)] @ a).max() < 1e-8
    assert np.allclose(s.norm_at(0, x), s2.norm_at(0, x))


def test_bundle_json_round_trips_layout():
    D = theta_bundle_data(2, resolution=8)
    doc = json.loads(D.to_json())
    assert doc["rank"] == 1 and len(doc["charts"]) == len(D.charts)
    assert Chart.from_dict(doc["charts"][0]) == D.charts[0]
