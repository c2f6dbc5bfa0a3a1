from __future__ import annotations

import math

import numpy as np
import pytest

from singconn.lelong import almost_holomorphy_lambda, section_divisor
from singconn.theta import (
    Lattice,
    ThetaFamily,
    exact_theta_section,
    jacobi_theta,
    lattice_subgroup,
    perturbed_theta_section,
    theta_bundle_data,
    theta_sections,
    torus_zero_reference,
)


def _triple_product(z, b, terms=60):
    q = math.exp(-math.pi * b)
    w = np.exp(2j * math.pi * z)
    out = np.ones_like(z, dtype=complex)
    for m in range(1, terms):
        out *= (1 - q ** (2 * m)) * (1 + q ** (2 * m - 1) * w) * (1 + q ** (2 * m - 1) / w)
    return out


@pytest.mark.parametrize("b", [0.7, 1.0, 1.6])
def test_theta_matches_triple_product(b):
    z = np.random.default_rng(0).uniform(-1, 1, 20) + 1j * np.random.default_rng(1).uniform(-b, b, 20)
    v, _ = jacobi_theta(z, b)
    assert np.abs(v - _triple_product(z, b)).max() < 1e-12 * np.abs(v).max()


def test_theta_quasi_periodicity_and_zero():
    b = 1.0
    z = np.array([0.1 + 0.2j, -0.3 + 0.05j])
    v, _ = jacobi_theta(z, b)
    v1, _ = jacobi_theta(z + 1, b)
    vt, _ = jacobi_theta(z + 1j * b, b)
    assert np.allclose(v1, v)
    assert np.allclose(vt, np.exp(math.pi * b - 2j * math.pi * z) * v)
    assert abs(jacobi_theta(np.array([0.5 + 0.5j * b]), b)[0][0]) < 1e-14


def test_theta_derivative():
    b, h = 1.2, 1e-6
    z = np.array([0.13 + 0.31j])
    _, dv = jacobi_theta(z, b)
    fd = (jacobi_theta(z + h, b)[0] - jacobi_theta(z - h, b)[0]) / (2 * h)
    assert abs(dv[0] - fd[0]) < 1e-6


@pytest.mark.parametrize("k", [1, 2, 3, 5, 8])
def test_lattice_subgroup(k):
    pts = lattice_subgroup(k, 1.0)
    assert len(pts) == k
    assert abs(pts.sum()) < 1e-12
    assert len({(round(p.real % 1, 9), round(p.imag % 1, 9)) for p in pts}) == k


def test_lattice_validation():
    with pytest.raises(ValueError):
        Lattice(0.0)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_exact_family_zeros_match_reference(k):
    D = theta_bundle_data(k)
    div = section_divisor(exact_theta_section(D))
    assert div.total == k
    ref = torus_zero_reference(D)
    found = div.points
    for p in ref:
        d = np.abs(((found - p) + 0.5) % 1.0 - 0.5).max(axis=-1)
        assert d.min() < 1e-8


def test_basis_sections_have_k_zeros():
    D = theta_bundle_data(3)
    for s in theta_sections(D):
        assert section_divisor(s).total == 3


def test_rank_two_reference_count():
    D = theta_bundle_data(2, n=2, resolution=8)
    assert torus_zero_reference(D).shape == (4, 4)
    div = section_divisor(exact_theta_section(D))
    assert div.total == 4 and all(m == 1 for m in div.multiplicities)


def test_sections_normalised():
    fam = ThetaFamily(3, 1.0)
    x = np.linspace(0, 1, 80)
    X, Y = np.meshgrid(x, x, indexing="ij")
    s, _, _ = fam.scalar_fn()(X + 1j * Y)
    # the sup is taken on a 64-point sample grid
    assert 0.97 < np.abs(s).max() <= 1.0 + 1e-3


@pytest.mark.parametrize("k", [1, 4])
def test_perturbed_family_keeps_zeros_and_scales_lambda(k):
    D = theta_bundle_data(k)
    s = perturbed_theta_section(D, strength=0.2)
    div = section_divisor(s)
    assert div.total == k
    lam = almost_holomorphy_lambda(s)
    assert 0.15 < lam * math.sqrt(k) < 0.25
    assert almost_holomorphy_lambda(exact_theta_section(D)) < 1e-6
