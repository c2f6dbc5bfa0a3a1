from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singconn.almost_complex import (
    AdmissibilityError,
    MuField,
    alpha_forms,
    check_admissible,
    cr_residual,
    dilation,
    disc_residual,
    j_matrix_from_mu,
    j_standard,
    mu_matrix_from_j,
    split_components,
    transform_mu,
    transform_mu_matrix,
)
from singconn.exterior import Chart, DifferentialForm, SmoothMap, one_form_components


def _small_mu(seed: int, n: int, scale: float = 0.3) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return scale * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / n


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(1, 3))
def test_j_mu_round_trip(seed, n):
    mu = _small_mu(seed, n)
    J = j_matrix_from_mu(mu)
    assert np.abs(J @ J + np.eye(2 * n)).max() < 1e-9
    assert np.abs(mu_matrix_from_j(J) - mu).max() < 1e-9


def test_zero_mu_is_standard():
    assert np.allclose(j_matrix_from_mu(np.zeros((2, 2))), j_standard(2))
    assert np.allclose(mu_matrix_from_j(j_standard(2)), 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(1, 2))
def test_alpha_forms_are_i_eigenforms(seed, n):
    mu = _small_mu(seed, n)
    J = j_matrix_from_mu(mu)
    al, alb = alpha_forms(mu[None])
    for a, b in zip(al, alb):
        ca, cb = one_form_components(a)[0], one_form_components(b)[0]
        assert np.abs(J.T @ ca - 1j * ca).max() < 1e-10
        assert np.abs(J.T @ cb + 1j * cb).max() < 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_split_reconstructs_and_has_types(seed):
    rng = np.random.default_rng(seed)
    mu = _small_mu(seed, 2)
    J = j_matrix_from_mu(mu)
    comps = rng.normal(size=4) + 1j * rng.normal(size=4)
    p10, p01 = split_components(comps[None], mu[None])
    assert np.abs(p10[0] + p01[0] - comps).max() < 1e-12
    assert np.abs(J.T @ p10[0] - 1j * p10[0]).max() < 1e-10
    assert np.abs(J.T @ p01[0] + 1j * p01[0]).max() < 1e-10


def test_admissibility_rejects_degenerate():
    with pytest.raises(AdmissibilityError):
        check_admissible(np.array([[1.0]]))
    chart = Chart.uniform(2, (0, 1), 8)
    with pytest.raises(AdmissibilityError):
        MuField.constant(chart, 1.2)


def test_transform_identity_and_conjugation():
    mu = _small_mu(4, 2)
    assert np.allclose(transform_mu_matrix(mu, np.eye(2), np.zeros((2, 2))), mu)
    c = 0.3
    out = transform_mu_matrix(np.zeros((1, 1)), np.eye(1), c * np.eye(1))
    # the function z' is holomorphic for mu' iff z = (z' - c zbar')/(1 - c^2) is, giving mu' = -c
    assert np.allclose(out, -c)


def test_transform_mu_matches_holomorphic_function():
    # z' = z + c zbar maps standard-holomorphic z to a function holomorphic for mu'
    c = 0.25
    chart = Chart.uniform(2, (-1, 1), 32)
    mu0 = MuField.zero(chart)

    def inverse(xp):
        zp = xp[..., 0] + 1j * xp[..., 1]
        z = (zp - c * np.conj(zp)) / (1 - c * c)
        return np.stack([z.real, z.imag], -1)

    def derivs(x):
        return np.eye(1, dtype=complex), c * np.eye(1, dtype=complex)

    mup = transform_mu(mu0, chart, inverse, derivs)
    pts = chart.points()
    zp = inverse(pts)
    f = DifferentialForm.scalar(chart, zp[..., 0] + 1j * zp[..., 1])
    assert cr_residual(f, mup)[4:-4, 4:-4].max() < 1e-8


def test_dilation_direction():
    chart = Chart.uniform(2, (-2, 2), 16)
    mu = MuField.from_function(chart, lambda x: (0.1 * x[..., 0] + 0.05j * x[..., 1])[..., None, None])
    k = 4.0
    inv, der = dilation(k, 1)
    mup = transform_mu(mu, chart, inv, der)
    pts = np.array([[1.0, 0.5], [-0.4, 1.2]])
    assert np.allclose(mup.at(pts), mu.at(pts / np.sqrt(k)))


def test_disc_residual_constant_mu():
    c = 0.2
    src = Chart.uniform(2, (-0.5, 0.5), 24)
    tgt = Chart.uniform(2, (-1, 1), 24)
    mu = MuField.constant(tgt, c)

    def disc(p):
        zeta = p[..., 0] + 1j * p[..., 1]
        z = zeta - c * np.conj(zeta)
        return np.stack([z.real, z.imag], -1)

    good = SmoothMap.from_function(src, tgt, disc)
    assert disc_residual(good, mu).max() < 1e-10
    bad = SmoothMap.from_function(src, tgt, lambda p: p)
    assert disc_residual(bad, mu).min() > 0.1
