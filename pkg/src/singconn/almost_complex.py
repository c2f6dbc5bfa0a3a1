"""Almost complex structures encoded by the complex matrix field mu.

A structure J on a chart of C^n is represented by the n x n matrix mu for
which the forms ``alpha = dz + mu dzbar`` span the (1,0) forms.  A function
f is J-holomorphic iff ``f_zbar = f_z mu`` (row vectors), and a disc
``zeta -> z(zeta)`` is J-holomorphic iff ``z_zetabar + mu(z) conj(z_zeta) = 0``.

Real coordinates are ordered ``(x1, y1, ..., xn, yn)`` throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exterior import (
    Chart,
    DifferentialForm,
    Form,
    SmoothMap,
    complex_partials,
    gradient,
    interpolate,
    one_form_components,
    one_form_from_components,
    real_partials,
    to_complex,
)

ADMISSIBILITY_MARGIN = 1e-6


class AdmissibilityError(ValueError):
    """Raised when det(I - mu mubar) is (numerically) zero."""


def j_standard(n: int) -> np.ndarray:
    J = np.zeros((2 * n, 2 * n))
    for j in range(n):
        J[2 * j + 1, 2 * j] = 1.0
        J[2 * j, 2 * j + 1] = -1.0
    return J


def _antilinear_real(mu: np.ndarray) -> np.ndarray:
    """Real 2n x 2n matrix of v -> mu conj(v)."""
    n = mu.shape[-1]
    A, B = mu.real, mu.imag
    R = np.zeros(mu.shape[:-2] + (2 * n, 2 * n))
    # mu conj(v) with v = x + iy: real = A x + B y, imag = B x - A y
    R[..., 0::2, 0::2] = A
    R[..., 0::2, 1::2] = B
    R[..., 1::2, 0::2] = B
    R[..., 1::2, 1::2] = -A
    return R


def mu_matrix_from_j(J: np.ndarray) -> np.ndarray:
    """Pointwise mu from real J (shape ``(..., 2n, 2n)``)."""
    J = np.asarray(J, dtype=float)
    n = J.shape[-1] // 2
    Jst = j_standard(n)
    S = Jst + J
    if np.any(np.abs(np.linalg.det(S)) < 1e-12):
        raise AdmissibilityError("J_st + J is singular at some sample")
    Q = -np.linalg.solve(S, Jst - J)
    # columns at e_{x_j}: Q e_x = mu e_j
    cols = Q[..., :, 0::2]
    return cols[..., 0::2, :] + 1j * cols[..., 1::2, :]


def j_matrix_from_mu(mu: np.ndarray) -> np.ndarray:
    mu = np.asarray(mu, dtype=complex)
    n = mu.shape[-1]
    check_admissible(mu)
    Q = _antilinear_real(mu)
    eye = np.eye(2 * n)
    return j_standard(n) @ (eye + Q) @ np.linalg.inv(eye - Q)


def check_admissible(mu: np.ndarray, margin: float = ADMISSIBILITY_MARGIN) -> None:
    """Require the spectral radius of mu mubar to stay below 1 - margin."""
    mu = np.asarray(mu, dtype=complex)
    rho = np.max(np.abs(np.linalg.eigvals(mu @ np.conj(mu)))) if mu.size else 0.0
    if rho >= 1.0 - margin:
        raise AdmissibilityError(f"spectral radius of mu mubar is {rho:.6g}")


@dataclass(frozen=True)
class MuField:
    """Complex n x n matrix field on a chart of real dimension 2n.

    ``fn`` optionally gives mu at arbitrary real points; otherwise off-grid
    values are interpolated from ``entries``.
    """

    chart: Chart
    entries: np.ndarray
    fn: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=complex)
        object.__setattr__(self, "entries", e)
        if self.chart.dim % 2:
            raise ValueError("a complex structure needs an even-dimensional chart")
        n = self.chart.dim // 2
        if e.shape != self.chart.shape + (n, n):
            raise ValueError("mu entries must have shape chart.shape + (n, n)")
        check_admissible(e)

    @property
    def n(self) -> int:
        return self.chart.dim // 2

    @classmethod
    def from_function(cls, chart: Chart, fn: Callable[[np.ndarray], np.ndarray]) -> "MuField":
        return cls(chart, fn(chart.points()), fn)

    @classmethod
    def zero(cls, chart: Chart) -> "MuField":
        n = chart.dim // 2
        return cls.from_function(chart, lambda x: np.zeros(np.shape(x)[:-1] + (n, n), dtype=complex))

    @classmethod
    def constant(cls, chart: Chart, c) -> "MuField":
        n = chart.dim // 2
        c = np.broadcast_to(np.asarray(c, dtype=complex), (n, n)).copy()
        return cls.from_function(chart, lambda x: np.broadcast_to(c, np.shape(x)[:-1] + (n, n)).copy())

    def at(self, points: np.ndarray) -> np.ndarray:
        if self.fn is not None:
            return np.asarray(self.fn(np.asarray(points, dtype=float)), dtype=complex)
        return interpolate(self.chart, self.entries, points)


@dataclass(frozen=True)
class JField:
    chart: Chart
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", e)
        m = self.chart.dim
        if e.shape != self.chart.shape + (m, m):
            raise ValueError("J entries must have shape chart.shape + (m, m)")
        sq = e @ e + np.eye(m)
        if np.max(np.abs(sq)) > 1e-10:
            raise ValueError("J does not square to -I")


def mu_from_j(J: JField) -> MuField:
    return MuField(J.chart, mu_matrix_from_j(J.entries))


def j_from_mu(mu: MuField) -> JField:
    return JField(mu.chart, j_matrix_from_mu(mu.entries))


# --------------------------------------------------------------------------
# coordinate changes
# --------------------------------------------------------------------------


def transform_mu_matrix(mu: np.ndarray, dz_dz: np.ndarray, dz_dzb: np.ndarray) -> np.ndarray:
    """mu in new coordinates z' given P = dz'/dz and R = dz'/dzbar at the same point.

    With ``alpha' = A alpha`` one gets ``mu' = (P mu - R)(Pbar - Rbar mu)^-1``.
    """
    P, R = np.asarray(dz_dz, dtype=complex), np.asarray(dz_dzb, dtype=complex)
    num = P @ mu - R
    den = np.conj(P) - np.conj(R) @ mu
    if np.any(np.abs(np.linalg.det(den)) < 1e-14):
        raise AdmissibilityError("non-invertible denominator in the mu transformation law")
    return np.swapaxes(np.linalg.solve(np.swapaxes(den, -1, -2), np.swapaxes(num, -1, -2)), -1, -2)


def transform_mu(
    mu: MuField,
    target: Chart,
    inverse: Callable[[np.ndarray], np.ndarray],
    derivatives: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
) -> MuField:
    """Push ``mu`` forward along a coordinate change z -> z'.

    ``inverse`` maps real target points z' back to real source points z, and
    ``derivatives(z)`` returns the complex Jacobians ``(dz'/dz, dz'/dzbar)``
    at source points.
    """

    def fn(xp: np.ndarray) -> np.ndarray:
        x = inverse(np.asarray(xp, dtype=float))
        P, R = derivatives(x)
        n = mu.n
        shape = np.shape(x)[:-1] + (n, n)
        return transform_mu_matrix(mu.at(x), np.broadcast_to(P, shape), np.broadcast_to(R, shape))

    return MuField.from_function(target, fn)


def dilation(k: float, n: int):
    """Coordinate change z' = k^{1/2} z as (inverse, derivatives)."""
    s = float(k) ** 0.5

    def inverse(xp):
        return np.asarray(xp) / s

    def derivatives(x):
        return s * np.eye(n, dtype=complex), np.zeros((n, n), dtype=complex)

    return inverse, derivatives


def mu_gradient_norm(mu: MuField) -> float:
    """sup over the grid of the Frobenius norm of the real gradient of mu."""
    g = gradient(mu.chart, mu.entries)
    return float(np.sqrt((np.abs(g) ** 2).sum(axis=tuple(range(mu.chart.dim, g.ndim)))).max())


# --------------------------------------------------------------------------
# type decomposition
# --------------------------------------------------------------------------


def _row_mat(a: np.ndarray, m: np.ndarray) -> np.ndarray:
    return np.einsum("...j,...jk->...k", a, m)


def split_coefficients(phi_z: np.ndarray, phi_zb: np.ndarray, mu: np.ndarray):
    """Coefficients (a, b) with ``phi = a . alpha + b . alphabar``."""
    mu = np.asarray(mu, dtype=complex)
    mub = np.conj(mu)
    n = mu.shape[-1]
    eye = np.eye(n)
    lhs_a = phi_z - _row_mat(phi_zb, mub)
    lhs_b = phi_zb - _row_mat(phi_z, mu)
    # row solve x M = y  <=>  M^T x^T = y^T
    a = np.linalg.solve(np.swapaxes(eye - mu @ mub, -1, -2), lhs_a[..., None])[..., 0]
    b = np.linalg.solve(np.swapaxes(eye - mub @ mu, -1, -2), lhs_b[..., None])[..., 0]
    return a, b


def components_from_basis(a: np.ndarray, b: np.ndarray, mu: np.ndarray):
    """Real 1-form components of ``a . alpha + b . alphabar``."""
    mu = np.asarray(mu, dtype=complex)
    cz = a + _row_mat(b, np.conj(mu))
    czb = _row_mat(a, mu) + b
    return real_partials(cz, czb)


def split_components(comps: np.ndarray, mu: np.ndarray):
    """Split real 1-form components (last axis) into (1,0) and (0,1) components."""
    pz, pzb = complex_partials(comps)
    a, b = split_coefficients(pz, pzb, mu)
    zero = np.zeros_like(a)
    return components_from_basis(a, zero, mu), components_from_basis(zero, b, mu)


def split_form(phi: Form, mu_values: np.ndarray) -> tuple[Form, Form]:
    """Pointwise type split of a scalar or matrix-valued 1-form."""
    comps = one_form_components(phi)
    if phi.vshape:
        # move the coordinate axis last, split, move back
        ax = len(phi.batch_shape)
        c = np.moveaxis(comps, ax, -1)
        nv = len(phi.vshape)
        mu_b = np.asarray(mu_values).reshape(np.shape(mu_values)[:-2] + (1,) * nv + np.shape(mu_values)[-2:])
        p10, p01 = split_components(c, mu_b)
        p10, p01 = np.moveaxis(p10, -1, ax), np.moveaxis(p01, -1, ax)
    else:
        p10, p01 = split_components(comps, mu_values)
    f10 = one_form_from_components(p10, phi.vshape)
    f01 = one_form_from_components(p01, phi.vshape)
    return f10, f01


def split_one_form(phi: DifferentialForm, mu: MuField) -> tuple[DifferentialForm, DifferentialForm]:
    if phi.degree != 1:
        raise ValueError("split_one_form needs a 1-form")
    if phi.chart != mu.chart:
        raise ValueError("form and mu live on different charts")
    f10, f01 = split_form(phi, mu.entries)
    return DifferentialForm.from_form(phi.chart, f10), DifferentialForm.from_form(phi.chart, f01)


def alpha_forms(mu_values: np.ndarray) -> tuple[list[Form], list[Form]]:
    """The basis forms alpha_j and alphabar_j at the given mu samples."""
    mu_values = np.asarray(mu_values, dtype=complex)
    n = mu_values.shape[-1]
    batch = mu_values.shape[:-2]
    al, alb = [], []
    for j in range(n):
        e = np.zeros(batch + (n,), dtype=complex)
        e[..., j] = 1.0
        zero = np.zeros_like(e)
        al.append(one_form_from_components(components_from_basis(e, zero, mu_values)))
        alb.append(one_form_from_components(components_from_basis(zero, e, mu_values)))
    return al, alb


def dbar_j(f: DifferentialForm, mu: MuField) -> DifferentialForm:
    """(df)^{0,1} by the basis solve."""
    if f.degree != 0:
        raise ValueError("dbar_j acts on functions")
    g = gradient(f.chart, f.coeffs[()])
    _, p01 = split_components(g, mu.entries)
    return DifferentialForm.from_form(f.chart, one_form_from_components(p01))


def partial_j(f: DifferentialForm, mu: MuField) -> DifferentialForm:
    g = gradient(f.chart, f.coeffs[()])
    p10, _ = split_components(g, mu.entries)
    return DifferentialForm.from_form(f.chart, one_form_from_components(p10))


def cr_residual(f: DifferentialForm, mu: MuField) -> np.ndarray:
    """Pointwise norm of ``f_zbar - f_z mu``."""
    fz, fzb = complex_partials(gradient(f.chart, f.coeffs[()]))
    return np.linalg.norm(fzb - _row_mat(fz, mu.entries), axis=-1)


def apply_one_form(comps: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...a,...a->...", comps, v)


def disc_residual(disc: SmoothMap, mu: MuField) -> np.ndarray:
    """|z_zetabar + mu(z) conj(z_zeta)| on the disc parameter grid."""
    if disc.source.dim != 2:
        raise ValueError("a disc is parametrized by a 2-dimensional chart")
    if disc.target_dim != mu.chart.dim:
        raise ValueError("disc does not map into the mu chart")
    jac = disc.jacobian
    zs = jac[..., 0::2, 0] + 1j * jac[..., 1::2, 0]
    zt = jac[..., 0::2, 1] + 1j * jac[..., 1::2, 1]
    z_zb = 0.5 * (zs + 1j * zt)
    z_z = 0.5 * (zs - 1j * zt)
    m = mu.at(disc.values)
    res = z_zb + np.einsum("...jk,...k->...j", m, np.conj(z_z))
    return np.linalg.norm(res, axis=-1)
