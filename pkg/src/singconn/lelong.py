"""The singular gauge potential of a line-bundle section and its identities.

For a section with local representative ``u`` the potential is
``tau = du / u + omega`` off the zero set.  Its pairings are computed with
the excision engine; all verifiers return plain dictionaries that serialize
to JSON.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .almost_complex import MuField, split_coefficients, split_form
from .bundles import BundleData, SectionData, chern_form_at, covariant_at, hermitian_check
from .divisors import Divisor, divisor, pair_d_singular, pair_point_current
from .exterior import (
    Chart,
    Form,
    complex_partials,
    one_form_components,
    one_form_from_components,
    pointwise_d,
    wedge,
)
from .quadrature import Domain, ExcisionParams, integrate_smooth, pair_singular, shell_rule, _evaluate
from .testforms import TestFunction, smoothstep5
from .theta import torus_chart


class VerificationError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# helpers shared with the rank-n code
# --------------------------------------------------------------------------


def zero_search_chart(D: BundleData, resolution: int | None = None) -> Chart:
    """Grid used to locate zeros: the periodic fundamental domain or the chart."""
    if D.fundamental is not None:
        k = D.meta.get("k", 1)
        n = D.dim // 2
        default = math.ceil(32 * math.sqrt(k)) if n == 1 else math.ceil(12 * math.sqrt(k))
        return torus_chart(D.meta["b"], n, resolution or default)
    return D.charts[0]


def pairing_domain(D: BundleData, resolution: int | None = None) -> Domain:
    if D.fundamental is not None:
        n = D.dim // 2
        default = 96 if n == 1 else 20
        return Domain.torus(torus_chart(D.meta["b"], n, resolution or default))
    return Domain.box(D.charts[0])


def section_divisor(s: SectionData, resolution: int | None = None) -> Divisor:
    chart = zero_search_chart(s.bundle, resolution)
    return divisor(lambda x: s.eval(0, x), chart)


def _mu_values(mu: MuField | None, x: np.ndarray, n: int) -> np.ndarray:
    if mu is None:
        return np.zeros(np.shape(x)[:-1] + (n, n), dtype=complex)
    return mu.at(x)


def muted(d: dict) -> dict:
    """Make a report JSON friendly (complex -> [re, im])."""
    out = {}
    for k, v in d.items():
        if isinstance(v, complex) or isinstance(v, np.complexfloating):
            out[k] = [float(np.real(v)), float(np.imag(v))]
        elif isinstance(v, (np.floating, np.integer)):
            out[k] = v.item()
        elif isinstance(v, dict):
            out[k] = muted(v)
        else:
            out[k] = v
    return out


# --------------------------------------------------------------------------
# the potential
# --------------------------------------------------------------------------


@dataclass
class SingularPotential:
    section: SectionData
    mu: MuField | None
    divisor: Divisor
    chart: int = 0

    def tau(self, x: np.ndarray, chart: int | None = None) -> Form:
        c = self.chart if chart is None else chart
        Du = covariant_at(self.section, c, x)
        u, _ = self.section.eval(c, x)
        return Du.map_coeffs(lambda v: v[..., 0, 0] / u[..., 0], vshape=())

    def split(self, x: np.ndarray) -> tuple[Form, Form]:
        return split_form(self.tau(x), _mu_values(self.mu, x, 1))

    def tau10(self, x: np.ndarray) -> Form:
        return self.split(x)[0]

    def tau01(self, x: np.ndarray) -> Form:
        return self.split(x)[1]

    def overlap_defect(self, keep_away: float = 0.05) -> float:
        D = self.section.bundle
        worst = 0.0
        Z = np.asarray(self.divisor.points)
        for t in D.transitions:
            pts = D.charts[t.source].points().reshape(-1, D.dim)
            x = pts[t.overlap(pts)]
            if len(x) == 0:
                continue
            if len(Z):
                per = np.array([1.0, D.meta.get("b", 1.0)] * (D.dim // 2))
                dz = x[:, None, :] - Z[None, :, :]
                dz -= per * np.round(dz / per)
                x = x[np.min(np.linalg.norm(dz, axis=-1), axis=1) > keep_away]
            a = self.tau(x, t.source)
            b = self.tau(t.coord(x), t.target)
            worst = max(worst, (a - b).max_norm())
        return worst


def singular_potential(s: SectionData, D: BundleData | None = None, mu: MuField | None = None,
                       div: Divisor | None = None, require_hermitian: bool = True) -> SingularPotential:
    D = D or s.bundle
    if D.rank != 1:
        raise ValueError("the gauge potential tau is defined for line bundles")
    if require_hermitian:
        rep = hermitian_check(D)
        if not rep.passed:
            raise VerificationError(f"connection is not hermitian (|omega* + omega| = {max(rep.norms):.3g})")
    div = div if div is not None else section_divisor(s)
    return SingularPotential(s, mu, div)


# --------------------------------------------------------------------------
# fundamental equation
# --------------------------------------------------------------------------


def _c1_pairing(D: BundleData, phi: TestFunction, domain: Domain) -> complex:
    def f(x):
        return chern_form_at(D, 1, 0, x).top() * phi(x)
    return integrate_smooth(f, domain)


def verify_lp1(s: SectionData, D: BundleData | None = None, phi: TestFunction | None = None,
               params: ExcisionParams | None = None, tolerance: float = 1e-3,
               resolution: int | None = None) -> dict:
    """(1/2 pi i) <d tau, phi> against Div(s)[phi] - <c_1, phi>."""
    D = D or s.bundle
    pot = singular_potential(s, D)
    domain = pairing_domain(D, resolution)
    lhs_res = pair_d_singular(pot.tau, phi, domain, pot.divisor.points, params).scaled(1.0 / (2j * math.pi))
    div_term = pair_point_current(pot.divisor, phi)
    c1 = _c1_pairing(D, phi, domain)
    rhs = div_term - c1
    resid = abs(lhs_res.extrapolated - rhs)
    return {
        "check": "lp1", "lhs": lhs_res.extrapolated, "rhs": rhs, "divisor_term": div_term, "c1_term": c1,
        "residual": resid, "tolerance": tolerance, "passed": bool(resid < tolerance),
        "ladder": lhs_res.to_dict(), "divisor": pot.divisor.to_dict(),
    }


def dlog_norm_10(s: SectionData, mu: MuField | None, x: np.ndarray, chart: int = 0) -> Form:
    """partial_J log |s|^2 from the split of d|s|^2 / |s|^2 (unitary frame)."""
    u, du = s.eval(chart, x)
    h = s.bundle.metric_at(chart, x)
    # d(u h u*) with constant h
    g = np.einsum("...ci,...ij,...j->...c", du, h, np.conj(u))
    dn = g + np.conj(g)
    nrm = np.real(np.einsum("...i,...ij,...j->...", u, h, np.conj(u)))
    form = one_form_from_components(dn / nrm[..., None])
    return split_form(form, _mu_values(mu, x, s.bundle.dim // 2))[0]


def verify_alhol_lp(s: SectionData, D: BundleData | None = None, mu: MuField | None = None,
                    phi: TestFunction | None = None, params: ExcisionParams | None = None,
                    tolerance: float = 5e-3, resolution: int | None = None) -> dict:
    """(1/2 pi i) d partial_J log|s|^2 = Div + (1/2 pi i)(d conj(tau01) - d tau01) - (i/2 pi) Omega."""
    D = D or s.bundle
    pot = singular_potential(s, D, mu)
    domain = pairing_domain(D, resolution)
    Z = pot.divisor.points
    c = 1.0 / (2j * math.pi)
    lhs = pair_d_singular(lambda x: dlog_norm_10(s, mu, x), phi, domain, Z, params).scaled(c)
    div_term = pair_point_current(pot.divisor, phi)
    t01 = pair_d_singular(pot.tau01, phi, domain, Z, params).scaled(c)
    t01bar = pair_d_singular(lambda x: pot.tau01(x).conj(), phi, domain, Z, params).scaled(c)

    def curv(x):
        return D.curvature_at(0, x).map_coeffs(lambda v: v[..., 0, 0], vshape=()).top() * phi(x)
    omega_term = (1j / (2 * math.pi)) * integrate_smooth(curv, domain)
    rhs = div_term + t01bar.extrapolated - t01.extrapolated - omega_term
    resid = abs(lhs.extrapolated - rhs)
    return {
        "check": "alhol_lp", "lhs": lhs.extrapolated, "rhs": rhs, "divisor_term": div_term,
        "dtau01bar_term": t01bar.extrapolated, "dtau01_term": t01.extrapolated, "curvature_term": omega_term,
        "residual": resid, "tolerance": tolerance, "passed": bool(resid < tolerance),
        "ladder": lhs.to_dict(), "divisor": pot.divisor.to_dict(),
    }


# --------------------------------------------------------------------------
# almost holomorphy
# --------------------------------------------------------------------------


def type_coefficients(s: SectionData, mu: MuField | None, x: np.ndarray, chart: int = 0):
    """alpha / alphabar coefficients (a, b) of Du (rank 1, shapes (..., n))."""
    Du = covariant_at(s, chart, x)
    comps = np.stack([Du.coeffs[(c,)][..., 0, 0] for c in range(Du.dim)], axis=-1)
    pz, pzb = complex_partials(comps)
    return split_coefficients(pz, pzb, _mu_values(mu, x, Du.dim // 2))


def almost_holomorphy_lambda(s: SectionData, D: BundleData | None = None, mu: MuField | None = None,
                             div: Divisor | None = None, floor: float = 1e-12) -> float:
    div = div if div is not None else section_divisor(s)
    if len(div) == 0:
        return 0.0
    a, b = type_coefficients(s, mu, np.asarray(div.points))
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    if np.any(na <= floor * max(1.0, float(np.max(nb)))):
        raise VerificationError("(Ds)^{1,0} vanishes at a zero: the section is not regular")
    return float(np.max(nb / na))


def t1_t2_decomposition(s: SectionData, D: BundleData | None = None, mu: MuField | None = None,
                        epsilon: float = 0.2, phi: TestFunction | None = None,
                        params: ExcisionParams | None = None, resolution: int | None = None,
                        n_ang: int = 96) -> dict:
    D = D or s.bundle
    pot = singular_potential(s, D, mu)
    domain = pairing_domain(D, resolution)
    Z = np.asarray(pot.divisor.points)
    lam = almost_holomorphy_lambda(s, D, mu, pot.divisor)
    m = domain.m

    def dist(x):
        d = np.full(np.shape(x)[:-1], np.inf)
        for p in Z:
            d = np.minimum(d, np.linalg.norm(domain.displacement(x, p), axis=-1))
        return d

    def chi(x):
        t = (dist(x) - 0.5 * epsilon) / (0.5 * epsilon)
        return smoothstep5(t)[0]

    # epsilon condition on Z^eps
    for p in Z:
        x, _ = shell_rule(m, p, 1e-4 * epsilon, epsilon, 2, 8, n_ang)
        a, b = type_coefficients(s, mu, domain.wrap(x))
        if np.any(np.linalg.norm(b, axis=-1) > 2 * max(lam, 1e-14) * np.linalg.norm(a, axis=-1) + 1e-14):
            raise VerificationError("epsilon too large: |dbar s| <= 2 lambda |d s| fails near Z")

    T1 = pair_d_singular(lambda x: pot.tau01(x).scale(chi(x)), phi, domain, Z, params)
    T2 = pair_d_singular(lambda x: pot.tau01(x).scale(1.0 - chi(x)), phi, domain, Z, params)
    full = pair_d_singular(pot.tau01, phi, domain, Z, params)

    def abs_d10(x):
        a, _ = type_coefficients(s, mu, x)
        u, _ = s.eval(0, x)
        return np.linalg.norm(a, axis=-1) / np.abs(u[..., 0])

    I1 = 0.0
    I3 = 0.0
    for p in Z:
        x, w = shell_rule(m, p, 0.0, epsilon, 4, 8, n_ang)
        xw = domain.wrap(x)
        sup = np.abs(phi(xw)) > 0
        I1 += float(np.sum(np.where(sup, abs_d10(xw), 0.0) * w))
        x, w = shell_rule(m, p, 0.5 * epsilon, epsilon, 2, 8, n_ang)
        xw = domain.wrap(x)
        sup = np.abs(phi(xw)) > 0
        I3 += float(np.sum(np.where(sup, abs_d10(xw), 0.0) * w))
    I3 *= lam / epsilon
    dt01 = pointwise_d(pot.tau01)
    grid = domain.chart.points().reshape(-1, m)
    wts = domain.chart.weights().reshape(-1)
    mask = (dist(grid) >= 0.5 * epsilon) & (np.abs(phi(grid)) > 0)
    I2 = float(np.sum(np.abs(dt01(grid[mask]).top()) * wts[mask])) if np.any(mask) else 0.0
    dphi_inf = float(np.max(np.linalg.norm(phi.grad(grid), axis=-1)))
    phi_inf = float(np.max(np.abs(phi(grid))))
    C1 = abs(T1.extrapolated) / (lam * dphi_inf * I1) if lam * dphi_inf * I1 > 0 else 0.0
    C2 = abs(T2.extrapolated) / (phi_inf * (I2 + I3)) if phi_inf * (I2 + I3) > 0 else 0.0
    return {
        "check": "t1_t2", "lambda": lam, "epsilon": epsilon, "T1": T1.extrapolated, "T2": T2.extrapolated,
        "dtau01": full.extrapolated, "sum_defect": abs(T1.extrapolated + T2.extrapolated - full.extrapolated),
        "I1": I1, "I2": I2, "I3": I3, "C1": C1, "C2": C2, "dphi_inf": dphi_inf, "phi_inf": phi_inf,
    }
