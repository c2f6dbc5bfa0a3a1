"""Zero sets, local degrees, divisors and pairings with singular currents.

Maps ``u`` from a chart of real dimension m into C^n (with 2n = m for the
isolated-zero case) are given as callables on points ``(..., m)`` returning
either complex values ``(..., n)`` or a pair ``(values, du)`` with real
partials ``du`` of shape ``(..., m, n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .exterior import (
    Chart,
    DifferentialForm,
    Form,
    increasing_indices,
    interpolate,
    pullback_by_jacobian,
    wedge,
)
from .quadrature import Domain, ExcisionParams, PairingResult, pair_singular, shell_integrals, sphere_volume

DEGREE_THRESHOLD = 0.05


class NonIsolatedZeroError(RuntimeError):
    """The zero set contains a cluster wider than the merge radius."""


class DegreeError(RuntimeError):
    """Sphere quadrature did not produce a near-integer degree."""


# --------------------------------------------------------------------------
# map evaluation
# --------------------------------------------------------------------------


def eval_map(u: Callable, x: np.ndarray, h: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """(values, du) for a map given with or without derivatives."""
    x = np.asarray(x, dtype=float)
    out = u(x)
    if isinstance(out, tuple):
        v, dv = out
        return np.asarray(v, dtype=complex), np.asarray(dv, dtype=complex)
    v = np.asarray(out, dtype=complex)
    if v.ndim == x.ndim - 1:
        v = v[..., None]
    m = x.shape[-1]
    cols = []
    for c in range(m):
        e = np.zeros(m)
        e[c] = h
        f = lambda y: np.asarray(u(y), dtype=complex).reshape(v.shape)
        cols.append((8 * (f(x + e) - f(x - e)) - (f(x + 2 * e) - f(x - 2 * e))) / (12 * h))
    return v, np.stack(cols, axis=-2)


def real_values(v: np.ndarray) -> np.ndarray:
    out = np.empty(v.shape[:-1] + (2 * v.shape[-1],))
    out[..., 0::2] = v.real
    out[..., 1::2] = v.imag
    return out


def real_jacobian(dv: np.ndarray) -> np.ndarray:
    """(..., m, n) complex partials -> (..., 2n, m) real jacobian."""
    n = dv.shape[-1]
    J = np.empty(dv.shape[:-2] + (2 * n, dv.shape[-2]))
    J[..., 0::2, :] = np.swapaxes(dv.real, -1, -2)
    J[..., 1::2, :] = np.swapaxes(dv.imag, -1, -2)
    return J


def complex_map(fn: Callable[[np.ndarray], np.ndarray], dfn: Callable | None = None, n: int = 1) -> Callable:
    """Wrap a function of complex coordinates z (..., n) as a map of real points.

    ``dfn(z)`` returns ``(du/dz, du/dzbar)`` with shapes (..., n_out, n).
    """
    def u(x):
        x = np.asarray(x, dtype=float)
        z = x[..., 0::2] + 1j * x[..., 1::2]
        v = np.asarray(fn(z), dtype=complex)
        if dfn is None:
            return v
        P, R = dfn(z)
        # d/dx_j = d/dz_j + d/dzbar_j, d/dy_j = i (d/dz_j - d/dzbar_j)
        m = x.shape[-1]
        du = np.empty(x.shape[:-1] + (m, v.shape[-1]), dtype=complex)
        du[..., 0::2, :] = np.swapaxes(P + R, -1, -2)
        du[..., 1::2, :] = np.swapaxes(1j * (P - R), -1, -2)
        return v, du
    return u


def section_map(section, chart: int = 0) -> Callable:
    """A section's local representative as a map."""
    return lambda x: section.eval(chart, x)


# --------------------------------------------------------------------------
# solid angle potential
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SolidAnglePotential:
    """theta = sum_j (-1)^(j-1) y_j dy_1 ^ ... (omit j) ... ^ dy_n / |y|^n on R^n."""

    n: int

    @property
    def sigma_n(self) -> float:
        return sphere_volume(self.n)

    def at(self, y: np.ndarray) -> Form:
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1)
        coeffs = {}
        full = tuple(range(self.n))
        for j in range(self.n):
            idx = full[:j] + full[j + 1:]
            coeffs[idx] = ((-1.0) ** j) * y[..., j] / r ** self.n + 0j
        return Form(self.n, self.n - 1, coeffs)

    def pullback(self, u: Callable, x: np.ndarray) -> Form:
        v, dv = eval_map(u, x)
        return pullback_by_jacobian(self.at(real_values(v)), real_jacobian(dv))


# --------------------------------------------------------------------------
# zero finding
# --------------------------------------------------------------------------


@dataclass
class ZeroSearch:
    points: np.ndarray
    residuals: list[float]
    failures: list[tuple[np.ndarray, str]] = field(default_factory=list)
    merge_radius: float = 0.0


def _cell_winding(v: np.ndarray, periodic: Sequence[bool]) -> np.ndarray:
    """Winding of a scalar complex field around each grid cell (2D)."""
    ph = np.angle(v)

    def dphase(a, b):
        d = b - a
        return (d + np.pi) % (2 * np.pi) - np.pi

    def roll(a, s, ax):
        return np.roll(a, -s, axis=ax)

    p00 = ph
    p10 = roll(ph, 1, 0)
    p11 = roll(roll(ph, 1, 0), 1, 1)
    p01 = roll(ph, 1, 1)
    w = dphase(p00, p10) + dphase(p10, p11) + dphase(p11, p01) + dphase(p01, p00)
    wind = np.rint(w / (2 * np.pi)).astype(int)
    if not periodic[0]:
        wind[-1, :] = 0
    if not periodic[1]:
        wind[:, -1] = 0
    return wind


def _newton(u: Callable, x0: np.ndarray, tol: float, chart: Chart, max_iter: int = 100):
    x = np.array(x0, dtype=float)
    v, dv = eval_map(u, x)
    F = real_values(v)
    fn = np.linalg.norm(F)
    for _ in range(max_iter):
        if fn < tol:
            return x, fn, True
        J = real_jacobian(dv)
        step = -np.linalg.lstsq(J, F, rcond=1e-12)[0]
        cap = 3.0 * max(chart.spacing(i) for i in range(chart.dim))
        t = min(1.0, cap / max(float(np.linalg.norm(step)), 1e-300))
        while t > 1e-4:
            xn = chart.wrap(x + t * step)
            vn, dvn = eval_map(u, xn)
            Fn = real_values(vn)
            fnn = np.linalg.norm(Fn)
            if fnn < fn:
                break
            t *= 0.5
        else:
            return x, fn, False
        x, v, dv, F, fn = xn, vn, dvn, Fn, fnn
    return x, fn, fn < tol


def find_zeros(u: Callable, chart: Chart, tol: float = 1e-10, report: bool = False,
               max_seeds: int = 2000):
    """Locate isolated zeros of ``u`` in ``chart`` (grid scan then damped Newton)."""
    pts = chart.points()
    v, _ = _values_only(u, pts)
    mag = np.linalg.norm(v, axis=-1)
    scale = float(np.max(mag)) if mag.size else 1.0
    if scale == 0.0:
        raise NonIsolatedZeroError("the map vanishes identically on the chart")
    atol = tol * scale
    mode = ["wrap" if p else "nearest" for p in chart.periodic]
    filt = ndimage.minimum_filter(mag, size=3, mode=mode)
    cand = (mag == filt) & (mag < 0.5 * scale)
    if not all(chart.periodic):
        # drop minima sitting on the boundary of non-periodic axes
        for a, p in enumerate(chart.periodic):
            if not p:
                sl = [slice(None)] * chart.dim
                sl[a] = 0
                cand[tuple(sl)] = False
                sl[a] = -1
                cand[tuple(sl)] = False
    seeds = [pts[idx] for idx in zip(*np.nonzero(cand))]
    if chart.dim == 2 and v.shape[-1] == 1:
        wind = _cell_winding(v[..., 0], chart.periodic)
        h = np.array([chart.spacing(i) for i in range(2)])
        for idx in zip(*np.nonzero(wind)):
            seeds.append(pts[idx] + 0.5 * h)
    if len(seeds) > max_seeds:
        order = np.argsort([np.linalg.norm(_values_only(u, s[None])[0]) for s in seeds])
        seeds = [seeds[i] for i in order[:max_seeds]]
    h = max(chart.spacing(i) for i in range(chart.dim))
    merge = 3.0 * h
    found, res, failures = [], [], []
    for s in seeds:
        x, fn, ok = _newton(u, s, atol, chart)
        if not ok:
            failures.append((np.asarray(s), f"no convergence (|u| = {fn:.3g})"))
            continue
        x = chart.wrap(x)
        if not chart.contains(x):
            continue
        found.append(x)
        res.append(fn)
    points, resid = _coalesce(np.array(found).reshape(-1, chart.dim), res, merge, chart)
    out = ZeroSearch(points, resid, failures, merge)
    return out if report else points


def _values_only(u, x):
    out = u(np.asarray(x, dtype=float))
    if isinstance(out, tuple):
        out = out[0]
    v = np.asarray(out, dtype=complex)
    if v.ndim == np.ndim(x) - 1:
        v = v[..., None]
    return v, None


def _coalesce(points: np.ndarray, res: list[float], merge: float, chart: Chart):
    if len(points) == 0:
        return points, []
    n = len(points)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    D = np.linalg.norm(chart.displacement(points[:, None, :], points[None, :, :]), axis=-1)
    for i in range(n):
        for j in range(i + 1, n):
            if D[i, j] < merge:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    out, out_res = [], []
    for members in groups.values():
        diam = float(D[np.ix_(members, members)].max())
        if diam > merge:
            raise NonIsolatedZeroError(
                f"zero cluster of diameter {diam:.3g} exceeds the merge radius {merge:.3g}")
        best = min(members, key=lambda i: res[i])
        out.append(points[best])
        out_res.append(res[best])
    order = np.lexsort(np.array(out).T[::-1])
    return np.array(out)[order], [out_res[i] for i in order]


# --------------------------------------------------------------------------
# degrees
# --------------------------------------------------------------------------


def sphere_parametrization(m: int, center: np.ndarray, r: float, n_ang: int):
    """Points, tangent vectors (..., m-1, m) and parameter weights on S_r(center).

    Weights are for the parameter measure (no area element) and include the
    orientation sign making the sphere the oriented boundary of the ball.
    """
    c = np.asarray(center, dtype=float)
    if m == 2:
        t = 2 * math.pi * np.arange(n_ang) / n_ang
        x = c + r * np.stack([np.cos(t), np.sin(t)], -1)
        tang = (r * np.stack([-np.sin(t), np.cos(t)], -1))[:, None, :]
        w = np.full(n_ang, 2 * math.pi / n_ang)
        return x, tang, w
    if m == 4:
        n_eta = max(8, n_ang // 2)
        g, gw = np.polynomial.legendre.leggauss(n_eta)
        eta = 0.25 * math.pi * (g + 1)
        weta = 0.25 * math.pi * gw
        xi = 2 * math.pi * np.arange(n_ang) / n_ang
        E, X1, X2 = [a.reshape(-1) for a in np.meshgrid(eta, xi, xi, indexing="ij")]
        W = (weta[:, None, None] * np.ones((1, n_ang, n_ang))).reshape(-1) * (2 * math.pi / n_ang) ** 2
        ce, se = np.cos(E), np.sin(E)
        c1, s1, c2, s2 = np.cos(X1), np.sin(X1), np.cos(X2), np.sin(X2)
        dirs = np.stack([ce * c1, ce * s1, se * c2, se * s2], -1)
        te = np.stack([-se * c1, -se * s1, ce * c2, ce * s2], -1)
        t1 = np.stack([-ce * s1, ce * c1, 0 * E, 0 * E], -1)
        t2 = np.stack([0 * E, 0 * E, -se * s2, se * c2], -1)
        tang = r * np.stack([te, t1, t2], axis=-2)
        sign = np.sign(np.linalg.det(np.concatenate([dirs[:1, None, :], tang[:1] / r], axis=-2))[0])
        return c + r * dirs, tang, sign * W
    raise ValueError("degree quadrature is implemented for real dimension 2 and 4")


def degree_integral(u: Callable, p: np.ndarray, r: float, n_ang: int | None = None) -> float:
    """sigma_n^-1 times the integral of u*(theta) over S_r(p)."""
    m = len(p)
    n_ang = n_ang or (256 if m == 2 else 96)
    x, tang, w = sphere_parametrization(m, p, r, n_ang)
    v, dv = eval_map(u, x)
    y = real_values(v)
    if y.shape[-1] != m:
        raise ValueError("local degree needs a map between spaces of equal dimension")
    J = real_jacobian(dv)
    dy = np.einsum("...ac,...kc->...ka", J, tang)
    mat = np.concatenate([y[..., None, :], dy], axis=-2)
    ny = np.linalg.norm(y, axis=-1)
    if np.any(ny == 0):
        raise DegreeError("the map vanishes on the sphere")
    integrand = np.linalg.det(mat) / ny ** m
    return float(np.sum(integrand * w) / sphere_volume(m))


def local_degree(u: Callable, p: Sequence[float], r: float, n_ang: int | None = None) -> tuple[int, float]:
    val = degree_integral(u, np.asarray(p, dtype=float), r, n_ang)
    deg = int(round(val))
    resid = abs(val - deg)
    if resid >= DEGREE_THRESHOLD:
        raise DegreeError(f"degree integral {val:.4f} is not close to an integer")
    return deg, resid


@dataclass
class Divisor:
    points: np.ndarray
    multiplicities: list[int]
    residual: list[float] = field(default_factory=list)

    @property
    def total(self) -> int:
        return int(sum(self.multiplicities))

    def __len__(self) -> int:
        return len(self.multiplicities)

    def to_dict(self) -> dict:
        return {"points": np.asarray(self.points).tolist(), "multiplicities": list(self.multiplicities),
                "residual": [float(r) for r in self.residual], "total": self.total}


def divisor(u: Callable, chart: Chart, radius: float | None = None, n_ang: int | None = None) -> Divisor:
    search = find_zeros(u, chart, report=True)
    pts = search.points
    if len(pts) == 0:
        return Divisor(np.zeros((0, chart.dim)), [], [])
    if len(pts) > 1:
        D = np.linalg.norm(chart.displacement(pts[:, None, :], pts[None, :, :]), axis=-1)
        np.fill_diagonal(D, np.inf)
        sep = float(D.min())
    else:
        sep = math.inf
    side = min(b - a for a, b in chart.box)
    r = radius or min(0.3 * sep, 0.1 * side)
    mults, resid = [], []
    for p in pts:
        d, e = local_degree(u, p, r, n_ang)
        mults.append(d)
        resid.append(e)
    return Divisor(pts, mults, resid)


def pair_point_current(div: Divisor, phi) -> complex:
    """sum_j n_j phi(p_j) for a grid 0-form or a callable test function."""
    if len(div) == 0:
        return 0.0 + 0.0j
    pts = np.asarray(div.points, dtype=float)
    if isinstance(phi, DifferentialForm):
        if phi.degree != 0:
            raise ValueError("point currents pair with functions")
        if not np.all(phi.chart.contains(pts)):
            raise ValueError("divisor point outside the chart")
        vals = interpolate(phi.chart, phi.coeffs[()], pts)
    else:
        vals = np.asarray(phi(pts))
    return complex(np.sum(np.asarray(div.multiplicities) * vals))


# --------------------------------------------------------------------------
# singular pairings
# --------------------------------------------------------------------------


def pair_singular_form(T: Callable[[np.ndarray], Form], phi: Callable[[np.ndarray], Form], domain: Domain,
                       singular_points, params: ExcisionParams | None = None) -> PairingResult:
    """<T, phi> = integral of T ^ phi with excision around the singular points."""
    def f(x):
        return wedge(T(x), phi(x)).top()
    return pair_singular(f, domain, singular_points, params)


def pair_d_singular(T: Callable[[np.ndarray], Form], phi, domain: Domain, singular_points,
                    params: ExcisionParams | None = None) -> PairingResult:
    """<dT, phi> := (-1)^(deg T + 1) <T, d phi> for a test function phi."""
    q = None

    def f(x):
        nonlocal q
        t = T(x)
        q = t.degree
        return wedge(t, phi.d(x)).top()

    res = pair_singular(f, domain, singular_points, params)
    if q is None:
        q = T(np.zeros((1, domain.m)) + 0.5).degree
    return res.scaled((-1.0) ** (q + 1))


def residue_pairing(u: Callable, phi, domain: Domain, singular_points, params: ExcisionParams | None = None):
    """sigma_n^-1 <d u*(theta), phi>: reproduces the divisor paired with phi."""
    m = domain.m
    theta = SolidAnglePotential(m)
    res = pair_d_singular(lambda x: theta.pullback(u, x), phi, domain, singular_points, params)
    return res.scaled(1.0 / theta.sigma_n)


# --------------------------------------------------------------------------
# atomicity diagnostics
# --------------------------------------------------------------------------


def _dist_to_set(x: np.ndarray, Z: np.ndarray, chart: Chart | None) -> np.ndarray:
    d = np.full(x.shape[:-1], np.inf)
    for z in Z:
        dz = chart.displacement(x, z) if chart is not None else x - z
        d = np.minimum(d, np.linalg.norm(dz, axis=-1))
    return d


@dataclass
class LojasiewiczFit:
    c: float
    N: float
    coverage: float
    samples: int


def lojasiewicz_probe(u: Callable, Z: np.ndarray, K: Chart, samples: int = 4000, seed: int = 0,
                      quantile: float = 0.01) -> LojasiewiczFit:
    """Fit log|u| >= log c + N log dist(x, Z) on a sample cloud in the box K.

    Half the samples are uniform in K, half log-radially distributed around
    the zeros so that small distances are represented.
    """
    Z = np.asarray(Z, dtype=float).reshape(-1, K.dim)
    if len(Z) == 0:
        raise ValueError("empty zero set")
    if samples < 10:
        raise ValueError("empty sample set")
    rng = np.random.default_rng(seed)
    lo = np.array([a for a, _ in K.box])
    hi = np.array([b for _, b in K.box])
    half = samples // 2
    x1 = lo + (hi - lo) * rng.random((half, K.dim))
    dirs = rng.normal(size=(samples - half, K.dim))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    side = float(np.min(hi - lo))
    radii = side * 10 ** rng.uniform(-4, -0.7, size=samples - half)
    centres = Z[rng.integers(0, len(Z), size=samples - half)]
    x2 = centres + radii[:, None] * dirs
    x = np.concatenate([x1, x2])
    x = x[K.contains(x)]
    d = _dist_to_set(x, Z, None)
    v, _ = _values_only(u, x)
    mag = np.linalg.norm(v, axis=-1)
    ok = (d > 0) & (mag > 0)
    ld, lu = np.log(d[ok]), np.log(mag[ok])
    A = np.stack([np.ones_like(ld), ld], -1)
    coef, *_ = np.linalg.lstsq(A, lu, rcond=None)
    N = float(coef[1])
    logc = float(np.quantile(lu - N * ld, quantile))
    coverage = float(np.mean(lu >= logc + N * ld - 1e-12))
    return LojasiewiczFit(math.exp(logc), N, coverage, int(ok.sum()))


def minkowski_codim_estimate(Z: np.ndarray, chart: Chart, eps: Sequence[float], cells: int = 8) -> float:
    """Codimension from the slope of log vol(Z_eps) against log eps (box counting)."""
    eps = sorted(float(e) for e in eps)
    if len(eps) < 4:
        raise ValueError("the epsilon ladder needs at least 4 scales")
    Z = np.asarray(Z, dtype=float).reshape(-1, chart.dim)
    lo = np.array([a for a, _ in chart.box])
    hi = np.array([b for _, b in chart.box])
    periodic = all(chart.periodic)
    if periodic:
        tree = cKDTree(np.mod(Z - lo, hi - lo), boxsize=hi - lo)
    else:
        tree = cKDTree(Z - lo)
    vols = []
    for e in eps:
        h = e / cells
        zlo = np.maximum(lo if not periodic else -np.inf, Z.min(axis=0) - e - h)
        zhi = np.minimum(hi if not periodic else np.inf, Z.max(axis=0) + e + h)
        if periodic:
            zlo, zhi = np.maximum(zlo, lo), np.minimum(zhi, hi)
            # a set close to the seam needs the whole period along that axis
            wide = (Z.min(axis=0) - e < lo) | (Z.max(axis=0) + e > hi)
            zlo = np.where(wide, lo, zlo)
            zhi = np.where(wide, hi, zhi)
        axes = [np.arange(a + 0.5 * h, b, h) for a, b in zip(zlo, zhi)]
        G = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, chart.dim)
        q = G - lo
        if periodic:
            q = np.mod(q, hi - lo)
        dist, _ = tree.query(q)
        vols.append(np.count_nonzero(dist <= e) * h ** chart.dim)
    slope = np.polyfit(np.log(eps), np.log(vols), 1)[0]
    return float(slope)


@dataclass
class AtomicityReport:
    atomic: bool
    vacuous: bool
    shell_sums: dict = field(default_factory=dict)
    lojasiewicz: LojasiewiczFit | None = None
    minkowski_codim: float | None = None
    zeros: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "atomic": self.atomic, "vacuous": self.vacuous,
            "shell_sums": {k: [float(x) for x in v] for k, v in self.shell_sums.items()},
            "lojasiewicz": None if self.lojasiewicz is None else {
                "c": self.lojasiewicz.c, "N": self.lojasiewicz.N, "coverage": self.lojasiewicz.coverage},
            "minkowski_codim": self.minkowski_codim,
            "zeros": None if self.zeros is None else np.asarray(self.zeros).tolist(),
        }


def atomicity_probe(u: Callable, chart: Chart, levels: int = 10, ratio_bound: float = 0.75) -> AtomicityReport:
    """Shell integrals of |u*(dy_I / |y|^p)| around the zeros for p = |I| <= n - 1.

    The verdict is atomic when every family of shell contributions decays
    geometrically (ratio of successive shells below ``ratio_bound``), i.e.
    the partial sums stay bounded as the shells shrink.
    """
    pts = chart.points()
    v, _ = _values_only(u, pts)
    if np.max(np.abs(v)) == 0:
        raise NonIsolatedZeroError("the map vanishes identically")
    Z = find_zeros(u, chart)
    if len(Z) == 0:
        return AtomicityReport(True, True, {}, None, None, Z)
    m = chart.dim
    n = 2 * v.shape[-1]
    domain = Domain.torus(chart) if all(chart.periodic) else Domain.box(chart)
    sep = domain.min_separation(Z)
    side = min(b - a for a, b in chart.box)
    R = min(0.4 * sep, 0.2 * side)
    sums = {}
    verdict = True
    for p in range(1, n):
        for I in increasing_indices(n, p):
            def f(x, I=I, p=p):
                vals, dv = eval_map(u, x)
                y = real_values(vals)
                J = real_jacobian(dv)
                r = np.linalg.norm(y, axis=-1)
                coeffs = {K: np.zeros(y.shape[:-1], dtype=complex) for K in increasing_indices(n, p)}
                coeffs[I] = 1.0 / r ** p + 0j
                pulled = pullback_by_jacobian(Form(n, p, coeffs), J)
                return pulled.pointwise_norm()
            sh = np.abs(shell_integrals(f, domain, Z, R, levels))
            key = "dy" + "".join(str(i + 1) for i in I) + f"/|y|^{p}"
            sums[key] = np.cumsum(sh)
            tail = sh[-4:]
            if np.any(tail[1:] > ratio_bound * tail[:-1] + 1e-300):
                verdict = False
    loj = lojasiewicz_probe(u, Z, chart)
    eps = [R * 2.0 ** -i for i in range(1, 6)]
    mk = minkowski_codim_estimate(Z, chart, eps)
    return AtomicityReport(verdict, False, sums, loj, mk, Z)
