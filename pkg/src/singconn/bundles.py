"""Hermitian bundles given by local trivializations.

Conventions (row vectors, matching ``Ds = ds + s omega``):

* a section is a row vector ``u_i`` in chart ``i``;
* a transition ``(i, j)`` with coordinate map ``x -> x'`` and matrix ``g``
  means ``u_i(x) = u_j(x') g(x)``;
* the gauge law is then ``omega_i = g^-1 omega_j g - g^-1 dg``;
* curvature is ``Omega = d omega - omega ^ omega``, the transpose of the
  column-convention ``d w + w ^ w``, so that ``D^2 u = u Omega`` and
  ``Omega_i = g^-1 Omega_j g``.  For line bundles and diagonal connections
  the quadratic term vanishes.

Connections, metrics and sections are stored as pointwise evaluators so that
singular quadratures can sample them anywhere; grid versions are derived on
demand.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .almost_complex import MuField, split_form
from .exterior import (
    Chart,
    DifferentialForm,
    Form,
    complex_basis,
    exterior_derivative,
    one_form_components,
    one_form_from_components,
    pointwise_d,
    to_complex,
    wedge,
    wedge_power,
)

ConnectionFn = Callable[[np.ndarray], Form]
MatrixFn = Callable[[np.ndarray], np.ndarray]
SectionFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class Transition:
    """Overlap data ``u_source(x) = u_target(coord(x)) matrix(x)``."""

    source: int
    target: int
    coord: Callable[[np.ndarray], np.ndarray]
    matrix: MatrixFn
    overlap: Callable[[np.ndarray], np.ndarray]
    label: str = ""


@dataclass
class BundleData:
    rank: int
    charts: list[Chart]
    connection_fns: list[ConnectionFn]
    transitions: list[Transition] = field(default_factory=list)
    metric_fns: list[MatrixFn] | None = None
    curvature_fns: list[ConnectionFn] | None = None
    fundamental: Chart | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.connection_fns) != len(self.charts):
            raise ValueError("one connection per chart is required")

    @property
    def dim(self) -> int:
        return self.charts[0].dim

    # pointwise evaluators -------------------------------------------------

    def omega_at(self, i: int, x: np.ndarray) -> Form:
        return self.connection_fns[i](np.asarray(x, dtype=float))

    def metric_at(self, i: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.metric_fns is None:
            return np.broadcast_to(np.eye(self.rank, dtype=complex), x.shape[:-1] + (self.rank, self.rank))
        return self.metric_fns[i](x)

    def curvature_at(self, i: int, x: np.ndarray) -> Form:
        x = np.asarray(x, dtype=float)
        if self.curvature_fns is not None:
            return self.curvature_fns[i](x)
        w = self.omega_at(i, x)
        dw = pointwise_d(self.connection_fns[i])(x)
        if self.rank == 1:
            return dw
        return dw - wedge(w, w, matmul=True)

    # grid versions --------------------------------------------------------

    def connection(self, i: int) -> DifferentialForm:
        return DifferentialForm.from_form(self.charts[i], self.omega_at(i, self.charts[i].points()))

    def metric(self, i: int) -> np.ndarray:
        return self.metric_at(i, self.charts[i].points())

    def to_json(self) -> str:
        """Chart layout, sampled connections and metadata as JSON."""
        doc = {"schema": "singconn.bundle/1", "rank": self.rank, "meta": self.meta,
               "charts": [c.to_dict() for c in self.charts],
               "transitions": [{"source": t.source, "target": t.target, "label": t.label}
                               for t in self.transitions]}
        conns = []
        for i in range(len(self.charts)):
            w = self.connection(i)
            conns.append({str(list(k)): {"real": np.real(v).tolist(), "imag": np.imag(v).tolist()}
                          for k, v in w.coeffs.items()})
        doc["connections"] = conns
        return json.dumps(doc, sort_keys=True)


@dataclass
class SectionData:
    """Per-chart evaluators returning ``(u, du)``.

    ``u`` has shape ``(..., n)`` and ``du`` shape ``(..., m, n)`` with real
    partial derivatives along axis ``-2``.
    """

    bundle: BundleData
    fns: list[SectionFn]
    label: str = ""

    def eval(self, i: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.fns[i](np.asarray(x, dtype=float))

    def local(self, i: int) -> np.ndarray:
        return self.eval(i, self.bundle.charts[i].points())[0]

    def norm_at(self, i: int, x: np.ndarray) -> np.ndarray:
        u, _ = self.eval(i, x)
        h = self.bundle.metric_at(i, x)
        return np.sqrt(np.abs(np.einsum("...i,...ij,...j->...", u, h, np.conj(u))))


@dataclass
class CurvatureData:
    forms: list[DifferentialForm]


# --------------------------------------------------------------------------
# constructors
# --------------------------------------------------------------------------


def _zero_connection(dim: int, rank: int) -> ConnectionFn:
    def fn(x):
        z = np.zeros(np.shape(x)[:-1] + (rank, rank), dtype=complex)
        return Form(dim, 1, {(a,): z for a in range(dim)}, (rank, rank))
    return fn


def trivial_bundle(chart: Chart, rank: int = 1, connection_fn: ConnectionFn | None = None,
                   metric_fn: MatrixFn | None = None, curvature_fn: ConnectionFn | None = None) -> BundleData:
    """Single-chart bundle; flat unless a connection is supplied."""
    conn = connection_fn or _zero_connection(chart.dim, rank)
    curv = None
    if curvature_fn is not None:
        curv = [curvature_fn]
    elif connection_fn is None:
        def curv0(x):
            z = np.zeros(np.shape(x)[:-1] + (rank, rank), dtype=complex)
            return Form(chart.dim, 2, {k: z for k in _pairs(chart.dim)}, (rank, rank))
        curv = [curv0]
    return BundleData(rank, [chart], [conn], [], None if metric_fn is None else [metric_fn], curv)


def _pairs(m: int):
    return [(a, b) for a in range(m) for b in range(a + 1, m)]


def standard_model_connection(n: int) -> ConnectionFn:
    """omega = 1/4 sum (z_j dzbar_j - zbar_j dz_j) = (i/2) sum (y_j dx_j - x_j dy_j)."""
    m = 2 * n

    def fn(x):
        x = np.asarray(x, dtype=float)
        coeffs = {}
        for j in range(n):
            coeffs[(2 * j,)] = (0.5j * x[..., 2 * j + 1])[..., None, None]
            coeffs[(2 * j + 1,)] = (-0.5j * x[..., 2 * j])[..., None, None]
        return Form(m, 1, coeffs, (1, 1))
    return fn


def standard_model(chart: Chart) -> BundleData:
    n = chart.dim // 2
    conn = standard_model_connection(n)

    def curv(x):
        # d omega = -i Omega_0 with Omega_0 = sum dx_j ^ dy_j
        shape = np.shape(x)[:-1] + (1, 1)
        coeffs = {k: np.zeros(shape, dtype=complex) for k in _pairs(2 * n)}
        for j in range(n):
            coeffs[(2 * j, 2 * j + 1)] = np.full(shape, -1j)
        return Form(2 * n, 2, coeffs, (1, 1))

    return trivial_bundle(chart, 1, conn, curvature_fn=curv)


def kahler_form_standard(n: int, batch_shape=()) -> Form:
    """Omega_0 = (i/2) sum dz_j ^ dzbar_j."""
    dz, dzb = complex_basis(n, batch_shape)
    out = None
    for j in range(n):
        t = (0.5j) * wedge(dz[j], dzb[j])
        out = t if out is None else out + t
    return out


def gauge_transform(bundle: BundleData, a_fn: MatrixFn, da_fn: Callable[[np.ndarray], np.ndarray],
                    chart: int = 0) -> tuple[BundleData, Callable]:
    """New frame on one chart with ``u' = u a``.

    ``da_fn`` returns real partials of ``a`` with shape ``(..., m, n, n)``.
    Returns the re-framed bundle and a function mapping old section
    evaluators to new ones.
    """
    m = bundle.dim
    old_conn = bundle.connection_fns[chart]
    old_metric = bundle.metric_fns[chart] if bundle.metric_fns else None

    def conn(x):
        a = a_fn(x)
        ainv = np.linalg.inv(a)
        da = da_fn(x)
        w = old_conn(x)
        coeffs = {}
        for (c,), wc in w.coeffs.items():
            coeffs[(c,)] = ainv @ wc @ a - ainv @ da[..., c, :, :]
        return Form(m, 1, coeffs, w.vshape)

    def metric(x):
        a = a_fn(x)
        ainv = np.linalg.inv(a)
        h = old_metric(x) if old_metric else np.eye(bundle.rank)
        return ainv @ h @ np.conj(np.swapaxes(ainv, -1, -2))

    conns = list(bundle.connection_fns)
    conns[chart] = conn
    metrics = list(bundle.metric_fns) if bundle.metric_fns else [lambda x: np.broadcast_to(
        np.eye(bundle.rank, dtype=complex), np.shape(x)[:-1] + (bundle.rank, bundle.rank))] * len(bundle.charts)
    metrics[chart] = metric
    new = BundleData(bundle.rank, bundle.charts, conns, [], metrics, None, bundle.fundamental, dict(bundle.meta))

    def map_section(fn: SectionFn) -> SectionFn:
        def g(x):
            u, du = fn(x)
            a = a_fn(x)
            da = da_fn(x)
            u2 = np.einsum("...i,...ij->...j", u, a)
            du2 = np.einsum("...ci,...ij->...cj", du, a) + np.einsum("...i,...cij->...cj", u, da)
            return u2, du2
        return g

    return new, map_section


def orthonormal_reframe(bundle: BundleData, chart: int = 0, h: float = 1e-4) -> BundleData:
    """Gauge to a unitary frame with ``g = cholesky(h)``, ``u' = u g``.

    The derivative of ``g`` is taken by 4th-order central differences.
    """
    mfn = bundle.metric_fns[chart]

    def a_fn(x):
        return np.linalg.cholesky(mfn(x))

    def da_fn(x):
        x = np.asarray(x, dtype=float)
        out = []
        for c in range(bundle.dim):
            e = np.zeros(bundle.dim)
            e[c] = h
            out.append((8 * (a_fn(x + e) - a_fn(x - e)) - (a_fn(x + 2 * e) - a_fn(x - 2 * e))) / (12 * h))
        return np.stack(out, axis=-3)

    new, _ = gauge_transform(bundle, a_fn, da_fn, chart)
    return new


def tensor_power(L: BundleData, k: int) -> BundleData:
    if L.rank != 1:
        raise ValueError("tensor_power is defined for line bundles")
    if k < 1:
        raise ValueError("k must be a positive integer")
    if k == 1:
        return L
    conns = [(lambda f: (lambda x: k * f(x)))(f) for f in L.connection_fns]
    curvs = None
    if L.curvature_fns is not None:
        curvs = [(lambda f: (lambda x: k * f(x)))(f) for f in L.curvature_fns]
    metrics = None
    if L.metric_fns is not None:
        metrics = [(lambda f: (lambda x: f(x) ** k))(f) for f in L.metric_fns]
    trans = [Transition(t.source, t.target, t.coord, (lambda f: (lambda x: f(x) ** k))(t.matrix), t.overlap,
                        t.label) for t in L.transitions]
    meta = dict(L.meta)
    meta["k"] = meta.get("k", 1) * k
    return BundleData(1, L.charts, conns, trans, metrics, curvs, L.fundamental, meta)


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------


def covariant_at(s: SectionData, i: int, x: np.ndarray) -> Form:
    """Du = du + u omega as a 1-form with values in (1, n) row matrices."""
    u, du = s.eval(i, x)
    w = s.bundle.omega_at(i, x)
    m = s.bundle.dim
    coeffs = {}
    for c in range(m):
        coeffs[(c,)] = (du[..., c, :] + np.einsum("...i,...ij->...j", u, w.coeffs[(c,)]))[..., None, :]
    return Form(m, 1, coeffs, (1, s.bundle.rank))


def covariant_derivative(s: SectionData, D: BundleData | None = None) -> list[DifferentialForm]:
    D = D or s.bundle
    if D is not s.bundle:
        raise ValueError("section does not live on this bundle")
    return [DifferentialForm.from_form(c, covariant_at(s, i, c.points())) for i, c in enumerate(D.charts)]


def curvature(D: BundleData) -> CurvatureData:
    out = []
    for i, c in enumerate(D.charts):
        w = D.connection(i)
        dw = exterior_derivative(w)
        out.append(dw if D.rank == 1 else dw - wedge(w, w, matmul=True))
    return CurvatureData(out)


def _chern_from_curvature(Om: Form, r: int) -> Form:
    """Degree-2r part of det(I + (i/2pi) Omega) by Newton's identities."""
    n = Om.vshape[0]
    A = (1j / (2 * math.pi)) * Om
    traces = []
    power = None
    for j in range(1, r + 1):
        power = A if power is None else wedge(power, A, matmul=True)
        traces.append(power.map_coeffs(lambda v: np.trace(v, axis1=-2, axis2=-1), vshape=()))
    e = [None] * (r + 1)
    batch = Om.batch_shape
    e[0] = Form(Om.dim, 0, {(): np.ones(batch, dtype=complex)})
    for q in range(1, r + 1):
        acc = None
        for j in range(1, q + 1):
            term = wedge(e[q - j], traces[j - 1])
            term = term if j % 2 == 1 else (-1.0) * term
            acc = term if acc is None else acc + term
        e[q] = (1.0 / q) * acc
    return e[r]


def chern_form_at(D: BundleData, r: int, i: int, x: np.ndarray) -> Form:
    if not 0 <= r <= D.rank:
        raise ValueError("Chern degree exceeds the rank")
    if 2 * r > D.dim:
        raise ValueError("c_r has degree above the base dimension")
    return _chern_from_curvature(D.curvature_at(i, x), r)


def chern_form(D: BundleData, r: int, chart: int | None = None):
    """Grid Chern form c_r on one chart (or a list over all charts)."""
    if chart is None:
        return [chern_form(D, r, i) for i in range(len(D.charts))]
    Om = curvature(D).forms[chart]
    return DifferentialForm.from_form(D.charts[chart], _chern_from_curvature(Om, r))


def chern_integral(D: BundleData, r: int, weight: Callable[[np.ndarray], np.ndarray] | None = None,
                   domain: Chart | None = None) -> complex:
    """Integral of ``weight * c_r`` (top degree) over the fundamental domain."""
    from .exterior import compensated_sum

    dom = domain or D.fundamental
    if dom is None:
        dom = D.charts[0]
    pts = dom.points()
    c = chern_form_at(D, r, 0, pts)
    if c.degree != D.dim:
        raise ValueError("c_r is not of top degree")
    f = c.top()
    if weight is not None:
        f = f * weight(pts)
    return compensated_sum(f * dom.weights())


def split_covariant(s: SectionData, i: int, x: np.ndarray, mu: MuField | None) -> tuple[Form, Form]:
    """((Du)^{1,0}, (Du)^{0,1}) at points of chart ``i``."""
    Du = covariant_at(s, i, x)
    n = s.bundle.dim // 2
    if mu is None:
        muv = np.zeros(np.shape(x)[:-1] + (n, n), dtype=complex)
    else:
        muv = mu.at(x)
    return split_form(Du, muv)


def coupled_dbar(s: SectionData, D: BundleData | None = None, mu: MuField | Sequence[MuField] | None = None):
    """Per chart (Du)^{0,1} = dbar_J u + u omega^{0,1} on the chart grid."""
    D = D or s.bundle
    out = []
    for i, c in enumerate(D.charts):
        m = mu[i] if isinstance(mu, (list, tuple)) else mu
        _, d01 = split_covariant(s, i, c.points(), m)
        out.append(DifferentialForm.from_form(c, d01))
    return out


def partial_coupled(s: SectionData, D: BundleData | None = None, mu=None):
    D = D or s.bundle
    out = []
    for i, c in enumerate(D.charts):
        m = mu[i] if isinstance(mu, (list, tuple)) else mu
        d10, _ = split_covariant(s, i, c.points(), m)
        out.append(DifferentialForm.from_form(c, d10))
    return out


@dataclass
class HermitianReport:
    norms: list[float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(v < self.tolerance for v in self.norms)


def hermitian_check(D: BundleData, tolerance: float = 1e-9) -> HermitianReport:
    """max |omega^* + omega| per chart (meaningful in a unitary frame)."""
    norms = []
    for i, c in enumerate(D.charts):
        w = D.omega_at(i, c.points())
        s = w + w.map_coeffs(lambda v: np.conj(np.swapaxes(v, -1, -2)))
        norms.append(s.max_norm())
    return HermitianReport(norms, tolerance)


# --------------------------------------------------------------------------
# consistency checks
# --------------------------------------------------------------------------


def _overlap_points(D: BundleData, t: Transition) -> np.ndarray:
    pts = D.charts[t.source].points().reshape(-1, D.dim)
    return pts[t.overlap(pts)]


def section_compatibility(s: SectionData) -> float:
    """max |u_i - u_j g| over all overlaps."""
    D = s.bundle
    worst = 0.0
    for t in D.transitions:
        x = _overlap_points(D, t)
        if len(x) == 0:
            continue
        ui, _ = s.eval(t.source, x)
        uj, _ = s.eval(t.target, t.coord(x))
        g = t.matrix(x)
        worst = max(worst, float(np.max(np.abs(ui - np.einsum("...i,...ij->...j", uj, g)))))
    return worst


def covariance_defect(s: SectionData) -> float:
    """max |(Du)_i - (Du)_j g| over overlaps: Du transforms like a section."""
    D = s.bundle
    worst = 0.0
    for t in D.transitions:
        x = _overlap_points(D, t)
        if len(x) == 0:
            continue
        Di = covariant_at(s, t.source, x)
        Dj = covariant_at(s, t.target, t.coord(x))
        g = t.matrix(x)
        for c in range(D.dim):
            diff = Di.coeffs[(c,)] - Dj.coeffs[(c,)] @ g
            worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def gauge_law_defect(D: BundleData, h: float = 1e-4) -> float:
    """max |omega_i - (g^-1 omega_j g - g^-1 dg)| over overlaps (dg by differences)."""
    worst = 0.0
    for t in D.transitions:
        x = _overlap_points(D, t)
        if len(x) == 0:
            continue
        wi = D.omega_at(t.source, x)
        wj = D.omega_at(t.target, t.coord(x))
        g = t.matrix(x)
        ginv = np.linalg.inv(g)
        for c in range(D.dim):
            e = np.zeros(D.dim)
            e[c] = h
            dg = (8 * (t.matrix(x + e) - t.matrix(x - e)) - (t.matrix(x + 2 * e) - t.matrix(x - 2 * e))) / (12 * h)
            pred = ginv @ wj.coeffs[(c,)] @ g - ginv @ dg
            worst = max(worst, float(np.max(np.abs(wi.coeffs[(c,)] - pred))))
    return worst


def cocycle_defect(D: BundleData) -> float:
    """max |g_jk(x') g_ij(x) - g_ik(x)| where the composite coordinate maps agree."""
    worst = 0.0
    for t1 in D.transitions:
        x = _overlap_points(D, t1)
        if len(x) == 0:
            continue
        y = t1.coord(x)
        for t2 in D.transitions:
            if t2.source != t1.target:
                continue
            ok = t2.overlap(y)
            if not np.any(ok):
                continue
            xs, ys = x[ok], y[ok]
            zs = t2.coord(ys)
            comp = t2.matrix(ys) @ t1.matrix(xs)
            for t3 in D.transitions:
                if t3.source != t1.source or t3.target != t2.target:
                    continue
                ok3 = t3.overlap(xs)
                if not np.any(ok3):
                    continue
                same = np.all(np.abs(t3.coord(xs[ok3]) - zs[ok3]) < 1e-9, axis=-1)
                if not np.any(same):
                    continue
                direct = t3.matrix(xs[ok3][same])
                worst = max(worst, float(np.max(np.abs(comp[ok3][same] - direct))))
    return worst


def metric_compatibility_defect(D: BundleData) -> float:
    """max |h_i - g^-1 h_j g^-*| (the metric seen through the frame change)."""
    worst = 0.0
    for t in D.transitions:
        x = _overlap_points(D, t)
        if len(x) == 0:
            continue
        hi = D.metric_at(t.source, x)
        hj = D.metric_at(t.target, t.coord(x))
        g = t.matrix(x)
        # u_i h_i u_i^* = u_j h_j u_j^* with u_i = u_j g  =>  h_j = g h_i g^*
        pred = g @ hi @ np.conj(np.swapaxes(g, -1, -2))
        worst = max(worst, float(np.max(np.abs(pred - hj))))
    return worst


def curvature_similarity_defect(D: BundleData) -> float:
    worst = 0.0
    for t in D.transitions:
        x = _overlap_points(D, t)
        if len(x) == 0:
            continue
        Oi = D.curvature_at(t.source, x)
        Oj = D.curvature_at(t.target, t.coord(x))
        g = t.matrix(x)
        ginv = np.linalg.inv(g)
        for k in Oi.coeffs:
            worst = max(worst, float(np.max(np.abs(Oi.coeffs[k] - ginv @ Oj.coeffs[k] @ g))))
    return worst
