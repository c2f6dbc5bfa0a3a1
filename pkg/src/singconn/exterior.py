"""Charts, differential forms and exterior calculus on sampled grids.

Forms come in two flavours sharing one coefficient algebra:

* :class:`Form` -- coefficients are arrays over an arbitrary batch of points
  (pointwise evaluation, used by the singular quadratures);
* :class:`DifferentialForm` -- coefficients are grids over a :class:`Chart`
  and support the exterior derivative.

Multi-indices are 0-based increasing tuples, ``(0, 1)`` meaning dx_1 ^ dx_2.
Coefficient arrays have shape ``batch + vshape``; ``vshape`` is ``()`` for
scalar forms and ``(n, n)`` for matrix-valued forms (connections, curvature).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

Index = tuple[int, ...]


def increasing_indices(m: int, p: int) -> list[Index]:
    return list(itertools.combinations(range(m), p))


def merge_sign(a: Index, b: Index) -> int:
    """Sign of the permutation sorting ``a + b``; 0 if they share an entry."""
    if set(a) & set(b):
        return 0
    inversions = sum(1 for x in a for y in b if x > y)
    return -1 if inversions % 2 else 1


def _insert_sign(j: int, index: Index) -> int:
    # dx_j ^ dx_I = sign * dx_{sorted(I + j)}
    return -1 if sum(1 for i in index if i < j) % 2 else 1


# --------------------------------------------------------------------------
# charts
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Chart:
    """Axis-aligned coordinate box sampled on a tensor grid.

    Periodic axes are sampled on ``[a, b)`` with spacing ``(b - a) / N``;
    non-periodic axes include both endpoints.
    """

    box: tuple[tuple[float, float], ...]
    resolution: tuple[int, ...]
    periodic: tuple[bool, ...]

    def __post_init__(self):
        box = tuple((float(a), float(b)) for a, b in self.box)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "resolution", tuple(int(n) for n in self.resolution))
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        if not (len(self.box) == len(self.resolution) == len(self.periodic)):
            raise ValueError("box, resolution and periodic must have one entry per axis")
        if any(n < 4 for n in self.resolution):
            raise ValueError("resolution must be at least 4 per axis")
        if any(b <= a for a, b in self.box):
            raise ValueError("empty chart interval")

    @classmethod
    def uniform(cls, dim: int, interval=(0.0, 1.0), n: int = 32, periodic: bool = False) -> "Chart":
        return cls((tuple(interval),) * dim, (n,) * dim, (periodic,) * dim)

    @property
    def dim(self) -> int:
        return len(self.box)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def periods(self) -> np.ndarray:
        return np.array([b - a for a, b in self.box])

    def axis(self, i: int) -> np.ndarray:
        a, b = self.box[i]
        n = self.resolution[i]
        if self.periodic[i]:
            return a + (b - a) * np.arange(n) / n
        return np.linspace(a, b, n)

    def spacing(self, i: int) -> float:
        a, b = self.box[i]
        n = self.resolution[i]
        return (b - a) / n if self.periodic[i] else (b - a) / (n - 1)

    def grid(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.axis(i) for i in range(self.dim)], indexing="ij")

    def points(self) -> np.ndarray:
        """Grid points with shape ``resolution + (dim,)``."""
        return np.stack(self.grid(), axis=-1)

    def weights(self) -> np.ndarray:
        """Tensor quadrature weights (periodic rectangle / trapezoid)."""
        w = np.ones(self.shape)
        for i in range(self.dim):
            wi = np.full(self.resolution[i], self.spacing(i))
            if not self.periodic[i]:
                wi[0] *= 0.5
                wi[-1] *= 0.5
            shape = [1] * self.dim
            shape[i] = -1
            w = w * wi.reshape(shape)
        return w

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ok = np.ones(x.shape[:-1], dtype=bool)
        for i, (a, b) in enumerate(self.box):
            if not self.periodic[i]:
                ok &= (x[..., i] >= a - 1e-12) & (x[..., i] <= b + 1e-12)
        return ok

    def wrap(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=float, copy=True)
        for i, (a, b) in enumerate(self.box):
            if self.periodic[i]:
                x[..., i] = a + np.mod(x[..., i] - a, b - a)
        return x

    def displacement(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """``x - y`` using the minimum image on periodic axes."""
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        for i, (a, b) in enumerate(self.box):
            if self.periodic[i]:
                L = b - a
                d[..., i] -= L * np.round(d[..., i] / L)
        return d

    def to_dict(self) -> dict:
        return {"box": [list(b) for b in self.box], "resolution": list(self.resolution),
                "periodic": list(self.periodic)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Chart":
        return cls(tuple(tuple(b) for b in d["box"]), tuple(d["resolution"]), tuple(d["periodic"]))


# --------------------------------------------------------------------------
# form algebra
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Form:
    """A p-form on an m-dimensional space with coefficients over a batch."""

    dim: int
    degree: int
    coeffs: dict[Index, np.ndarray]
    vshape: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.degree <= self.dim:
            raise ValueError(f"degree {self.degree} outside [0, {self.dim}]")
        keys = set(increasing_indices(self.dim, self.degree))
        if set(self.coeffs) != keys:
            raise ValueError("coefficient keys must be all increasing multi-indices")

    @property
    def batch_shape(self) -> tuple[int, ...]:
        arr = next(iter(self.coeffs.values()))
        return arr.shape[: arr.ndim - len(self.vshape)]

    def _new(self, degree: int, coeffs: dict[Index, np.ndarray], vshape=None) -> "Form":
        return Form(self.dim, degree, coeffs, self.vshape if vshape is None else vshape)

    def __add__(self, other: "Form") -> "Form":
        _check_compatible(self, other)
        if self.degree != other.degree:
            raise ValueError("cannot add forms of different degree")
        return self._new(self.degree, {k: self.coeffs[k] + other.coeffs[k] for k in self.coeffs})

    def __sub__(self, other: "Form") -> "Form":
        return self + (-1.0) * other

    def __neg__(self) -> "Form":
        return (-1.0) * self

    def __rmul__(self, c) -> "Form":
        return self.scale(c)

    def scale(self, c) -> "Form":
        """Multiply by a scalar or a scalar function sampled over the batch."""
        c = np.asarray(c)
        if c.ndim and self.vshape:
            c = c.reshape(c.shape + (1,) * len(self.vshape))
        return self._new(self.degree, {k: c * v for k, v in self.coeffs.items()})

    def conj(self) -> "Form":
        return self._new(self.degree, {k: np.conj(v) for k, v in self.coeffs.items()})

    def map_coeffs(self, fn: Callable[[np.ndarray], np.ndarray], vshape=None) -> "Form":
        return self._new(self.degree, {k: fn(v) for k, v in self.coeffs.items()}, vshape)

    def max_norm(self) -> float:
        return max(float(np.max(np.abs(v))) if v.size else 0.0 for v in self.coeffs.values())

    def pointwise_norm(self) -> np.ndarray:
        """Euclidean norm of the coefficient vector at each batch point."""
        total = 0.0
        for v in self.coeffs.values():
            a = np.abs(v) ** 2
            if self.vshape:
                a = a.sum(axis=tuple(range(-len(self.vshape), 0)))
            total = total + a
        return np.sqrt(total)

    def top(self) -> np.ndarray:
        if self.degree != self.dim:
            raise ValueError("not a top-degree form")
        return self.coeffs[tuple(range(self.dim))]

    def entry(self, i: int, j: int) -> "Form":
        """Scalar form of matrix entry (i, j)."""
        return Form(self.dim, self.degree, {k: v[..., i, j] for k, v in self.coeffs.items()})


def _check_compatible(a: Form, b: Form) -> None:
    if a.dim != b.dim:
        raise ValueError("forms live on spaces of different dimension")
    ca, cb = getattr(a, "chart", None), getattr(b, "chart", None)
    if ca is not None and cb is not None and ca != cb:
        raise ValueError("forms live on different charts")


def zero_form(dim: int, values, vshape=()) -> Form:
    return Form(dim, 0, {(): np.asarray(values)}, tuple(vshape))


def basis_one_form(dim: int, axis: int, batch_shape=(), dtype=complex) -> Form:
    coeffs = {(i,): np.zeros(batch_shape, dtype=dtype) for i in range(dim)}
    coeffs[(axis,)] = np.ones(batch_shape, dtype=dtype)
    return Form(dim, 1, coeffs)


def one_form_from_components(comps: np.ndarray, vshape=()) -> Form:
    """1-form from an array whose axis ``-1 - len(vshape)`` indexes dx_a."""
    comps = np.asarray(comps)
    ax = comps.ndim - 1 - len(vshape)
    m = comps.shape[ax]
    return Form(m, 1, {(a,): np.take(comps, a, axis=ax) for a in range(m)}, tuple(vshape))


def one_form_components(a: Form) -> np.ndarray:
    """Stack the coefficients of a 1-form along a new axis before vshape."""
    if a.degree != 1:
        raise ValueError("expected a 1-form")
    ax = len(a.batch_shape)
    return np.stack([a.coeffs[(i,)] for i in range(a.dim)], axis=ax)


def two_form_from_tensor(F: np.ndarray, vshape=()) -> Form:
    """2-form sum_{a<b} F[a, b] dx_a ^ dx_b from an antisymmetric tensor."""
    F = np.asarray(F)
    nv = len(vshape)
    m = F.shape[F.ndim - 2 - nv]
    coeffs = {}
    for a, b in increasing_indices(m, 2):
        coeffs[(a, b)] = F[(Ellipsis, a, b) + (slice(None),) * nv]
    return Form(m, 2, coeffs, tuple(vshape))


def wedge(a: Form, b: Form, matmul: bool = False) -> Form:
    """Exterior product; with ``matmul`` the coefficients are multiplied as matrices."""
    _check_compatible(a, b)
    p, q = a.degree, b.degree
    if p + q > a.dim:
        raise ValueError(f"degree overflow: {p} + {q} > {a.dim}")
    if matmul:
        prod = np.matmul
        vshape = (a.vshape[0], b.vshape[-1]) if a.vshape and b.vshape else a.vshape or b.vshape
    else:
        def prod(x, y):
            if a.vshape and not b.vshape:
                y = y.reshape(y.shape + (1,) * len(a.vshape))
            elif b.vshape and not a.vshape:
                x = x.reshape(x.shape + (1,) * len(b.vshape))
            return x * y
        vshape = a.vshape or b.vshape
    out: dict[Index, np.ndarray] = {}
    for I, x in a.coeffs.items():
        for J, y in b.coeffs.items():
            s = merge_sign(I, J)
            if s == 0:
                continue
            K = tuple(sorted(I + J))
            term = prod(x, y)
            if s < 0:
                term = -term
            out[K] = out[K] + term if K in out else term
    zero = None
    for K in increasing_indices(a.dim, p + q):
        if K not in out:
            if zero is None:
                template = prod(next(iter(a.coeffs.values())), next(iter(b.coeffs.values())))
                zero = np.zeros_like(template)
            out[K] = zero
    result = Form(a.dim, p + q, out, tuple(vshape))
    chart = getattr(a, "chart", None) or getattr(b, "chart", None)
    if chart is not None and isinstance(a, DifferentialForm) and isinstance(b, DifferentialForm):
        return DifferentialForm.from_form(chart, result)
    return result


def wedge_power(a: Form, k: int, matmul: bool = False) -> Form:
    if k == 0:
        shape = a.batch_shape
        if matmul and a.vshape:
            ones = np.broadcast_to(np.eye(a.vshape[0]), shape + a.vshape).astype(complex)
            return Form(a.dim, 0, {(): ones}, a.vshape)
        return Form(a.dim, 0, {(): np.ones(shape, dtype=complex)})
    out = a
    for _ in range(k - 1):
        out = wedge(out, a, matmul=matmul)
    return out


def matrix_conj_transpose(a: Form) -> Form:
    return a.map_coeffs(lambda v: np.conj(np.swapaxes(v, -1, -2)))


# --------------------------------------------------------------------------
# grid forms
# --------------------------------------------------------------------------


class DifferentialForm(Form):
    """A form whose coefficients are sampled on ``chart``'s grid."""

    def __init__(self, chart: Chart, degree: int, coeffs: Mapping[Index, np.ndarray], vshape=()):
        coeffs = {tuple(k): np.asarray(v) for k, v in coeffs.items()}
        super().__init__(chart.dim, degree, coeffs, tuple(vshape))
        object.__setattr__(self, "chart", chart)
        for v in coeffs.values():
            if v.shape[: chart.dim] != chart.shape:
                raise ValueError("coefficient grid does not match chart resolution")

    @classmethod
    def from_form(cls, chart: Chart, form: Form) -> "DifferentialForm":
        return cls(chart, form.degree, form.coeffs, form.vshape)

    @classmethod
    def from_function(cls, chart: Chart, degree: int, fn: Callable[[np.ndarray], Form]) -> "DifferentialForm":
        return cls.from_form(chart, fn(chart.points()))

    @classmethod
    def zero(cls, chart: Chart, degree: int, vshape=()) -> "DifferentialForm":
        z = np.zeros(chart.shape + tuple(vshape), dtype=complex)
        return cls(chart, degree, {I: z for I in increasing_indices(chart.dim, degree)}, vshape)

    @classmethod
    def scalar(cls, chart: Chart, values) -> "DifferentialForm":
        values = np.broadcast_to(np.asarray(values, dtype=complex), chart.shape)
        return cls(chart, 0, {(): np.array(values)})

    def _new(self, degree, coeffs, vshape=None):
        return DifferentialForm(self.chart, degree, coeffs, self.vshape if vshape is None else vshape)

    def __repr__(self) -> str:
        return f"DifferentialForm(degree={self.degree}, dim={self.dim}, vshape={self.vshape})"


# --------------------------------------------------------------------------
# derivatives
# --------------------------------------------------------------------------

# 4th-order stencils; rows are (offsets, weights) scaled by 1/(12 h)
_CENTRAL = (np.array([-2, -1, 1, 2]), np.array([1.0, -8.0, 8.0, -1.0]))
_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0])
_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0])


def spectral_derivative(f: np.ndarray, axis: int, period: float) -> np.ndarray:
    n = f.shape[axis]
    k = np.fft.fftfreq(n, d=1.0 / n) * (2.0 * np.pi / period)
    if n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * f.ndim
    shape[axis] = n
    out = np.fft.ifft(np.fft.fft(f, axis=axis) * (1j * k).reshape(shape), axis=axis)
    return out if np.iscomplexobj(f) else out.real


def finite_difference(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    f = np.moveaxis(np.asarray(f), axis, 0)
    n = f.shape[0]
    if n < 5:
        raise ValueError("finite differences need at least 5 samples")
    out = np.empty_like(f, dtype=np.result_type(f, float))
    inner = sum(w * f[2 + o: n - 2 + o] for o, w in zip(*_CENTRAL))
    out[2:-2] = inner
    out[0] = np.tensordot(_EDGE0, f[:5], axes=1)
    out[1] = np.tensordot(_EDGE1, f[:5], axes=1)
    out[-1] = -np.tensordot(_EDGE0, f[::-1][:5], axes=1)
    out[-2] = -np.tensordot(_EDGE1, f[::-1][:5], axes=1)
    return np.moveaxis(out / (12.0 * h), 0, axis)


def partial(chart: Chart, f: np.ndarray, axis: int) -> np.ndarray:
    """Derivative of grid data along a chart axis (spectral if periodic)."""
    if chart.periodic[axis]:
        return spectral_derivative(f, axis, chart.periods[axis])
    return finite_difference(f, axis, chart.spacing(axis))


def gradient(chart: Chart, f: np.ndarray) -> np.ndarray:
    """Stack of partial derivatives, new axis right after the grid axes."""
    return np.stack([partial(chart, f, i) for i in range(chart.dim)], axis=chart.dim)


def exterior_derivative(a: DifferentialForm) -> DifferentialForm:
    if not isinstance(a, DifferentialForm):
        raise TypeError("exterior_derivative needs grid-sampled forms")
    m = a.dim
    if a.degree >= m:
        raise ValueError("exterior derivative of a top-degree form")
    out: dict[Index, np.ndarray] = {}
    for I, f in a.coeffs.items():
        for j in range(m):
            if j in I:
                continue
            K = tuple(sorted(I + (j,)))
            term = partial(a.chart, f, j)
            if _insert_sign(j, I) < 0:
                term = -term
            out[K] = out[K] + term if K in out else term
    for K in increasing_indices(m, a.degree + 1):
        out.setdefault(K, np.zeros_like(next(iter(a.coeffs.values())), dtype=complex))
    return DifferentialForm(a.chart, a.degree + 1, out, a.vshape)


d = exterior_derivative


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------


def compensated_sum(values: Iterable[float] | np.ndarray) -> complex:
    """Exactly rounded sum with a fixed C-order traversal (math.fsum)."""
    arr = np.asarray(values).ravel()
    if np.iscomplexobj(arr):
        return complex(math.fsum(arr.real.tolist()), math.fsum(arr.imag.tolist()))
    return complex(math.fsum(arr.tolist()), 0.0)


def integrate(a: DifferentialForm, shrink: int = 0) -> complex:
    """Integrate a top-degree form over its chart in the coordinate orientation.

    ``shrink`` drops that many grid layers at each non-periodic boundary,
    which keeps one-sided stencil noise out of integrals of derived data.
    """
    if not isinstance(a, DifferentialForm):
        raise TypeError("integrate needs a grid-sampled form")
    if a.degree != a.dim:
        raise ValueError("only top-degree forms can be integrated")
    f = a.top()
    chart = a.chart
    w = np.ones(chart.shape)
    for i in range(chart.dim):
        n = chart.resolution[i]
        wi = np.full(n, chart.spacing(i))
        if not chart.periodic[i]:
            lo, hi = shrink, n - 1 - shrink
            if hi <= lo:
                raise ValueError("shrink leaves no interior samples")
            wi[:lo] = 0.0
            wi[hi + 1:] = 0.0
            wi[lo] *= 0.5
            wi[hi] *= 0.5
        shape = [1] * chart.dim
        shape[i] = -1
        w = w * wi.reshape(shape)
    return compensated_sum(f * w)


# --------------------------------------------------------------------------
# evaluation at arbitrary points
# --------------------------------------------------------------------------


def interpolate(chart: Chart, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate grid data at off-grid points.

    All-periodic charts use exact trigonometric interpolation; otherwise a
    cubic spline on the tensor grid (periodic axes padded by wrapping).
    """
    points = np.asarray(points, dtype=float)
    batch = points.shape[:-1]
    pts = points.reshape(-1, chart.dim)
    values = np.asarray(values)
    vshape = values.shape[chart.dim:]
    if all(chart.periodic):
        c = np.fft.fftn(values, axes=tuple(range(chart.dim))) / np.prod(chart.shape)
        out = c
        # contract one axis at a time; first contraction introduces the point axis
        for i in range(chart.dim):
            n = chart.resolution[i]
            k = np.fft.fftfreq(n, d=1.0 / n)
            if n % 2 == 0:
                k = k.copy()
                k[n // 2] = 0.0  # Nyquist mode split symmetrically below
            a = chart.box[i][0]
            phase = np.exp(2j * np.pi * np.outer(pts[:, i] - a, k) / chart.periods[i])
            if n % 2 == 0:
                phase[:, n // 2] = np.cos(np.pi * n * (pts[:, i] - a) / chart.periods[i])
            if i == 0:
                out = np.tensordot(phase, out, axes=([1], [0]))
            else:
                out = np.einsum("pk,pk...->p...", phase, out)
        out = out if np.iscomplexobj(values) else out.real
        return out.reshape(batch + vshape)
    from scipy.interpolate import RegularGridInterpolator

    axes, data = [], values
    pad = 3
    for i in range(chart.dim):
        ax = chart.axis(i)
        if chart.periodic[i]:
            h = chart.spacing(i)
            ax = np.concatenate([ax[0] - h * np.arange(pad, 0, -1), ax, ax[-1] + h * np.arange(1, pad + 1)])
            data = np.concatenate([np.take(data, range(-pad, 0), axis=i), data,
                                   np.take(data, range(pad), axis=i)], axis=i)
        axes.append(ax)
    pts = chart.wrap(pts)
    flat = data.reshape(data.shape[: chart.dim] + (-1,))
    out = np.empty((pts.shape[0], flat.shape[-1]), dtype=np.result_type(values, float))
    for j in range(flat.shape[-1]):
        col = flat[..., j]
        if np.iscomplexobj(col):
            re = RegularGridInterpolator(axes, col.real, method="cubic")(pts)
            im = RegularGridInterpolator(axes, col.imag, method="cubic")(pts)
            out[:, j] = re + 1j * im
        else:
            out[:, j] = RegularGridInterpolator(axes, col, method="cubic")(pts)
    return out.reshape(batch + vshape)


def evaluate_form(a: DifferentialForm, points: np.ndarray) -> Form:
    return Form(a.dim, a.degree, {I: interpolate(a.chart, v, points) for I, v in a.coeffs.items()}, a.vshape)


# --------------------------------------------------------------------------
# maps and pullback
# --------------------------------------------------------------------------


@dataclass
class SmoothMap:
    """A map between charts sampled on the source grid.

    ``values`` has shape ``source.shape + (target.dim,)``.  The jacobian
    (shape ``source.shape + (target.dim, source.dim)``) is differentiated
    from the samples unless supplied.
    """

    source: Chart
    target: Chart | None
    values: np.ndarray
    jacobian: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[: self.source.dim] != self.source.shape:
            raise ValueError("map samples do not match the source resolution")
        if self.jacobian is None:
            cols = [np.stack([partial(self.source, self.values[..., r], c) for c in range(self.source.dim)],
                             axis=-1) for r in range(self.values.shape[-1])]
            self.jacobian = np.stack(cols, axis=-2)

    @classmethod
    def from_function(cls, source: Chart, target: Chart | None, fn, jac=None) -> "SmoothMap":
        pts = source.points()
        return cls(source, target, fn(pts), None if jac is None else jac(pts))

    @classmethod
    def identity(cls, chart: Chart) -> "SmoothMap":
        pts = chart.points()
        eye = np.broadcast_to(np.eye(chart.dim), chart.shape + (chart.dim, chart.dim)).copy()
        return cls(chart, chart, pts, eye)

    @property
    def target_dim(self) -> int:
        return self.values.shape[-1]


FormField = Callable[[np.ndarray], Form]


def pullback(f: SmoothMap, a: DifferentialForm | FormField, degree: int | None = None) -> DifferentialForm:
    """Pull ``a`` back along ``f``.

    ``a`` is either a grid form on ``f.target`` (interpolated at the image
    points) or a callable returning a :class:`Form` at given target points.
    """
    if isinstance(a, DifferentialForm):
        if f.target is not None and a.chart != f.target:
            raise ValueError("form does not live on the map's target chart")
        if f.target is not None and f.target == f.source and np.array_equal(f.values, f.source.points()):
            at = a
        else:
            at = evaluate_form(a, f.values)
    else:
        at = a(f.values)
    if at.dim != f.target_dim:
        raise ValueError("form dimension does not match the map's target")
    m = f.source.dim
    p = at.degree
    J = f.jacobian
    out = {}
    for K in increasing_indices(m, p):
        acc = 0.0
        for I, coef in at.coeffs.items():
            if p == 0:
                minor = 1.0
            else:
                minor = np.linalg.det(J[..., list(I), :][..., :, list(K)]) if p > 1 else J[..., I[0], K[0]]
            if at.vshape:
                minor = np.asarray(minor).reshape(np.shape(minor) + (1,) * len(at.vshape))
            acc = acc + coef * minor
        out[K] = np.broadcast_to(acc, f.source.shape + at.vshape).astype(complex)
    return DifferentialForm(f.source, p, out, at.vshape)


# --------------------------------------------------------------------------
# pointwise exterior derivative of evaluators
# --------------------------------------------------------------------------


def pointwise_d(fn: FormField, h: float = 1e-4) -> FormField:
    """Exterior derivative of a form evaluator by 4th-order central differences."""

    def dfn(x: np.ndarray) -> Form:
        x = np.asarray(x, dtype=float)
        base = fn(x)
        m, p = base.dim, base.degree
        grads = []
        for j in range(m):
            e = np.zeros(m)
            e[j] = h
            fp1, fm1 = fn(x + e), fn(x - e)
            fp2, fm2 = fn(x + 2 * e), fn(x - 2 * e)
            grads.append({I: (8 * (fp1.coeffs[I] - fm1.coeffs[I]) - (fp2.coeffs[I] - fm2.coeffs[I])) / (12 * h)
                          for I in base.coeffs})
        out: dict[Index, np.ndarray] = {}
        for I in base.coeffs:
            for j in range(m):
                if j in I:
                    continue
                K = tuple(sorted(I + (j,)))
                term = grads[j][I] * _insert_sign(j, I)
                out[K] = out[K] + term if K in out else term
        for K in increasing_indices(m, p + 1):
            out.setdefault(K, np.zeros_like(next(iter(base.coeffs.values())), dtype=complex))
        return Form(m, p + 1, out, base.vshape)

    return dfn


def coordinate_one_forms(m: int, batch_shape=()) -> list[Form]:
    return [basis_one_form(m, i, batch_shape) for i in range(m)]


def complex_basis(n: int, batch_shape=()) -> tuple[list[Form], list[Form]]:
    """(dz_j, dzbar_j) on C^n with real coordinates ordered (x1, y1, x2, y2, ...)."""
    m = 2 * n
    dz, dzb = [], []
    for j in range(n):
        c = {(i,): np.zeros(batch_shape, dtype=complex) for i in range(m)}
        cb = {(i,): np.zeros(batch_shape, dtype=complex) for i in range(m)}
        c[(2 * j,)] = np.ones(batch_shape, dtype=complex)
        c[(2 * j + 1,)] = 1j * np.ones(batch_shape, dtype=complex)
        cb[(2 * j,)] = np.ones(batch_shape, dtype=complex)
        cb[(2 * j + 1,)] = -1j * np.ones(batch_shape, dtype=complex)
        dz.append(Form(m, 1, c))
        dzb.append(Form(m, 1, cb))
    return dz, dzb


def to_complex(x: np.ndarray) -> np.ndarray:
    """Real points (..., 2n) -> complex coordinates (..., n)."""
    x = np.asarray(x, dtype=float)
    return x[..., 0::2] + 1j * x[..., 1::2]


def to_real(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def complex_partials(grad: np.ndarray, axis: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """(f_z, f_zbar) from real partials ordered (x1, y1, ...) along ``axis``."""
    g = np.moveaxis(np.asarray(grad), axis, -1)
    fx, fy = g[..., 0::2], g[..., 1::2]
    return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)


def real_partials(fz: np.ndarray, fzb: np.ndarray) -> np.ndarray:
    """Inverse of :func:`complex_partials`; output axis -1 ordered (x1, y1, ...)."""
    fz, fzb = np.asarray(fz), np.asarray(fzb)
    out = np.empty(fz.shape[:-1] + (2 * fz.shape[-1],), dtype=complex)
    out[..., 0::2] = fz + fzb
    out[..., 1::2] = 1j * (fz - fzb)
    return out


def pullback_by_jacobian(a: Form, jac: np.ndarray) -> Form:
    """Pointwise pullback of ``a`` (sampled at image points) by jacobians ``jac``.

    ``jac`` has shape ``batch + (target_dim, source_dim)``.
    """
    jac = np.asarray(jac)
    m = jac.shape[-1]
    p = a.degree
    out = {}
    for K in increasing_indices(m, p):
        acc = 0.0
        for I, coef in a.coeffs.items():
            if p == 0:
                minor = 1.0
            elif p == 1:
                minor = jac[..., I[0], K[0]]
            else:
                minor = np.linalg.det(jac[..., list(I), :][..., :, list(K)])
            if a.vshape:
                minor = np.asarray(minor).reshape(np.shape(minor) + (1,) * len(a.vshape))
            acc = acc + coef * minor
        out[K] = np.asarray(acc, dtype=complex)
    return Form(m, p, out, a.vshape)
