"""Theta functions and the degree-k line bundles over rectangular tori.

The torus is C / (Z + i b Z).  In the unitary frame a holomorphic theta
function f of level k gives the section ``sigma = c f(z) exp(-pi k y^2 / b)``
with factor of automorphy ``sigma(z + m + n i b) = exp(-2 pi i k n x) sigma(z)``.
The Chern connection is ``omega = (2 pi i k y / b) dx`` with curvature
``-i k Omega_0`` where ``Omega_0 = (2 pi / b) dx ^ dy`` has total mass 2 pi.

Products of tori (rank n over T^{2n}) use one copy per complex coordinate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bundles import BundleData, SectionData, SectionFn, Transition
from .exterior import Chart, Form

TRUNCATION = 1e-16


# --------------------------------------------------------------------------
# series
# --------------------------------------------------------------------------


def _series_range(y: np.ndarray, b: float, shift: float = 0.0, level: int = 1) -> np.ndarray:
    # terms exp(-pi level b m^2 - 2 pi level m y), m = n + shift; keep those above TRUNCATION * max
    ymax = float(np.max(np.abs(y))) if np.size(y) else 0.0
    centre = ymax / b
    width = math.sqrt(-math.log(TRUNCATION) / (math.pi * level * b)) + 1.0
    nmax = int(math.ceil(centre + width)) + 1
    return np.arange(-nmax, nmax + 1) + shift


def theta_series(z: np.ndarray, b: float, level: int = 1, shift: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """sum_m exp(pi i level tau m^2 + 2 pi i level m z) over m in Z + shift, and its z-derivative.

    ``tau = i b``.  Returns ``(value, derivative)``.
    """
    z = np.asarray(z, dtype=complex)
    ms = _series_range(z.imag, b, shift, level)
    tau = 1j * b
    val = np.zeros(z.shape, dtype=complex)
    der = np.zeros(z.shape, dtype=complex)
    for m in ms:
        t = np.exp(1j * math.pi * level * tau * m * m + 2j * math.pi * level * m * z)
        val += t
        der += (2j * math.pi * level * m) * t
    return val, der


def jacobi_theta(z, b: float):
    """theta(z; ib) = sum exp(pi i n^2 tau + 2 pi i n z); zero at 1/2 + tau/2."""
    return theta_series(z, b)


def theta_basis_function(j: int, k: int, b: float) -> Callable:
    """theta_{j,k}(z) = sum_n exp(pi i k tau (n + j/k)^2 + 2 pi i k (n + j/k) z)."""
    def f(z):
        return theta_series(z, b, level=k, shift=j / k)
    return f


def lattice_subgroup(k: int, b: float) -> np.ndarray:
    """k points forming a translate of a cyclic subgroup of order k, summing to 0.

    The generator ``(1 + i b g) / k`` is chosen to maximize the minimum
    distance between points on the torus.
    """
    if k == 1:
        return np.zeros(1, dtype=complex)
    best, best_g = -1.0, 1
    for g in range(k):
        x = (np.arange(k) / k)
        y = b * ((g * np.arange(k)) % k) / k
        if len(set(zip(np.round(x, 12), np.round(y, 12)))) < k:
            continue
        dx = x[:, None] - x[None, :]
        dy = y[:, None] - y[None, :]
        dx -= np.round(dx)
        dy -= b * np.round(dy / b)
        d = np.hypot(dx, dy)
        np.fill_diagonal(d, np.inf)
        if d.min() > best + 1e-12:
            best, best_g = d.min(), g
    pts = np.arange(k) / k + 1j * b * ((best_g * np.arange(k)) % k) / k
    return pts - pts.mean()


def product_theta(z: np.ndarray, b: float, shifts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """f(z) = prod_j theta(z - a_j) and f'(z); zeros at a_j + 1/2 + i b / 2."""
    z = np.asarray(z, dtype=complex)
    vals, ders = [], []
    for a in shifts:
        v, d = theta_series(z - a, b)
        vals.append(v)
        ders.append(d)
    f = np.ones(z.shape, dtype=complex)
    for v in vals:
        f = f * v
    fp = np.zeros(z.shape, dtype=complex)
    for j in range(len(shifts)):
        t = ders[j]
        for l, v in enumerate(vals):
            if l != j:
                t = t * v
        fp = fp + t
    return f, fp


# --------------------------------------------------------------------------
# the bundle
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Lattice:
    """Rectangular lattice Z + i b Z."""

    b: float = 1.0

    def __post_init__(self):
        if not (self.b > 0 and math.isfinite(self.b)):
            raise ValueError("degenerate lattice")

    @property
    def area(self) -> float:
        return self.b


def _unitary_factor(z: np.ndarray, k: int, b: float) -> np.ndarray:
    return np.exp(-math.pi * k * z.imag ** 2 / b)


def theta_connection(k: int, b: float, n: int) -> Callable[[np.ndarray], Form]:
    m = 2 * n

    def fn(x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        coeffs = {(a,): np.zeros(shape + (n, n), dtype=complex) for a in range(m)}
        for j in range(n):
            c = np.zeros(shape + (n, n), dtype=complex)
            c[..., j, j] = 2j * math.pi * k * x[..., 2 * j + 1] / b
            coeffs[(2 * j,)] = c
        return Form(m, 1, coeffs, (n, n))
    return fn


def theta_curvature(k: int, b: float, n: int) -> Callable[[np.ndarray], Form]:
    m = 2 * n

    def fn(x):
        shape = np.shape(x)[:-1]
        coeffs = {}
        for a in range(m):
            for c in range(a + 1, m):
                coeffs[(a, c)] = np.zeros(shape + (n, n), dtype=complex)
        for j in range(n):
            v = np.zeros(shape + (n, n), dtype=complex)
            v[..., j, j] = -1j * k * 2 * math.pi / b
            coeffs[(2 * j, 2 * j + 1)] = v
        return Form(m, 2, coeffs, (n, n))
    return fn


def kahler_form(b: float, n: int, batch_shape=()) -> Form:
    """Omega = sum_j Omega_0(z_j), Omega_0 = (2 pi / b) dx ^ dy."""
    m = 2 * n
    coeffs = {}
    for a in range(m):
        for c in range(a + 1, m):
            coeffs[(a, c)] = np.zeros(batch_shape, dtype=complex)
    for j in range(n):
        coeffs[(2 * j, 2 * j + 1)] = np.full(batch_shape, 2 * math.pi / b, dtype=complex)
    return Form(m, 2, coeffs)


def torus_chart(b: float, n: int, resolution: int) -> Chart:
    """Periodic fundamental-domain chart of (C / (Z + ibZ))^n."""
    box = []
    for _ in range(n):
        box += [(0.0, 1.0), (0.0, b)]
    res = []
    for _ in range(n):
        res += [resolution, max(4, int(round(resolution * b)))]
    return Chart(tuple(box), tuple(res), (True,) * (2 * n))


def _atlas(b: float, n: int, margin: float, resolution: int):
    charts, origins = [], []
    for shift in (0.0, 0.5):
        box, res, origin = [], [], []
        for _ in range(n):
            ox, oy = shift, shift * b
            box += [(ox - margin, ox + 1 + margin), (oy - margin, oy + b + margin)]
            res += [resolution + 1, max(5, int(round(resolution * b))) + 1]
            origin += [ox, oy]
        charts.append(Chart(tuple(box), tuple(res), (False,) * (2 * n)))
        origins.append(np.array(origin))
    return charts


def _transitions(charts: list[Chart], k: int, b: float, n: int) -> list[Transition]:
    out = []
    periods = np.array([1.0, b] * n)
    for i, ci in enumerate(charts):
        for j, cj in enumerate(charts):
            for combo in itertools.product((-1, 0, 1), repeat=2 * n):
                lam = np.array(combo, dtype=float) * periods
                if i == j and not any(combo):
                    continue
                # shifted box of chart i must meet chart j
                ok = all(ci.box[a][0] + lam[a] < cj.box[a][1] and ci.box[a][1] + lam[a] > cj.box[a][0]
                         for a in range(2 * n))
                if not ok:
                    continue
                nshift = np.array(combo[1::2], dtype=float)

                def coord(x, lam=lam):
                    return np.asarray(x) + lam

                def matrix(x, nshift=nshift):
                    x = np.asarray(x, dtype=float)
                    g = np.zeros(x.shape[:-1] + (n, n), dtype=complex)
                    for l in range(n):
                        g[..., l, l] = np.exp(2j * math.pi * k * nshift[l] * x[..., 2 * l])
                    return g

                def overlap(x, lam=lam, cj=cj, ci=ci):
                    return ci.contains(x) & cj.contains(np.asarray(x) + lam)

                out.append(Transition(i, j, coord, matrix, overlap, f"{i}->{j} shift {combo}"))
    return out


def theta_bundle_data(k: int, lattice: Lattice | float = 1.0, n: int = 1, resolution: int = 24,
                      margin: float = 0.125) -> BundleData:
    """The level-k bundle (L^k, or its n-fold diagonal sum over T^{2n})."""
    b = lattice.b if isinstance(lattice, Lattice) else float(lattice)
    Lattice(b)
    if k < 1:
        raise ValueError("k must be positive")
    if n not in (1, 2):
        raise ValueError("rank must be 1 or 2")
    charts = _atlas(b, n, margin, resolution)
    conn = theta_connection(k, b, n)
    curv = theta_curvature(k, b, n)
    return BundleData(n, charts, [conn, conn], _transitions(charts, k, b, n), None, [curv, curv],
                      torus_chart(b, n, resolution), {"k": k, "b": b, "n": n, "family": "theta"})


# --------------------------------------------------------------------------
# sections
# --------------------------------------------------------------------------


def unitary_section_fn(hol: Callable, k: int, b: float, c: complex = 1.0) -> Callable:
    """(sigma, d sigma / dx, d sigma / dy) from a holomorphic f with f' ."""
    def fn(z):
        z = np.asarray(z, dtype=complex)
        f, fp = hol(z)
        e = _unitary_factor(z, k, b)
        sig = c * f * e
        sx = c * fp * e
        sy = c * (1j * fp - (2 * math.pi * k * z.imag / b) * f) * e
        return sig, sx, sy
    return fn


def _product_section(bundle: BundleData, comps: list[Callable]) -> SectionData:
    """Section (s_1(z_1), ..., s_n(z_n)) from scalar unitary evaluators."""
    n = bundle.rank
    m = 2 * n

    def fn(x):
        x = np.asarray(x, dtype=float)
        z = x[..., 0::2] + 1j * x[..., 1::2]
        u = np.zeros(x.shape[:-1] + (n,), dtype=complex)
        du = np.zeros(x.shape[:-1] + (m, n), dtype=complex)
        for j in range(n):
            s, sx, sy = comps[j](z[..., j])
            u[..., j] = s
            du[..., 2 * j, j] = sx
            du[..., 2 * j + 1, j] = sy
        return u, du

    return SectionData(bundle, [fn] * len(bundle.charts))


def _sup_normalizer(fn: Callable, b: float, samples: int = 64) -> float:
    x = np.linspace(0, 1, samples, endpoint=False)
    y = np.linspace(0, b, max(8, int(samples * b)), endpoint=False)
    X, Y = np.meshgrid(x, y, indexing="ij")
    s, _, _ = fn(X + 1j * Y)
    return float(np.max(np.abs(s)))


def theta_sections(bundle: BundleData) -> list[SectionData]:
    """The k basis theta sections (n = 1) or the k diagonal tuples (n = 2)."""
    k, b, n = bundle.meta["k"], bundle.meta["b"], bundle.rank
    out = []
    for j in range(k):
        raw = unitary_section_fn(theta_basis_function(j, k, b), k, b)
        c = 1.0 / _sup_normalizer(raw, b)
        comp = unitary_section_fn(theta_basis_function(j, k, b), k, b, c)
        s = _product_section(bundle, [comp] * n)
        s.label = f"theta_{j},{k}"
        out.append(s)
    return out


def theta_bundle(k: int, lattice: Lattice | float = 1.0, n: int = 1, resolution: int = 24):
    """(BundleData, basis sections) for the degree-k theta bundle."""
    D = theta_bundle_data(k, lattice, n, resolution)
    return D, theta_sections(D)


@dataclass(frozen=True)
class ThetaFamily:
    """The product family: zeros at a translated order-k subgroup."""

    k: int
    b: float

    @property
    def shifts(self) -> np.ndarray:
        return lattice_subgroup(self.k, self.b)

    @property
    def zeros(self) -> np.ndarray:
        """Zeros reduced to the fundamental domain [0,1) x [0,b)."""
        z = self.shifts + 0.5 + 0.5j * self.b
        return np.mod(z.real, 1.0) + 1j * np.mod(z.imag, self.b)

    def scalar_fn(self) -> Callable:
        shifts = self.shifts
        raw = unitary_section_fn(lambda z: product_theta(z, self.b, shifts), self.k, self.b)
        c = 1.0 / _sup_normalizer(raw, self.b)
        return unitary_section_fn(lambda z: product_theta(z, self.b, shifts), self.k, self.b, c)


def exact_theta_section(bundle: BundleData) -> SectionData:
    k, b, n = bundle.meta["k"], bundle.meta["b"], bundle.rank
    comp = ThetaFamily(k, b).scalar_fn()
    s = _product_section(bundle, [comp] * n)
    s.label = f"exact-theta k={k}"
    return s


def default_perturbation(x: np.ndarray, y: np.ndarray, b: float) -> tuple:
    """g = (cos 2 pi x + sin(2 pi y / b)) / 2 with its partials; sup |g| = 1."""
    w = 2 * math.pi / b
    g = 0.5 * (np.cos(2 * math.pi * x) + np.sin(w * y))
    gx = -math.pi * np.sin(2 * math.pi * x)
    gy = 0.5 * w * np.cos(w * y)
    return g, gx, gy


def perturbed_theta_section(bundle: BundleData, strength: float = 0.2, factor_strength: float | None = None,
                            h: float = 1e-5) -> SectionData:
    """s = sigma (1 + c1 k^-1/2 g) + c2 k^-1/2 conj(sigma) (D_z sigma)^2 / N.

    The multiplicative factor alone leaves the zeros and their derivatives
    unchanged; the second term is a smooth section of L^k whose dbar part at
    the zeros equals ``c2 k^-1/2`` times the (1,0) part, so the family has
    ``lambda_k ~ c2 k^-1/2`` while keeping the zero set of sigma.  For rank 2
    the same scalar section is used in each factor.
    """
    k, b = bundle.meta["k"], bundle.meta["b"]
    fam = ThetaFamily(k, b)
    base = fam.scalar_fn()
    c1 = (strength / 2 if factor_strength is None else factor_strength) / math.sqrt(k)
    c2 = strength / math.sqrt(k)

    def dz_sigma(z):
        s, sx, sy = base(z)
        # (D sigma)_z = 1/2 ((D sigma)_x - i (D sigma)_y), omega_x = 2 pi i k y / b
        return 0.5 * (sx + s * 2j * math.pi * k * z.imag / b - 1j * sy)

    zeros = fam.zeros
    N = float(np.max(np.abs(dz_sigma(zeros)) ** 2))

    def added(z):
        s, _, _ = base(z)
        return c2 * np.conj(s) * dz_sigma(z) ** 2 / N

    def fn_scalar(z):
        s, sx, sy = base(z)
        g, gx, gy = default_perturbation(z.real, z.imag, b)
        a = added(z)
        ax = (8 * (added(z + h) - added(z - h)) - (added(z + 2 * h) - added(z - 2 * h))) / (12 * h)
        ay = (8 * (added(z + 1j * h) - added(z - 1j * h)) - (added(z + 2j * h) - added(z - 2j * h))) / (12 * h)
        val = s * (1 + c1 * g) + a
        vx = sx * (1 + c1 * g) + s * c1 * gx + ax
        vy = sy * (1 + c1 * g) + s * c1 * gy + ay
        return val, vx, vy

    sec = _product_section(bundle, [fn_scalar] * bundle.rank)
    sec.label = f"perturbed-theta k={k} c={strength}"
    return sec


def torus_zero_reference(bundle: BundleData) -> np.ndarray:
    """Known zeros of the exact family as real points (count k^n)."""
    k, b, n = bundle.meta["k"], bundle.meta["b"], bundle.rank
    z1 = ThetaFamily(k, b).zeros
    pts = []
    for combo in itertools.product(z1, repeat=n):
        p = []
        for z in combo:
            p += [z.real, z.imag]
        pts.append(p)
    return np.array(pts)
