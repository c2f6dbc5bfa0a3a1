"""Quadrature for integrands with isolated point singularities.

The integrand ``f`` (top coefficient of ``T ^ phi``) is split with smooth
radial cutoffs ``psi_j`` around the singular points:

* far field ``f (1 - sum psi_j)`` -- smooth, integrated on the domain grid;
* near field ``f psi_j`` -- integrated in polar (2D) or Hopf spherical (4D)
  coordinates over shells ``[delta_{i+1}, delta_i]`` with Gauss-Legendre in
  the radius, so the excised value ``V(delta)`` is known on a whole ladder.

The ladder ``delta_i = delta_0 2^-i`` is extrapolated to ``delta = 0`` with
order-1 Richardson.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exterior import Chart, compensated_sum
from .testforms import cinf_step

Integrand = Callable[[np.ndarray], np.ndarray]


def sphere_volume(n: int) -> float:
    """Volume of the unit (n-1)-sphere in R^n."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


# --------------------------------------------------------------------------
# domains
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Domain:
    """Integration region: a torus, a closed box, or a ball.

    ``chart`` carries the far-field grid.  For balls the far field is done in
    spherical coordinates about ``center`` instead.
    """

    kind: str
    chart: Chart | None = None
    center: tuple[float, ...] | None = None
    radius: float | None = None
    dim: int | None = None

    @classmethod
    def torus(cls, chart: Chart) -> "Domain":
        if not all(chart.periodic):
            raise ValueError("a torus domain needs a fully periodic chart")
        return cls("torus", chart, dim=chart.dim)

    @classmethod
    def box(cls, chart: Chart) -> "Domain":
        return cls("box", chart, dim=chart.dim)

    @classmethod
    def ball(cls, center: Sequence[float], radius: float) -> "Domain":
        c = tuple(float(v) for v in center)
        return cls("ball", None, c, float(radius), len(c))

    @property
    def m(self) -> int:
        return self.dim

    def displacement(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        if self.kind == "torus":
            return self.chart.displacement(x, p)
        return np.asarray(x, dtype=float) - np.asarray(p, dtype=float)

    def wrap(self, x: np.ndarray) -> np.ndarray:
        return self.chart.wrap(x) if self.kind == "torus" else x

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "torus":
            return np.ones(x.shape[:-1], dtype=bool)
        if self.kind == "box":
            return self.chart.contains(x)
        return np.linalg.norm(x - np.asarray(self.center), axis=-1) <= self.radius + 1e-14

    def min_separation(self, points: np.ndarray) -> float:
        pts = np.asarray(points, dtype=float)
        if len(pts) < 2:
            return math.inf
        d = np.linalg.norm(self.displacement(pts[:, None, :], pts[None, :, :]), axis=-1)
        np.fill_diagonal(d, np.inf)
        return float(d.min())


# --------------------------------------------------------------------------
# spherical patches
# --------------------------------------------------------------------------


def gauss_panels(a: float, b: float, panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    r, wr = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        r.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        wr.append(0.5 * (hi - lo) * w)
    return np.concatenate(r), np.concatenate(wr)


def sphere_directions(m: int, n_ang: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions and angular weights (from the spherical area element).

    2D: uniform circle.  4D: Hopf coordinates with Gauss-Legendre in eta and
    trapezoid in the two circle angles.
    """
    if m == 2:
        t = 2 * math.pi * np.arange(n_ang) / n_ang
        dirs = np.stack([np.cos(t), np.sin(t)], axis=-1)
        return dirs, np.full(n_ang, 2 * math.pi / n_ang)
    if m == 4:
        n_eta = max(4, n_ang // 2)
        x, w = np.polynomial.legendre.leggauss(n_eta)
        eta = 0.25 * math.pi * (x + 1)
        weta = 0.25 * math.pi * w
        xi = 2 * math.pi * np.arange(n_ang) / n_ang
        E, X1, X2 = np.meshgrid(eta, xi, xi, indexing="ij")
        W = (weta[:, None, None] * np.cos(E) * np.sin(E)) * (2 * math.pi / n_ang) ** 2
        dirs = np.stack([np.cos(E) * np.cos(X1), np.cos(E) * np.sin(X1),
                         np.sin(E) * np.cos(X2), np.sin(E) * np.sin(X2)], axis=-1)
        return dirs.reshape(-1, 4), W.reshape(-1)
    raise ValueError("spherical quadrature is implemented for real dimension 2 and 4")


def shell_rule(m: int, center: np.ndarray, r_in: float, r_out: float, panels: int = 1,
               order: int = 8, n_ang: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Points and weights for the shell r_in < |x - center| < r_out."""
    r, wr = gauss_panels(r_in, r_out, panels, order)
    dirs, wa = sphere_directions(m, n_ang)
    pts = center + r[:, None, None] * dirs[None, :, :]
    w = (wr * r ** (m - 1))[:, None] * wa[None, :]
    return pts, w


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------


@dataclass
class PairingResult:
    ladder: list[tuple[float, complex]]
    extrapolated: complex
    error_estimate: float
    converged: bool = True
    far_field: complex = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def value(self) -> complex:
        return self.extrapolated

    def to_dict(self) -> dict:
        return {
            "ladder": [[float(d), [float(np.real(v)), float(np.imag(v))]] for d, v in self.ladder],
            "extrapolated": [float(np.real(self.extrapolated)), float(np.imag(self.extrapolated))],
            "error_estimate": float(self.error_estimate),
            "converged": bool(self.converged),
        }

    def scaled(self, c: complex) -> "PairingResult":
        return PairingResult([(d, c * v) for d, v in self.ladder], c * self.extrapolated,
                             abs(c) * self.error_estimate, self.converged, c * self.far_field, dict(self.meta))

    def __add__(self, other: "PairingResult") -> "PairingResult":
        if len(self.ladder) != len(other.ladder):
            raise ValueError("ladders differ in length")
        lad = [(d, v + w) for (d, v), (_, w) in zip(self.ladder, other.ladder)]
        return PairingResult(lad, self.extrapolated + other.extrapolated,
                             self.error_estimate + other.error_estimate,
                             self.converged and other.converged, self.far_field + other.far_field)


def richardson(ladder: Sequence[tuple[float, complex]]) -> tuple[complex, float]:
    """Order-1 extrapolation from the last two ladder values (ratio 2)."""
    if len(ladder) < 2:
        v = ladder[-1][1]
        return v, 0.0
    v1, v2 = ladder[-2][1], ladder[-1][1]
    return 2 * v2 - v1, abs(v2 - v1)


# --------------------------------------------------------------------------
# engine
# --------------------------------------------------------------------------


@dataclass
class ExcisionParams:
    levels: int = 6
    max_radius: float = 0.2
    separation_fraction: float = 0.4
    radial_order: int = 8
    outer_panels: int = 4
    n_ang: int | None = None
    tolerance: float = 1e-2
    R: float | None = None


def _cutoff(r: np.ndarray, R: float) -> np.ndarray:
    """C-infinity radial cutoff: 1 for r <= R/2, 0 for r >= R."""
    return cinf_step((r - 0.5 * R) / (0.5 * R))


def _ball_far_rule(domain: Domain, n_r: int = 48, n_ang: int | None = None, R: float | None = None):
    """Spherical rule on the ball; with ``R`` the radial panels break at R/2 and R.

    The breakpoints are used when the only singular point is the centre, so
    the cutoff transition is resolved by its own panels.
    """
    m = domain.m
    n_ang = n_ang or (128 if m == 2 else 24)
    c = np.asarray(domain.center)
    if R is None or R >= domain.radius:
        return shell_rule(m, c, 0.0, domain.radius, panels=16, order=max(4, n_r // 4), n_ang=n_ang)
    x1, w1 = shell_rule(m, c, 0.5 * R, R, panels=4, order=12, n_ang=n_ang)
    x2, w2 = shell_rule(m, c, R, domain.radius, panels=8, order=12, n_ang=n_ang)
    return np.concatenate([x1.reshape(-1, m), x2.reshape(-1, m)]), np.concatenate([w1.ravel(), w2.ravel()])


def _chunks(n: int, size: int = 200_000):
    for s in range(0, n, size):
        yield slice(s, min(n, s + size))


def _evaluate(f: Integrand, pts: np.ndarray) -> np.ndarray:
    flat = pts.reshape(-1, pts.shape[-1])
    out = np.empty(len(flat), dtype=complex)
    for sl in _chunks(len(flat)):
        out[sl] = f(flat[sl])
    return out.reshape(pts.shape[:-1])


def integrate_smooth(f: Integrand, domain: Domain) -> complex:
    """Plain quadrature of a smooth integrand over the domain."""
    if domain.kind == "ball":
        pts, w = _ball_far_rule(domain)
        return compensated_sum(_evaluate(f, pts) * w)
    pts = domain.chart.points()
    return compensated_sum(_evaluate(f, pts) * domain.chart.weights())


def pair_singular(
    f: Integrand,
    domain: Domain,
    singular_points: np.ndarray | Sequence,
    params: ExcisionParams | None = None,
) -> PairingResult:
    """Excised integral of ``f`` with ladder and extrapolated limit."""
    params = params or ExcisionParams()
    m = domain.m
    S = np.asarray(singular_points, dtype=float).reshape(-1, m)
    if len(S) == 0:
        v = integrate_smooth(f, domain)
        lad = [(params.max_radius * 2.0 ** -i, v) for i in range(params.levels)]
        return PairingResult(lad, v, 0.0, True, v, {"R": None})
    R = params.R or min(params.max_radius, params.separation_fraction * domain.min_separation(S))
    n_ang = params.n_ang or (96 if m == 2 else 24)
    deltas = [0.25 * R * 2.0 ** -i for i in range(params.levels)]

    def psi_sum(x):
        tot = np.zeros(x.shape[:-1])
        for p in S:
            r = np.linalg.norm(domain.displacement(x, p), axis=-1)
            tot += _cutoff(r, R)
        return tot

    # far field
    if domain.kind == "ball":
        centred = len(S) == 1 and np.allclose(S[0], domain.center)
        pts, w = _ball_far_rule(domain, R=R if centred else None)
    else:
        pts, w = domain.chart.points(), domain.chart.weights()
    flat = pts.reshape(-1, m)
    wflat = np.broadcast_to(w, pts.shape[:-1]).reshape(-1)
    weight = 1.0 - psi_sum(flat)
    use = np.abs(weight) > 0
    vals = np.zeros(len(flat), dtype=complex)
    if np.any(use):
        vals[use] = _evaluate(f, flat[use]) * weight[use]
    far = compensated_sum(vals * wflat)

    # near field: outer part [delta_0, R] then shells
    outer = 0.0 + 0.0j
    shells = np.zeros(params.levels - 1, dtype=complex)
    for p in S:
        def near(r_in, r_out, panels, p=p):
            x, wx = shell_rule(m, p, r_in, r_out, panels, params.radial_order, n_ang)
            xw = domain.wrap(x)
            weight = _cutoff(np.linalg.norm(x - p, axis=-1), R) * domain.contains(x)
            # neighbouring cutoffs overlap only if R exceeds half the separation
            v = np.zeros(x.shape[:-1], dtype=complex)
            nz = weight > 0
            v[nz] = _evaluate(f, xw[nz]) * weight[nz]
            return compensated_sum(v * wx)
        outer += near(deltas[0], 0.5 * R, max(1, params.outer_panels // 2))
        outer += near(0.5 * R, R, params.outer_panels)
        for i in range(1, params.levels):
            shells[i - 1] += near(deltas[i], deltas[i - 1], 1)
    ladder = []
    acc = far + outer
    ladder.append((deltas[0], acc))
    for i in range(1, params.levels):
        acc = acc + shells[i - 1]
        ladder.append((deltas[i], acc))
    ext, err = richardson(ladder)
    scale = max(1.0, abs(ext))
    return PairingResult(ladder, ext, err, err <= params.tolerance * scale, far, {"R": R})


def shell_integrals(f: Integrand, domain: Domain, points: np.ndarray, R: float, levels: int = 8,
                    n_ang: int | None = None) -> np.ndarray:
    """Integrals of ``f`` over dyadic shells ``[R 2^-(i+1), R 2^-i]`` summed over points."""
    m = domain.m
    n_ang = n_ang or (96 if m == 2 else 24)
    out = np.zeros(levels, dtype=complex)
    for p in np.asarray(points, dtype=float).reshape(-1, m):
        for i in range(levels):
            x, w = shell_rule(m, p, R * 2.0 ** -(i + 1), R * 2.0 ** -i, 1, 8, n_ang)
            vals = _evaluate(f, domain.wrap(x)) * domain.contains(x)
            out[i] += compensated_sum(vals * w)
    return out
