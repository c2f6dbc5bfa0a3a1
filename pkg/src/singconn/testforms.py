"""Smooth test functions with analytic first derivatives.

A test function evaluates at points of shape ``(..., m)`` and returns values
``(...)`` and real gradients ``(..., m)``.  Compactly supported bumps use the
profile ``exp(1 - 1 / (1 - t))`` with ``t = |x - c|^2 / rho^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exterior import Form, one_form_from_components


class TestFunction:
    """Base class; subclasses implement :meth:`evaluate`."""

    __test__ = False  # not a pytest class
    name = "test"

    def evaluate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(np.asarray(x, dtype=float))[0]

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(np.asarray(x, dtype=float))[1]

    def form(self, x: np.ndarray) -> Form:
        v, _ = self.evaluate(np.asarray(x, dtype=float))
        m = np.shape(x)[-1]
        return Form(m, 0, {(): np.asarray(v, dtype=complex)})

    def d(self, x: np.ndarray) -> Form:
        return one_form_from_components(np.asarray(self.grad(x), dtype=complex))

    def __mul__(self, other: "TestFunction") -> "TestFunction":
        return Product(self, other)

    def __add__(self, other: "TestFunction") -> "TestFunction":
        return Sum(self, other)


@dataclass
class Constant(TestFunction):
    value: float = 1.0
    name: str = "constant"

    def evaluate(self, x):
        shape = np.shape(x)[:-1]
        return np.full(shape, self.value, dtype=float), np.zeros(np.shape(x))


@dataclass
class Bump(TestFunction):
    """exp(1 - 1/(1 - |x-c|^2/rho^2)) inside the ball, 0 outside; value 1 at c.

    With ``period`` set, distances use the minimum image on a torus.
    """

    center: np.ndarray
    radius: float
    period: np.ndarray | None = None
    name: str = "bump"

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.period is not None:
            self.period = np.asarray(self.period, dtype=float)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        dx = x - self.center
        if self.period is not None:
            dx = dx - self.period * np.round(dx / self.period)
        t = np.sum(dx * dx, axis=-1) / self.radius ** 2
        inside = t < 1.0
        v = np.zeros(t.shape)
        ti = t[inside]
        v[inside] = np.exp(1.0 - 1.0 / (1.0 - ti))
        dv = np.zeros(t.shape)
        # d/dt exp(1 - 1/(1-t)) = -exp(...) / (1-t)^2
        dv[inside] = -v[inside] / (1.0 - ti) ** 2
        g = (2.0 / self.radius ** 2) * dv[..., None] * dx
        return v, g


@dataclass
class Trig(TestFunction):
    """prod_a cos(2 pi k_a x_a / L_a + phase_a) style plane wave (real part)."""

    wave: np.ndarray
    period: np.ndarray
    phase: float = 0.0
    name: str = "trig"

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        kv = 2 * math.pi * np.asarray(self.wave, dtype=float) / np.asarray(self.period, dtype=float)
        arg = x @ kv + self.phase
        return np.cos(arg), -np.sin(arg)[..., None] * kv


@dataclass
class ExpTrig(TestFunction):
    """exp(sum_a c_a cos(2 pi x_a / L_a + p_a)); analytic and periodic."""

    coeff: np.ndarray
    period: np.ndarray
    phase: np.ndarray | None = None
    name: str = "exptrig"

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.coeff, dtype=float)
        L = np.asarray(self.period, dtype=float)
        p = np.zeros_like(c) if self.phase is None else np.asarray(self.phase, dtype=float)
        w = 2 * math.pi / L
        arg = x * w + p
        v = np.exp(np.sum(c * np.cos(arg), axis=-1))
        g = v[..., None] * (-c * w * np.sin(arg))
        return v, g


@dataclass
class Polynomial(TestFunction):
    """1 + sum_a a_a x_a + sum_ab q_ab x_a x_b (for non-radial modulation)."""

    linear: np.ndarray
    quadratic: np.ndarray
    name: str = "poly"

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        a = np.asarray(self.linear, dtype=float)
        Q = np.asarray(self.quadratic, dtype=float)
        v = 1.0 + x @ a + np.einsum("...a,ab,...b->...", x, Q, x)
        g = a + x @ (Q + Q.T)
        return v, g


@dataclass
class Product(TestFunction):
    f: TestFunction
    g: TestFunction
    name: str = ""

    def __post_init__(self):
        if not self.name:
            self.name = f"{self.f.name}*{self.g.name}"

    def evaluate(self, x):
        a, da = self.f.evaluate(x)
        b, db = self.g.evaluate(x)
        return a * b, da * b[..., None] + a[..., None] * db


@dataclass
class Sum(TestFunction):
    f: TestFunction
    g: TestFunction
    name: str = ""

    def __post_init__(self):
        if not self.name:
            self.name = f"{self.f.name}+{self.g.name}"

    def evaluate(self, x):
        a, da = self.f.evaluate(x)
        b, db = self.g.evaluate(x)
        return a + b, da + db


def smoothstep5(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quintic 1 -> 0 ramp on [0, 1] (C^2), with its derivative."""
    t = np.clip(t, 0.0, 1.0)
    s = 1.0 - (10 * t ** 3 - 15 * t ** 4 + 6 * t ** 5)
    ds = -(30 * t ** 2 - 60 * t ** 3 + 30 * t ** 4)
    return s, ds


def cinf_step(t: np.ndarray) -> np.ndarray:
    """C-infinity 1 -> 0 ramp: 1 for t <= 0, 0 for t >= 1."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    out[t <= 0] = 1.0
    mid = (t > 0) & (t < 1)
    tm = t[mid]
    with np.errstate(over="ignore"):
        a = np.exp(-1.0 / (1.0 - tm))
        b = np.exp(-1.0 / tm)
    out[mid] = a / (a + b)
    return out


def torus_panel(b: float = 1.0, n: int = 1) -> list[TestFunction]:
    """Three smooth periodic test functions on (C / (Z + ibZ))^n."""
    period = np.array([1.0, b] * n)
    m = 2 * n
    centre = np.array([0.37, 0.61 * b] * n)[:m]
    f1 = Bump(centre, 0.35, period)
    f1.name = "bump"
    f2 = ExpTrig(np.array([0.6, -0.4] * n)[:m], period, np.array([0.3, 1.1] * n)[:m])
    f2.name = "exptrig"
    wave = np.zeros(m)
    wave[0], wave[1] = 1.0, 1.0
    f3 = Sum(Trig(wave, period, 0.4), ExpTrig(np.array([0.3, 0.5] * n)[:m], period))
    f3.name = "mixed"
    return [f1, f2, f3]
