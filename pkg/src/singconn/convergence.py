"""k-ladder experiments for theta families on flat tori.

Convergence in the sense of currents is measured by pairings against a fixed
panel of smooth periodic test functions.  Every record is deterministic;
wall-clock timings are kept apart from the records.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bundles import SectionData, chern_form_at, chern_integral, covariant_at
from .divisors import Divisor, divisor
from .exterior import Chart, compensated_sum
from .lelong import section_divisor, zero_search_chart
from .quadrature import Domain, ExcisionParams, pair_singular, sphere_volume
from .testforms import TestFunction, torus_panel
from .theta import exact_theta_section, perturbed_theta_section, theta_bundle_data, torus_chart


class ExperimentError(ValueError):
    pass


@dataclass
class KLadderExperiment:
    n: int = 1
    k_values: Sequence[int] = tuple(range(1, 11))
    family: str = "exact"
    strength: float = 0.2
    b: float = 1.0
    test_forms: list[TestFunction] | None = None
    quadrature_resolution: int | None = None
    eta: float = 0.1
    jobs: int = 1
    results: list = field(default_factory=list)

    def __post_init__(self):
        ks = [int(k) for k in self.k_values]
        if not ks or ks[0] < 1 or any(b <= a for a, b in zip(ks, ks[1:])):
            raise ExperimentError("k_values must be positive and strictly increasing")
        if self.n not in (1, 2):
            raise ExperimentError("n must be 1 or 2")
        if self.family not in ("exact", "perturbed"):
            raise ExperimentError(f"unknown family {self.family!r}")
        self.k_values = ks
        if self.test_forms is None:
            self.test_forms = torus_panel(self.b, self.n)

    @property
    def resolution(self) -> int:
        return self.quadrature_resolution or (96 if self.n == 1 else 16)

    def bundle(self, k: int):
        return theta_bundle_data(k, self.b, self.n)

    def section(self, k: int) -> SectionData:
        D = self.bundle(k)
        if self.family == "exact":
            return exact_theta_section(D)
        return perturbed_theta_section(D, strength=self.strength)


@dataclass
class ConvergenceRecord:
    k: int
    form: str
    lhs: float
    rhs: float
    gap: float
    coarea_I: float
    dsigma_norm: float
    divisor_total: int
    chern_number: float
    consistent: bool

    def to_dict(self) -> dict:
        return asdict(self)


CSV_COLUMNS = ("k", "form", "lhs", "rhs", "gap", "coarea_I", "dsigma_norm", "divisor_total", "chern_number",
               "consistent")


# --------------------------------------------------------------------------
# per-k work
# --------------------------------------------------------------------------


def _torus_domain(exp: KLadderExperiment, k: int) -> Domain:
    base = exp.resolution
    res = base if exp.n == 2 else max(base, math.ceil(32 * math.sqrt(k)))
    return Domain.torus(torus_chart(exp.b, exp.n, res))


def _norm_power(s: SectionData, p: int):
    def f(x):
        nrm = s.norm_at(0, x)
        return nrm ** (-p)
    return f


def coarea_integral(u_norm: Callable[[np.ndarray], np.ndarray], power: int, domain: Domain, zeros,
                    params: ExcisionParams | None = None):
    """Excised integral of |u|^(-power) with the ladder extrapolated."""
    return pair_singular(lambda x: u_norm(x) ** (-power) + 0j, domain, zeros, params)


def _coarea_k(exp: KLadderExperiment, k: int, s: SectionData, div: Divisor, domain: Domain) -> dict:
    n = exp.n
    p = 2 * n - 1
    res = coarea_integral(lambda x: s.norm_at(0, x), p, domain, div.points)
    total = float(np.real(res.extrapolated))
    # I_1 on the grid where |s| >= eta; I_2 is the remainder
    pts = domain.chart.points()
    nrm = s.norm_at(0, pts)
    w = domain.chart.weights()
    mask = nrm >= exp.eta
    I1 = float(np.real(compensated_sum(np.where(mask, nrm ** (-p), 0.0) * w)))
    # integral over M of |s|^-(2n-1) d lambda = mean over the k^n dilated unit boxes of their I
    return {"I": total, "I1": I1, "I2": total - I1, "converged": res.converged, "boxes": k ** n,
            "error_estimate": res.error_estimate}


def _rhs(D, phi: TestFunction, domain: Domain, k: int, n: int) -> float:
    pts = domain.chart.points()
    c = chern_form_at(D, n, 0, pts).top()
    return float(np.real(compensated_sum(c * phi(pts) * domain.chart.weights()))) / k ** n


def _run_k(exp: KLadderExperiment, k: int) -> tuple[list[ConvergenceRecord], dict, float]:
    t0 = time.perf_counter()
    n = exp.n
    D = exp.bundle(k)
    s = exp.section(k)
    div = section_divisor(s)
    domain = _torus_domain(exp, k)
    chern = float(np.real(chern_integral(D, n, domain=domain.chart)))
    consistent = abs(div.total - chern) <= 1e-5 * k ** n
    co = _coarea_k(exp, k, s, div, domain)
    records = []
    for phi in exp.test_forms:
        lhs = float(np.real(sum(m * phi(np.asarray(p)[None, :])[0] for p, m in zip(div.points, div.multiplicities))))
        lhs /= k ** n
        rhs = _rhs(D, phi, domain, k, n)
        gap = abs(lhs - rhs)
        records.append(ConvergenceRecord(k, phi.name, lhs, rhs, gap, co["I"], gap, div.total, chern, consistent))
    extra = {"k": k, "divisor": div.to_dict(), "coarea": co}
    return records, extra, time.perf_counter() - t0


def _job(args):
    exp, k = args
    return _run_k(exp, k)


def run_convergence(exp: KLadderExperiment, jobs: int | None = None) -> list[ConvergenceRecord]:
    """Run every k (in parallel when ``jobs > 1``); records are ordered by (k, form)."""
    jobs = jobs or exp.jobs
    tasks = [(exp, k) for k in exp.k_values]
    outs: list = []
    failures: dict[int, str] = {}
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_job, t) for t in tasks]
            for k, fut in zip(exp.k_values, futures):
                try:
                    outs.append(fut.result())
                except Exception as err:  # per-k failures are recorded
                    failures[k] = f"{type(err).__name__}: {err}"
    else:
        for t in tasks:
            try:
                outs.append(_job(t))
            except Exception as err:
                failures[t[1]] = f"{type(err).__name__}: {err}"
    records = [r for o in outs for r in o[0]]
    exp.results = records
    exp.details = [o[1] for o in outs]
    exp.timings = {o[1]["k"]: o[2] for o in outs}
    exp.failures = failures
    return records


# --------------------------------------------------------------------------
# fits and monitors
# --------------------------------------------------------------------------


def fit_exponent(k: Sequence[float], values: Sequence[float], floor: float = 1e-14) -> float:
    """Least-squares slope of log(value) against log(k), ignoring values below ``floor``."""
    k = np.asarray(k, dtype=float)
    v = np.asarray(values, dtype=float)
    use = v > floor
    if np.sum(use) < 3:
        raise ExperimentError("fewer than 3 usable k values for the fit")
    return float(np.polyfit(np.log(k[use]), np.log(v[use]), 1)[0])


def gap_slopes(records: Sequence[ConvergenceRecord]) -> dict[str, float]:
    out = {}
    for name in sorted({r.form for r in records}):
        rs = [r for r in records if r.form == name]
        out[name] = fit_exponent([r.k for r in rs], [r.gap for r in rs])
    return out


def coarea_monitor(exp: KLadderExperiment, factor: float = 3.0) -> dict:
    """Per-k co-area integrals and the uniform-bound verdict."""
    if not getattr(exp, "details", None):
        run_convergence(exp)
    per_k = {d["k"]: d["coarea"] for d in exp.details}
    ks = sorted(per_k)
    vals = np.array([per_k[k]["I"] for k in ks])
    ratio = float(np.max(vals) / np.min(vals)) if len(vals) else math.nan
    return {"k": ks, "I": vals.tolist(), "I1": [per_k[k]["I1"] for k in ks], "I2": [per_k[k]["I2"] for k in ks],
            "max_over_min": ratio, "max_over_first": float(np.max(vals) / vals[0]) if len(vals) else math.nan,
            "bounded": bool(ratio <= factor)}


def coarea_closed_form(n: int, params: ExcisionParams | None = None) -> dict:
    """|u|^-(2n-1) for u = z or (z_1, z_2) on the unit ball; exact value is the sphere area."""
    dom = Domain.ball(np.zeros(2 * n), 1.0)
    res = coarea_integral(lambda x: np.linalg.norm(x, axis=-1), 2 * n - 1, dom, np.zeros((1, 2 * n)), params)
    exact = sphere_volume(2 * n)
    return {"value": float(np.real(res.extrapolated)), "exact": exact,
            "residual": abs(float(np.real(res.extrapolated)) - exact)}


def dsigma_decay(exp: KLadderExperiment, phi: str | None = None) -> dict:
    """Fit (1/k^n)|<c_n, phi> - Div[phi]| against k (equal to (1/k^n)|<d sigma_k, phi>|)."""
    if not exp.results:
        run_convergence(exp)
    names = [phi] if phi else sorted({r.form for r in exp.results})
    out = {}
    for name in names:
        rs = [r for r in exp.results if r.form == name]
        ks = [r.k for r in rs]
        vals = [r.dsigma_norm for r in rs]
        try:
            out[name] = {"exponent": fit_exponent(ks, vals), "values": vals, "k": ks}
        except ExperimentError as err:
            out[name] = {"exponent": None, "values": vals, "k": ks, "error": str(err)}
    return out


def transversality_probe(s: SectionData, eta: float = 0.1, rings: int = 6, n_ang: int = 16) -> dict:
    """Jacobian transversality and g_k-norms of a theta-family section.

    Derivatives are measured in ``g_k = k g``, i.e. scaled by ``k^(-1/2)``.
    Samples are the zero-search grid plus rings around each zero.
    """
    D = s.bundle
    m, n = D.dim, D.rank
    if n != m // 2:
        raise ValueError("the probe needs rank equal to the complex dimension")
    k = D.meta.get("k", 1)
    chart = zero_search_chart(D)
    div = section_divisor(s)
    pts = [chart.points().reshape(-1, m)]
    rng = np.random.default_rng(0)
    for p in np.asarray(div.points).reshape(-1, m):
        for r in np.geomspace(0.01, 0.3, rings) / math.sqrt(k):
            d = rng.normal(size=(n_ang, m))
            d /= np.linalg.norm(d, axis=-1, keepdims=True)
            pts.append(chart.wrap(p + r * d))
    x = np.concatenate(pts)
    nrm = s.norm_at(0, x)
    Du = covariant_at(s, 0, x)
    comps = np.stack([Du.coeffs[(c,)][..., 0, :] for c in range(m)], axis=-2)  # (..., m, n)
    # (1,0) and (0,1) parts for the standard structure: d/dz_j = (d/dx_j - i d/dy_j)/2
    dz = 0.5 * (comps[..., 0::2, :] - 1j * comps[..., 1::2, :])
    dzb = 0.5 * (comps[..., 0::2, :] + 1j * comps[..., 1::2, :])
    scale = 1.0 / math.sqrt(k)
    J = np.abs(np.linalg.det(scale * dz))
    region = nrm <= eta
    ds = scale * np.sqrt(np.sum(np.abs(comps) ** 2, axis=(-1, -2)))
    dbar = scale * np.sqrt(np.sum(np.abs(dzb) ** 2, axis=(-1, -2)))
    out = {"k": k, "eta": eta, "samples": int(len(x)), "region_samples": int(np.sum(region)),
           "sup_s": float(np.max(nrm)), "sup_Ds_gk": float(np.max(ds)), "sup_dbar_gk": float(np.max(dbar))}
    if not np.any(region):
        out.update({"min_J": None, "passed": None, "note": "no samples with |s| <= eta"})
        return out
    minJ = float(np.min(J[region]))
    out.update({"min_J": minJ, "passed": bool(minJ >= eta)})
    return out


def write_csv(records: Sequence[ConvergenceRecord], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            row = r.to_dict()
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(round(v, 12))
    return str(v)
