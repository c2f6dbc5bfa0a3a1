"""Command-line front end.

Exit codes: 0 when every check passes, 1 on a verification failure, 2 on
a usage or configuration error.  The output directory defaults to
``$SINGCONN_OUT`` or ``./singconn-out``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from .config import ConfigError, RunConfig
from .reports import envelope, loglog_svg, summary_table, write_json

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# shared fixtures
# --------------------------------------------------------------------------


def planar_test_function():
    from .testforms import Bump, Polynomial, Product
    return Product(Bump([0.1, 0.05], 0.9), Polynomial([0.3, -0.2], np.array([[0.5, 0.1], [0.1, -0.3]])))


def ball_test_function(anisotropic: bool = False):
    from .testforms import Bump, Polynomial, Product
    if anisotropic:
        Q = np.diag([1.0, -1.0, 0.2, 0.2])
        Q[0, 1] = Q[1, 0] = 0.6
        return Product(Bump(np.zeros(4), 0.8), Polynomial(np.zeros(4), Q))
    return Product(Bump([0.05, -0.03, 0.02, 0.04], 0.8), Polynomial([0.2, -0.1, 0.15, 0.05], np.zeros((4, 4))))


def scalar_map(f: Callable, fz: Callable, fzb: Callable) -> Callable:
    """Map u(x) = f(z) on R^2 with complex partials given; returns (u, du)."""
    def u(x):
        x = np.asarray(x, dtype=float)
        z = x[..., 0] + 1j * x[..., 1]
        a, b = fz(z), fzb(z)
        du = np.stack([a + b, 1j * (a - b)], axis=-1)[..., None]
        return f(z)[..., None], du
    return u


def linear_perturbed_map(l0: float) -> Callable:
    return scalar_map(lambda z: z + l0 * np.conj(z), lambda z: np.ones_like(z), lambda z: l0 * np.ones_like(z))


def pair_map(p: int = 1, l0: float = 0.0) -> Callable:
    """u = (z_1^p + l0 conj(z_1), z_2) on R^4."""
    def u(x):
        x = np.asarray(x, dtype=float)
        z = x[..., 0::2] + 1j * x[..., 1::2]
        v = np.stack([z[..., 0] ** p + l0 * np.conj(z[..., 0]), z[..., 1]], axis=-1)
        du = np.zeros(x.shape[:-1] + (4, 2), dtype=complex)
        a = p * z[..., 0] ** (p - 1)
        du[..., 0, 0] = a + l0
        du[..., 1, 0] = 1j * (a - l0)
        du[..., 2, 1] = 1.0
        du[..., 3, 1] = 1j
        return v, du
    return u


MAPS_2D = {
    "z": (lambda z: z, lambda z: np.ones_like(z), lambda z: np.zeros_like(z)),
    "z2": (lambda z: z ** 2, lambda z: 2 * z, lambda z: np.zeros_like(z)),
    "zbar": (lambda z: np.conj(z), lambda z: np.zeros_like(z), lambda z: np.ones_like(z)),
    "constant": (lambda z: np.ones_like(z), lambda z: np.zeros_like(z), lambda z: np.zeros_like(z)),
    "zero": (lambda z: np.zeros_like(z), lambda z: np.zeros_like(z), lambda z: np.zeros_like(z)),
}


def _flat_section(u: Callable, dim: int, rank: int, lo: float = -1.0, hi: float = 1.0, res: int = 64):
    from .bundles import SectionData, trivial_bundle
    from .exterior import Chart
    D = trivial_bundle(Chart.uniform(dim, (lo, hi), res), rank)
    return SectionData(D, [u])


# --------------------------------------------------------------------------
# verify-lp
# --------------------------------------------------------------------------


def run_verify_lp(cfg: RunConfig) -> list[dict]:
    from .lelong import t1_t2_decomposition, verify_alhol_lp, verify_lp1
    from .testforms import torus_panel
    from .theta import exact_theta_section, theta_bundle_data

    lp = cfg.lp
    phi = planar_test_function()
    rows = []
    for suite in lp.suites:
        if suite == "flat":
            s = _flat_section(scalar_map(*MAPS_2D["z"]), 2, 1, res=lp.resolution)
            r = verify_lp1(s, phi=phi, tolerance=lp.tolerance)
            rows.append({"suite": "flat", "case": "lp1 u=z", **_pick(r, lp.tolerance)})
            sb = _flat_section(scalar_map(*MAPS_2D["zbar"]), 2, 1, res=lp.resolution)
            r = verify_alhol_lp(sb, phi=phi, tolerance=lp.alhol_tolerance)
            rows.append({"suite": "flat", "case": "alhol u=zbar", **_pick(r, lp.alhol_tolerance)})
        elif suite == "theta":
            for k in lp.k_values:
                D = theta_bundle_data(k)
                s = exact_theta_section(D)
                for f in torus_panel():
                    r = verify_lp1(s, phi=f, tolerance=lp.tolerance)
                    rows.append({"suite": "theta", "case": f"lp1 k={k} {f.name}", **_pick(r, lp.tolerance)})
        elif suite == "alhol":
            t1 = {}
            for l0 in lp.lambdas:
                s = _flat_section(linear_perturbed_map(l0), 2, 1, res=lp.resolution)
                r = verify_alhol_lp(s, phi=phi, tolerance=lp.alhol_tolerance)
                rows.append({"suite": "alhol", "case": f"alhol lambda={l0}", **_pick(r, lp.alhol_tolerance)})
                t1[l0] = t1_t2_decomposition(s, phi=phi)["T1"] / l0
            vals = list(t1.values())
            spread = max(abs(v - vals[0]) for v in vals) / abs(vals[0]) if vals and vals[0] != 0 else math.inf
            rows.append({"suite": "alhol", "case": "T1 linear in lambda", "value": spread, "residual": spread,
                         "tolerance": 0.1, "passed": bool(spread <= 0.1)})
        else:
            raise UsageError(f"unknown verify-lp suite {suite!r}")
    return rows


def _pick(r: dict, tol: float) -> dict:
    return {"value": r.get("lhs"), "reference": r.get("rhs"), "residual": r["residual"], "tolerance": tol,
            "passed": bool(r["residual"] < tol) if tol > 0 else False}


# --------------------------------------------------------------------------
# verify-bm
# --------------------------------------------------------------------------


def run_verify_bm(cfg: RunConfig) -> list[dict]:
    from .bochner_martinelli import bm_point_mass, verify_fundamental_rank_n
    from .divisors import divisor
    from .exterior import Chart
    from .quadrature import Domain
    from .testforms import torus_panel
    from .theta import exact_theta_section, theta_bundle_data

    bm = cfg.bm
    n = bm.n
    if n not in (1, 2):
        raise UsageError(f"rank n = {n} is not supported (n must be 1 or 2)")
    rows = []
    for suite in bm.suites:
        if suite == "flat":
            dom = Domain.ball(np.zeros(2 * n), 0.9 if n == 2 else 1.05)
            if n == 1:
                cases = [("u=z", scalar_map(*MAPS_2D["z"])), ("u=z^2", scalar_map(*MAPS_2D["z2"]))]
                phi = planar_test_function()
            else:
                cases = [("u=(z1,z2)", pair_map(1)), ("u=(z1^2,z2)", pair_map(2))]
                phi = ball_test_function()
            chart = Chart.uniform(2 * n, (-1, 1), 64 if n == 1 else 12)
            for name, u in cases:
                div = divisor(u, chart)
                r = bm_point_mass(u, phi, dom, div.points, div=div)
                rows.append({"suite": "flat", "case": f"point mass {name}", "value": r["lhs"],
                             "reference": r["rhs"], "residual": r["residual"], "tolerance": bm.tolerance,
                             "passed": bool(r["residual"] < bm.tolerance)})
                rows.append({"suite": "flat", "case": f"degree {name}", "value": div.total, "reference": None,
                             "residual": max(div.residual) if div.residual else 0.0, "tolerance": 0.05,
                             "passed": bool(div.residual and max(div.residual) < 0.05)})
        elif suite == "empty":
            dom = Domain.ball(np.zeros(2 * n), 0.9 if n == 2 else 1.05)
            if n == 1:
                u = scalar_map(lambda z: 1 + 0.3 * z, lambda z: 0.3 * np.ones_like(z), lambda z: np.zeros_like(z))
                phi = planar_test_function()
            else:
                def u(x):
                    v, du = pair_map(1)(x)
                    return v + np.array([1.5, 0.5]), du
                phi = ball_test_function()
            s = _flat_section(u, 2 * n, n, res=12 if n == 2 else 32)
            from .divisors import Divisor
            empty = Divisor(np.zeros((0, 2 * n)), [], [])
            r = verify_fundamental_rank_n(s, phi=phi, domain=dom, tolerance=bm.empty_tolerance, div=empty)
            rows.append({"suite": "empty", "case": "nowhere-zero section", "value": r["lhs"], "reference": r["rhs"],
                         "residual": r["residual"], "tolerance": bm.empty_tolerance,
                         "passed": bool(r["residual"] < bm.empty_tolerance)})
        elif suite == "theta":
            D = theta_bundle_data(1, n=n)
            s = exact_theta_section(D)
            for f in torus_panel(1.0, n):
                r = verify_fundamental_rank_n(s, phi=f, tolerance=bm.tolerance)
                rows.append({"suite": "theta", "case": f"fundamental k=1 {f.name}", **_pick(r, bm.tolerance)})
        else:
            raise UsageError(f"unknown verify-bm suite {suite!r}")
    return rows


# --------------------------------------------------------------------------
# converge
# --------------------------------------------------------------------------


def run_converge(cfg: RunConfig, out: Path) -> tuple[dict, bool]:
    from .convergence import (ExperimentError, KLadderExperiment, coarea_monitor, dsigma_decay, gap_slopes,
                              run_convergence, write_csv)

    c = cfg.converge
    try:
        exp = KLadderExperiment(n=c.n, k_values=c.k_values, family=c.family, strength=c.strength, b=c.b,
                                eta=c.eta, jobs=cfg.run.jobs)
    except ExperimentError as err:
        raise UsageError(str(err)) from err
    records = run_convergence(exp)
    write_csv(records, out / "convergence.csv")
    summary = {"n": c.n, "k_values": exp.k_values, "family": c.family, "failures": exp.failures,
               "consistent": all(r.consistent for r in records)}
    ok = summary["consistent"] and not exp.failures
    try:
        slopes = gap_slopes(records)
        summary["gap_slopes"] = slopes
        ok = ok and all(v < 0 for v in slopes.values())
    except ExperimentError as err:
        summary["gap_slopes"] = None
        summary["fit_error"] = str(err)
        ok = False
    summary["coarea"] = coarea_monitor(exp)
    summary["dsigma_decay"] = dsigma_decay(exp)
    series = {}
    for name in sorted({r.form for r in records}):
        rs = [r for r in records if r.form == name]
        series[name] = ([r.k for r in rs], [r.gap for r in rs])
    (out / "gap.svg").write_text(loglog_svg(series, title=f"divisor gap, n = {c.n}"))
    write_json(out / "timings.json", {str(k): v for k, v in sorted(exp.timings.items())})
    return summary, ok


# --------------------------------------------------------------------------
# atomic-probe
# --------------------------------------------------------------------------


def run_atomic(cfg: RunConfig) -> tuple[dict, bool]:
    from .divisors import NonIsolatedZeroError, atomicity_probe
    from .exterior import Chart

    a = cfg.atomic
    if a.map not in MAPS_2D:
        raise UsageError(f"unknown map {a.map!r}; choose from {sorted(MAPS_2D)}")
    u = scalar_map(*MAPS_2D[a.map])
    chart = Chart.uniform(2, (-1, 1), a.resolution)
    try:
        rep = atomicity_probe(u, chart)
    except NonIsolatedZeroError as err:
        return {"map": a.map, "error": f"vanishes identically: {err}"}, False
    d = rep.to_dict()
    d["map"] = a.map
    return d, bool(rep.atomic)


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="singconn", description="Singular connection and divisor verification lab.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("verify-lp", "verify-bm", "converge", "atomic-probe"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI configuration file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--jobs", type=int, help="worker processes")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_USAGE if err.code else EXIT_OK
    try:
        cfg = RunConfig.load(args.config)
        if args.jobs is not None:
            if args.jobs < 1:
                raise ConfigError("--jobs must be at least 1")
            cfg.run.jobs = args.jobs
        out = Path(args.out or os.environ.get("SINGCONN_OUT", "singconn-out"))
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, OSError) as err:
        print(f"singconn: {err}", file=sys.stderr)
        return EXIT_USAGE
    digest = cfg.digest()
    (out / "config.ini").write_text(cfg.to_ini())
    try:
        if args.command in ("verify-lp", "verify-bm"):
            rows = run_verify_lp(cfg) if args.command == "verify-lp" else run_verify_bm(cfg)
            ok = all(r["passed"] for r in rows)
            write_json(out / "report.json", envelope(args.command, digest, {"passed": ok, "checks": rows}))
            table = summary_table(rows, ["suite", "case", "residual", "tolerance", "passed"])
            (out / "summary.txt").write_text(table)
            print(table, end="")
            if not ok:
                for r in rows:
                    if not r["passed"]:
                        print(f"FAILED {r['suite']} {r['case']}: residual {float(r['residual']):.6g}", file=sys.stderr)
        elif args.command == "converge":
            summary, ok = run_converge(cfg, out)
            write_json(out / "summary.json", envelope("converge", digest, {"passed": ok, **summary}))
            print(json.dumps({"passed": ok, "gap_slopes": summary.get("gap_slopes")}, sort_keys=True))
        else:
            summary, ok = run_atomic(cfg)
            write_json(out / "report.json", envelope("atomic-probe", digest, {"passed": ok, **summary}))
            if "error" in summary:
                print(f"singconn: {summary['error']}", file=sys.stderr)
            else:
                print(json.dumps({"passed": ok, "atomic": summary["atomic"], "vacuous": summary["vacuous"]}))
    except UsageError as err:
        print(f"singconn: {err}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
