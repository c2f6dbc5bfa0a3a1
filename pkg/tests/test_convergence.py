from __future__ import annotations

import math

import numpy as np
import pytest

from singconn.convergence import (
    CSV_COLUMNS,
    ExperimentError,
    KLadderExperiment,
    coarea_closed_form,
    coarea_monitor,
    dsigma_decay,
    fit_exponent,
    gap_slopes,
    run_convergence,
    transversality_probe,
    write_csv,
)
from singconn.theta import exact_theta_section, perturbed_theta_section, theta_bundle_data


def test_fit_exponent_recovers_power_law():
    k = np.arange(1, 9)
    assert fit_exponent(k, 3.0 * k ** -0.5) == pytest.approx(-0.5)
    with pytest.raises(ExperimentError):
        fit_exponent([1, 2], [1.0, 0.5])
    with pytest.raises(ExperimentError):
        fit_exponent([1, 2, 3], [1.0, 0.0, 0.0])


@pytest.mark.parametrize("kwargs", [
    {"k_values": []}, {"k_values": [2, 1]}, {"k_values": [0, 1]}, {"n": 3}, {"family": "other"},
])
def test_experiment_validation(kwargs):
    with pytest.raises(ExperimentError):
        KLadderExperiment(**kwargs)


@pytest.fixture(scope="module")
def small_ladder():
    exp = KLadderExperiment(n=1, k_values=[1, 2, 3, 4, 5])
    return exp, run_convergence(exp)


def test_records_are_consistent(small_ladder):
    exp, recs = small_ladder
    assert len(recs) == 5 * 3
    assert not exp.failures
    for r in recs:
        assert r.consistent and r.divisor_total == r.k
        assert r.chern_number == pytest.approx(r.k, abs=1e-9)
        # for the product bundle the limit pairing is independent of k
    rhs = {(r.form): r.rhs for r in recs if r.k == 1}
    assert all(r.rhs == pytest.approx(rhs[r.form], abs=1e-12) for r in recs)


def test_gap_slopes_negative(small_ladder):
    _, recs = small_ladder
    assert all(v < 0 for v in gap_slopes(recs).values())


def test_coarea_monitor_bounded(small_ladder):
    exp, _ = small_ladder
    mon = coarea_monitor(exp)
    assert mon["bounded"] and mon["max_over_min"] < 3
    assert all(i1 > 0 and i2 >= 0 for i1, i2 in zip(mon["I1"], mon["I2"]))


def test_dsigma_decay_reports_exponents(small_ladder):
    exp, _ = small_ladder
    out = dsigma_decay(exp)
    assert set(out) == {"bump", "exptrig", "mixed"}
    assert all(v["exponent"] is not None for v in out.values())


@pytest.mark.parametrize("n", [1, 2])
def test_coarea_closed_forms(n):
    r = coarea_closed_form(n)
    assert r["exact"] == pytest.approx(2 * math.pi if n == 1 else 2 * math.pi ** 2)
    assert r["residual"] < 1e-3


def test_parallel_matches_serial(tmp_path):
    a = KLadderExperiment(n=1, k_values=[1, 2, 3])
    b = KLadderExperiment(n=1, k_values=[1, 2, 3], jobs=2)
    write_csv(run_convergence(a), tmp_path / "a.csv")
    write_csv(run_convergence(b), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)


def test_perturbed_family_shares_zero_counts():
    exp = KLadderExperiment(n=1, k_values=[1, 2, 4], family="perturbed")
    recs = run_convergence(exp)
    assert all(r.consistent for r in recs)


@pytest.mark.parametrize("family", ["exact", "perturbed"])
def test_transversality_probe(family):
    D = theta_bundle_data(3)
    s = exact_theta_section(D) if family == "exact" else perturbed_theta_section(D)
    r = transversality_probe(s, eta=0.1)
    assert r["region_samples"] > 0
    assert r["min_J"] > 0 and r["passed"]
    if family == "exact":
        assert r["sup_dbar_gk"] < 1e-8
