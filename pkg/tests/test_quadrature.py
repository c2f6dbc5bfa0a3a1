from __future__ import annotations

import math

import numpy as np
import pytest

from singconn.exterior import Chart
from singconn.quadrature import (
    Domain,
    ExcisionParams,
    integrate_smooth,
    pair_singular,
    richardson,
    shell_rule,
    sphere_directions,
    sphere_volume,
)


def _inv_r(power):
    return lambda x: np.linalg.norm(x, axis=-1) ** (-power)


def test_sphere_volume_values():
    assert math.isclose(sphere_volume(2), 2 * math.pi)
    assert math.isclose(sphere_volume(4), 2 * math.pi ** 2)


@pytest.mark.parametrize("m", [2, 4])
def test_sphere_directions_are_unit_and_weights_sum_to_area(m):
    dirs, w = sphere_directions(m, 24)
    assert np.allclose(np.linalg.norm(dirs, axis=-1), 1.0)
    assert math.isclose(w.sum(), sphere_volume(m), rel_tol=1e-12)


def test_shell_rule_volume():
    x, w = shell_rule(4, np.zeros(4), 0.5, 1.0, panels=2, order=8, n_ang=16)
    assert math.isclose(w.sum(), 0.25 * sphere_volume(4) * (1 - 0.5 ** 4), rel_tol=1e-12)


def test_richardson_is_exact_for_linear_error():
    v, err = richardson([(0.1, 1.3), (0.05, 1.15)])
    assert abs(v - 1.0) < 1e-14 and abs(err - 0.15) < 1e-14


def test_disc_closed_form():
    r = pair_singular(_inv_r(1), Domain.ball([0, 0], 1.0), [[0, 0]])
    assert abs(r.extrapolated - 2 * math.pi) < 1e-3


def test_four_ball_closed_form():
    r = pair_singular(_inv_r(3), Domain.ball([0] * 4, 1.0), [[0] * 4])
    assert abs(r.extrapolated - 2 * math.pi ** 2) < 1e-3


def test_log_singularity():
    f = lambda x: np.log(np.linalg.norm(x, axis=-1))
    r = pair_singular(f, Domain.ball([0, 0], 1.0), [[0, 0]])
    # the excised remainder is O(delta^2 log delta); the estimate must cover the error
    assert abs(r.extrapolated + math.pi / 2) <= r.error_estimate


def test_box_singular_integral_converges_second_order():
    exact = 8 * math.log(1 + math.sqrt(2))
    errs = []
    for n in (33, 65, 129):
        r = pair_singular(_inv_r(1), Domain.box(Chart.uniform(2, (-1, 1), n)), [[0, 0]])
        errs.append(abs(r.extrapolated - exact))
    assert errs[2] < 1e-3
    assert errs[1] / errs[2] > 3.0


def test_off_centre_point_on_torus():
    # 1/|x - p| on the unit torus: the excised limit is independent of the cutoff radius
    chart = Chart.uniform(2, (0, 1), 64, periodic=True)
    p = np.array([0.3, 0.45])
    f = lambda x: 1.0 / np.linalg.norm(chart.displacement(x, p), axis=-1)
    dom = Domain.torus(chart)
    a = pair_singular(f, dom, [p], ExcisionParams(R=0.2)).extrapolated
    b = pair_singular(f, dom, [p], ExcisionParams(R=0.1)).extrapolated
    assert abs(a - b) < 1e-4


def test_no_singular_points_falls_back_to_smooth_rule():
    dom = Domain.ball([0, 0], 1.0)
    r = pair_singular(lambda x: np.ones(x.shape[:-1]), dom, np.zeros((0, 2)))
    assert abs(r.extrapolated - math.pi) < 1e-12
    assert abs(integrate_smooth(lambda x: np.ones(x.shape[:-1]), dom) - math.pi) < 1e-12


def test_ladder_and_result_serialisation():
    r = pair_singular(_inv_r(1), Domain.ball([0, 0], 1.0), [[0, 0]])
    d = r.to_dict()
    assert len(d["ladder"]) == ExcisionParams().levels
    deltas = [x for x, _ in r.ladder]
    assert all(a > b for a, b in zip(deltas, deltas[1:]))
    s = r.scaled(2.0)
    assert abs(s.extrapolated - 2 * r.extrapolated) < 1e-12


def test_torus_domain_needs_periodic_chart():
    with pytest.raises(ValueError):
        Domain.torus(Chart.uniform(2, (0, 1), 8))
