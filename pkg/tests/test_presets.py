import math

import numpy as np
import pytest

from cgvf.presets import NAMES, preset_data, presets
from cgvf.scenario import build, reference_points, validate
from cgvf.sim import Team

TWO_PI = 2 * math.pi


def grid(k=1, count=25):
    w = np.linspace(-7.0, 7.0, count)
    if k == 1:
        return w[:, None]
    a, b = np.meshgrid(w[::3], w[::3])
    return np.column_stack([a.ravel(), b.ravel()])


def gains(sc):
    return np.array([r.gains for r in sc.robots])


def spacing(name, N):
    return reference_points(preset_data(name)["coordination"]["delta_reference"], N, 1)[:, 0]


@pytest.mark.parametrize("name", NAMES)
def test_every_preset_builds_and_validates(name):
    checks = validate(preset_data(name))
    hard = [c for c in checks if not c.ok and c.name != "exact neighbor information"]
    assert not hard
    sc = build(preset_data(name))
    assert sc.name == name


def test_sim1_parameters():
    sc = presets()["sim1"]
    assert sc.N == 50 and sc.n == 3 and sc.k == 1
    assert sc.k_c == (300.0,)
    assert np.all(gains(sc) == 1.0)
    np.testing.assert_allclose(spacing("sim1", 50), np.arange(50) * TWO_PI / (2 * 50), rtol=0, atol=1e-15)
    w = grid()[:, 0]
    s = np.sin(w)
    f = np.column_stack([15 * np.sin(2 * w), 30 * s * np.sqrt(0.5 * (1 - 0.5 * s**2)), 5 + 5 * np.cos(2 * w) - 2])
    np.testing.assert_allclose(sc.robots[0].dset.eval(w[:, None]), f, atol=1e-12)
    assert sc.step == 1e-3 and sc.integrator == "rk4"


def test_sim2_parameters():
    sc = presets()["sim2"]
    assert sc.N == 3 and sc.duration == 100.0
    assert sc.k_c == (1.0,) and np.all(gains(sc) == 1.0)
    np.testing.assert_allclose(spacing("sim2", 3), np.arange(3) * TWO_PI / 3, atol=1e-15)
    w = grid()[:, 0]
    nx, ny, nz, mx, my, mz = math.sqrt(2), 4.1, 7.1, 0.1, 0.7, 0.0
    f = np.column_stack([np.cos(nx * w) + mx, np.cos(ny * w) + my, np.cos(nz * w) + mz])
    np.testing.assert_allclose(sc.robots[1].dset.eval(w[:, None]), f, atol=1e-12)


def test_sim3_parameters():
    sc = presets()["sim3"]
    a, b = 10.0, 5.0
    assert sc.N == 21 and sc.n == 2 and sc.k_c == (100.0,)
    assert np.all(gains(sc) == 1.0)
    np.testing.assert_allclose(spacing("sim3", 21), np.arange(21) * TWO_PI / 21, atol=1e-15)
    w = grid()[:, 0]
    shapes = {
        range(7): np.column_stack([a * np.cos(w), a * np.sin(w)]),
        range(7, 14): np.column_stack([a * np.cos(w), b * np.sin(w)]),
        range(14, 21): np.column_stack([b * np.cos(w), b * np.sin(w)]),
    }
    for rows, f in shapes.items():
        for i in rows:
            np.testing.assert_allclose(sc.robots[i].dset.eval(w[:, None]), f, atol=1e-12)


def test_sim4_parameters():
    sc = presets()["sim4"]
    assert sc.N == 67 and sc.n == 3 and sc.k == 2
    assert sc.k_c == (10.0, 10.0)
    assert sc.desired_speeds == (-1.0, -1.0)
    assert np.all(gains(sc)[:, :2] == 1.0)
    W = grid(2)
    f = np.column_stack(
        [(2 + np.cos(W[:, 0])) * np.cos(W[:, 1]), (2 + np.cos(W[:, 0])) * np.sin(W[:, 1]), np.sin(W[:, 0])]
    )
    np.testing.assert_allclose(sc.robots[0].dset.eval(W), f, atol=1e-12)
    # extra vector v = (0, 0, 0, -1, 1) enters the wedge as coefficients (v5, -v4)
    team = Team(sc)
    np.testing.assert_array_equal(team.S[0], [1.0, 1.0])
    on_surface = np.array([r.dset.lift([0.3 + 0.1 * i, -1.2]) for i, r in enumerate(sc.robots)])
    np.testing.assert_allclose(team.base_field(on_surface)[:, 3:], -1.0, atol=1e-15)


def test_exp1_parameters():
    sc = presets()["exp1"]
    assert sc.N == 2 and sc.n == 3 and sc.k == 1
    np.testing.assert_array_equal(gains(sc), [[0.002, 0.002, 0.0025]] * 2)
    assert sc.k_c == (0.01,) and sc.guidance.k_theta == 1.0
    assert sc.comm_interval == pytest.approx(1 / 10)
    np.testing.assert_array_equal(sc.edge_deltas, np.zeros((1, 1)))
    w = grid()[:, 0]
    f = np.column_stack([225 * np.cos(w), 225 * np.cos(2 * w + math.pi / 2), -20 * np.cos(2 * w)])
    np.testing.assert_allclose(sc.robots[0].dset.eval(w[:, None]), f, atol=1e-10)


def test_exp2_parameters():
    sc = presets()["exp2"]
    assert sc.N == 2 and sc.n == 3 and sc.k == 2
    np.testing.assert_array_equal(gains(sc), np.full((2, 3), 0.003))
    assert sc.k_c == (0.01, 0.01) and sc.guidance.k_theta == 1.0
    w1, w2 = sc.desired_speeds
    assert w2 == 2 * w1 == 0.01
    assert sc.comm_interval == pytest.approx(1 / 10)
    np.testing.assert_array_equal(sc.edge_deltas, np.zeros((1, 2)))
    W = grid(2)
    f = np.column_stack(
        [
            (100 + 5 * np.cos(W[:, 1])) * np.cos(W[:, 0]),
            (100 + 5 * np.cos(W[:, 1])) * np.sin(W[:, 0]),
            5 * np.sin(W[:, 1]) + 50,
        ]
    )
    np.testing.assert_allclose(sc.robots[0].dset.eval(W), f, atol=1e-10)


def test_sim1_scaled_matches_property_suite():
    sc = presets()["sim1_scaled"]
    assert (sc.N, sc.k_c, sc.step, sc.duration) == (10, (50.0,), 1e-3, 40.0)
    assert np.all(gains(sc) == 1.0)
    assert sc.robots[0].dset.name == presets()["sim1"].robots[0].dset.name
