import copy
import math

import numpy as np
import pytest

from cgvf.coordination import Mailboxes
from cgvf.diagnostics import lyapunov, max_increase
from cgvf.geometry import catalog, expression_set
from cgvf.guidance import GuidanceConfig
from cgvf.presets import preset_data
from cgvf.scenario import build
from cgvf.sim import (
    RobotSpec,
    Scenario,
    ScenarioError,
    Team,
    _dubins_rhs_generic,
    _dubins_rhs_kernel,
    integrate,
)
from cgvf.topology import CommGraph, build_cycle


def small(name, **run):
    data = copy.deepcopy(preset_data(name))
    data["run"].update(run)
    return data


def single_circle(initial, duration=1.0, **kw):
    c = catalog("circle", [1.0])
    return Scenario(
        [RobotSpec(c, (1.0, 1.0), initial)], CommGraph(1, ()), np.zeros((0, 1)), (1.0,), duration=duration, **kw
    )


def test_on_path_start_stays_on_path():
    sc = single_circle(catalog("circle", [1.0]).lift([0.4]), duration=10.0)
    res = integrate(sc)
    assert max(np.abs(f.phi).max() for f in res.frames) < 1e-6
    # on the path with no coordination the virtual rate is (-1)^n
    assert res.frames[0].inputs[0, 2] == pytest.approx(1.0, abs=1e-15)


def test_duration_zero_gives_one_frame():
    res = integrate(single_circle([2.0, 0.0, 0.0], duration=0.0))
    assert len(res.frames) == 1 and res.frames[0].t == 0.0


def test_edgeless_team_decouples():
    c = catalog("circle", [2.0])
    starts = [np.array([3.0, 1.0, 0.2]), np.array([-1.0, 0.5, 2.0])]
    team = Scenario(
        [RobotSpec(c, (1.0, 1.0), s) for s in starts], CommGraph(2, ()), np.zeros((0, 1)), (5.0,), duration=2.0
    )
    joint = integrate(team).final.xi
    for i, s in enumerate(starts):
        alone = Scenario([RobotSpec(c, (1.0, 1.0), s)], CommGraph(1, ()), np.zeros((0, 1)), (5.0,), duration=2.0)
        np.testing.assert_allclose(joint[i], integrate(alone).final.xi[0], atol=1e-13)


def test_fast_and_general_engines_agree():
    sc = build(small("sim1_scaled", duration_s=2.0))
    fast = integrate(sc)
    general = integrate(sc, force_general=True)
    assert fast.engine == "fast" and general.engine == "general"
    np.testing.assert_allclose(fast.final.xi, general.final.xi, atol=1e-11)
    np.testing.assert_allclose(fast.V_steps, general.V_steps, rtol=1e-10)


def test_expression_sets_use_general_engine():
    e = expression_set(["cos(w)", "sin(w)"])
    sc = Scenario([RobotSpec(e, (1.0, 1.0), [1.5, 0.0, 0.0])], CommGraph(1, ()), np.zeros((0, 1)), (1.0,), duration=1.0)
    c = single_circle([1.5, 0.0, 0.0], duration=1.0)
    a, b = integrate(sc), integrate(c)
    assert a.engine == "general"
    np.testing.assert_allclose(a.final.xi, b.final.xi, atol=1e-12)


def test_composite_error_identity():
    res = integrate(build(small("sim3", duration_s=0.5)))
    for f in res.frames:
        assert f.composite**2 == pytest.approx(np.sum(f.phi**2) + np.sum(f.edge_errors**2), rel=1e-12)


def test_non_finite_state_aborts():
    c = catalog("circle", [1.0])
    sc = Scenario(
        [RobotSpec(c, (1e8, 1e8), [5.0, 0.0, 0.0])],
        CommGraph(1, ()),
        np.zeros((0, 1)),
        (1.0,),
        duration=60.0,
        step=1.0,
        integrator="euler",
        decimate=1,
    )
    for force in (False, True):
        with np.errstate(over="ignore", invalid="ignore"):
            res = integrate(sc, force_general=force)
        assert res.status.startswith("aborted")
        assert np.all(np.isfinite(res.final.xi))


def test_scenario_validation():
    c = catalog("circle", [1.0])
    r = RobotSpec(c, (1.0, 1.0), [1.0, 0.0, 0.0])
    with pytest.raises(ScenarioError, match="vertices"):
        Scenario([r, r], build_cycle(3), np.zeros((3, 1)), (1.0,))
    with pytest.raises(ScenarioError, match="gains"):
        Scenario([RobotSpec(c, (1.0,), [1.0, 0.0, 0.0])], CommGraph(1, ()), np.zeros((0, 1)), (1.0,))
    with pytest.raises(ScenarioError, match="whole multiple"):
        Scenario([r], CommGraph(1, ()), np.zeros((0, 1)), (1.0,), comm_interval=0.0015)
    with pytest.raises(ScenarioError, match="integrator"):
        Scenario([r], CommGraph(1, ()), np.zeros((0, 1)), (1.0,), integrator="midpoint")
    with pytest.raises(ScenarioError, match="heading"):
        Scenario([r], CommGraph(1, ()), np.zeros((0, 1)), (1.0,), guidance=GuidanceConfig(1.0, 1.0))


def test_delayed_links_flagged_beyond_theory():
    data = small("sim1_scaled", duration_s=0.2)
    data["coordination"]["comm_interval_s"] = 0.01
    data["coordination"]["packet_loss"] = 0.2
    res = integrate(build(data))
    assert res.engine == "general"
    assert res.events[0][1].startswith("beyond-theory")


def test_sim3_neighbors_do_not_overlap():
    res = integrate(build(small("sim3", duration_s=60.0, decimate=1000)))
    W = res.final.xi[:, 2]
    gaps = np.abs(np.diff(W))
    np.testing.assert_allclose(gaps, 2 * math.pi / 21, atol=1e-6)


@pytest.mark.parametrize(
    "name, duration",
    [("sim1_scaled", 3.0), ("sim2", 3.0), ("sim3", 3.0), ("sim4", 1.0), ("exp1", 3.0), ("exp2", 1.0)],
)
def test_halving_step_changes_little(name, duration):
    data = small(name, duration_s=duration)
    data["coordination"].pop("comm_interval_s", None)
    step = data["run"]["step_s"]
    a = integrate(build(data), decimate=10**9).final.xi
    data["run"]["step_s"] = step / 2
    b = integrate(build(data), decimate=10**9).final.xi
    assert np.max(np.abs(a - b)) < 1e-4


def dubins_line(heading, duration=2.0):
    line = catalog("line", [1.0, 0.0])
    return Scenario(
        [RobotSpec(line, (1.0, 1.0), [0.0, 0.0, 0.0], heading)],
        CommGraph(1, ()),
        np.zeros((0, 1)),
        (1.0,),
        guidance=GuidanceConfig(2.0, 1.0),
        duration=duration,
        step=0.01,
    )


def test_dubins_straight_line_on_path():
    res = integrate(dubins_line(0.0))
    assert res.status == "ok"
    np.testing.assert_allclose(res.guidance.u_theta, 0.0, atol=1e-14)
    np.testing.assert_allclose(res.final.xi[0, :2], [4.0, 0.0], atol=1e-12)


def test_dubins_speed_and_saturation_bounds():
    sc = build(small("exp1", duration_s=20.0))
    res = integrate(sc)
    tr = res.guidance
    assert np.all((tr.u_theta >= -0.5) & (tr.u_theta <= 0.5))
    P = np.array([f.xi[:, :2] for f in res.frames])
    speed = np.linalg.norm(np.diff(P, axis=0), axis=2) / np.diff([f.t for f in res.frames])[:, None]
    assert np.all(speed <= 15.0 + 1e-9)


def test_dubins_opposite_heading_is_perturbed():
    res = integrate(dubins_line(math.pi, duration=0.5))
    assert any("perturbed" in e for _, e in res.events)
    assert res.status == "ok"


def test_dubins_singular_heading_aborts():
    vertical = expression_set(["0", "0", "w"])
    sc = Scenario(
        [RobotSpec(vertical, (1.0, 1.0, 1.0), [0.0, 0.0, 0.0, 0.0], 0.0)],
        CommGraph(1, ()),
        np.zeros((0, 1)),
        (1.0,),
        guidance=GuidanceConfig(1.0, 1.0),
        duration=1.0,
    )
    res = integrate(sc)
    assert res.status.startswith("aborted") and "heading is undefined" in res.status


def test_dubins_kernel_matches_generic():
    for name in ("exp1", "exp2"):
        sc = build(preset_data(name))
        team = Team(sc)
        rng = np.random.default_rng(1)
        for every in (1, 10):
            boxes = Mailboxes(sc.graph, sc.k, every)
            Y = np.zeros((sc.N, sc.n + sc.k + 1))
            Y[:, :-1] = [r.initial for r in sc.robots]
            Y[:, -1] = [r.heading for r in sc.robots]
            boxes.exchange(0.0, Y[:, sc.n : sc.n + sc.k] - 0.05, rng.normal(size=(sc.N, sc.k)))
            a = _dubins_rhs_kernel(team, boxes, Y, sc.guidance)
            b = _dubins_rhs_generic(team, boxes, Y, sc.guidance)
            for field in ("rate", "chi", "inputs", "sigma", "theta_dot_d", "w_dot"):
                np.testing.assert_allclose(getattr(a, field), getattr(b, field), atol=1e-12)


def test_lyapunov_diagnostics():
    sc = build(small("sim1_scaled", duration_s=3.0))
    team = Team(sc)
    res = integrate(sc, decimate=1)
    # at e = 0 both vanish
    X = np.array([r.dset.lift(i * 2 * math.pi / 20) for i, r in enumerate(sc.robots)])
    assert team.lyapunov(X) == pytest.approx(0.0, abs=1e-20)
    assert team.lyapunov_rate(X) == pytest.approx(0.0, abs=1e-20)
    frames = res.frames
    # skip the first second: fast transients there swamp the O(step^2) difference error
    for m in np.linspace(1000, len(frames) - 2, 100).astype(int):
        d = lyapunov(sc, frames[m], frames[m - 1], frames[m + 1], team=team)
        assert d.V == pytest.approx(frames[m].V)
        assert abs(d.Vdot_discrete - d.Vdot) < 10 * sc.step
    assert max_increase(res.V_steps) <= 1e-9
