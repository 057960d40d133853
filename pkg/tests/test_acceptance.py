"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
"""

import copy
import math
import sys
import time

import numpy as np
import pytest
import test_presets
from oracles import projection_by_enumeration
from test_field import wedge_field

from cgvf.diagnostics import lyapunov, max_increase
from cgvf.field import FieldConfig, path_field, surface_field, wedge
from cgvf.geometry import GainSet, catalog, catalog_names, expression_set
from cgvf.guidance import GuidanceConfig, corollary1_gain_bound, jacobian_chain
from cgvf.presets import preset_data
from cgvf.safety import SafetyConfig, qp1_rows, solve_projection
from cgvf.scenario import build
from cgvf.sim import RobotSpec, Scenario, Team, integrate
from cgvf.topology import CommGraph


def report(label, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    sys.__stdout__.write("\n" + line + "\n")
    sys.__stdout__.flush()
    assert ok, line


def scaled(name, **run):
    data = copy.deepcopy(preset_data(name))
    data["run"].update(run)
    return data


# ---------------------------------------------------------------------------


def test_criterion_1_path_coordination():
    data = scaled("sim1_scaled", decimate=10**9)
    integrate(build(scaled("sim1_scaled", duration_s=0.01)))  # compile outside the timed loop
    worst_phi = worst_edge = worst_rise = 0.0
    t0 = time.perf_counter()
    for seed in range(20):
        res = integrate(build(data, seed=seed))
        worst_phi = max(worst_phi, float(np.linalg.norm(res.final.phi, axis=1).max()))
        worst_edge = max(worst_edge, float(np.abs(res.final.edge_errors).max()))
        worst_rise = max(worst_rise, max_increase(res.V_steps))
    wall = time.perf_counter() - t0
    ok = worst_phi < 1e-2 and worst_edge < 1e-2 and worst_rise <= 1e-9 and wall < 30.0
    report(
        "1 path coordination (20 seeds, N=10, 40 s)",
        ok,
        f"max|Phi|={worst_phi:.2e}, max edge={worst_edge:.2e}, max dV/step={worst_rise:.1e}, wall={wall:.1f} s",
    )


def test_criterion_2_surface_coordination():
    data = scaled("sim4", duration_s=40.0, decimate=100)
    data["robots"]["count"] = 8
    data["coordination"]["delta_reference"] = {"period": 2 * math.pi, "divisions": 8}
    sc = build(data)
    res = integrate(sc)
    fin = res.final
    phi = float(np.linalg.norm(fin.phi, axis=1).max())
    edge = np.abs(fin.edge_errors).max(axis=0)
    last = [f for f in res.frames if f.t >= sc.duration - 1.0 - 1e-9]
    wdot = np.array([f.inputs[:, sc.n : sc.n + sc.k] for f in last])
    speed_gap = float(np.abs(wdot - np.array(sc.desired_speeds)).max())
    ok = phi < 1e-2 and np.all(edge < 1e-2) and speed_gap < 1e-2 and len(last) >= 2
    report(
        "2 surface coordination (torus, N=8, 40 s)",
        ok,
        f"max|Phi|={phi:.2e}, edge w1={edge[0]:.2e}, w2={edge[1]:.2e}, max|w_dot - w_dot*| last 1 s={speed_gap:.2e}",
    )


def test_criterion_3_singularity_free():
    rng = np.random.default_rng(3)
    names = catalog_names()
    per = 100_000 // len(names)
    worst_norm, worst_ip = np.inf, 0.0
    count = 0
    for name in names:
        dset = catalog(name)
        gains = GainSet(tuple(rng.uniform(0.2, 5.0, dset.n)), (1.0,) * dset.k)
        cfg = FieldConfig(gains, (-1.0, -1.0) if dset.k == 2 else None)
        fn = path_field if dset.k == 1 else surface_field
        for _ in range(per):
            w = rng.uniform(-10, 10, dset.k)
            xi = dset.lift(w) + rng.normal(size=dset.n + dset.k) * 10 ** rng.uniform(-3, 3)
            fv = fn(dset, cfg, xi)
            worst_norm = min(worst_norm, float(np.linalg.norm(fv.vector)))
            p, c = fv.propagation, fv.convergence
            denom = float(np.linalg.norm(p) * np.linalg.norm(c))
            if denom > 0:
                worst_ip = max(worst_ip, abs(float(p @ c)) / denom)
            count += 1
    ok = count >= 100_000 and worst_norm >= 1 - 1e-12 and worst_ip < 1e-10
    report(
        "3 singularity-free field",
        ok,
        f"{count} states over {len(names)} sets, min|chi|={worst_norm:.15f}, max|p.c|/(|p||c|)={worst_ip:.1e}",
    )


def test_criterion_4_wedge_equivalence():
    rng = np.random.default_rng(4)
    names = catalog_names()
    worst_rel = 0.0
    for i in range(10_000):
        dset = catalog(names[i % len(names)])
        gains = GainSet(tuple(rng.uniform(0.2, 5.0, dset.n)), (1.0,) * dset.k)
        cfg = FieldConfig(gains, tuple(rng.uniform(-2, 2, 2)) if dset.k == 2 else None)
        xi = dset.lift(rng.uniform(-10, 10, dset.k)) + rng.normal(scale=3.0, size=dset.n + dset.k)
        closed = (path_field if dset.k == 1 else surface_field)(dset, cfg, xi).vector
        oracle = wedge_field(dset, cfg, xi)
        worst_rel = max(worst_rel, float(np.linalg.norm(closed - oracle) / np.linalg.norm(oracle)))
    worst_orth = 0.0
    for _ in range(10_000):
        m = int(rng.integers(1, 6))
        vecs = rng.normal(size=(m, m + 1)) * 10 ** rng.uniform(-2, 2, size=(m, 1))
        w = wedge(vecs)
        scale = float(np.linalg.norm(w) * np.linalg.norm(vecs, axis=1).max())
        worst_orth = max(worst_orth, float(np.abs(vecs @ w).max()) / scale)
    ok = worst_rel < 1e-12 and worst_orth < 1e-12
    report(
        "4 wedge vs closed form",
        ok,
        f"10000 states max rel err={worst_rel:.1e}, 10000 wedges (m<=5) max rel inner product={worst_orth:.1e}",
    )


def test_criterion_5_rate_identity():
    sc = build(scaled("sim1_scaled", decimate=1))
    team = Team(sc)
    res = integrate(sc)
    frames = res.frames
    # samples start after the first second, past the fast initial boundary layer
    idx = np.linspace(round(1.0 / sc.step), len(frames) - 2, 100).astype(int)
    gaps = []
    for m in idx:
        d = lyapunov(sc, frames[m], frames[m - 1], frames[m + 1], team=team)
        gaps.append(abs(d.Vdot_discrete - d.Vdot))
    worst_gap = max(gaps)
    rng = np.random.default_rng(5)
    violations = 0
    worst_dir = 0.0
    teams = [Team(build(preset_data(n))) for n in ("sim1_scaled", "sim3", "sim4")]
    for trial in range(10_000):
        tm = teams[trial % 3]
        X = np.array([r.initial for r in tm.sc.robots]) + rng.normal(scale=2.0, size=(tm.N, tm.n + tm.k))
        phi, _, _ = tm.errors(X)
        kphi = tm.K * phi
        vdot = tm.lyapunov_rate(X)
        violations += not vdot <= -float(np.sum(kphi * kphi))
        if trial % 100 == 0:
            # independent check: directional derivative of V along the closed-loop field
            chi = tm.base_field(X)
            chi[:, tm.n :] += tm.KC * tm.consensus_exact(X)
            eps = 1e-6
            num = (tm.lyapunov(X + eps * chi) - tm.lyapunov(X - eps * chi)) / (2 * eps)
            worst_dir = max(worst_dir, abs(num - vdot) / max(1.0, abs(vdot)))
    ok = worst_gap < 10 * sc.step and violations == 0 and worst_dir < 1e-5
    report(
        "5 Lyapunov rate identity",
        ok,
        f"100 samples max|discrete - analytic|={worst_gap:.1e} (< {10 * sc.step:g}), "
        f"inequality violations at 10000 states={violations}, directional-derivative rel gap={worst_dir:.1e}",
    )


def head_on(safety):
    left = expression_set(["3*cos(w) - 2", "3*sin(w)"])
    right = expression_set(["2 - 3*cos(w)", "3*sin(w)"])
    robots = [RobotSpec(s, (1.0, 1.0), s.lift([math.pi])) for s in (left, right)]
    cfg = SafetyConfig(1.0, 1.0, activation_scale=1.5) if safety else None
    return Scenario(robots, CommGraph(2, ()), np.zeros((0, 1)), (1.0,), safety=cfg, duration=6.0, step=1e-3, decimate=1)


def test_criterion_6_safety():
    safe_sc = head_on(True)
    safe = integrate(safe_sc)
    unsafe = integrate(head_on(False))

    def hmin(res):
        return min(float(np.sum((f.xi[0, :2] - f.xi[1, :2]) ** 2) - 1.0) for f in res.frames)

    h_safe, h_unsafe = hmin(safe), hmin(unsafe)
    worst_qp1 = -np.inf
    for f in safe.frames:
        A, b = qp1_rows(f.xi, safe_sc.safety, 2)
        if b.size:
            worst_qp1 = max(worst_qp1, float(np.max(A @ f.inputs.ravel() - b)))
    rng = np.random.default_rng(6)
    worst_qp = 0.0
    checked = 0
    while checked < 100:
        dim = int(rng.integers(2, 5))
        m = int(rng.integers(1, 6))
        A = rng.normal(size=(m, dim))
        b = A @ rng.normal(size=dim) + rng.uniform(0, 1, size=m)
        target = rng.normal(scale=2.0, size=dim)
        oracle = projection_by_enumeration(target, A, b)
        if oracle is None:
            continue
        res = solve_projection(target, A, b)
        worst_qp = max(worst_qp, float(np.abs(res.x - oracle).max()))
        checked += 1
    ok = h_safe >= -1e-3 and h_unsafe < -0.5 and worst_qp1 <= 1e-9 and worst_qp < 1e-6
    report(
        "6 safety (head-on, R=1, alpha=1)",
        ok,
        f"min h safe={h_safe:.3e}, unsafe={h_unsafe:.3f}, max QP1 residual of QP2 fields={worst_qp1:.1e}, "
        f"solver vs enumeration (100)={worst_qp:.1e}",
    )


def test_criterion_7_dubins():
    circle = catalog("circle", [200.0])
    gains = (0.01, 0.01)
    x0 = np.array([220.0, 0.0, 0.0])
    cfg = GuidanceConfig(15.0, 0.2, -0.5, 0.5)
    probe = Scenario(
        [RobotSpec(circle, gains, x0, 0.0)], CommGraph(1, ()), np.zeros((0, 1)), (1.0,), guidance=cfg, duration=0.0
    )
    chi0 = Team(probe).base_field(x0[None])[0]
    heading = math.atan2(chi0[1], chi0[0]) + 1.0
    sc = Scenario(
        [RobotSpec(circle, gains, x0, heading)],
        CommGraph(1, ()),
        np.zeros((0, 1)),
        (1.0,),
        guidance=cfg,
        duration=200.0,
        step=0.01,
        decimate=1,
    )
    res = integrate(sc)
    tr = res.guidance
    d = float(np.max(np.abs(tr.theta_dot_d)))
    bound = corollary1_gain_bound(d, cfg.sat_a, cfg.sat_b)
    saturated = int(tr.saturated.sum())
    sigma_T = float(abs(tr.sigma[-1, 0]))
    rise = float(np.max(np.diff(tr.V_sigma[:, 0])))
    team = Team(sc)
    worst_chain = 0.0
    # central differences are O(step^2); skip the first second, where w settles onto the fast manifold
    for s in np.linspace(round(1.0 / sc.step), len(res.frames) - 2, 200).astype(int):
        f = res.frames[s]
        xi = f.xi[0]
        chi = team.base_field(f.xi)[0]
        planar = math.hypot(chi[0], chi[1])
        w_dot = cfg.v * chi[2:] / planar
        xi_dot = np.array([cfg.v * math.cos(f.theta[0]), cfg.v * math.sin(f.theta[0]), *w_dot])
        chain = jacobian_chain(circle, team.S[0], team.K[0], team.KC, xi, xi_dot, w_dot, np.zeros((0, 1)), chi)
        fd = (tr.chi_p[s + 1, 0] - tr.chi_p[s - 1, 0]) / (2 * sc.step)
        worst_chain = max(worst_chain, float(np.abs(chain - fd).max()))
    ok = cfg.k_theta < bound and saturated == 0 and sigma_T < 0.01 and rise <= 1e-6 and worst_chain < 1e-4
    report(
        "7 Dubins guidance (circle R=200, v=15)",
        ok,
        f"d={d:.4f}, k_theta=0.2 < bound={bound:.4f}, saturated steps={saturated}, |sigma(T)|={sigma_T:.1e}, "
        f"max V_sigma rise={rise:.1e}, chain vs FD={worst_chain:.1e}",
    )


def test_criterion_8_preset_fidelity():
    checks = [
        test_presets.test_sim1_parameters,
        test_presets.test_sim2_parameters,
        test_presets.test_sim3_parameters,
        test_presets.test_sim4_parameters,
        test_presets.test_exp1_parameters,
        test_presets.test_exp2_parameters,
    ]
    failed = []
    for fn in checks:
        try:
            fn()
        except AssertionError as exc:
            failed.append(f"{fn.__name__}: {exc}")
    report(
        "8 preset parameter fidelity", not failed, "sim1-4, exp1, exp2 all match" if not failed else "; ".join(failed)
    )


@pytest.mark.parametrize("name", ["sim1", "sim4"])
def test_criterion_9_full_scale(name):
    sc = build(preset_data(name))
    t0 = time.perf_counter()
    res = integrate(sc)
    wall = time.perf_counter() - t0
    comp = res.final.composite
    ok = res.status == "ok" and res.final.t == pytest.approx(60.0) and wall < 300.0 and comp < 0.1
    report(f"9 full scale {name} (N={sc.N}, 60 s)", ok, f"composite={comp:.3e}, wall={wall:.1f} s")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
