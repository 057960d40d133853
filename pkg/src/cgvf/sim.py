"""Closed-loop simulation of a robot team.

Two engines share one telemetry format:

* a compiled fast path (single integrators, catalog sets, exact neighbor
  values, no safety filter) that runs the whole RK4/Euler loop in
  :mod:`cgvf.kernels`;
* a general step loop with mailboxes (zero-order hold, packet loss), the
  per-robot safety QP and the Dubins guidance law.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._jit import backend_name
from .coordination import Mailboxes, check_feasible, delta_matrix
from .field import FieldConfig, FieldError
from .geometry import EXPRESSION, MAX_KERNEL_PARAMS, DesiredSet, GainSet
from .guidance import (
    E_ROT,
    GuidanceConfig,
    SingularHeadingError,
    check_planar,
    field_rate,
    planar_component,
    planar_rate,
    saturate,
    signed_angle,
    theta_dot_desired,
    wrap_angle,
)
from .safety import SafetyConfig, safe_team_field
from .topology import CommGraph, incidence, is_connected, neighbor_lists

log = logging.getLogger(__name__)


class ScenarioError(ValueError):
    pass


@dataclass
class RobotSpec:
    dset: DesiredSet
    gains: tuple[float, ...]
    initial: np.ndarray
    heading: float | None = None


@dataclass
class Scenario:
    robots: list[RobotSpec]
    graph: CommGraph
    edge_deltas: np.ndarray
    k_c: tuple[float, ...]
    desired_speeds: tuple[float, float] | None = None
    extra_vector_tail: tuple[float, float] | None = None
    safety: SafetyConfig | None = None
    guidance: GuidanceConfig | None = None
    duration: float = 10.0
    step: float = 1e-3
    integrator: str = "rk4"
    comm_interval: float | None = None
    packet_loss: float = 0.0
    seed: int = 0
    decimate: int = 10
    name: str = "scenario"

    def __post_init__(self) -> None:
        if not self.robots:
            raise ScenarioError("scenario has no robots")
        ed = np.asarray(self.edge_deltas, dtype=float)
        if ed.ndim < 2:
            ed = ed.reshape(self.graph.edge_count, -1) if ed.size else ed.reshape(0, self.k)
        self.edge_deltas = ed
        self.validate()

    @property
    def N(self) -> int:
        return len(self.robots)

    @property
    def n(self) -> int:
        return self.robots[0].dset.n

    @property
    def k(self) -> int:
        return self.robots[0].dset.k

    def field_config(self, i: int) -> FieldConfig:
        return FieldConfig(GainSet(self.robots[i].gains, self.k_c), self.desired_speeds, self.extra_vector_tail)

    @property
    def comm_every(self) -> int:
        if self.comm_interval is None:
            return 1
        ratio = self.comm_interval / self.step
        every = round(ratio)
        if every < 1 or abs(ratio - every) > 1e-9 * max(1.0, ratio):
            raise ScenarioError(f"comm_interval {self.comm_interval} must be a whole multiple of the step {self.step}")
        return every

    @property
    def beyond_theory(self) -> bool:
        return self.comm_every > 1 or self.packet_loss > 0

    def validate(self) -> None:
        if not self.robots:
            raise ScenarioError("scenario has no robots")
        if self.graph.vertex_count != self.N:
            raise ScenarioError(f"graph has {self.graph.vertex_count} vertices for {self.N} robots")
        n, k = self.n, self.k
        for idx, r in enumerate(self.robots, 1):
            if (r.dset.n, r.dset.k) != (n, k):
                raise ScenarioError(f"robot {idx}: all robots must share n={n} and k={k}")
            if len(r.gains) != n:
                raise ScenarioError(f"robot {idx}: {len(r.gains)} gains for n={n}")
            r.initial = np.asarray(r.initial, dtype=float).reshape(-1)
            if r.initial.size != n + k:
                raise ScenarioError(f"robot {idx}: initial state has {r.initial.size} entries, need {n + k}")
        if len(self.k_c) != k:
            raise ScenarioError(f"need {k} coordination gains, got {len(self.k_c)}")
        if self.edge_deltas.shape[1] != k:
            raise ScenarioError(f"deltas have {self.edge_deltas.shape[1]} columns, need {k}")
        for i in range(self.N):
            try:
                self.field_config(i).propagation_coeff(n, k)
            except (FieldError, ValueError) as exc:
                raise ScenarioError(f"robot {i + 1}: {exc}") from None
        check_feasible(self.graph, self.edge_deltas)
        if self.step <= 0 or self.duration < 0:
            raise ScenarioError("step must be positive and duration non-negative")
        if self.integrator not in ("rk4", "euler"):
            raise ScenarioError(f"integrator must be 'rk4' or 'euler', got {self.integrator!r}")
        if self.decimate < 1:
            raise ScenarioError("decimate must be >= 1")
        if not 0 <= self.packet_loss <= 1:
            raise ScenarioError("packet_loss must lie in [0, 1]")
        _ = self.comm_every  # raises when the interval is not a whole number of steps
        if self.guidance is not None:
            if n not in (2, 3):
                raise ScenarioError("the Dubins model needs n = 2 or n = 3")
            if self.safety is not None and self.safety.enabled:
                raise ScenarioError("the safety filter is only available for single-integrator robots")
            if any(r.heading is None for r in self.robots):
                raise ScenarioError("every Dubins robot needs an initial heading")
        if self.safety is not None and self.safety.enabled:
            for i in range(self.N):
                for j in range(i + 1, self.N):
                    d = self.robots[i].initial[:n] - self.robots[j].initial[:n]
                    if d @ d < self.safety.R**2:
                        log.warning("robots %d and %d start inside the safety distance", i + 1, j + 1)


@dataclass
class TelemetryFrame:
    t: float
    xi: np.ndarray
    theta: np.ndarray | None
    phi: np.ndarray
    edge_errors: np.ndarray
    composite: float
    V: float
    inputs: np.ndarray
    h_min: float
    events: tuple[str, ...] = ()


@dataclass
class RunResult:
    frames: list[TelemetryFrame]
    V_steps: np.ndarray
    events: list[tuple[float, str]] = field(default_factory=list)
    status: str = "ok"
    engine: str = "general"
    backend: str = "numpy"
    guidance: DubinsTrace | None = None

    @property
    def final(self) -> TelemetryFrame:
        return self.frames[-1]


class Team:
    """Stacked per-robot data with grouped evaluation of the desired sets."""

    def __init__(self, sc: Scenario) -> None:
        self.sc = sc
        self.n, self.k, self.N = sc.n, sc.k, sc.N
        self.K = np.array([r.gains for r in sc.robots], dtype=float)
        self.S = np.array([sc.field_config(i).propagation_coeff(self.n, self.k) for i in range(self.N)])
        self.KC = np.asarray(sc.k_c, dtype=float)
        self.D = incidence(sc.graph)
        self.Edelta = sc.edge_deltas
        self.delta_mat = delta_matrix(sc.graph, sc.edge_deltas)
        self.nbrs = neighbor_lists(sc.graph)
        self.adj = sc.graph.adjacency().astype(float)
        groups: dict[int, list[int]] = {}
        self._sets: dict[int, DesiredSet] = {}
        for i, r in enumerate(sc.robots):
            groups.setdefault(id(r.dset), []).append(i)
            self._sets[id(r.dset)] = r.dset
        self.groups = [(self._sets[key], np.array(idx)) for key, idx in groups.items()]
        self.catalog_only = all(r.dset.kind != EXPRESSION for r in sc.robots)
        self.kinds = np.array([r.dset.kind for r in sc.robots], dtype=np.int64)
        self.P = np.zeros((self.N, MAX_KERNEL_PARAMS))
        for i, r in enumerate(sc.robots):
            self.P[i, : len(r.dset.kernel_params)] = r.dset.kernel_params

    def derivs(self, W):
        F = np.empty((self.N, self.n))
        D1 = np.empty((self.N, self.n, self.k))
        D2 = np.empty((self.N, self.n, self.k, self.k))
        for dset, idx in self.groups:
            f, d1, d2 = dset.derivs(W[idx])
            F[idx], D1[idx], D2[idx] = f, d1, d2
        return F, D1, D2

    def errors(self, X):
        W = X[:, self.n :]
        F, D1, _ = self.derivs(W)
        phi = X[:, : self.n] - F
        E = self.D.T @ W - self.Edelta
        return phi, E, D1

    def base_field(self, X):
        """Uncoordinated field per robot plus the Phi and D1 it used."""
        n = self.n
        phi, _, D1 = self.errors(X)
        kphi = self.K * phi
        sign = (-1.0) ** n
        chi = np.empty_like(X)
        chi[:, :n] = sign * np.einsum("ijm,im->ij", D1, self.S) - kphi
        chi[:, n:] = sign * self.S + np.einsum("ijm,ij->im", D1, kphi)
        return chi

    def consensus_exact(self, X):
        E = self.D.T @ X[:, self.n :] - self.Edelta
        return -self.D @ E

    def lyapunov(self, X) -> float:
        phi, E, _ = self.errors(X)
        return 0.5 * float(np.sum(self.K * phi * phi) + np.sum(self.KC * np.sum(E * E, axis=0)))

    def lyapunov_rate(self, X) -> float:
        """Closed-form dV/dt for exact neighbor values."""
        phi, E, D1 = self.errors(X)
        kphi = self.K * phi
        g = np.einsum("ijm,ij->im", D1, kphi)
        r = g - self.KC * (self.D @ E)
        return float(-np.sum(kphi * kphi) - np.sum(r * r))


def fast_path_eligible(sc: Scenario) -> bool:
    return (
        sc.guidance is None
        and (sc.safety is None or not sc.safety.enabled)
        and not sc.beyond_theory
        and all(r.dset.kind != EXPRESSION for r in sc.robots)
    )


def integrate(sc: Scenario, decimate: int | None = None, force_general: bool = False) -> RunResult:
    """Run the scenario; frames every ``decimate`` steps plus the final one."""
    decim = sc.decimate if decimate is None else int(decimate)
    if decim < 1:
        raise ScenarioError("decimate must be >= 1")
    team = Team(sc)
    if sc.k_c and not is_connected(sc.graph):
        log.warning("communication graph is disconnected; coordination cannot converge")
    if fast_path_eligible(sc) and not force_general:
        result = _run_fast(sc, team, decim)
    elif sc.guidance is not None:
        result = _run_dubins(sc, team, decim)
    else:
        result = _run_single(sc, team, decim)
    result.backend = backend_name()
    if sc.beyond_theory:
        result.events.insert(0, (0.0, "beyond-theory: communication is delayed or lossy"))
    return result


def _nsteps(sc: Scenario) -> int:
    return round(sc.duration / sc.step)


def _frame(team: Team, t, X, inputs, theta=None, events=()) -> TelemetryFrame:
    sc = team.sc
    phi, E, _ = team.errors(X)
    comp = math.sqrt(float(np.sum(phi * phi) + np.sum(E * E)))
    h_min = float("nan")
    if sc.safety is not None and sc.N > 1:
        P = X[:, : team.n]
        d2 = np.sum((P[:, None, :] - P[None, :, :]) ** 2, axis=2)
        iu = np.triu_indices(sc.N, 1)
        h_min = float(np.min(d2[iu]) - sc.safety.R**2)
    return TelemetryFrame(
        float(t),
        X.copy(),
        None if theta is None else np.asarray(theta, dtype=float).copy(),
        phi,
        E,
        comp,
        team.lyapunov(X),
        np.asarray(inputs, dtype=float).copy(),
        h_min,
        tuple(events),
    )


def _run_fast(sc: Scenario, team: Team, decim: int) -> RunResult:
    X0 = np.array([r.initial for r in sc.robots], dtype=float)
    nsteps = _nsteps(sc)
    args = (team.kinds, team.P, team.K, team.S, team.KC, team.D, np.ascontiguousarray(team.Edelta), team.n)
    frames, fsteps, V, done = kernels.integrate_fast(X0, *args, float(sc.step), nsteps, sc.integrator == "rk4", decim)
    out = []
    for X, s in zip(frames, fsteps):
        chi = team.base_field(X)
        chi[:, team.n :] += team.KC * team.consensus_exact(X)
        out.append(_frame(team, s * sc.step, X, chi))
    res = RunResult(out, np.asarray(V), engine="fast")
    if done < nsteps:
        res.status = f"aborted: non-finite state after step {done}"
        res.events.append((done * sc.step, res.status))
    return res


def _run_single(sc: Scenario, team: Team, decim: int) -> RunResult:
    n = team.n
    X = np.array([r.initial for r in sc.robots], dtype=float)
    boxes = Mailboxes(sc.graph, team.k, sc.comm_every, sc.packet_loss, np.random.default_rng(sc.seed))
    safety_on = sc.safety is not None and sc.safety.enabled
    events: list[tuple[float, str]] = []
    info: dict = {}

    def rhs(Y, keep=False):
        chi = team.base_field(Y)
        c = team.consensus_exact(Y) if boxes.fresh else boxes.consensus_all(Y[:, n:], team.delta_mat)
        chi[:, n:] += team.KC * c
        if not safety_on:
            return chi
        chi_safe, active, _, infeasible = safe_team_field(chi, Y, sc.safety, n)
        if keep:
            info.update(active=active, infeasible=infeasible)
        return chi_safe

    nsteps = _nsteps(sc)
    V = np.full(nsteps + 1, np.nan)
    frames: list[TelemetryFrame] = []
    status = "ok"
    boxes.exchange(0.0, X[:, n:])
    for s in range(nsteps + 1):
        t = s * sc.step
        if s > 0 and boxes.due(s):
            boxes.exchange(t, X[:, n:])
        k1 = rhs(X, keep=True)
        V[s] = team.lyapunov(X)
        step_events = []
        if safety_on:
            if info["infeasible"]:
                step_events.append("qp-infeasible")
            speed = np.linalg.norm(k1[:, :n], axis=1)
            if np.any((info["active"] > 0) & (speed < 1e-6)):
                step_events.append("deadlock")
        events.extend((t, e) for e in step_events)
        if s % decim == 0 or s == nsteps:
            frames.append(_frame(team, t, X, k1, events=step_events))
            if safety_on and frames[-1].h_min < -1e-3 * sc.safety.R**2:
                events.append((t, f"safety-violation h={frames[-1].h_min:.3g}"))
        if s == nsteps:
            break
        if sc.integrator == "rk4":
            k2 = rhs(X + 0.5 * sc.step * k1)
            k3 = rhs(X + 0.5 * sc.step * k2)
            k4 = rhs(X + sc.step * k3)
            Xn = X + sc.step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            Xn = X + sc.step * k1
        if not np.all(np.isfinite(Xn)):
            status = f"aborted: non-finite state after step {s}"
            events.append((t, status))
            if frames[-1].t != t:
                frames.append(_frame(team, t, X, k1))
            break
        X = Xn
    return RunResult(frames, V[~np.isnan(V)], events, status, engine="general")


@dataclass
class _DubinsEval:
    rate: np.ndarray
    chi: np.ndarray
    inputs: np.ndarray
    sigma: np.ndarray
    theta_dot_d: np.ndarray
    saturated: np.ndarray
    w_dot: np.ndarray


def _dubins_rhs(team: Team, boxes: Mailboxes, Y, cfg: GuidanceConfig) -> _DubinsEval:
    """Derivative of ``Y = [xi | theta]`` for every robot."""
    if team.catalog_only:
        return _dubins_rhs_kernel(team, boxes, Y, cfg)
    return _dubins_rhs_generic(team, boxes, Y, cfg)


def _dubins_rhs_kernel(team: Team, boxes: Mailboxes, Y, cfg: GuidanceConfig) -> _DubinsEval:
    rate, inputs, sigma, tdd, sat, chi, w_dot, singular = kernels.dubins_rates(
        np.ascontiguousarray(Y),
        team.kinds,
        team.P,
        team.K,
        team.S,
        team.KC,
        team.D,
        np.ascontiguousarray(team.Edelta),
        team.n,
        team.adj,
        boxes.held,
        boxes.held_dot,
        team.delta_mat,
        boxes.fresh,
        cfg.v,
        cfg.k_theta,
        cfg.sat_a,
        cfg.sat_b,
        cfg.gamma_floor,
    )
    if singular:
        i = singular - 1
        check_planar(chi[i], cfg.gamma_floor)
    return _DubinsEval(rate, chi, inputs, sigma, tdd, sat, w_dot)


def _dubins_rhs_generic(team: Team, boxes: Mailboxes, Y, cfg: GuidanceConfig) -> _DubinsEval:
    n, k, N = team.n, team.k, team.N
    X = Y[:, : n + k]
    theta = Y[:, n + k]
    chi = team.base_field(X)
    c = team.consensus_exact(X) if boxes.fresh else boxes.consensus_all(X[:, n:], team.delta_mat)
    chi[:, n:] += team.KC * c
    planar = np.empty(N)
    for i in range(N):
        planar[i] = math.sqrt(check_planar(chi[i], cfg.gamma_floor))
    w_dot = cfg.v * chi[:, n:] / planar[:, None]
    u_z = cfg.v * chi[:, 2] / planar if n == 3 else np.zeros(N)
    rate = np.empty_like(Y)
    rate[:, 0] = cfg.v * np.cos(theta)
    rate[:, 1] = cfg.v * np.sin(theta)
    if n == 3:
        rate[:, 2] = u_z
    rate[:, n : n + k] = w_dot
    inputs = np.empty((N, 2 + k))
    sig = np.empty(N)
    tdd = np.empty(N)
    sat = np.zeros(N, dtype=bool)
    for i in range(N):
        nb = team.nbrs[i]
        held = w_dot[nb] if boxes.fresh else boxes.held_dot[i, nb]
        dset = team.sc.robots[i].dset
        chi_dot = field_rate(dset, team.S[i], team.K[i], team.KC, X[i], rate[i, : n + k], w_dot[i], held)
        chi_p, unit = planar_component(chi[i])
        td = theta_dot_desired(chi_p, planar_rate(chi[i], chi_dot))
        h = np.array([math.cos(theta[i]), math.sin(theta[i])])
        raw = td - cfg.k_theta * float(h @ E_ROT @ unit)
        u = saturate(raw, cfg.sat_a, cfg.sat_b)
        sat[i] = u != raw
        rate[i, n + k] = u
        sig[i] = signed_angle(h, unit)
        tdd[i] = td
        inputs[i, 0] = u
        inputs[i, 1] = u_z[i]
        inputs[i, 2:] = w_dot[i]
    return _DubinsEval(rate, chi, inputs, sig, tdd, sat, w_dot)


def _run_dubins(sc: Scenario, team: Team, decim: int) -> RunResult:
    n, k = team.n, team.k
    cfg = sc.guidance
    Y = np.zeros((sc.N, n + k + 1))
    Y[:, : n + k] = [r.initial for r in sc.robots]
    Y[:, n + k] = [wrap_angle(r.heading) for r in sc.robots]
    events: list[tuple[float, str]] = []
    boxes = Mailboxes(sc.graph, k, sc.comm_every, sc.packet_loss, np.random.default_rng(sc.seed))
    boxes.exchange(0.0, Y[:, n : n + k])
    nsteps = _nsteps(sc)
    V = np.full(nsteps + 1, np.nan)
    trace = DubinsTrace(sc.N, nsteps)
    frames: list[TelemetryFrame] = []
    status = "ok"
    for s in range(nsteps + 1):
        t = s * sc.step
        try:
            ev = _dubins_rhs(team, boxes, Y, cfg)
            if s == 0:
                for i in np.flatnonzero(np.abs(ev.sigma) == math.pi):
                    Y[i, n + k] = wrap_angle(Y[i, n + k] + 1e-9)
                    events.append((0.0, f"robot {i + 1}: heading opposite the field, perturbed by 1e-9 rad"))
                boxes.exchange(0.0, Y[:, n : n + k], ev.w_dot)
                ev = _dubins_rhs(team, boxes, Y, cfg)
            elif boxes.due(s):
                boxes.exchange(t, Y[:, n : n + k], ev.w_dot)
                ev = _dubins_rhs(team, boxes, Y, cfg)
        except SingularHeadingError as exc:
            status = f"aborted: {exc}"
            events.append((t, status))
            break
        trace.record(s, Y, ev)
        V[s] = team.lyapunov(Y[:, : n + k])
        step_events = []
        if ev.saturated.any():
            step_events.append("saturated:" + ",".join(str(i + 1) for i in np.flatnonzero(ev.saturated)))
            # the convergence argument during saturation needs u_theta and sigma of opposite signs
            if np.any(ev.saturated & (ev.sigma * ev.inputs[:, 0] > 0)):
                step_events.append("saturation-sign-warning")
        events.extend((t, e) for e in step_events)
        if s % decim == 0 or s == nsteps:
            frames.append(_frame(team, t, Y[:, : n + k], ev.inputs, Y[:, n + k], step_events))
        if s == nsteps:
            break
        try:
            if sc.integrator == "rk4":
                k1 = ev.rate
                k2 = _dubins_rhs(team, boxes, Y + 0.5 * sc.step * k1, cfg).rate
                k3 = _dubins_rhs(team, boxes, Y + 0.5 * sc.step * k2, cfg).rate
                k4 = _dubins_rhs(team, boxes, Y + sc.step * k3, cfg).rate
                Yn = Y + sc.step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            else:
                Yn = Y + sc.step * ev.rate
        except SingularHeadingError as exc:
            status = f"aborted: {exc}"
            events.append((t, status))
            break
        if not np.all(np.isfinite(Yn)):
            status = f"aborted: non-finite state after step {s}"
            events.append((t, status))
            break
        Y = Yn
        Y[:, n + k] = [wrap_angle(a) for a in Y[:, n + k]]
    if status != "ok" and (not frames or frames[-1].t != t):
        frames.append(_frame(team, t, Y[:, : n + k], np.zeros((sc.N, 2 + k)), Y[:, n + k]))
    res = RunResult(frames, V[~np.isnan(V)], events, status, engine="general")
    res.guidance = trace
    return res


class DubinsTrace:
    """Per-step guidance signals, evaluated at the start of each step."""

    def __init__(self, N: int, nsteps: int) -> None:
        self.sigma = np.full((nsteps + 1, N), np.nan)
        self.theta_dot_d = np.full((nsteps + 1, N), np.nan)
        self.u_theta = np.full((nsteps + 1, N), np.nan)
        self.saturated = np.zeros((nsteps + 1, N), dtype=bool)
        self.V_sigma = np.full((nsteps + 1, N), np.nan)
        self.chi_p = np.full((nsteps + 1, N, 2), np.nan)

    def record(self, s: int, Y, ev: _DubinsEval) -> None:
        k = ev.w_dot.shape[1]
        n = Y.shape[1] - k - 1
        self.sigma[s] = ev.sigma
        self.theta_dot_d[s] = ev.theta_dot_d
        self.u_theta[s] = ev.inputs[:, 0]
        self.saturated[s] = ev.saturated
        planar = np.hypot(ev.chi[:, 0], ev.chi[:, 1])[:, None]
        self.chi_p[s] = ev.chi[:, :2] / np.linalg.norm(ev.chi, axis=1)[:, None]
        diff = np.column_stack([np.cos(Y[:, n + k]), np.sin(Y[:, n + k])]) - ev.chi[:, :2] / planar
        self.V_sigma[s] = 0.5 * np.sum(diff * diff, axis=1)
