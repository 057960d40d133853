"""Scenario files (TOML) and their translation into :class:`cgvf.sim.Scenario`.

Schema, all sections optional except ``[robots]``::

    name = "demo"

    [run]
    duration_s = 40.0      step_s = 0.001      integrator = "rk4"
    decimate = 10          seed = 0

    [graph]
    cycle = true           # or: edges = [[1, 2], [2, 3]]

    [coordination]
    k_c = [50.0]           # one gain per parameter
    delta_reference = {period = 6.283185307179586, divisions = 20}
    # or delta_reference = [0.0, 0.3, ...]      (k=1)   / [[w1, w2], ...] (k=2)
    # or delta_reference = {pattern = "letters", text = "GVF"}   (k=2)
    # or deltas = {"1-2" = -0.5, "2-3" = -0.5}
    desired_speeds = [-1.0, -1.0]   # surfaces only
    comm_interval_s = 0.001
    packet_loss = 0.0

    [robots]
    count = 10
    set = "bent_infinity"  params = []    # or expr = ["cos(w)", "sin(w)"]
    gains = [1.0, 1.0, 1.0]
    initial = "random"     # or a list of per-robot states
    position_spread = 5.0  virtual_spread = 1.0
    headings = "aligned"   # Dubins only: a list, "aligned" with the field, or random

    [[robots.group]]       # consecutive blocks with their own set/params/gains
    count = 7
    set = "circle"
    params = [10.0]

    [safety]
    enabled = true   R = 1.0   alpha = 1.0   activation_scale = 1.5

    [guidance]
    model = "dubins"   v = 15.0   k_theta = 0.2   sat = [-0.5, 0.5]
"""

from __future__ import annotations

import itertools
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .coordination import (
    CoordinationError,
    deltas_from_map,
    deltas_from_reference,
    infeasible_cycle,
)
from .geometry import (
    DesiredSet,
    GeometryError,
    catalog,
    check_derivatives,
    expression_set,
)
from .guidance import GuidanceConfig, GuidanceError
from .safety import SafetyConfig, SafetyError
from .sim import RobotSpec, Scenario, ScenarioError, Team
from .topology import CommGraph, GraphError, build_cycle, is_connected


class ScenarioParseError(ScenarioError):
    pass


_SECTIONS = {"name", "description", "run", "graph", "coordination", "robots", "safety", "guidance"}


def parse_text(text: str, source: str = "<string>") -> dict[str, Any]:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioParseError(f"{source}: {exc}") from None
    unknown = set(data) - _SECTIONS
    if unknown:
        raise ScenarioParseError(f"{source}: unknown top-level keys {sorted(unknown)}")
    return data


def load_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_text(text, str(path))


def load_scenario(path: str | Path, seed: int | None = None) -> Scenario:
    data = load_file(path)
    return build(data, seed=seed, default_name=Path(path).stem)


# ---------------------------------------------------------------------------


def _get(table: dict, key: str, default, kind=None, where: str = ""):
    val = table.get(key, default)
    if kind is not None and val is not None and not isinstance(val, kind):
        raise ScenarioError(f"{where}{key} should be {getattr(kind, '__name__', kind)}, got {val!r}")
    return val


def _make_set(tab: dict, where: str) -> DesiredSet:
    if "expr" in tab:
        try:
            return expression_set(tab["expr"], name=tab.get("set", "expression"))
        except GeometryError as exc:
            raise ScenarioError(f"{where}: {exc}") from None
    name = tab.get("set")
    if name is None:
        raise ScenarioError(f"{where}: need either 'set' or 'expr'")
    try:
        return catalog(name, tab.get("params", []))
    except GeometryError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


@dataclass
class _Blocks:
    sets: list[DesiredSet] = field(default_factory=list)
    gains: list[tuple[float, ...]] = field(default_factory=list)


def _robot_blocks(rob: dict) -> _Blocks:
    out = _Blocks()
    groups = rob.get("group")
    if groups:
        for g_idx, grp in enumerate(groups, 1):
            merged = {k: v for k, v in rob.items() if k in ("set", "params", "expr", "gains")}
            if "expr" in grp or "set" in grp:
                merged.pop("expr", None)
                merged.pop("set", None)
                merged.pop("params", None)
            merged.update(grp)
            dset = _make_set(merged, f"robots.group[{g_idx}]")
            count = int(grp.get("count", 1))
            gains = tuple(float(x) for x in merged.get("gains", [1.0] * dset.n))
            out.sets += [dset] * count
            out.gains += [gains] * count
        if "count" in rob and int(rob["count"]) != len(out.sets):
            raise ScenarioError(f"robots.count = {rob['count']} but groups define {len(out.sets)} robots")
        return out
    count = int(rob.get("count", 1))
    dset = _make_set(rob, "robots")
    gains = tuple(float(x) for x in rob.get("gains", [1.0] * dset.n))
    out.sets = [dset] * count
    out.gains = [gains] * count
    return out


def _graph(data: dict, N: int) -> CommGraph:
    g = data.get("graph", {"cycle": True})
    try:
        if "edges" in g:
            return CommGraph.from_edges(N, g["edges"])
        if g.get("cycle", True):
            return build_cycle(N) if N >= 2 else CommGraph(N, ())
        return CommGraph(N, ())
    except GraphError as exc:
        raise ScenarioError(f"graph: {exc}") from None


def reference_points(spec, N: int, k: int) -> np.ndarray:
    """Reference configuration ``w*`` as an (N, k) array."""
    if isinstance(spec, dict):
        if "pattern" in spec:
            if spec["pattern"] != "letters" or k != 2:
                raise ScenarioError("only pattern = 'letters' on surfaces (k=2) is supported")
            return letter_pattern(
                spec.get("text", "GVF"),
                N,
                tube_span=float(spec.get("tube_span", 2.0)),
                azimuth_span=float(spec.get("azimuth_span", 4.0)),
            )
        period = float(spec.get("period", 2.0 * math.pi))
        divisions = float(spec.get("divisions", N))
        start = float(spec.get("start", 0.0))
        col = start + np.arange(N) * (period / divisions)
        return np.repeat(col[:, None], k, axis=1)
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape != (N, k):
        raise ScenarioError(f"delta_reference has shape {arr.shape}, expected ({N}, {k})")
    return arr


def _deltas(coord: dict, graph: CommGraph, N: int, k: int) -> tuple[np.ndarray, np.ndarray | None]:
    if "deltas" in coord and "delta_reference" in coord:
        raise ScenarioError("give either coordination.deltas or coordination.delta_reference, not both")
    if "deltas" in coord:
        mapping = {}
        for key, val in coord["deltas"].items():
            try:
                a, b = (int(x) for x in key.replace(",", "-").split("-"))
            except ValueError:
                raise ScenarioError(f"coordination.deltas key {key!r} should look like '1-2'") from None
            mapping[a, b] = val
        try:
            ed = deltas_from_map(graph, mapping).reshape(graph.edge_count, -1)
        except CoordinationError as exc:
            raise ScenarioError(f"coordination.deltas: {exc}") from None
        if graph.edge_count and ed.shape[1] != k:
            raise ScenarioError(f"coordination.deltas need {k} values per edge")
        return ed.reshape(graph.edge_count, k), None
    ref = reference_points(coord.get("delta_reference", [[0.0] * k] * N), N, k)
    return deltas_from_reference(graph, ref), ref


def _initial_states(rob: dict, sets: list[DesiredSet], ref: np.ndarray | None, rng) -> list[np.ndarray]:
    init = rob.get("initial", "random")
    N = len(sets)
    n, k = sets[0].n, sets[0].k
    if isinstance(init, str):
        if init != "random":
            raise ScenarioError(f"robots.initial must be 'random' or a list of states, got {init!r}")
        pos = float(rob.get("position_spread", 1.0))
        virt = float(rob.get("virtual_spread", 0.5))
        base = ref if ref is not None else np.zeros((N, k))
        out = []
        for i in range(N):
            w0 = base[i] + virt * rng.standard_normal(k)
            x0 = sets[i].eval(w0) + pos * rng.standard_normal(n)
            out.append(np.concatenate([x0, w0]))
        return out
    arr = [np.asarray(s, dtype=float) for s in init]
    if len(arr) != N:
        raise ScenarioError(f"robots.initial lists {len(arr)} states for {N} robots")
    return arr


def build(data: dict, seed: int | None = None, default_name: str = "scenario") -> Scenario:
    run = data.get("run", {})
    seed = int(run.get("seed", 0)) if seed is None else int(seed)
    rng = np.random.default_rng(seed)
    rob = data.get("robots")
    if not rob:
        raise ScenarioError("scenario needs a [robots] section")
    blocks = _robot_blocks(rob)
    N = len(blocks.sets)
    if N == 0:
        raise ScenarioError("scenario has no robots")
    k = blocks.sets[0].k
    graph = _graph(data, N)
    coord = data.get("coordination", {})
    edge_deltas, ref = _deltas(coord, graph, N, k)
    k_c = tuple(float(x) for x in np.atleast_1d(coord.get("k_c", [1.0] * k)))
    states = _initial_states(rob, blocks.sets, ref, rng)
    guid = data.get("guidance", {})
    gcfg = None
    headings = [None] * N
    if guid.get("model", "single_integrator") == "dubins":
        sat = guid.get("sat", [-0.5, 0.5])
        try:
            gcfg = GuidanceConfig(
                float(guid.get("v", 15.0)),
                float(guid.get("k_theta", 0.2)),
                float(sat[0]),
                float(sat[1]),
                float(guid.get("gamma_floor", 1e-6)),
            )
        except GuidanceError as exc:
            raise ScenarioError(f"guidance: {exc}") from None
        hd = rob.get("headings")
        if hd == "aligned":
            headings = [0.0] * N
        elif isinstance(hd, str):
            raise ScenarioError(f"robots.headings must be a list or 'aligned', got {hd!r}")
        else:
            headings = list(map(float, hd)) if hd is not None else list(rng.uniform(-math.pi, math.pi, N))
        if len(headings) != N:
            raise ScenarioError(f"robots.headings lists {len(headings)} values for {N} robots")
    elif guid.get("model", "single_integrator") != "single_integrator":
        raise ScenarioError(f"guidance.model must be 'single_integrator' or 'dubins', got {guid['model']!r}")
    saf = data.get("safety")
    scfg = None
    if saf is not None and saf.get("enabled", True):
        try:
            scfg = SafetyConfig(
                float(saf.get("R", 1.0)),
                float(saf.get("alpha", 1.0)),
                float(saf.get("activation_scale", 1.0)),
            )
        except SafetyError as exc:
            raise ScenarioError(f"safety: {exc}") from None
    speeds = coord.get("desired_speeds")
    robots = [RobotSpec(blocks.sets[i], blocks.gains[i], states[i], headings[i]) for i in range(N)]
    try:
        sc = Scenario(
            robots=robots,
            graph=graph,
            edge_deltas=edge_deltas,
            k_c=k_c,
            desired_speeds=tuple(float(x) for x in speeds) if speeds is not None else None,
            safety=scfg,
            guidance=gcfg,
            duration=float(run.get("duration_s", 10.0)),
            step=float(run.get("step_s", 1e-3)),
            integrator=str(run.get("integrator", "rk4")),
            comm_interval=float(coord["comm_interval_s"]) if "comm_interval_s" in coord else None,
            packet_loss=float(coord.get("packet_loss", 0.0)),
            seed=seed,
            decimate=int(run.get("decimate", 10)),
            name=str(data.get("name", default_name)),
        )
    except (CoordinationError, GeometryError) as exc:
        raise ScenarioError(str(exc)) from None
    if gcfg is not None and rob.get("headings") == "aligned":
        _align_headings(sc)
    return sc


def _align_headings(sc: Scenario) -> None:
    """Point every vehicle along the planar direction of its initial field."""
    team = Team(sc)
    X = np.array([r.initial for r in sc.robots])
    chi = team.base_field(X)
    chi[:, sc.n :] += team.KC * team.consensus_exact(X)
    for r, c in zip(sc.robots, chi):
        r.heading = math.atan2(c[1], c[0])


# ---------------------------------------------------------------------------
# validation checklist


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


def validate(data: dict) -> list[Check]:
    """Pre-run checklist; never raises for scenario problems."""
    checks: list[Check] = []
    rob = data.get("robots") or {}
    try:
        blocks = _robot_blocks(rob)
        sets_ok = bool(blocks.sets)
        checks.append(Check("desired sets", sets_ok, f"{len(blocks.sets)} robots"))
    except (ScenarioError, ValueError, TypeError) as exc:
        checks.append(Check("desired sets", False, str(exc)))
        return checks
    if not sets_ok:
        return checks
    N = len(blocks.sets)
    n, k = blocks.sets[0].n, blocks.sets[0].k
    same = all((s.n, s.k) == (n, k) for s in blocks.sets)
    checks.append(Check("shared dimensions", same, f"n={n}, k={k}"))
    coord = data.get("coordination", {})
    k_c = list(np.atleast_1d(coord.get("k_c", [1.0] * k)))
    gains_ok = all(g > 0 for gains in blocks.gains for g in gains) and all(g > 0 for g in k_c)
    gains_ok &= all(len(g) == s.n for g, s in zip(blocks.gains, blocks.sets)) and len(k_c) == k
    checks.append(
        Check(
            "gain positivity",
            gains_ok,
            "all gains strictly positive" if gains_ok else "a gain is not positive or has the wrong count",
        )
    )
    try:
        graph = _graph(data, N)
        conn = is_connected(graph)
        checks.append(
            Check(
                "Assumption 1",
                conn,
                f"connected undirected graph, {graph.edge_count} edges"
                if conn
                else "communication graph is disconnected",
            )
        )
    except ScenarioError as exc:
        checks.append(Check("Assumption 1", False, str(exc)))
        return checks
    # bounded derivatives, sampled on a parameter box
    rng = np.random.default_rng(0)
    worst_fd, worst_mag = 0.0, 0.0
    for dset in {id(s): s for s in blocks.sets}.values():
        w = rng.uniform(-10, 10, size=(64, dset.k))
        worst_fd = max(worst_fd, check_derivatives(dset, w))
        _, d1, d2 = dset.derivs(w)
        worst_mag = max(worst_mag, float(np.max(np.abs(d1))), float(np.max(np.abs(d2))))
    bounded = np.isfinite(worst_mag) and worst_fd < 1e-4 * max(1.0, worst_mag)
    checks.append(
        Check("Assumptions 2/3", bool(bounded), f"sampled derivative bound {worst_mag:.3g}, fd gap {worst_fd:.2g}")
    )
    try:
        ed, _ = _deltas(coord, graph, N, k)
        bad = infeasible_cycle(graph, ed)
        if bad is None:
            checks.append(Check("delta feasibility", True))
        else:
            cyc, res = bad
            loop = " -> ".join(map(str, cyc + cyc[:1]))
            checks.append(Check("delta feasibility", False, f"cycle {loop} sums to {res:.6g}"))
    except ScenarioError as exc:
        checks.append(Check("delta feasibility", False, str(exc)))
    if k == 2:
        speeds = coord.get("desired_speeds")
        ok = speeds is not None and len(speeds) == 2 and any(float(s) != 0 for s in speeds)
        checks.append(Check("surface propagation", ok, "desired speeds set, not both zero"))
    if "comm_interval_s" in coord or coord.get("packet_loss", 0):
        checks.append(
            Check("exact neighbor information", False, "delayed or lossy links are outside the convergence guarantee")
        )
    try:
        build(data)
        checks.append(Check("scenario builds", True))
    except (ScenarioError, ValueError) as exc:
        checks.append(Check("scenario builds", False, str(exc)))
    return checks


# ---------------------------------------------------------------------------
# letter pattern for surface formations

_GLYPHS: dict[str, list[list[tuple[float, float]]]] = {
    "A": [[(0, 0), (0.5, 1), (1, 0)], [(0.25, 0.5), (0.75, 0.5)]],
    "C": [[(1, 1), (0, 1), (0, 0), (1, 0)]],
    "F": [[(1, 1), (0, 1), (0, 0)], [(0, 0.5), (0.7, 0.5)]],
    "G": [[(1, 1), (0, 1), (0, 0), (1, 0), (1, 0.5), (0.5, 0.5)]],
    "I": [[(0.5, 0), (0.5, 1)], [(0.1, 1), (0.9, 1)], [(0.1, 0), (0.9, 0)]],
    "L": [[(0, 1), (0, 0), (1, 0)]],
    "R": [[(0, 0), (0, 1), (1, 1), (1, 0.5), (0, 0.5), (1, 0)]],
    "T": [[(0, 1), (1, 1)], [(0.5, 1), (0.5, 0)]],
    "V": [[(0, 1), (0.5, 0), (1, 1)]],
}


def letter_pattern(text: str, count: int, tube_span: float = 2.0, azimuth_span: float = 4.0) -> np.ndarray:
    """``count`` points spread evenly by arc length over block-letter strokes.

    Letters sit side by side in a box ``[0, 1.5 len - 0.5] x [0, 1]`` that is
    scaled to ``azimuth_span`` (second parameter) by ``tube_span`` (first
    parameter), centred on zero.
    """
    strokes = []
    for pos, ch in enumerate(text.upper()):
        if ch not in _GLYPHS:
            raise ScenarioError(f"letter pattern has no glyph for {ch!r}; known: {''.join(sorted(_GLYPHS))}")
        for stroke in _GLYPHS[ch]:
            strokes.append(np.array(stroke, dtype=float) + [1.5 * pos, 0.0])
    segs = [(a, b) for s in strokes for a, b in itertools.pairwise(s)]
    lengths = np.array([np.linalg.norm(b - a) for a, b in segs])
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    targets = (np.arange(count) + 0.5) * cum[-1] / count
    pts = np.empty((count, 2))
    for i, s in enumerate(targets):
        j = min(int(np.searchsorted(cum, s, side="right")) - 1, len(segs) - 1)
        a, b = segs[j]
        pts[i] = a + (s - cum[j]) / lengths[j] * (b - a)
    width = 1.5 * len(text) - 0.5
    out = np.empty((count, 2))
    out[:, 0] = (pts[:, 1] - 0.5) * tube_span
    out[:, 1] = (pts[:, 0] - width / 2) * (azimuth_span / width)
    return out
