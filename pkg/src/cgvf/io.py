"""Telemetry CSV, run summary JSON and deterministic SVG trajectory plots."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .diagnostics import max_increase, settling_time
from .sim import RunResult, Scenario

FMT = "%.17g"


def _f(x: float) -> str:
    return FMT % x


def telemetry_header(sc: Scenario) -> list[str]:
    n, k = sc.n, sc.k
    cols = ["t", "robot"] + [f"x{j}" for j in range(1, n + 1)] + [f"w{m}" for m in range(1, k + 1)]
    if sc.guidance is not None:
        cols.append("theta")
    cols += [f"phi{j}" for j in range(1, n + 1)] + ["V", "hmin"]
    if sc.guidance is not None:
        cols += ["u_theta", "u_z"] + [f"u_w{m}" for m in range(1, k + 1)]
    else:
        cols += [f"u{j}" for j in range(1, n + k + 1)]
    return cols


def write_telemetry(sc: Scenario, result: RunResult, path: str | Path) -> None:
    """Long format: one row per robot per frame."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(telemetry_header(sc))
        for fr in result.frames:
            for i in range(sc.N):
                row = [_f(fr.t), str(i + 1)] + [_f(v) for v in fr.xi[i]]
                if fr.theta is not None:
                    row.append(_f(fr.theta[i]))
                row += [_f(v) for v in fr.phi[i]] + [_f(fr.V), _f(fr.h_min)]
                row += [_f(v) for v in fr.inputs[i]]
                out.writerow(row)


def diagnostics_header(sc: Scenario) -> list[str]:
    cols = ["t", "composite", "V", "hmin", "max_phi", "max_edge_error"]
    for e, (a, b) in enumerate(sc.graph.edges):
        cols += [f"e{a}-{b}_w{m}" for m in range(1, sc.k + 1)]
    return cols + ["events"]


def write_diagnostics(sc: Scenario, result: RunResult, path: str | Path) -> None:
    """One row per frame with the error summary and per-edge errors."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(diagnostics_header(sc))
        for fr in result.frames:
            row = [
                _f(fr.t),
                _f(fr.composite),
                _f(fr.V),
                _f(fr.h_min),
                _f(_max_phi(fr.phi)),
                _f(_max_edge(fr.edge_errors)),
            ]
            row += [_f(v) for v in np.asarray(fr.edge_errors).ravel()]
            row.append(";".join(fr.events))
            out.writerow(row)


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def read_telemetry(path: str | Path) -> dict[str, np.ndarray]:
    """Columns of a telemetry file as float arrays (``robot`` as int)."""
    header, rows = read_csv(path)
    cols = list(zip(*rows)) if rows else [()] * len(header)
    out = {}
    for name, col in zip(header, cols):
        out[name] = np.array(col, dtype=int if name == "robot" else float)
    return out


def _max_phi(phi) -> float:
    return float(np.max(np.linalg.norm(phi, axis=1)))


def _max_edge(E) -> float:
    E = np.asarray(E)
    return float(np.max(np.abs(E))) if E.size else 0.0


def summarize(sc: Scenario, result: RunResult, threshold: float = 1e-2) -> dict:
    final = result.final
    V = result.V_steps
    hmins = [f.h_min for f in result.frames if not math.isnan(f.h_min)]
    return {
        "scenario": sc.name,
        "status": result.status,
        "engine": result.engine,
        "backend": result.backend,
        "robots": sc.N,
        "n": sc.n,
        "k": sc.k,
        "duration_s": final.t,
        "beyond_theory": sc.beyond_theory,
        "final": {
            "composite": final.composite,
            "max_phi": _max_phi(final.phi),
            "max_edge_error": _max_edge(final.edge_errors),
            "V": final.V,
        },
        "h_min": min(hmins) if hmins else None,
        "V_series": {
            "initial": float(V[0]) if V.size else None,
            "final": float(V[-1]) if V.size else None,
            "max": float(np.max(V)) if V.size else None,
            "max_step_increase": max_increase(V),
        },
        "settling_time_s": {
            "edge": _finite(settling_time(result.frames, threshold, "edge")),
            "phi": _finite(settling_time(result.frames, threshold, "phi")),
            "threshold": threshold,
        },
        "events": _compress_events(result.events),
    }


def _finite(x: float):
    return x if math.isfinite(x) else None


def _compress_events(events, limit: int = 200) -> list[dict]:
    """Merge repeats of the same event into runs with first/last time."""
    runs: list[dict] = []
    for t, msg in events:
        if runs and runs[-1]["event"] == msg:
            runs[-1]["until"] = t
            runs[-1]["count"] += 1
        else:
            runs.append({"t": t, "until": t, "count": 1, "event": msg})
    return runs[:limit]


def write_summary(summary: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, allow_nan=False) + "\n")


# ---------------------------------------------------------------------------
# SVG

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f")


def _panel(traces, ax: tuple[int, int], x0: float, size: float, label: str) -> list[str]:
    pts = np.concatenate([tr[:, ax] for tr in traces])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-9))
    pad = 20.0
    scale = (size - 2 * pad) / span
    cx = (lo + hi) / 2

    def px(p):
        return x0 + size / 2 + (p[0] - cx[0]) * scale, size / 2 - (p[1] - cx[1]) * scale

    out = [
        f'<rect x="{x0:.2f}" y="0" width="{size:.2f}" height="{size:.2f}" fill="none" stroke="#ccc"/>',
        f'<text x="{x0 + 6:.2f}" y="14" font-size="12" font-family="sans-serif">{label}</text>',
    ]
    for r, tr in enumerate(traces):
        color = _COLORS[r % len(_COLORS)]
        xy = [px(p) for p in tr[:, ax]]
        path = " ".join(f"{x:.2f},{y:.2f}" for x, y in xy)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1"/>')
        sx, sy = xy[0]
        ex, ey = xy[-1]
        out.append(f'<rect x="{sx - 3:.2f}" y="{sy - 3:.2f}" width="6" height="6" fill="{color}"/>')
        out.append(f'<circle cx="{ex:.2f}" cy="{ey:.2f}" r="3.5" fill="{color}"/>')
    return out


def trajectories_svg(sc: Scenario, result: RunResult, size: float = 400.0) -> str:
    """Physical traces; squares mark starts, circles mark ends.

    Planar runs give one panel, spatial runs give the three axis projections.
    """
    traces = [np.array([f.xi[i, : sc.n] for f in result.frames]) for i in range(sc.N)]
    if sc.n == 2:
        panels = [((0, 1), "x1-x2")]
    elif sc.n >= 3:
        panels = [((0, 1), "x1-x2"), ((0, 2), "x1-x3"), ((1, 2), "x2-x3")]
    else:
        traces = [np.column_stack([np.array([f.t for f in result.frames]), tr[:, 0]]) for tr in traces]
        panels = [((0, 1), "t-x1")]
    width = size * len(panels)
    body = []
    for p, (ax, label) in enumerate(panels):
        body += _panel(traces, ax, p * size, size, label)
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{size:.0f}" viewBox="0 0 {width:.0f} {size:.0f}">'
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def write_outputs(sc: Scenario, result: RunResult, out_dir: str | Path, plot: bool = False) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_telemetry(sc, result, out / "telemetry.csv")
    write_diagnostics(sc, result, out / "diagnostics.csv")
    summary = summarize(sc, result)
    write_summary(summary, out / "summary.json")
    if plot:
        (out / "trajectories.svg").write_text(trajectories_svg(sc, result))
    return summary
