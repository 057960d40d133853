"""Lyapunov diagnostics for single-integrator runs with exact neighbor values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import Scenario, Team, TelemetryFrame


@dataclass(frozen=True)
class DiagnosticSet:
    V: float
    Vdot: float
    Vdot_discrete: float | None = None


def lyapunov(
    sc: Scenario,
    frame: TelemetryFrame,
    prev: TelemetryFrame | None = None,
    nxt: TelemetryFrame | None = None,
    team: Team | None = None,
) -> DiagnosticSet:
    """V and its closed-form rate at ``frame``.

    The discrete rate is a central difference when both neighbors are
    given, otherwise a one-sided difference with whichever one is.
    """
    team = team if team is not None else Team(sc)
    X = frame.xi
    V = team.lyapunov(X)
    rate = team.lyapunov_rate(X)
    disc = None
    if prev is not None and nxt is not None:
        disc = (nxt.V - prev.V) / (nxt.t - prev.t)
    elif prev is not None:
        disc = (V - prev.V) / (frame.t - prev.t)
    elif nxt is not None:
        disc = (nxt.V - V) / (nxt.t - frame.t)
    return DiagnosticSet(V, rate, disc)


def discrete_rates(V_steps, step: float) -> np.ndarray:
    """Central differences of a per-step V series (one-sided at the ends)."""
    return np.gradient(np.asarray(V_steps, dtype=float), step)


def max_increase(V_steps) -> float:
    """Largest single-step increase of V (negative if strictly decreasing)."""
    V = np.asarray(V_steps, dtype=float)
    return float(np.max(np.diff(V))) if V.size > 1 else 0.0


def settling_time(frames, threshold: float, which: str = "edge") -> float:
    """First frame time after which the chosen error stays below ``threshold``."""
    vals = np.array([_err(f, which) for f in frames])
    above = np.flatnonzero(vals >= threshold)
    if above.size == 0:
        return frames[0].t
    last = above[-1]
    return float("inf") if last == len(frames) - 1 else frames[last + 1].t


def _err(frame: TelemetryFrame, which: str) -> float:
    if which == "edge":
        return float(np.max(np.abs(frame.edge_errors))) if frame.edge_errors.size else 0.0
    if which == "phi":
        return float(np.max(np.linalg.norm(frame.phi, axis=1)))
    return frame.composite
