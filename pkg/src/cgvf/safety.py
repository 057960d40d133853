"""Barrier-certificate collision avoidance.

Each robot projects its nominal field onto the half-spaces

    (xi_j - xi_i)^T P chi_i <= (alpha / 4) h_ij^3,    j in D_i

where ``h_ij = |P(xi_i - xi_j)|^2 - R^2`` and ``P`` keeps the physical slots.
The projection QP is solved by an active-set method on its dual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SafetyError(ValueError):
    pass


@dataclass(frozen=True)
class SafetyConfig:
    R: float
    alpha: float = 1.0
    activation_scale: float = 1.0
    qp_tolerance: float = 1e-10
    qp_max_iters: int = 200
    enabled: bool = True

    def __post_init__(self) -> None:
        if not self.R > 0:
            raise SafetyError(f"safety distance R must be positive, got {self.R}")
        if not self.alpha > 0:
            raise SafetyError(f"barrier gain alpha must be positive, got {self.alpha}")
        if not self.activation_scale >= 1:
            raise SafetyError(f"activation_scale must be >= 1, got {self.activation_scale}")


@dataclass
class QPResult:
    x: np.ndarray
    multipliers: np.ndarray
    active: int
    infeasible: bool = False
    iterations: int = 0


@dataclass
class SafetyReport:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    violations: list[tuple[int, int, float]] = field(default_factory=list)
    active_counts: np.ndarray | None = None
    modification: np.ndarray | None = None

    @property
    def h_min(self) -> float:
        return min((h for _, _, h in self.pairs), default=float("inf"))


def h_pair(xi_i, xi_j, R: float, n: int) -> float:
    d = np.asarray(xi_i, dtype=float)[:n] - np.asarray(xi_j, dtype=float)[:n]
    return float(d @ d - R * R)


def solve_projection(target, A, b, tol: float = 1e-10, max_iters: int = 200) -> QPResult:
    """``argmin 0.5 |x - target|^2  s.t.  A x <= b``.

    Lawson-Hanson style active set on the dual ``max -0.5 l^T G l + l^T r``,
    ``l >= 0`` with ``G = A A^T`` and ``r = A target - b``.  Rank-deficient
    passive sets are handled with least squares.  An inconsistent passive
    system means the dual is unbounded, i.e. the constraints are infeasible.
    """
    target = np.asarray(target, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float)).reshape(-1, target.size)
    b = np.asarray(b, dtype=float).reshape(-1)
    m = b.size
    if m == 0:
        return QPResult(target.copy(), np.zeros(0), 0)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise SafetyError("constraint rows must be finite")
    G = A @ A.T
    r = A @ target - b
    scale = max(1.0, float(np.max(np.abs(G))), float(np.max(np.abs(r))))
    lam = np.zeros(m)
    passive = np.zeros(m, dtype=bool)
    it = 0
    while it < max_iters:
        it += 1
        grad = r - G @ lam
        cand = np.where(~passive, grad, -np.inf)
        j = int(np.argmax(cand))
        if cand[j] <= tol * scale:
            break
        passive[j] = True
        while True:
            idx = np.flatnonzero(passive)
            z = np.zeros(m)
            sub = G[np.ix_(idx, idx)]
            sol, *_ = np.linalg.lstsq(sub, r[idx], rcond=None)
            ray = r[idx] - sub @ sol
            if np.max(np.abs(ray)) > 1e-9 * scale:
                # dependent rows: the dual rises without bound along ``ray``
                # (A^T ray = 0); follow it until a multiplier reaches zero
                if np.all(ray >= 0):
                    x = target.copy()
                    return QPResult(x, lam, int(passive.sum()), infeasible=True, iterations=it)
                neg = ray < 0
                t = float(np.min(lam[idx][neg] / -ray[neg]))
                lam[idx] += t * ray
                passive &= lam > tol
                lam[~passive] = 0.0
                it += 1
                if it >= max_iters or not passive.any():
                    break
                continue
            z[idx] = sol
            if np.all(sol > 0):
                lam = z
                break
            # step back toward lam until a passive multiplier hits zero
            neg = idx[sol <= 0]
            steps = lam[neg] / np.maximum(lam[neg] - z[neg], 1e-300)
            step = float(np.min(steps))
            lam = lam + step * (z - lam)
            passive &= lam > tol
            lam[~passive] = 0.0
            it += 1
            if it >= max_iters or not passive.any():
                break
    x = target - A.T @ lam
    viol = float(np.max(A @ x - b))
    infeasible = viol > 1e-7 * scale
    if infeasible and it >= max_iters:
        # cycling guard: finish with cyclic dual coordinate ascent
        lam, x = _hildreth(target, A, b, G, lam, tol, 50 * max_iters)
        infeasible = float(np.max(A @ x - b)) > 1e-7 * scale
    return QPResult(x, lam, int(np.count_nonzero(lam > 0)), infeasible, it)


def _hildreth(target, A, b, G, lam, tol, iters):
    diag = np.diag(G)
    lam = lam.copy()
    for _ in range(iters):
        change = 0.0
        for j in range(lam.size):
            if diag[j] <= 0:
                continue
            x = target - A.T @ lam
            new = max(0.0, lam[j] + (A[j] @ x - b[j]) / diag[j])
            change = max(change, abs(new - lam[j]))
            lam[j] = new
        if change < tol:
            break
    return lam, target - A.T @ lam


def _rows_for(i: int, states: np.ndarray, n: int, cfg: SafetyConfig) -> tuple[np.ndarray, np.ndarray, list[int]]:
    xi = states[i]
    reach2 = (cfg.activation_scale * cfg.R) ** 2
    rows, rhs, who = [], [], []
    for j in range(states.shape[0]):
        if j == i:
            continue
        d = states[j, :n] - xi[:n]
        if d @ d <= reach2:
            a = np.zeros(states.shape[1])
            a[:n] = d
            h = d @ d - cfg.R**2
            rows.append(a)
            rhs.append(0.25 * cfg.alpha * h**3)
            who.append(j)
    return np.array(rows).reshape(-1, states.shape[1]), np.array(rhs), who


def qp2_solve(i: int, nominal_i, states, cfg: SafetyConfig, n: int) -> QPResult:
    """Per-robot safe field for robot ``i`` (0-indexed row of ``states``).

    Only robots within ``activation_scale * R`` contribute rows.  Virtual
    slots are never changed.  An infeasible system yields zero physical
    velocity with the virtual slots kept.
    """
    states = np.asarray(states, dtype=float)
    nominal_i = np.asarray(nominal_i, dtype=float)
    A, b, _ = _rows_for(i, states, n, cfg)
    res = solve_projection(nominal_i, A, b, cfg.qp_tolerance, cfg.qp_max_iters)
    res.x[n:] = nominal_i[n:]
    if res.infeasible:
        res.x[:n] = 0.0
    return res


def qp1_solve(nominals, states, cfg: SafetyConfig, n: int) -> QPResult:
    """Centralized joint projection with the pairwise constraints (oracle use)."""
    nominals = np.asarray(nominals, dtype=float)
    states = np.asarray(states, dtype=float)
    N, dim = states.shape
    A, b = qp1_rows(states, cfg, n)
    res = solve_projection(nominals.ravel(), A, b, cfg.qp_tolerance, cfg.qp_max_iters)
    x = res.x.reshape(N, dim)
    x[:, n:] = nominals[:, n:]
    if res.infeasible:
        x[:, :n] = 0.0
    res.x = x
    return res


def qp1_rows(states, cfg: SafetyConfig, n: int) -> tuple[np.ndarray, np.ndarray]:
    states = np.asarray(states, dtype=float)
    N, dim = states.shape
    reach2 = (cfg.activation_scale * cfg.R) ** 2
    rows, rhs = [], []
    for i in range(N):
        for j in range(i + 1, N):
            d = states[j, :n] - states[i, :n]
            if d @ d <= reach2:
                a = np.zeros(N * dim)
                a[i * dim : i * dim + n] = d
                a[j * dim : j * dim + n] = -d
                rows.append(a)
                rhs.append(0.5 * cfg.alpha * (d @ d - cfg.R**2) ** 3)
    return np.array(rows).reshape(-1, N * dim), np.array(rhs)


def safety_monitor(states, cfg: SafetyConfig, n: int, tol: float = 0.0) -> SafetyReport:
    states = np.asarray(states, dtype=float)
    rep = SafetyReport()
    for i in range(states.shape[0]):
        for j in range(i + 1, states.shape[0]):
            h = h_pair(states[i], states[j], cfg.R, n)
            rep.pairs.append((i + 1, j + 1, h))
            if h < -tol:
                rep.violations.append((i + 1, j + 1, h))
    return rep


def safe_team_field(chi, states, cfg: SafetyConfig, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Apply QP2 to every robot.  Returns (fields, active counts, |modification|, any infeasible)."""
    chi = np.asarray(chi, dtype=float)
    out = chi.copy()
    active = np.zeros(chi.shape[0], dtype=int)
    infeasible = False
    for i in range(chi.shape[0]):
        res = qp2_solve(i, chi[i], states, cfg, n)
        out[i] = res.x
        active[i] = res.active
        infeasible |= res.infeasible
    return out, active, np.linalg.norm(out - chi, axis=1), infeasible
