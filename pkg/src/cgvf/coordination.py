"""Desired parametric differences, consensus terms and simulated message passing."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .topology import CommGraph, incidence, neighbor_lists


class CoordinationError(ValueError):
    pass


def _as_columns(values, rows: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] != rows:
        raise CoordinationError(f"expected {rows} rows, got {arr.shape[0]}")
    return arr


def deltas_from_reference(graph: CommGraph, w_star) -> np.ndarray:
    """Per-edge ``w*_head - w*_tail``; shape (E,) or (E, k) following ``w_star``."""
    w_star = np.asarray(w_star, dtype=float)
    if w_star.shape[0] != graph.vertex_count:
        raise CoordinationError(f"reference has {w_star.shape[0]} entries for {graph.vertex_count} robots")
    return incidence(graph).T @ w_star


def directed_deltas(graph: CommGraph, edge_deltas) -> dict[tuple[int, int], np.ndarray]:
    """``{(i, j): Delta_ij}`` for both directions of every edge (1-indexed)."""
    ed = _as_columns(edge_deltas, graph.edge_count)
    out = {}
    for e, (head, tail) in enumerate(graph.edges):
        out[head, tail] = ed[e].copy()
        out[tail, head] = -ed[e]
    return out


def deltas_from_map(graph: CommGraph, mapping: dict[tuple[int, int], object], tol: float = 1e-9) -> np.ndarray:
    """Edge deltas from a user map keyed by ordered pairs.

    Either direction of an edge may be given; if both are, they must be
    antisymmetric.  Every graph edge needs a value.
    """
    known = {frozenset(e) for e in graph.edges}
    for pair in mapping:
        if frozenset(pair) not in known:
            raise CoordinationError(f"delta given for {pair}, which is not an edge of the graph")
    rows = []
    for head, tail in graph.edges:
        fwd = mapping.get((head, tail))
        rev = mapping.get((tail, head))
        if fwd is None and rev is None:
            raise CoordinationError(f"no delta for edge ({head}, {tail})")
        if (
            fwd is not None
            and rev is not None
            and np.max(np.abs(np.asarray(fwd, float) + np.asarray(rev, float))) > tol
        ):
            raise CoordinationError(
                f"deltas for ({head}, {tail}) and ({tail}, {head}) are not antisymmetric: {fwd} vs {rev}"
            )
        rows.append(np.atleast_1d(np.asarray(fwd if fwd is not None else -np.asarray(rev, float), float)))
    if not rows:
        return np.zeros((0, 1))
    return np.vstack(rows)


def infeasible_cycle(graph: CommGraph, edge_deltas, tol: float = 1e-9) -> tuple[list[int], float] | None:
    """First fundamental cycle whose signed delta sum exceeds ``tol``.

    Returns ``(vertices along the cycle, residual)`` or ``None`` if every
    cycle closes, i.e. the deltas are realizable as ``D.T @ w*``.
    """
    ed = _as_columns(edge_deltas, graph.edge_count)
    nbrs = neighbor_lists(graph)
    # directed lookup of (vertex, neighbor) -> delta row
    lookup = {}
    for e, (head, tail) in enumerate(graph.edges):
        lookup[head - 1, tail - 1] = ed[e]
        lookup[tail - 1, head - 1] = -ed[e]
    potential: dict[int, np.ndarray] = {}
    parent: dict[int, int] = {}
    tree = set()
    for root in range(graph.vertex_count):
        if root in potential:
            continue
        potential[root] = np.zeros(ed.shape[1])
        parent[root] = -1
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for u in nbrs[v]:
                if u not in potential:
                    # w_v - w_u = delta_vu
                    potential[u] = potential[v] - lookup[v, u]
                    parent[u] = v
                    tree.add(frozenset((u, v)))
                    queue.append(u)
    for e, (head, tail) in enumerate(graph.edges):
        h, t = head - 1, tail - 1
        if frozenset((h, t)) in tree:
            continue
        resid = potential[h] - potential[t] - ed[e]
        worst = float(np.max(np.abs(resid)))
        if worst > tol:
            return _tree_cycle(parent, h, t), worst
    return None


def _tree_cycle(parent: dict[int, int], h: int, t: int) -> list[int]:
    def chain(v):
        out = [v]
        while parent[v] != -1:
            v = parent[v]
            out.append(v)
        return out

    up_h, up_t = chain(h), chain(t)
    common = set(up_h) & set(up_t)
    lca = next(v for v in up_h if v in common)
    path_h = up_h[: up_h.index(lca) + 1]
    path_t = up_t[: up_t.index(lca)]
    # h -> ... -> lca -> ... -> t, closed by the edge (t, h)
    return [v + 1 for v in path_h + path_t[::-1]]


def check_feasible(graph: CommGraph, edge_deltas, tol: float = 1e-9) -> None:
    bad = infeasible_cycle(graph, edge_deltas, tol)
    if bad is not None:
        cycle, resid = bad
        loop = " -> ".join(map(str, cycle + cycle[:1]))
        raise CoordinationError(f"deltas are infeasible: signed sum around cycle {loop} is {resid:.6g}")


def coordination_error(graph: CommGraph, w, edge_deltas) -> np.ndarray:
    """Per-edge ``w_head - w_tail - Delta``."""
    w = np.asarray(w, dtype=float)
    ed = np.asarray(edge_deltas, dtype=float)
    return incidence(graph).T @ w - ed.reshape((graph.edge_count,) + w.shape[1:])


@dataclass
class Mailbox:
    """What robot ``owner`` last heard from each neighbor (1-indexed keys)."""

    owner: int
    w: dict[int, np.ndarray] = field(default_factory=dict)
    wdot: dict[int, np.ndarray] = field(default_factory=dict)
    stamp: dict[int, float] = field(default_factory=dict)


def consensus(i: int, own_w, mailbox: Mailbox, deltas: dict[tuple[int, int], np.ndarray], graph: CommGraph):
    """``c_i = -sum_{j in N_i} (w_i - w_j - Delta_ij)`` with held neighbor values."""
    own = np.atleast_1d(np.asarray(own_w, dtype=float))
    c = np.zeros_like(own)
    for j in sorted(_nbrs(graph, i)):
        if j not in mailbox.w:
            raise CoordinationError(f"robot {i} has no value from neighbor {j} yet")
        c -= own - mailbox.w[j] - deltas[i, j]
    return c if np.ndim(own_w) else float(c[0])


def _nbrs(graph: CommGraph, i: int) -> list[int]:
    return [j + 1 for j in neighbor_lists(graph)[i - 1]]


class Mailboxes:
    """Team-wide message store with zero-order hold and optional packet loss.

    ``held[i, j]`` is the last ``w_j`` robot ``i`` received (rows/cols
    0-indexed, meaningful only for neighbors).  Deliveries happen every
    ``comm_every`` integration steps.  The t=0 round is never dropped.
    """

    def __init__(
        self,
        graph: CommGraph,
        k: int,
        comm_every: int = 1,
        p_loss: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> None:
        if comm_every < 1:
            raise CoordinationError("communication interval must be at least one integration step")
        if not 0.0 <= p_loss <= 1.0:
            raise CoordinationError(f"packet loss probability {p_loss} outside [0, 1]")
        n = graph.vertex_count
        self.graph = graph
        self.adj = graph.adjacency()
        self.comm_every = comm_every
        self.p_loss = p_loss
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.held = np.zeros((n, n, k))
        self.held_dot = np.zeros((n, n, k))
        self.stamp = np.full((n, n), np.nan)
        self.seeded = False

    @property
    def fresh(self) -> bool:
        """True when every evaluation sees exact neighbor values."""
        return self.comm_every == 1 and self.p_loss == 0.0

    def due(self, step_index: int) -> bool:
        return step_index % self.comm_every == 0

    def exchange(self, t: float, W, Wdot=None) -> None:
        W = np.asarray(W, dtype=float).reshape(self.held.shape[0], -1)
        deliver = self.adj > 0
        if self.seeded and self.p_loss > 0.0:
            deliver &= self.rng.random(deliver.shape) >= self.p_loss
        rows, cols = np.nonzero(deliver)
        self.held[rows, cols] = W[cols]
        if Wdot is not None:
            self.held_dot[rows, cols] = np.asarray(Wdot, dtype=float).reshape(W.shape)[cols]
        self.stamp[rows, cols] = t
        self.seeded = True

    def mailbox(self, i: int) -> Mailbox:
        box = Mailbox(i)
        for j in _nbrs(self.graph, i):
            if not np.isnan(self.stamp[i - 1, j - 1]):
                box.w[j] = self.held[i - 1, j - 1].copy()
                box.wdot[j] = self.held_dot[i - 1, j - 1].copy()
                box.stamp[j] = float(self.stamp[i - 1, j - 1])
        return box

    def consensus_all(self, W, delta_matrix) -> np.ndarray:
        """Stacked consensus terms (N, k) from held values.

        ``delta_matrix[i, j]`` holds ``Delta_ij`` (0-indexed).
        """
        if not self.seeded:
            raise CoordinationError("mailboxes must be seeded before the first consensus evaluation")
        W = np.asarray(W, dtype=float)
        a = self.adj[:, :, None]
        return -(a * (W[:, None, :] - self.held - delta_matrix)).sum(axis=1)


def delta_matrix(graph: CommGraph, edge_deltas) -> np.ndarray:
    """Dense antisymmetric ``(N, N, k)`` array of directed deltas."""
    ed = _as_columns(edge_deltas, graph.edge_count)
    n = graph.vertex_count
    out = np.zeros((n, n, ed.shape[1]))
    for e, (head, tail) in enumerate(graph.edges):
        out[head - 1, tail - 1] = ed[e]
        out[tail - 1, head - 1] = -ed[e]
    return out
