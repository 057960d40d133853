"""Parametric desired sets (paths for k=1, surfaces for k=2).

Every set exposes its value and analytic first/second partial derivatives in
a batched layout::

    F   (M, n)        f(w)
    D1  (M, n, k)     df_j / dw_m
    D2  (M, n, k, k)  d2f_j / dw_m dw_q

Catalog sets evaluate through closed-form kernels in this module, which are
also compiled by numba for the fast integration path.  Sets written as
expression strings are differentiated symbolically with sympy at load time.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from ._jit import USE_NUMBA, njit


class GeometryError(ValueError):
    pass


# catalog kernel codes
LINE, ELLIPSE, BENT_INFINITY, LISSAJOUS, SPHERE, TORUS, TORUS_AZIMUTH_FIRST = range(7)
EXPRESSION = -1
MAX_KERNEL_PARAMS = 12

# Each formula below takes the parameter(s) and a parameter vector ``p`` and
# returns a flat tuple (f_j..., d1[j, m]..., d2[j, m, q]...) in C order.  The
# arithmetic works elementwise, so the same source runs on scalars (numba,
# one robot at a time) and on arrays (numpy, all robots at once).


def _line(w1, w2, p):
    z = 0.0 * w1
    return (p[0] * w1, p[1] * w1, p[0] + z, p[1] + z, z, z)


def _ellipse(w1, w2, p):
    a, b = p[0], p[1]
    c = np.cos(w1)
    s = np.sin(w1)
    return (p[2] + a * c, p[3] + b * s, -a * s, b * c, -a * c, -b * s)


def _bent_infinity(w1, w2, p):
    s = np.sin(w1)
    c = np.cos(w1)
    s2 = np.sin(2.0 * w1)
    c2 = np.cos(2.0 * w1)
    # f2 = 30 sin(w) g(w),  g = sqrt(u),  u = 0.5 (1 - 0.5 sin^2 w) in [0.25, 0.5]
    u = 0.5 - 0.25 * s * s
    du = -0.25 * s2
    ddu = -0.5 * c2
    g = np.sqrt(u)
    dg = du / (2.0 * g)
    ddg = ddu / (2.0 * g) - du * du / (4.0 * g * g * g)
    return (
        15.0 * s2,
        30.0 * s * g,
        3.0 + 5.0 * c2,
        30.0 * c2,
        30.0 * (c * g + s * dg),
        -10.0 * s2,
        -60.0 * s2,
        30.0 * (-s * g + 2.0 * c * dg + s * ddg),
        -20.0 * c2,
    )


def _lissajous(w1, w2, p):
    # p = (n_x, n_y, n_z, m_x, m_y, m_z, A_x, A_y, A_z, ph_x, ph_y, ph_z)
    ax = p[0] * w1 + p[9]
    ay = p[1] * w1 + p[10]
    az = p[2] * w1 + p[11]
    cx, cy, cz = np.cos(ax), np.cos(ay), np.cos(az)
    sx, sy, sz = np.sin(ax), np.sin(ay), np.sin(az)
    return (
        p[6] * cx + p[3],
        p[7] * cy + p[4],
        p[8] * cz + p[5],
        -p[6] * p[0] * sx,
        -p[7] * p[1] * sy,
        -p[8] * p[2] * sz,
        -p[6] * p[0] * p[0] * cx,
        -p[7] * p[1] * p[1] * cy,
        -p[8] * p[2] * p[2] * cz,
    )


def _sphere(w1, w2, p):
    r = p[0]
    c1, s1 = np.cos(w1), np.sin(w1)
    c2, s2 = np.cos(w2), np.sin(w2)
    z = 0.0 * w1
    return (
        r * c1 * c2,
        r * c1 * s2,
        r * s1,
        # d1: (x, w1), (x, w2), (y, w1), (y, w2), (z, w1), (z, w2)
        -r * s1 * c2,
        -r * c1 * s2,
        -r * s1 * s2,
        r * c1 * c2,
        r * c1,
        z,
        # d2: per component (11, 12, 21, 22)
        -r * c1 * c2,
        r * s1 * s2,
        r * s1 * s2,
        -r * c1 * c2,
        -r * c1 * s2,
        -r * s1 * c2,
        -r * s1 * c2,
        -r * c1 * s2,
        -r * s1,
        z,
        z,
        z,
    )


def _torus(w1, w2, p):
    # w1 turns around the tube, w2 around the symmetry axis
    big, r = p[0], p[1]
    ct, st = np.cos(w1), np.sin(w1)
    ca, sa = np.cos(w2), np.sin(w2)
    rad = big + r * ct
    z = 0.0 * w1
    return (
        rad * ca,
        rad * sa,
        r * st + p[2],
        -r * st * ca,
        -rad * sa,
        -r * st * sa,
        rad * ca,
        r * ct,
        z,
        -r * ct * ca,
        r * st * sa,
        r * st * sa,
        -rad * ca,
        -r * ct * sa,
        -r * st * ca,
        -r * st * ca,
        -rad * sa,
        -r * st,
        z,
        z,
        z,
    )


def _torus_azimuth_first(w1, w2, p):
    # w1 turns around the symmetry axis, w2 around the tube
    big, r = p[0], p[1]
    ca, sa = np.cos(w1), np.sin(w1)
    ct, st = np.cos(w2), np.sin(w2)
    rad = big + r * ct
    z = 0.0 * w1
    return (
        rad * ca,
        rad * sa,
        r * st + p[2],
        -rad * sa,
        -r * st * ca,
        rad * ca,
        -r * st * sa,
        z,
        r * ct,
        -rad * ca,
        r * st * sa,
        r * st * sa,
        -r * ct * ca,
        -rad * sa,
        -r * st * ca,
        -r * st * ca,
        -r * ct * sa,
        z,
        z,
        z,
        -r * st,
    )


_FORMULAS = (_line, _ellipse, _bent_infinity, _lissajous, _sphere, _torus, _torus_azimuth_first)


def catalog_eval_numpy(kind, W, P, F, D1, D2):
    """Vectorized catalog evaluation over all rows of ``W`` (M, k)."""
    n = F.shape[1]
    k = W.shape[1]
    vals = _FORMULAS[kind](W[:, 0], W[:, k - 1], P.T)
    F[:] = np.stack(vals[:n], axis=1)
    D1[:] = np.stack(vals[n : n + n * k], axis=1).reshape(D1.shape)
    D2[:] = np.stack(vals[n + n * k :], axis=1).reshape(D2.shape)


@njit
def _store(vals, i, F, D1, D2):
    n = F.shape[1]
    k = D1.shape[2]
    for j in range(n):
        F[i, j] = vals[j]
        for m in range(k):
            D1[i, j, m] = vals[n + j * k + m]
            for q in range(k):
                D2[i, j, m, q] = vals[n + n * k + (j * k + m) * k + q]


_line_nb = njit(_line)
_ellipse_nb = njit(_ellipse)
_bent_infinity_nb = njit(_bent_infinity)
_lissajous_nb = njit(_lissajous)
_sphere_nb = njit(_sphere)
_torus_nb = njit(_torus)
_torus_azimuth_first_nb = njit(_torus_azimuth_first)


@njit
def _catalog_loop(kinds, W, P, F, D1, D2):
    k = W.shape[1]
    for i in range(W.shape[0]):
        kind = kinds[i]
        a = W[i, 0]
        b = W[i, k - 1]
        p = P[i]
        if kind == LINE:
            _store(_line_nb(a, b, p), i, F, D1, D2)
        elif kind == ELLIPSE:
            _store(_ellipse_nb(a, b, p), i, F, D1, D2)
        elif kind == BENT_INFINITY:
            _store(_bent_infinity_nb(a, b, p), i, F, D1, D2)
        elif kind == LISSAJOUS:
            _store(_lissajous_nb(a, b, p), i, F, D1, D2)
        elif kind == SPHERE:
            _store(_sphere_nb(a, b, p), i, F, D1, D2)
        elif kind == TORUS:
            _store(_torus_nb(a, b, p), i, F, D1, D2)
        elif kind == TORUS_AZIMUTH_FIRST:
            _store(_torus_azimuth_first_nb(a, b, p), i, F, D1, D2)


def _catalog_groups(kinds, W, P, F, D1, D2):
    for kind in np.unique(kinds):
        idx = np.flatnonzero(kinds == kind)
        if idx.size == len(kinds):
            catalog_eval_numpy(kind, W, P, F, D1, D2)
            return
        f, d1, d2 = F[idx], D1[idx], D2[idx]
        catalog_eval_numpy(kind, W[idx], P[idx], f, d1, d2)
        F[idx], D1[idx], D2[idx] = f, d1, d2


# team evaluation with a per-row kind code, used by the integration kernels
catalog_team = _catalog_loop if USE_NUMBA else _catalog_groups


@dataclass(frozen=True, eq=False)
class DesiredSet:
    """A parametric path (k=1) or surface (k=2) in R^n."""

    name: str
    n: int
    k: int
    params: tuple[float, ...] = ()
    kind: int = EXPRESSION
    kernel_params: tuple[float, ...] = ()
    expressions: tuple[str, ...] = ()
    _fn: Callable | None = field(default=None, repr=False)

    def derivs(self, w) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Batched ``(F, D1, D2)`` for parameters ``w`` of shape (M, k) or (k,)."""
        w = np.asarray(w, dtype=float)
        single = w.ndim <= 1
        w = np.atleast_1d(w).reshape(-1, self.k)
        m = w.shape[0]
        F = np.zeros((m, self.n))
        D1 = np.zeros((m, self.n, self.k))
        D2 = np.zeros((m, self.n, self.k, self.k))
        if self.kind == EXPRESSION:
            self._fn(w, F, D1, D2)
        else:
            p = np.empty((m, MAX_KERNEL_PARAMS))
            p[:] = np.asarray(self.kernel_params + (0.0,) * (MAX_KERNEL_PARAMS - len(self.kernel_params)))
            catalog_eval_numpy(self.kind, w, p, F, D1, D2)
        if single:
            return F[0], D1[0], D2[0]
        return F, D1, D2

    def eval(self, w) -> np.ndarray:
        return self.derivs(w)[0]

    def first_partials(self, w) -> np.ndarray:
        return self.derivs(w)[1]

    def second_partials(self, w) -> np.ndarray:
        return self.derivs(w)[2]

    def lift(self, w) -> np.ndarray:
        """Generalized state on the lifted desired set: ``(f(w), w)``."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        return np.concatenate([self.eval(w), w])


@dataclass(frozen=True)
class GainSet:
    k_phi: tuple[float, ...]
    k_c: tuple[float, ...] = (1.0,)

    def __post_init__(self) -> None:
        if any(not (g > 0) for g in self.k_phi) or any(not (g > 0) for g in self.k_c):
            raise GeometryError(f"all gains must be strictly positive: {self}")


def _split(dset: DesiredSet, xi) -> tuple[np.ndarray, np.ndarray]:
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != dset.n + dset.k:
        raise GeometryError(f"state has dimension {xi.shape[-1]}, expected n + k = {dset.n + dset.k} for {dset.name}")
    return xi[..., : dset.n], xi[..., dset.n :]


def phi(dset: DesiredSet, xi) -> np.ndarray:
    """Surface-function values ``x_j - f_j(w)``."""
    x, w = _split(dset, xi)
    return x - dset.eval(w)


def grad_phi(dset: DesiredSet, xi, j: int) -> np.ndarray:
    """Gradient of the j-th surface function (j is 1-indexed)."""
    if not 1 <= j <= dset.n:
        raise GeometryError(f"surface-function index {j} outside [1, {dset.n}]")
    _, w = _split(dset, xi)
    g = np.zeros(dset.n + dset.k)
    g[j - 1] = 1.0
    g[dset.n :] = -dset.first_partials(w)[j - 1]
    return g


def check_derivatives(dset: DesiredSet, w, h: float = 1e-5) -> float:
    """Largest gap between analytic partials and central differences."""
    if h <= 0:
        raise GeometryError("finite-difference step must be positive")
    w = np.atleast_1d(np.asarray(w, dtype=float))
    _, d1, d2 = dset.derivs(w)
    worst = 0.0
    for m in range(dset.k):
        e = np.zeros(dset.k)
        e[m] = h
        fp, d1p, _ = dset.derivs(w + e)
        fm, d1m, _ = dset.derivs(w - e)
        worst = max(worst, float(np.max(np.abs((fp - fm) / (2 * h) - d1[..., m]))))
        worst = max(worst, float(np.max(np.abs((d1p - d1m) / (2 * h) - d2[..., m]))))
    return worst


# ---------------------------------------------------------------------------
# catalog


@dataclass(frozen=True)
class _Entry:
    n: int
    k: int
    counts: tuple[int, ...]
    defaults: tuple[float, ...]
    kind: int
    expand: Callable[[tuple[float, ...]], tuple[float, ...]]


def _lissajous_expand(p):
    if len(p) == 6:
        p = p + (1.0, 1.0, 1.0, 0.0, 0.0, 0.0)
    return p


_CATALOG: dict[str, _Entry] = {
    "line": _Entry(2, 1, (2,), (1.0, 2.0), LINE, lambda p: p),
    "circle": _Entry(2, 1, (1,), (10.0,), ELLIPSE, lambda p: (p[0], p[0], 0.0, 0.0)),
    "ellipse": _Entry(2, 1, (2, 4), (10.0, 5.0), ELLIPSE, lambda p: p + (0.0, 0.0) if len(p) == 2 else p),
    "bent_infinity": _Entry(3, 1, (0,), (), BENT_INFINITY, lambda p: ()),
    "lissajous": _Entry(3, 1, (6, 12), (math.sqrt(2.0), 4.1, 7.1, 0.1, 0.7, 0.0), LISSAJOUS, _lissajous_expand),
    "sphere": _Entry(3, 2, (1,), (1.0,), SPHERE, lambda p: p),
    "torus": _Entry(3, 2, (2, 3), (2.0, 1.0), TORUS, lambda p: p + (0.0,) if len(p) == 2 else p),
    "torus_azimuth_first": _Entry(
        3, 2, (2, 3), (100.0, 5.0, 50.0), TORUS_AZIMUTH_FIRST, lambda p: p + (0.0,) if len(p) == 2 else p
    ),
}


def catalog_names() -> list[str]:
    return sorted(_CATALOG)


def catalog(name: str, params: Sequence[float] = ()) -> DesiredSet:
    """Build a catalog set.  Empty ``params`` selects the defaults.

    ======================  ==============================================  ==========
    name                    f(w)                                            params
    ======================  ==============================================  ==========
    line                    (dx w, dy w)                                    dx, dy
    circle                  (a cos w, a sin w)                              a
    ellipse                 (cx + a cos w, cy + b sin w)                    a, b[, cx, cy]
    bent_infinity           (15 sin 2w, 30 sin w sqrt(.5(1-.5 sin^2 w)),    none
                            3 + 5 cos 2w)
    lissajous               A_j cos(n_j w + ph_j) + m_j                     n(3), m(3)[, A(3), ph(3)]
    sphere                  r (cos w1 cos w2, cos w1 sin w2, sin w1)        r
    torus                   ((R + r cos w1) cos w2, (R + r cos w1) sin w2,  R, r[, z0]
                            r sin w1 + z0)
    torus_azimuth_first     ((R + r cos w2) cos w1, (R + r cos w2) sin w1,  R, r[, z0]
                            r sin w2 + z0)
    ======================  ==============================================  ==========
    """
    try:
        entry = _CATALOG[name]
    except KeyError:
        raise GeometryError(f"unknown catalog set {name!r}; known: {', '.join(catalog_names())}") from None
    params = tuple(float(x) for x in params)
    if not params:
        params = entry.defaults
    if len(params) not in entry.counts:
        raise GeometryError(
            f"catalog set {name!r} takes {' or '.join(map(str, entry.counts))} parameters, got {len(params)}"
        )
    kparams = tuple(float(x) for x in entry.expand(params))
    if name == "bent_infinity":
        s = np.sin(np.linspace(-np.pi, np.pi, 721)) ** 2
        arg = 0.5 * (1.0 - 0.5 * s)
        assert np.all((arg >= 0.25 - 1e-15) & (arg <= 0.5 + 1e-15))
    return DesiredSet(name, entry.n, entry.k, params, entry.kind, kparams)


# ---------------------------------------------------------------------------
# expression sets

_ALLOWED_FUNCS = ("sin", "cos", "tan", "sqrt", "exp", "log", "sinh", "cosh", "tanh", "atan")


def expression_set(exprs: Sequence[str], k: int | None = None, name: str = "expression") -> DesiredSet:
    """Desired set from expression strings in ``w`` (paths) or ``w1, w2`` (surfaces).

    Grammar: numbers, ``+ - * / ^`` (``**`` too), parentheses, the constants
    ``pi`` and ``e``, and the functions sin, cos, tan, sqrt, exp, log, sinh,
    cosh, tanh, atan.
    """
    import sympy as sp
    from sympy.parsing.sympy_parser import (
        convert_xor,
        parse_expr,
        standard_transformations,
    )

    exprs = tuple(str(e) for e in exprs)
    if not exprs:
        raise GeometryError("expression set needs at least one component")
    w, w1, w2 = sp.symbols("w w1 w2", real=True)
    local = {"w": w, "w1": w1, "w2": w2, "pi": sp.pi, "e": sp.E}
    for fname in _ALLOWED_FUNCS:
        local[fname] = getattr(sp, fname)
    transforms = standard_transformations + (convert_xor,)
    parsed = []
    for idx, text in enumerate(exprs):
        try:
            expr = parse_expr(text, local_dict=local, global_dict=_sympy_globals(), transformations=transforms)
        except Exception as exc:  # noqa: BLE001 - sympy raises many unrelated exception types
            raise GeometryError(f"component {idx + 1} {text!r}: cannot parse ({exc})") from None
        if not isinstance(expr, sp.Expr):
            raise GeometryError(f"component {idx + 1} {text!r} is not a scalar expression")
        bad = expr.free_symbols - {w, w1, w2}
        if bad:
            raise GeometryError(f"component {idx + 1} {text!r}: unknown names {sorted(map(str, bad))}")
        parsed.append(expr)
    used = set().union(*(e.free_symbols for e in parsed))
    if k is None:
        k = 2 if used & {w1, w2} else 1
    if k == 1:
        if used - {w}:
            raise GeometryError("path expressions must use the single parameter 'w'")
        syms = [w]
    elif k == 2:
        if used - {w1, w2}:
            raise GeometryError("surface expressions must use the parameters 'w1' and 'w2'")
        syms = [w1, w2]
    else:
        raise GeometryError(f"only k in {{1, 2}} is supported, got {k}")
    n = len(parsed)
    d1 = [[sp.diff(e, s) for s in syms] for e in parsed]
    d2 = [[[sp.diff(e, a, b) for b in syms] for a in syms] for e in parsed]
    for row in d2:
        if k == 2 and sp.simplify(row[0][1] - row[1][0]) != 0:
            raise GeometryError("mixed partials disagree; expression is not C2")
    f_fn = [sp.lambdify(syms, e, "numpy") for e in parsed]
    d1_fn = [[sp.lambdify(syms, e, "numpy") for e in row] for row in d1]
    d2_fn = [[[sp.lambdify(syms, e, "numpy") for e in r2] for r2 in row] for row in d2]

    def fill(wv, F, D1, D2):
        args = [wv[:, m] for m in range(k)]
        for j in range(n):
            F[:, j] = f_fn[j](*args)
            for a in range(k):
                D1[:, j, a] = d1_fn[j][a](*args)
                for b in range(k):
                    D2[:, j, a, b] = d2_fn[j][a][b](*args)

    return DesiredSet(name, n, k, (), EXPRESSION, (), exprs, fill)


def _sympy_globals() -> dict:
    import sympy as sp

    return {"Integer": sp.Integer, "Float": sp.Float, "Rational": sp.Rational, "Symbol": sp.Symbol}
