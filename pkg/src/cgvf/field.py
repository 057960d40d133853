"""Guiding vector fields for a single robot.

The runtime uses the expanded closed forms.  For a path (k=1) and a surface
(k=2) both reduce to one template driven by a propagation coefficient ``s``::

    propagation = sign * (D1 @ s, s)          sign = (-1)^n
    convergence = (-K phi, D1.T @ (K phi))

with ``s = (1,)`` for paths and ``s = (v_{n+2}, -v_{n+1})`` for surfaces, where
``v`` is the extra vector whose first n entries are zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import DesiredSet, GainSet, GeometryError, _split


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class FieldConfig:
    """Gains plus, for surfaces, either desired parametric speeds or the tail of ``v``.

    Giving ``desired_speeds`` derives the tail so that the on-surface virtual
    velocity equals those speeds; the tail cannot then be set independently.
    """

    gains: GainSet
    desired_speeds: tuple[float, float] | None = None
    extra_vector_tail: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.desired_speeds is not None and self.extra_vector_tail is not None:
            raise FieldError("extra_vector_tail is derived from desired_speeds; give only one of them")

    def tail(self, n: int) -> tuple[float, float]:
        """``(v_{n+1}, v_{n+2})``."""
        if self.desired_speeds is not None:
            w1, w2 = self.desired_speeds
            sign = (-1.0) ** n
            return (-sign * w2, sign * w1)
        if self.extra_vector_tail is None:
            raise FieldError("surface field needs desired_speeds or extra_vector_tail")
        return tuple(float(x) for x in self.extra_vector_tail)

    def extra_vector(self, n: int) -> np.ndarray:
        v = np.zeros(n + 2)
        v[n:] = self.tail(n)
        return v

    def propagation_coeff(self, n: int, k: int) -> np.ndarray:
        if k == 1:
            return np.ones(1)
        if k != 2:
            raise FieldError(f"param_count must be 1 or 2, got {k}")
        v1, v2 = self.tail(n)
        if v1 == 0.0 and v2 == 0.0:
            raise FieldError("extra vector tail is zero, so the propagation term vanishes")
        return np.array([v2, -v1])


@dataclass(frozen=True)
class FieldValue:
    vector: np.ndarray
    propagation: np.ndarray
    convergence: np.ndarray


def wedge(vectors) -> np.ndarray:
    """Generalized cross product of m vectors in R^(m+1).

    Component q is ``(-1)^q det(M without column q)`` with the inputs as rows
    of M, i.e. the cofactor expansion of ``det([e; v_1; ...; v_m])``.
    """
    m_rows = np.atleast_2d(np.asarray(vectors, dtype=float))
    m, dim = m_rows.shape
    if dim != m + 1:
        raise FieldError(f"wedge needs m vectors in R^(m+1); got {m} vectors in R^{dim}")
    out = np.empty(dim)
    for q in range(dim):
        minor = np.delete(m_rows, q, axis=1)
        out[q] = (-1.0) ** q * (np.linalg.det(minor) if m else 1.0)
    return out


def _field(dset: DesiredSet, cfg: FieldConfig, xi, s: np.ndarray) -> FieldValue:
    n = dset.n
    if len(cfg.gains.k_phi) != n:
        raise FieldError(f"{len(cfg.gains.k_phi)} surface gains given for n = {n}")
    try:
        x, w = _split(dset, xi)
    except GeometryError as exc:
        raise FieldError(str(exc)) from None
    f, d1, _ = dset.derivs(w)
    kphi = np.asarray(cfg.gains.k_phi) * (x - f)
    sign = (-1.0) ** n
    prop = np.concatenate([sign * (d1 @ s), sign * s])
    conv = np.concatenate([-kphi, d1.T @ kphi])
    return FieldValue(prop + conv, prop, conv)


def path_field(dset: DesiredSet, cfg: FieldConfig, xi) -> FieldValue:
    if dset.k != 1:
        raise FieldError(f"path_field needs a path (k=1), got k={dset.k}")
    return _field(dset, cfg, xi, np.ones(1))


def surface_field(dset: DesiredSet, cfg: FieldConfig, xi) -> FieldValue:
    if dset.k != 2:
        raise FieldError(f"surface_field needs a surface (k=2), got k={dset.k}")
    return _field(dset, cfg, xi, cfg.propagation_coeff(dset.n, 2))


def coordination_term(k: int, c_values, n: int) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c_values, dtype=float))
    if c.shape != (k,):
        raise FieldError(f"expected {k} coordination values, got {c.shape[0]}")
    out = np.zeros(n + k)
    out[n:] = c
    return out


def combined_field(dset: DesiredSet, cfg: FieldConfig, xi, c_values) -> FieldValue:
    """Path or surface field plus the gain-weighted coordination term."""
    base = path_field(dset, cfg, xi) if dset.k == 1 else surface_field(dset, cfg, xi)
    kc = np.asarray(cfg.gains.k_c, dtype=float)
    if kc.shape != (dset.k,):
        raise FieldError(f"need {dset.k} coordination gains, got {kc.shape[0]}")
    coord = coordination_term(dset.k, kc * np.atleast_1d(c_values), dset.n)
    # propagation and convergence describe the uncoordinated part only
    return FieldValue(base.vector + coord, base.propagation, base.convergence)


def field_norm_floor(cfg: FieldConfig, n: int, k: int) -> float:
    """Guaranteed lower bound on the norm of the uncoordinated field."""
    if k == 1:
        return 1.0
    return float(np.hypot(*cfg.tail(n)))
