"""Saturated heading control of a Dubins-car-like vehicle along the field.

Vehicle model (n = 2 drops the altitude channel)::

    p1' = v cos(theta),  p2' = v sin(theta),  p3' = u_z,  theta' = u_theta

The virtual coordinates move at ``v chi_{n+m} / |chi_planar|`` so that the
generalized velocity stays parallel to the field whenever the heading is
aligned with it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DesiredSet

E_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


class GuidanceError(ValueError):
    pass


class SingularHeadingError(GuidanceError):
    pass


@dataclass(frozen=True)
class GuidanceConfig:
    v: float
    k_theta: float
    sat_a: float = -0.5
    sat_b: float = 0.5
    gamma_floor: float = 1e-6

    def __post_init__(self) -> None:
        if not self.v > 0:
            raise GuidanceError(f"airspeed must be positive, got {self.v}")
        if not self.k_theta > 0:
            raise GuidanceError(f"k_theta must be positive, got {self.k_theta}")
        if not self.sat_a < 0 < self.sat_b:
            raise GuidanceError(f"saturation bounds need a < 0 < b, got [{self.sat_a}, {self.sat_b}]")


@dataclass(frozen=True)
class GuidanceInputs:
    u_theta: float
    u_z: float
    w_dot: np.ndarray
    theta_dot_d: float
    sigma: float
    saturated: bool


def wrap_angle(theta: float) -> float:
    """Map to (-pi, pi]."""
    out = math.remainder(theta, 2.0 * math.pi)
    return math.pi if out == -math.pi else out


def planar_component(chi) -> tuple[np.ndarray, np.ndarray]:
    """First two entries of the normalized field and their unit direction."""
    chi = np.asarray(chi, dtype=float)
    planar = chi[:2]
    norm = float(np.hypot(*planar))
    if norm == 0.0:
        raise SingularHeadingError("planar field component vanishes")
    return planar / np.linalg.norm(chi), planar / norm


def check_planar(chi, gamma_floor: float) -> float:
    sq = float(chi[0] ** 2 + chi[1] ** 2)
    if not sq > gamma_floor:
        raise SingularHeadingError(
            f"chi_1^2 + chi_2^2 = {sq:.3g} is not above the floor {gamma_floor:.3g}; heading is undefined"
        )
    return sq


def saturate(x: float, a: float, b: float) -> float:
    return min(max(x, a), b)


def theta_dot_desired(chi_p, chi_p_dot) -> float:
    """Rotation rate of the planar field direction."""
    chi_p = np.asarray(chi_p, dtype=float)
    norm = float(np.hypot(*chi_p))
    if norm == 0.0:
        raise SingularHeadingError("planar field component vanishes")
    unit = chi_p / norm
    return float(-unit @ E_ROT @ np.asarray(chi_p_dot, dtype=float)) / norm


def signed_angle(h_unit, chi_p_unit) -> float:
    """Angle from ``chi_p_unit`` to ``h_unit`` in (-pi, pi]."""
    h = np.asarray(h_unit, dtype=float)
    c = np.asarray(chi_p_unit, dtype=float)
    sigma = math.atan2(float(h @ E_ROT @ c), float(h @ c))
    return math.pi if sigma == -math.pi else sigma


def corollary1_gain_bound(d: float, a: float, b: float) -> float:
    """Largest heading gain for which saturation cannot trigger given |theta_dot_d| <= d."""
    if not a < 0 < b:
        raise GuidanceError(f"saturation bounds need a < 0 < b, got [{a}, {b}]")
    if d < 0 or d >= min(-a, b):
        raise GuidanceError(f"no valid heading gain: d = {d} must lie in [0, {min(-a, b)})")
    return min(-a - d, b - d)


def field_jacobian(dset: DesiredSet, s, K, xi) -> np.ndarray:
    """Own-state Jacobian of the uncoordinated field, shape (n+k, n+k)."""
    n, k = dset.n, dset.k
    xi = np.asarray(xi, dtype=float)
    K = np.asarray(K, dtype=float)
    s = np.asarray(s, dtype=float)
    f, d1, d2 = dset.derivs(xi[n:])
    phi = xi[:n] - f
    sign = (-1.0) ** n
    J = np.zeros((n + k, n + k))
    J[:n, :n] = -np.diag(K)
    J[:n, n:] = sign * np.einsum("jmq,m->jq", d2, s) + K[:, None] * d1
    J[n:, :n] = (K[:, None] * d1).T
    J[n:, n:] = np.einsum("j,jmq->mq", K * phi, d2) - np.einsum("j,jq,jm->mq", K, d1, d1)
    return J


def field_rate(dset: DesiredSet, s, K, kc, xi, xi_dot, w_dot_own, w_dot_nbrs) -> np.ndarray:
    """Time derivative of one robot's combined field.

    ``w_dot_nbrs`` holds the (held) parametric rates of the robot's
    neighbors, shape (deg, k).  Only those enter, through the consensus term.
    """
    chi_dot = field_jacobian(dset, s, K, xi) @ np.asarray(xi_dot, dtype=float)
    w_dot_own = np.asarray(w_dot_own, dtype=float)
    nb = np.asarray(w_dot_nbrs, dtype=float).reshape(-1, dset.k)
    c_dot = -(w_dot_own[None, :] - nb).sum(axis=0)
    chi_dot[dset.n :] += np.asarray(kc, dtype=float) * c_dot
    return chi_dot


def planar_rate(chi, chi_dot) -> np.ndarray:
    """Derivative of the first two entries of ``chi / |chi|``."""
    chi = np.asarray(chi, dtype=float)
    norm = float(np.linalg.norm(chi))
    unit = chi / norm
    full = (np.asarray(chi_dot, dtype=float) - unit * (unit @ chi_dot)) / norm
    return full[:2]


def jacobian_chain(dset: DesiredSet, s, K, kc, xi, xi_dot, w_dot_own, w_dot_nbrs, chi) -> np.ndarray:
    return planar_rate(chi, field_rate(dset, s, K, kc, xi, xi_dot, w_dot_own, w_dot_nbrs))


def virtual_rates(chi, n: int, cfg: GuidanceConfig) -> tuple[float, np.ndarray]:
    """``(u_z, w_dot)`` scaled so the planar speed matches the airspeed."""
    chi = np.asarray(chi, dtype=float)
    planar = math.sqrt(check_planar(chi, cfg.gamma_floor))
    u_z = cfg.v * chi[2] / planar if n == 3 else 0.0
    return u_z, cfg.v * chi[n:] / planar


def dubins_step_inputs(chi, chi_p_dot, heading: float, n: int, cfg: GuidanceConfig) -> GuidanceInputs:
    chi = np.asarray(chi, dtype=float)
    u_z, w_dot = virtual_rates(chi, n, cfg)
    chi_p, unit = planar_component(chi)
    td = theta_dot_desired(chi_p, chi_p_dot)
    h = np.array([math.cos(heading), math.sin(heading)])
    raw = td - cfg.k_theta * float(h @ E_ROT @ unit)
    u = saturate(raw, cfg.sat_a, cfg.sat_b)
    return GuidanceInputs(u, u_z, w_dot, td, signed_angle(h, unit), raw != u)


def heading_lyapunov(heading: float, chi_p_unit) -> float:
    h = np.array([math.cos(heading), math.sin(heading)])
    diff = h - np.asarray(chi_p_unit, dtype=float)
    return 0.5 * float(diff @ diff)
