"""Batched team kernels for the fresh-mailbox single-integrator fast path.

Team data is flattened into arrays so the whole integration loop can run
under numba.  With ``CGVF_DISABLE_NUMBA=1`` the same source executes as plain
numpy (loops only over the small n/k axes and over catalog kinds).

Array conventions, N robots sharing n and k:

    X       (N, n+k)  stacked generalized states
    kinds   (N,)      catalog kernel codes
    P       (N, 12)   kernel parameters
    K       (N, n)    surface gains
    S       (N, k)    propagation coefficients
    KC      (k,)      coordination gains
    D       (N, E)    incidence matrix
    Edelta  (E, k)    desired parametric differences per edge
"""

from __future__ import annotations

import numpy as np

from ._jit import njit
from .geometry import catalog_team


@njit
def team_errors(X, kinds, P, D, Edelta, n):
    """Surface errors ``Phi`` (N, n), edge errors (E, k) and ``D1`` (N, n, k)."""
    N = X.shape[0]
    k = X.shape[1] - n
    W = np.ascontiguousarray(X[:, n:])
    F = np.zeros((N, n))
    D1 = np.zeros((N, n, k))
    D2 = np.zeros((N, n, k, k))
    catalog_team(kinds, W, P, F, D1, D2)
    phi = X[:, :n] - F
    E = np.dot(np.ascontiguousarray(D.T), W) - Edelta
    return phi, E, D1


@njit
def team_rates(X, kinds, P, K, S, KC, D, Edelta, n):
    """Combined field for every robot with exact neighbor values."""
    N = X.shape[0]
    k = X.shape[1] - n
    phi, E, D1 = team_errors(X, kinds, P, D, Edelta, n)
    kphi = K * phi
    sign = 1.0 if n % 2 == 0 else -1.0
    C = -np.dot(D, E)
    chi = np.empty((N, n + k))
    for j in range(n):
        acc = -kphi[:, j]
        for m in range(k):
            acc = acc + sign * D1[:, j, m] * S[:, m]
        chi[:, j] = acc
    for m in range(k):
        acc = sign * S[:, m] + KC[m] * C[:, m]
        for j in range(n):
            acc = acc + D1[:, j, m] * kphi[:, j]
        chi[:, n + m] = acc
    return chi


@njit
def team_lyapunov(X, kinds, P, K, KC, D, Edelta, n):
    phi, E, _ = team_errors(X, kinds, P, D, Edelta, n)
    v = np.sum(K * phi * phi)
    for m in range(E.shape[1]):
        v += KC[m] * np.sum(E[:, m] * E[:, m])
    return 0.5 * v


@njit
def integrate_fast(X0, kinds, P, K, S, KC, D, Edelta, n, step, nsteps, rk4, decim):
    """Fixed-step integration; returns (frames, frame_steps, V per step, steps_done).

    Frames are taken every ``decim`` steps plus the final step.  On a
    non-finite state the loop stops and ``steps_done`` holds the last good step.
    """
    N = X0.shape[0]
    dim = X0.shape[1]
    nframes = nsteps // decim + 1
    if nsteps % decim != 0:
        nframes += 1
    frames = np.empty((nframes, N, dim))
    frame_steps = np.empty(nframes, dtype=np.int64)
    V = np.full(nsteps + 1, np.nan)
    X = X0.copy()
    frames[0] = X
    frame_steps[0] = 0
    V[0] = team_lyapunov(X, kinds, P, K, KC, D, Edelta, n)
    fi = 1
    done = 0
    for s in range(nsteps):
        if rk4:
            k1 = team_rates(X, kinds, P, K, S, KC, D, Edelta, n)
            k2 = team_rates(X + 0.5 * step * k1, kinds, P, K, S, KC, D, Edelta, n)
            k3 = team_rates(X + 0.5 * step * k2, kinds, P, K, S, KC, D, Edelta, n)
            k4 = team_rates(X + step * k3, kinds, P, K, S, KC, D, Edelta, n)
            Xn = X + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            Xn = X + step * team_rates(X, kinds, P, K, S, KC, D, Edelta, n)
        if not np.all(np.isfinite(Xn)):
            break
        X = Xn
        done = s + 1
        V[done] = team_lyapunov(X, kinds, P, K, KC, D, Edelta, n)
        if done % decim == 0 or done == nsteps:
            frames[fi] = X
            frame_steps[fi] = done
            fi += 1
    # record the last good state when the run stopped early
    if (fi < nframes or done < nsteps) and frame_steps[fi - 1] != done:
        frames[fi] = X
        frame_steps[fi] = done
        fi += 1
    return frames[:fi], frame_steps[:fi], V[: done + 1], done


@njit
def dubins_rates(Y, kinds, P, K, S, KC, D, Edelta, n, adj, H, Hd, dmat, fresh, v, k_theta, sat_a, sat_b, gamma):
    """Closed-loop derivative of ``Y = [xi | theta]`` under the Dubins guidance law.

    ``H``/``Hd`` hold the last received neighbor ``w``/``w_dot`` (N, N, k),
    ignored when ``fresh``.  Returns (rate, inputs, sigma, theta_dot_d,
    saturated, chi, w_dot, singular) where ``singular`` is the 1-based index
    of the first robot whose planar field falls below ``gamma`` (0 if none).
    """
    N = Y.shape[0]
    k = Y.shape[1] - n - 1
    W = np.ascontiguousarray(Y[:, n : n + k])
    F = np.zeros((N, n))
    D1 = np.zeros((N, n, k))
    D2 = np.zeros((N, n, k, k))
    catalog_team(kinds, W, P, F, D1, D2)
    phi = Y[:, :n] - F
    kphi = K * phi
    sign = 1.0 if n % 2 == 0 else -1.0
    if fresh:
        E = np.dot(np.ascontiguousarray(D.T), W) - Edelta
        C = -np.dot(D, E)
    else:
        C = np.zeros((N, k))
        for i in range(N):
            for j in range(N):
                if adj[i, j] > 0:
                    for m in range(k):
                        C[i, m] -= W[i, m] - H[i, j, m] - dmat[i, j, m]
    chi = np.empty((N, n + k))
    for i in range(N):
        for j in range(n):
            acc = -kphi[i, j]
            for m in range(k):
                acc += sign * D1[i, j, m] * S[i, m]
            chi[i, j] = acc
        for m in range(k):
            acc = sign * S[i, m] + KC[m] * C[i, m]
            for j in range(n):
                acc += D1[i, j, m] * kphi[i, j]
            chi[i, n + m] = acc
    rate = np.empty_like(Y)
    inputs = np.empty((N, 2 + k))
    sigma = np.empty(N)
    tdd = np.empty(N)
    sat = np.zeros(N, dtype=np.bool_)
    wdot = np.empty((N, k))
    planar = np.empty(N)
    singular = 0
    for i in range(N):
        sq = chi[i, 0] ** 2 + chi[i, 1] ** 2
        if not sq > gamma:
            singular = i + 1
            return rate, inputs, sigma, tdd, sat, chi, wdot, singular
        planar[i] = np.sqrt(sq)
        for m in range(k):
            wdot[i, m] = v * chi[i, n + m] / planar[i]
    J = np.zeros((n + k, n + k))
    xd = np.empty(n + k)
    cd = np.empty(n + k)
    for i in range(N):
        th = Y[i, n + k]
        uz = v * chi[i, 2] / planar[i] if n == 3 else 0.0
        rate[i, 0] = v * np.cos(th)
        rate[i, 1] = v * np.sin(th)
        if n == 3:
            rate[i, 2] = uz
        for m in range(k):
            rate[i, n + m] = wdot[i, m]
        for c in range(n + k):
            xd[c] = rate[i, c]
        # own-state Jacobian of the uncoordinated field
        J[:, :] = 0.0
        for j in range(n):
            J[j, j] = -K[i, j]
            for q in range(k):
                acc = K[i, j] * D1[i, j, q]
                for m in range(k):
                    acc += sign * D2[i, j, m, q] * S[i, m]
                J[j, n + q] = acc
                J[n + q, j] = K[i, j] * D1[i, j, q]
        for m in range(k):
            for q in range(k):
                acc = 0.0
                for j in range(n):
                    acc += kphi[i, j] * D2[i, j, m, q] - K[i, j] * D1[i, j, q] * D1[i, j, m]
                J[n + m, n + q] = acc
        for r in range(n + k):
            acc = 0.0
            for c in range(n + k):
                acc += J[r, c] * xd[c]
            cd[r] = acc
        # consensus rate from own and neighbor parametric rates
        for m in range(k):
            cdot = 0.0
            for j in range(N):
                if adj[i, j] > 0:
                    nb = wdot[j, m] if fresh else Hd[i, j, m]
                    cdot -= wdot[i, m] - nb
            cd[n + m] += KC[m] * cdot
        norm = 0.0
        for c in range(n + k):
            norm += chi[i, c] ** 2
        norm = np.sqrt(norm)
        proj = 0.0
        for c in range(n + k):
            proj += chi[i, c] * cd[c]
        proj /= norm
        p0 = (cd[0] - chi[i, 0] / norm * proj) / norm
        p1 = (cd[1] - chi[i, 1] / norm * proj) / norm
        u0 = chi[i, 0] / planar[i]
        u1 = chi[i, 1] / planar[i]
        cp_norm = planar[i] / norm
        td = -(u0 * -p1 + u1 * p0) / cp_norm
        h0 = np.cos(th)
        h1 = np.sin(th)
        s_sig = -h0 * u1 + h1 * u0
        raw = td - k_theta * s_sig
        u = min(max(raw, sat_a), sat_b)
        sat[i] = u != raw
        rate[i, n + k] = u
        sg = np.arctan2(s_sig, h0 * u0 + h1 * u1)
        sigma[i] = np.pi if sg == -np.pi else sg
        tdd[i] = td
        inputs[i, 0] = u
        inputs[i, 1] = uz
        for m in range(k):
            inputs[i, 2 + m] = wdot[i, m]
    return rate, inputs, sigma, tdd, sat, chi, wdot, singular
