"""Kernels, canonical systems, goal function, forcing terms and the
transformation-system integrator.

Time scaling: ``tau`` stretches a primitive to last ``tau * T`` seconds.
With ``v`` the scaled velocity the transformation system reads

    tau * dv/dt = alpha_m * (beta_m * (r - d) - v) + f
    tau * dd/dt = v

which reduces to the unscaled form at ``tau = 1`` and turns a rollout at
``tau`` into an exact time dilation of the ``tau = 1`` rollout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import DynamicsParams, KernelBank

# Floor for kernel-sum normalization; Gaussian tails underflow far from the bank.
DENOM_FLOOR = 1e-300


@dataclass(frozen=True)
class IntegratorState:
    d: np.ndarray
    v: np.ndarray
    r: np.ndarray
    z: float = 1.0
    t: float = 0.0


def make_kernel_bank(N: int, J: int = 1) -> KernelBank:
    """Equally spaced centers on [0, 1]; each kernel is 0.5 at its neighbour's center."""
    if N < 2:
        raise ValueError(f"need at least 2 kernels per row, got N={N}")
    if J < 1:
        raise ValueError(f"need at least 1 row, got J={J}")
    mu = np.linspace(0.0, 1.0, N)
    gaps = np.diff(mu)
    p = np.empty(N)
    p[:-1] = math.log(2.0) / gaps**2
    p[-1] = p[-2]
    return KernelBank(np.tile(mu, (J, 1)), np.tile(p, (J, 1)))


def kernel_activations(bank: KernelBank, row: int, t_norm) -> np.ndarray:
    """exp(-p_i (t - mu_i)^2) for every kernel of ``row``.

    ``t_norm`` may be a scalar (returns shape (N,)) or an array of times
    (returns shape (len(t), N)).
    """
    mu = bank.centers[row]
    p = bank.widths[row]
    t = np.asarray(t_norm, dtype=float)
    return np.exp(-p * (t[..., None] - mu) ** 2)


def _normalized_rbf(weights: np.ndarray, act: np.ndarray) -> np.ndarray:
    """Per-row sum(w * psi) / sum(psi); ``act`` is (..., J, N)."""
    num = (weights * act).sum(axis=-1)
    den = np.maximum(act.sum(axis=-1), DENOM_FLOOR)
    return num / den


def canonical_step_original(z: float, alpha_z: float, tau: float, dt: float) -> float:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return z - tau * alpha_z * z * dt


def logistic_slope(u):
    """e^u / (1 + e^u)^2 without overflow (it is even in u)."""
    e = np.exp(-np.abs(u))
    return e / (1.0 + e) ** 2


def canonical_rate_modified(alpha_z: float, tau: float, T: float, t, sample_dt: float):
    """Phase derivative of the logistic canonical system.

    The logistic argument is alpha_z * (tau*T - t) / sample_dt, so the phase
    only moves appreciably within a few sample intervals of t = tau*T.
    """
    u = alpha_z * (tau * T - np.asarray(t, dtype=float)) / sample_dt
    rate = -alpha_z * logistic_slope(u)
    return float(rate) if np.ndim(rate) == 0 else rate


def logistic(u):
    """1 / (1 + e^-u) in a form that does not overflow."""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(u, dtype=float)))


def modified_phase(alpha_z: float, tau: float, T: float, t, sample_dt: float, z0: float = 1.0, t0: float = 0.0):
    """Exact solution of the modified phase equation from ``z(t0) = z0``.

    With u = alpha_z * (tau*T - t) / sample_dt the rate -alpha_z * logistic'(u)
    integrates to z(t) = z0 + sample_dt * (logistic(u(t)) - logistic(u(t0))).
    The drop near t = tau*T is narrower than one sample interval, so an
    Euler rollout would place it differently on every grid.
    """
    def u(x):
        return alpha_z * (tau * T - np.asarray(x, dtype=float)) / sample_dt

    z = z0 + sample_dt * (logistic(u(t)) - logistic(u(t0)))
    return float(z) if np.ndim(z) == 0 else z


def canonical_step_modified(
    z: float, alpha_z: float, tau: float, T: float, t: float, dt: float, step: float | None = None
) -> float:
    """One Euler step of the modified phase (rollouts use :func:`modified_phase`).

    ``dt`` is the sample interval that appears in the logistic argument;
    ``step`` is the integration step and defaults to ``dt``.
    """
    if dt <= 0 or T <= 0:
        raise ValueError("dt and T must be positive")
    h = dt if step is None else step
    return z + h * canonical_rate_modified(alpha_z, tau, T, t, dt)


def goal_rate(b, g, T: float, tau: float, t: float) -> np.ndarray:
    """Moving-goal velocity: (g - b) / (tau*T) on [0, tau*T), zero after.

    Over one sample interval dt = tau*T/steps the goal advances by the
    fraction dt/(tau*T) of the displacement.  The window is half-open so
    exactly ``steps`` increments land the goal on ``g``.
    """
    b = np.asarray(b, dtype=float)
    g = np.asarray(g, dtype=float)
    span = tau * T
    if t < span * (1.0 - 1e-12):
        return (g - b) / span
    return np.zeros_like(b)


def goal_step(r, b, g, T: float, tau: float, t: float, dt: float) -> np.ndarray:
    return np.asarray(r, dtype=float) + dt * goal_rate(b, g, T, tau, t)


def forcing_modified(weights, s, bank: KernelBank, t_norm, z, alpha_w: float = 1.0):
    """alpha_w * sum_j s_j * [sum_i w_ji psi_ji / sum_i psi_ji] * z.

    ``t_norm`` and ``z`` may be arrays of equal length; the result then has
    one entry per time.
    """
    weights = np.asarray(weights, dtype=float)
    s = np.asarray(s, dtype=float).reshape(-1)
    if weights.shape != bank.centers.shape or len(s) != weights.shape[0]:
        raise ValueError(f"weights {weights.shape}, s {s.shape} and bank {bank.centers.shape} disagree")
    t = np.asarray(t_norm, dtype=float)
    act = np.exp(-bank.widths * (t[..., None, None] - bank.centers) ** 2)
    rows = _normalized_rbf(weights, act)
    out = alpha_w * (rows * s).sum(axis=-1) * np.asarray(z, dtype=float)
    return float(out) if out.ndim == 0 else out


def forcing_original(weights, bank_z: KernelBank, z):
    """Phase-indexed forcing sum_n w_n psi_n(z) z / sum_n psi_n(z) (one row)."""
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if weights.shape[0] != bank_z.cols:
        raise ValueError("weights and kernel bank disagree")
    act = kernel_activations(bank_z, 0, z)
    out = _normalized_rbf(weights, act) * np.asarray(z, dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def transform_step(
    state: IntegratorState,
    f,
    params: DynamicsParams,
    r=None,
    tau: float = 1.0,
    dt: float = 0.01,
) -> IntegratorState:
    """Semi-implicit Euler step: velocity first, position from the new velocity.

    ``r`` overrides the goal held in ``state``; the phase and goal are not
    advanced here.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    goal = state.r if r is None else np.asarray(r, dtype=float)
    f = np.asarray(f, dtype=float)
    k = params.alpha_m * params.beta_m
    acc = k * (goal - state.d) - params.alpha_m * state.v + f
    v = state.v + dt * acc / tau
    d = state.d + dt * v / tau
    return IntegratorState(d=d, v=v, r=goal, z=state.z, t=state.t + dt)


def substeps(params: DynamicsParams, h: float) -> int:
    """Integration substeps per output sample for a step of ``h`` (unscaled) seconds.

    1 while semi-implicit Euler is stable at ``h``; otherwise enough
    substeps to bring alpha_m * h down to 1.
    """
    if params.step_is_stable(h):
        return 1
    return int(math.ceil(params.alpha_m * h))


def refine_grid(times: np.ndarray, m: int) -> np.ndarray:
    """Split every interval of ``times`` into ``m`` equal pieces."""
    times = np.asarray(times, dtype=float)
    if m == 1:
        return times
    frac = np.arange(m) / m
    fine = (times[:-1, None] + np.diff(times)[:, None] * frac).reshape(-1)
    return np.append(fine, times[-1])


@dataclass
class RolloutArrays:
    t: np.ndarray
    d: np.ndarray
    v: np.ndarray
    r: np.ndarray
    z: np.ndarray
    f: np.ndarray


def integrate(
    times: np.ndarray,
    d0,
    params: DynamicsParams,
    forcing: Callable[[int, float, float, np.ndarray, np.ndarray], np.ndarray],
    goal_velocity: Callable[[int, float], np.ndarray],
    phase=None,
    tau: float = 1.0,
) -> RolloutArrays:
    """Roll the transformation system over the sample ``times``.

    Starts at rest with the goal on the start point.  ``phase`` holds z at
    every sample (all ones when omitted).  At step n
    ``forcing(n, t_n, z_n, d_n, v_n)`` supplies the forcing vector and the
    goal advances by explicit Euler with the step to ``times[n+1]``.
    """
    times = np.asarray(times, dtype=float)
    n = len(times)
    z = np.ones(n) if phase is None else np.asarray(phase, dtype=float)
    if z.shape != (n,):
        raise ValueError(f"phase has shape {z.shape}, expected ({n},)")
    a, k = params.alpha_m, params.alpha_m * params.beta_m
    d = np.zeros((n, 2))
    v = np.zeros((n, 2))
    r = np.zeros((n, 2))
    f = np.zeros((n, 2))
    d[0] = d0
    r[0] = d0
    for i in range(n - 1):
        h = times[i + 1] - times[i]
        fi = forcing(i, times[i], z[i], d[i], v[i])
        f[i] = fi
        v[i + 1] = v[i] + h * (k * (r[i] - d[i]) - a * v[i] + fi) / tau
        d[i + 1] = d[i] + h * v[i + 1] / tau
        r[i + 1] = r[i] + h * goal_velocity(i, times[i])
    f[-1] = forcing(n - 1, times[-1], z[-1], d[-1], v[-1])
    return RolloutArrays(times, d, v, r, z, f)
