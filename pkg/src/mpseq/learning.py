"""Learn one primitive type from grouped demonstrations.

Pipeline: resample each demo to a fixed sample count, move it into the
primitive frame, invert the transformation system to get the forcing each
demo needs, split the stacked forcing profiles by SVD into a shared basis
and per-demo coefficients, then regress kernel weights onto every basis row.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DynamicsParams, KernelBank, LearnedMP, Trajectory, finite_difference, to_mp_frame
from .dynamics import make_kernel_bank, modified_phase

log = logging.getLogger(__name__)

DEFAULT_SAMPLES = 100


class RankDeficientFitWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class ForcingMatrix:
    """Stacked forcing profiles of one axis, one row per demonstration."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, ndmin=2)
        if not np.all(np.isfinite(v)):
            raise ValueError("forcing matrix contains non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def Q(self) -> int:
        return self.values.shape[0]

    @property
    def C(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class ShapeDecomposition:
    basis: np.ndarray  # J x C, rows of Sigma V^T
    coefficients: np.ndarray  # Q x J, columns of U
    spectrum: np.ndarray  # min(Q, C), descending

    @property
    def J(self) -> int:
        return self.basis.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.coefficients @ self.basis


def resample_samples(t, points, C: int) -> Trajectory:
    """Linear interpolation of ``points`` onto ``C`` uniform times over the span."""
    t = np.asarray(t, dtype=float)
    points = np.asarray(points, dtype=float)
    if C < 2:
        raise ValueError(f"need at least 2 output samples, got C={C}")
    if len(t) < 2 or len(t) != len(points):
        raise ValueError("need at least 2 timestamped points")
    if np.any(np.diff(t) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    new_t = np.linspace(t[0], t[-1], C)
    pts = np.column_stack([np.interp(new_t, t, points[:, 0]), np.interp(new_t, t, points[:, 1])])
    dt = (t[-1] - t[0]) / (C - 1)
    grid = np.arange(C) * dt
    vel = finite_difference(pts, grid)
    acc = finite_difference(vel, grid)
    return Trajectory(dt, pts, vel, acc)


def resample(traj: Trajectory, C: int = DEFAULT_SAMPLES) -> Trajectory:
    return resample_samples(traj.t, traj.points, C)


def prepare_demo(traj: Trajectory, C: int = DEFAULT_SAMPLES) -> Trajectory:
    """Express in the primitive frame (origin start, +x heading), then resample."""
    return resample(to_mp_frame(traj), C)


def moving_goal(b, g, T: float, t, tau: float = 1.0) -> np.ndarray:
    """Closed form of the goal function at times ``t`` (shape (n, 2))."""
    b = np.asarray(b, dtype=float)
    g = np.asarray(g, dtype=float)
    frac = np.clip(np.asarray(t, dtype=float) / (tau * T), 0.0, 1.0)
    return b + frac[:, None] * (g - b)


def inverse_forcing(
    demo: Trajectory, params: DynamicsParams, b=None, g=None, T: float | None = None, tau: float = 1.0
) -> np.ndarray:
    """Forcing the transformation system needs to follow ``demo`` exactly.

    f = tau^2 * acc - alpha_m * (beta_m * (r - x) - tau * vel), with r the
    moving goal along the demo's own timeline.  Returns shape (C, 2).
    """
    if demo.velocities is None or demo.accelerations is None:
        raise ValueError("demo needs velocities and accelerations; resample it first")
    b = demo.points[0] if b is None else np.asarray(b, dtype=float)
    g = demo.points[-1] if g is None else np.asarray(g, dtype=float)
    T = demo.duration / tau if T is None else T
    t = demo.t - demo.t[0]
    r = moving_goal(b, g, T, t, tau)
    x, v, a = demo.points, demo.velocities, demo.accelerations
    return tau**2 * a - params.alpha_m * (params.beta_m * (r - x) - tau * v)


def build_forcing_matrix(
    demos: Sequence[Trajectory], params: DynamicsParams, tau: float = 1.0
) -> tuple[ForcingMatrix, ForcingMatrix]:
    """Per-axis Q x C forcing matrices; each demo uses its own b, g and T."""
    if not demos:
        raise ValueError("need at least one demonstration")
    C = len(demos[0])
    rows = []
    for q, demo in enumerate(demos):
        if len(demo) != C:
            raise ValueError(f"demo {q} has {len(demo)} samples, expected {C}; resample first")
        rows.append(inverse_forcing(demo, params, tau=tau))
    F = np.stack(rows)  # Q x C x 2
    return ForcingMatrix(F[:, :, 0]), ForcingMatrix(F[:, :, 1])


def svd_decompose(F: ForcingMatrix | np.ndarray, J: int) -> ShapeDecomposition:
    """Rank-J split F ~ s @ D_basis with D_basis = leading rows of Sigma V^T.

    Each (column of U, row of Sigma V^T) pair is sign-flipped so the
    largest-magnitude entry of the basis row is positive.
    """
    values = F.values if isinstance(F, ForcingMatrix) else np.asarray(F, dtype=float)
    Q, C = values.shape
    if not 1 <= J <= min(Q, C):
        raise ValueError(f"rank J={J} outside [1, {min(Q, C)}]")
    U, sigma, Vt = np.linalg.svd(values, full_matrices=False)
    basis = sigma[:J, None] * Vt[:J]
    coeffs = U[:, :J].copy()
    pivot = np.argmax(np.abs(basis), axis=1)
    signs = np.sign(basis[np.arange(J), pivot])
    signs[signs == 0] = 1.0
    basis *= signs[:, None]
    coeffs *= signs[None, :]
    return ShapeDecomposition(basis=basis, coefficients=coeffs, spectrum=sigma)


def suggest_rank(spectrum, energy_fraction: float = 0.99) -> int:
    """Smallest J whose leading singular values hold ``energy_fraction`` of the energy."""
    sigma = np.asarray(spectrum, dtype=float).reshape(-1)
    if sigma.size == 0:
        raise ValueError("empty singular value spectrum")
    if np.any(sigma < 0) or np.any(np.diff(sigma) > 0):
        raise ValueError("spectrum must be non-negative and sorted descending")
    if not 0 < energy_fraction <= 1:
        raise ValueError("energy_fraction must be in (0, 1]")
    energy = np.cumsum(sigma**2)
    if energy[-1] == 0:
        return 1
    # relative slack so a fraction of exactly 1 is reachable in floating point
    need = energy_fraction * energy[-1] * (1 - 1e-12)
    return int(np.searchsorted(energy, need) + 1)


def phase_profile(T: float, t, params: DynamicsParams, tau: float = 1.0) -> np.ndarray:
    """Modified phase at sample times ``t``, exact, with z = 1 at ``t[0]``."""
    t = np.asarray(t, dtype=float)
    sample_dt = params.sample_interval(T, tau)
    return np.atleast_1d(modified_phase(params.alpha_z, tau, T, t, sample_dt, t0=t[0]))


def design_matrix(bank: KernelBank, row: int, t_norm, z_traj) -> np.ndarray:
    t = np.asarray(t_norm, dtype=float)
    act = np.exp(-bank.widths[row] * (t[:, None] - bank.centers[row]) ** 2)
    return act / np.maximum(act.sum(axis=1, keepdims=True), 1e-300) * np.asarray(z_traj, dtype=float)[:, None]


def fit_weights(basis_row, bank: KernelBank, row: int, z_traj, t_norm) -> tuple[np.ndarray, float]:
    """Least-squares kernel weights for one basis row; returns (weights, residual RMS).

    A rank-deficient design falls back to the minimum-norm solution with a
    :class:`RankDeficientFitWarning`.
    """
    y = np.asarray(basis_row, dtype=float)
    z_traj = np.asarray(z_traj, dtype=float)
    if not (len(y) == len(z_traj) == len(np.asarray(t_norm))):
        raise ValueError("basis row, phase and time vectors must have the same length")
    A = design_matrix(bank, row, t_norm, z_traj)
    w, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < A.shape[1]:
        warnings.warn(
            f"kernel design matrix has rank {rank} < {A.shape[1]}; using minimum-norm weights",
            RankDeficientFitWarning,
            stacklevel=2,
        )
    rms = float(np.sqrt(np.mean((A @ w - y) ** 2)))
    return w, rms


def train_type(
    demos: Sequence[Trajectory],
    N: int = 20,
    J: int = 5,
    params: DynamicsParams | None = None,
    mp_id: str = "mp",
    C: int = DEFAULT_SAMPLES,
    forcing_scale: float = 1.0,
) -> LearnedMP:
    """Learn a :class:`LearnedMP` from ``demos`` of one type."""
    params = params or DynamicsParams()
    Q = len(demos)
    if Q < 1:
        raise ValueError("need at least one demonstration")
    if not 1 <= J <= Q:
        raise ValueError(f"J={J} must satisfy 1 <= J <= Q={Q}")
    if forcing_scale == 0:
        raise ValueError("forcing_scale must be non-zero")
    prepared = [prepare_demo(d, C) for d in demos]
    Fx, Fy = build_forcing_matrix(prepared, params)
    dec_x = svd_decompose(Fx, J)
    dec_y = svd_decompose(Fy, J)

    durations = np.array([p.duration for p in prepared])
    T_mean = float(durations.mean())
    t_norm = np.linspace(0.0, 1.0, C)
    z_traj = phase_profile(T_mean, t_norm * T_mean, params)
    bank = make_kernel_bank(N, J)
    weights, rms = {}, {}
    for axis, dec in (("x", dec_x), ("y", dec_y)):
        rows = [fit_weights(dec.basis[j] / forcing_scale, bank, j, z_traj, t_norm) for j in range(J)]
        weights[axis] = np.stack([w for w, _ in rows])
        rms[axis] = np.array([r for _, r in rows]) * abs(forcing_scale)
        log.debug("%s axis %s: basis fit rms %s", mp_id, axis, rms[axis])

    return LearnedMP(
        id=mp_id,
        weights_x=weights["x"],
        weights_y=weights["y"],
        bank=bank,
        mean_duration=T_mean,
        forcing_scale=forcing_scale,
        singular_values_x=dec_x.spectrum,
        singular_values_y=dec_y.spectrum,
        demo_s_x=dec_x.coefficients,
        demo_s_y=dec_y.coefficients,
        demo_goals=np.stack([p.end - p.start for p in prepared]),
        demo_durations=durations,
        fit_rms_x=rms["x"],
        fit_rms_y=rms["y"],
    )
