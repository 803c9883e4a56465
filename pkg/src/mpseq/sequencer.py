"""Join several primitives into one continuous trajectory.

The proposed method treats the sequence as a single primitive: every
segment's kernels are re-centred on its share of the total duration, one
phase runs over the whole sequence, the goal ramps piecewise through the
segment goals and each segment's forcing is rotated into the global frame
by the course angle at which the segment is entered.  The state is never
reset, so velocity stays continuous at the switches.

The baseline (:func:`simple_join`) regenerates every segment on its own
from the previous end point and restarts it from rest.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import (
    AdjustmentSet,
    DynamicsParams,
    InitialCondition,
    KernelBank,
    LearnedMP,
    MPLibrary,
    Trajectory,
    rotation,
    second_difference,
)
from .dynamics import DENOM_FLOOR, canonical_rate_modified, integrate, modified_phase, refine_grid, substeps
from .rollout import check_adjustment, regenerate

# b_k / g_{k-1} disagreement tolerated in strict mode, metres
STRICT_CHAIN_TOL = 0.01


@dataclass(frozen=True, eq=False)
class SequencePlan:
    """Unified kernel layout and per-segment data for one sequence.

    ``bank`` has one row per shape component (the largest J among the
    segments) and the segments' kernels side by side: columns
    ``col_slices[k]`` belong to segment k.  ``weights_x``/``weights_y``
    share that layout; rows a segment does not have are zero.
    """

    conditions: tuple[InitialCondition, ...]
    total_T: float
    bank: KernelBank
    weights_x: np.ndarray
    weights_y: np.ndarray
    s_x: tuple[np.ndarray, ...]
    s_y: tuple[np.ndarray, ...]
    alpha_w: np.ndarray
    starts: np.ndarray  # b_k in the global frame, K x 2
    goals: np.ndarray  # g_k in the global frame, K x 2
    col_slices: tuple[slice, ...]

    @property
    def K(self) -> int:
        return len(self.conditions)

    @property
    def durations(self) -> np.ndarray:
        return np.array([c.T for c in self.conditions])

    @property
    def segment_offsets(self) -> np.ndarray:
        """Start time of every segment (unscaled), length K."""
        return np.concatenate([[0.0], np.cumsum(self.durations)[:-1]])

    def segment_columns(self, k: int) -> slice:
        return self.col_slices[k]


def _coeffs(mp: LearnedMP, override, axis: str) -> np.ndarray:
    if override is None:
        return mp.mean_s()[0 if axis == "x" else 1]
    return np.asarray(override, dtype=float).reshape(-1)


def plan_sequence(
    lib: MPLibrary | Mapping[str, LearnedMP],
    conditions: Sequence[InitialCondition],
    s_overrides: Sequence[tuple | None] | None = None,
    *,
    strict: bool = False,
) -> SequencePlan:
    """Lay out the unified kernel bank and weights for ``conditions``.

    Segment k's centres become (T_k * mu + sum_{l<k} T_l) / T' and its
    widths p * T' / T_k.  ``s_overrides[k]`` is ``None`` (use the mean of
    the training coefficients) or an ``(s_x, s_y)`` pair.  Segment starts
    after the first follow the previous goal; with ``strict`` a start more
    than 1 cm away from that goal is an error instead.
    """
    conditions = tuple(conditions)
    K = len(conditions)
    if K == 0:
        raise ValueError("a sequence needs at least one initial condition")
    if s_overrides is not None and len(s_overrides) != K:
        raise ValueError(f"got {len(s_overrides)} coefficient overrides for {K} segments")
    mps = [lib[c.id] for c in conditions]  # raises UnknownPrimitiveError
    for c in conditions:
        if not c.T > 0:
            raise ValueError(f"segment {c.id!r}: duration must be positive")

    durations = np.array([c.T for c in conditions], dtype=float)
    total = float(durations.sum())
    offsets = np.concatenate([[0.0], np.cumsum(durations)[:-1]])
    J = max(mp.J for mp in mps)
    widths_n = [mp.N for mp in mps]
    cols = int(sum(widths_n))
    centers = np.zeros((J, cols))
    widths = np.zeros((J, cols))
    wx = np.zeros((J, cols))
    wy = np.zeros((J, cols))
    slices = []
    col = 0
    for k, mp in enumerate(mps):
        sl = slice(col, col + mp.N)
        slices.append(sl)
        col += mp.N
        for j in range(J):
            src = j if j < mp.J else 0  # padding rows copy row 0's layout, zero weights
            centers[j, sl] = (durations[k] * mp.bank.centers[src] + offsets[k]) / total
            widths[j, sl] = mp.bank.widths[src] * total / durations[k]
        wx[: mp.J, sl] = mp.weights_x
        wy[: mp.J, sl] = mp.weights_y

    s_x, s_y = [], []
    for k, mp in enumerate(mps):
        override = None if s_overrides is None else s_overrides[k]
        sx = _coeffs(mp, None if override is None else override[0], "x")
        sy = _coeffs(mp, None if override is None else override[1], "y")
        adj = AdjustmentSet(b=(0, 0), g=(0, 0), T=conditions[k].T, s_x=sx, s_y=sy)
        check_adjustment(mp, adj)
        s_x.append(np.pad(sx, (0, J - mp.J)))
        s_y.append(np.pad(sy, (0, J - mp.J)))

    starts = np.array([c.start for c in conditions])
    goals = np.array([c.goal for c in conditions])
    for k in range(1, K):
        gap = float(np.linalg.norm(starts[k] - goals[k - 1]))
        if strict and gap > STRICT_CHAIN_TOL:
            raise ValueError(
                f"segment {k + 1} ({conditions[k].id!r}) starts {gap:.3f} m away from the previous goal"
            )
        starts[k] = goals[k - 1]

    return SequencePlan(
        conditions=conditions,
        total_T=total,
        bank=KernelBank(centers, widths),
        weights_x=wx,
        weights_y=wy,
        s_x=tuple(s_x),
        s_y=tuple(s_y),
        alpha_w=np.array([mp.forcing_scale for mp in mps]),
        starts=starts,
        goals=goals,
        col_slices=tuple(slices),
    )


def segment_at(plan: SequencePlan, t: float, tau: float = 1.0) -> int | None:
    """Index of the segment owning time ``t``; boundaries go to the later segment.

    Returns ``None`` before 0 or at/after the end of the sequence.
    """
    if t < 0:
        return None
    ends = tau * np.cumsum(plan.durations)
    if t >= ends[-1] * (1.0 - 1e-12):
        return None
    return int(np.searchsorted(ends, t, side="right"))


def sequence_goal_rate(plan: SequencePlan, t: float, tau: float = 1.0) -> np.ndarray:
    """Goal velocity (g_k - b_k) / (tau * T_k) inside segment k, zero outside.

    Over one sample interval dt_k = tau * T_k / steps the goal advances by
    dt_k / (tau * T_k) of the segment displacement.
    """
    k = segment_at(plan, t, tau)
    if k is None:
        return np.zeros(2)
    return (plan.goals[k] - plan.starts[k]) / (tau * plan.conditions[k].T)


def sequence_canonical_step(
    z: float, alpha_z: float, tau: float, total_T: float, t: float, dt_k: float, step: float | None = None
) -> float:
    """Euler step of the sequence phase: the logistic law over T' with the active
    segment's dt_k.  Rollouts use the exact :func:`sequence_phase`."""
    if dt_k <= 0 or total_T <= 0:
        raise ValueError("dt_k and total_T must be positive")
    h = dt_k if step is None else step
    return z + h * canonical_rate_modified(alpha_z, tau, total_T, t, dt_k)


def sequence_phase(
    plan: SequencePlan, times, owner, alpha_z: float, tau: float, sample_dt: Sequence[float]
) -> np.ndarray:
    """Exact sequence phase at ``times``, z = 1 at t = 0.

    Inside segment k the phase follows the logistic law over T' with that
    segment's sample interval; it is continuous across segment boundaries.
    """
    times = np.asarray(times, dtype=float)
    owner = np.asarray(owner)
    ends = tau * np.cumsum(plan.durations)
    z = np.empty(len(times))
    z_b, t_b = 1.0, 0.0
    for k in range(plan.K):
        sel = owner == k
        dt_k = float(sample_dt[k])
        z[sel] = modified_phase(alpha_z, tau, plan.total_T, times[sel], dt_k, z_b, t_b)
        z_b = modified_phase(alpha_z, tau, plan.total_T, ends[k], dt_k, z_b, t_b)
        t_b = ends[k]
    return z


def rotate_forcing(fx, fy, delta: float) -> tuple:
    """Rotate the forcing vector (fx, fy) by ``delta`` radians."""
    c, s = math.cos(delta), math.sin(delta)
    return c * fx - s * fy, s * fx + c * fy


def segment_forcing(plan: SequencePlan, t_norm, z) -> np.ndarray:
    """Unrotated forcing of every segment at the normalized times ``t_norm``.

    Kernels are normalized over the whole bank, so a segment's
    contribution fades out as its neighbours' kernels take over.
    Returns shape (K, len(t_norm), 2).
    """
    t = np.atleast_1d(np.asarray(t_norm, dtype=float))
    z = np.broadcast_to(np.asarray(z, dtype=float), t.shape)
    bank = plan.bank
    act = np.exp(-bank.widths * (t[:, None, None] - bank.centers) ** 2)  # n x J x cols
    den = np.maximum(act.sum(axis=-1), DENOM_FLOOR)
    out = np.zeros((plan.K, len(t), 2))
    for k, sl in enumerate(plan.col_slices):
        for a, (w, s) in enumerate(((plan.weights_x, plan.s_x[k]), (plan.weights_y, plan.s_y[k]))):
            rows = (w[:, sl] * act[:, :, sl]).sum(axis=-1) / den
            out[k, :, a] = plan.alpha_w[k] * (rows * s).sum(axis=-1) * z
    return out


def sequence_times(plan: SequencePlan, steps: int, tau: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Sample times (``steps`` per segment plus the final instant) and owning segments."""
    times, owner = [], []
    for k, (off, T) in enumerate(zip(plan.segment_offsets, plan.durations)):
        times.append(tau * (off + np.arange(steps) * T / steps))
        owner.append(np.full(steps, k))
    times.append([tau * plan.total_T])
    owner.append([plan.K - 1])
    return np.concatenate(times), np.concatenate(owner).astype(int)


@dataclass(frozen=True, eq=False)
class SwitchReport:
    """Behaviour of a joined trajectory around its switch instants.

    ``velocity_jumps[k]`` is the velocity change at switch k beyond what
    the two preceding samples extrapolate to; ``a_max`` is the largest
    second-difference acceleration within half a segment of any switch and
    ``a_max_overall`` the largest anywhere.  ``misses[k]`` is the closest
    approach of the path to goal k.
    """

    method: str
    switch_indices: tuple[int, ...]
    switch_times: tuple[float, ...]
    switch_angles: tuple[float, ...]
    velocity_jumps: tuple[float, ...]
    a_max: float
    a_max_overall: float
    misses: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "switch_indices": list(self.switch_indices),
            "switch_times": list(self.switch_times),
            "switch_angles": list(self.switch_angles),
            "velocity_jumps": list(self.velocity_jumps),
            "a_max": self.a_max,
            "a_max_overall": self.a_max_overall,
            "misses": list(self.misses),
        }


@dataclass(frozen=True, eq=False)
class SequenceResult:
    trajectory: Trajectory
    report: SwitchReport
    plan: SequencePlan


def velocity_jumps(velocities: np.ndarray, indices: Sequence[int]) -> list[float]:
    """|v_s - (2 v_{s-1} - v_{s-2})| at every index: zero for smooth motion up to O(h^2)."""
    v = np.asarray(velocities, dtype=float)
    out = []
    for s in indices:
        if s < 2:
            out.append(float(np.linalg.norm(v[s] - v[max(s - 1, 0)])))
        else:
            out.append(float(np.linalg.norm(v[s] - 2 * v[s - 1] + v[s - 2])))
    return out


def _acc_norms(traj: Trajectory) -> np.ndarray:
    # index i of the result is sample i + 1
    return np.linalg.norm(second_difference(traj.points, traj.t), axis=1)


def _switch_report(
    method: str,
    traj: Trajectory,
    plan: SequencePlan,
    switch_indices: Sequence[int],
    angles: Sequence[float],
    steps: int,
) -> SwitchReport:
    acc = _acc_norms(traj)
    half = steps // 2
    if switch_indices:
        mask = np.zeros(len(acc), dtype=bool)
        for s in switch_indices:
            lo, hi = max(s - half, 1), min(s + half, len(traj) - 2)
            mask[lo - 1 : hi] = True
        a_max = float(acc[mask].max())
    else:
        a_max = 0.0
    gaps = np.linalg.norm(traj.points[None, :, :] - plan.goals[:, None, :], axis=2)
    t = traj.t
    return SwitchReport(
        method=method,
        switch_indices=tuple(int(s) for s in switch_indices),
        switch_times=tuple(float(t[s]) for s in switch_indices),
        switch_angles=tuple(float(a) for a in angles),
        velocity_jumps=tuple(velocity_jumps(traj.velocities, switch_indices)),
        a_max=a_max,
        a_max_overall=float(acc.max()) if len(acc) else 0.0,
        misses=tuple(float(m) for m in gaps.min(axis=1)),
    )


class SwitchAngleWarning(UserWarning):
    """The course-angle iteration stopped before converging."""


def _wrap(angle):
    return (np.asarray(angle) + np.pi) % (2 * np.pi) - np.pi


def generate_sequence(
    lib: MPLibrary | Mapping[str, LearnedMP],
    conditions: Sequence[InitialCondition],
    s_overrides: Sequence[tuple | None] | None = None,
    params: DynamicsParams | None = None,
    *,
    tau: float = 1.0,
    strict: bool = False,
    max_iter: int = 50,
    angle_tol: float = 1e-10,
) -> SequenceResult:
    """One continuous rollout through all segments (the proposed method).

    Segment k's forcing is rotated by its course angle delta_k, the heading
    of the velocity at the instant the segment is entered (delta_1 = 0).
    Because a segment's kernels already contribute a little before it is
    entered, the angles are found by fixed-point iteration: roll out with
    the current angles, read the realized headings at the switches, repeat
    until they stop changing.
    """
    params = params or DynamicsParams()
    if not (tau > 0 and math.isfinite(tau)):
        raise ValueError("tau must be positive")
    plan = plan_sequence(lib, conditions, s_overrides, strict=strict)
    steps = params.steps
    coarse, coarse_owner = sequence_times(plan, steps, tau)
    span = tau * plan.total_T
    sample_dt = np.array([params.sample_interval(T, tau) for T in plan.durations])
    # one refinement factor for every segment keeps the output grid intact
    m = max(substeps(params, h / tau) for h in sample_dt)
    times = refine_grid(coarse, m)
    owner = np.append(np.repeat(coarse_owner[:-1], m), coarse_owner[-1])

    # the phase does not depend on the state, so the unrotated forcing can be precomputed
    z = sequence_phase(plan, times, owner, params.alpha_z, tau, sample_dt)
    local = segment_forcing(plan, times / span, z)  # K x n x 2
    rates = (plan.goals - plan.starts) / (tau * plan.durations[:, None])
    switches = [int(np.argmax(coarse_owner == k)) for k in range(1, plan.K)]

    delta = np.zeros(plan.K)
    for _ in range(max(1, max_iter)):
        forcing = np.zeros((len(times), 2))
        for k in range(plan.K):
            fx, fy = rotate_forcing(local[k, :, 0], local[k, :, 1], delta[k])
            forcing[:, 0] += fx
            forcing[:, 1] += fy
        out = integrate(
            times,
            plan.starts[0],
            params,
            forcing=lambda i, t, zi, d, v: forcing[i],
            goal_velocity=lambda i, t: rates[owner[i]],
            phase=z,
            tau=tau,
        )
        realized = np.array([0.0] + [math.atan2(out.v[s * m, 1], out.v[s * m, 0]) for s in switches])
        change = float(np.max(np.abs(_wrap(realized - delta)))) if plan.K > 1 else 0.0
        delta = realized
        if change <= angle_tol:
            break
    else:
        warnings.warn(
            f"switch angles still moving by {change:.2e} rad after {max_iter} iterations",
            SwitchAngleWarning,
            stacklevel=2,
        )
    # the final pass used the previous angles; rerun when they moved at all
    if change > 0:
        forcing = np.zeros((len(times), 2))
        for k in range(plan.K):
            fx, fy = rotate_forcing(local[k, :, 0], local[k, :, 1], delta[k])
            forcing[:, 0] += fx
            forcing[:, 1] += fy
        out = integrate(
            times,
            plan.starts[0],
            params,
            forcing=lambda i, t, zi, d, v: forcing[i],
            goal_velocity=lambda i, t: rates[owner[i]],
            phase=z,
            tau=tau,
        )

    k_spring = params.alpha_m * params.beta_m
    acc = (k_spring * (out.r - out.d) - params.alpha_m * out.v + out.f) / tau**2
    traj = Trajectory(coarse[1] - coarse[0], out.d[::m], out.v[::m] / tau, acc[::m], coarse)
    report = _switch_report("proposed", traj, plan, switches, delta, steps)
    return SequenceResult(traj, report, plan)


def simple_join(
    lib: MPLibrary | Mapping[str, LearnedMP],
    conditions: Sequence[InitialCondition],
    s_overrides: Sequence[tuple | None] | None = None,
    params: DynamicsParams | None = None,
    *,
    tau: float = 1.0,
    strict: bool = False,
) -> SequenceResult:
    """Baseline: regenerate each segment alone from where the last one stopped.

    Segment k starts at rest at the previous end point, in a frame rotated
    to the previous end velocity.  At each switch the later segment owns
    the shared instant, so the reset velocity shows up as a jump.
    """
    params = params or DynamicsParams()
    plan = plan_sequence(lib, conditions, s_overrides, strict=strict)
    steps = params.steps
    pts, vel, acc, times = [], [], [], []
    angles = []
    start = plan.starts[0].copy()
    heading = 0.0
    t0 = 0.0
    switches = []
    for k, cond in enumerate(plan.conditions):
        mp = lib[cond.id]
        J = mp.J
        R = rotation(heading)
        g_local = R.T @ (plan.goals[k] - start)
        adj = AdjustmentSet(b=(0.0, 0.0), g=g_local, T=cond.T, s_x=plan.s_x[k][:J], s_y=plan.s_y[k][:J], tau=tau)
        seg = regenerate(mp, adj, params, n_steps=steps)
        p = seg.points @ R.T + start
        v = seg.velocities @ R.T
        a = seg.accelerations @ R.T
        t = t0 + seg.t
        if k > 0:
            # the later segment owns the shared instant
            pts[-1], vel[-1], acc[-1], times[-1] = pts[-1][:-1], vel[-1][:-1], acc[-1][:-1], times[-1][:-1]
            switches.append(sum(len(x) for x in pts))
        pts.append(p)
        vel.append(v)
        acc.append(a)
        times.append(t)
        angles.append(heading)
        start = p[-1].copy()
        end_v = v[-1]
        heading = math.atan2(end_v[1], end_v[0]) if np.any(end_v != 0) else heading
        t0 = t[-1]
    times_all = np.concatenate(times)
    traj = Trajectory(
        float(times_all[1] - times_all[0]),
        np.concatenate(pts),
        np.concatenate(vel),
        np.concatenate(acc),
        times_all,
    )
    report = _switch_report("simple", traj, plan, switches, angles, steps)
    return SequenceResult(traj, report, plan)
