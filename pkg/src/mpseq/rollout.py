"""Regenerate a single learned primitive under adjusted start, goal,
duration and fine-tuning coefficients."""

from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np

from .core import AdjustmentSet, DynamicsParams, LearnedMP, Trajectory
from .dynamics import forcing_modified, integrate, refine_grid, substeps
from .learning import phase_profile


class OutsideTrainingWarning(UserWarning):
    """Fine-tuning coefficients far outside the training demos' spread."""


def default_adjustment(mp: LearnedMP, b=(0.0, 0.0)) -> AdjustmentSet:
    """Mean demo coefficients, mean duration and mean displacement."""
    s_x, s_y = mp.mean_s()
    b = np.asarray(b, dtype=float)
    return AdjustmentSet(b=b, g=b + mp.mean_goal(), T=mp.mean_duration, s_x=s_x, s_y=s_y)


def check_adjustment(mp: LearnedMP, adj: AdjustmentSet, sd_limit: float = 3.0) -> None:
    if len(adj.s_x) != mp.J or len(adj.s_y) != mp.J:
        raise ValueError(f"primitive {mp.id!r} needs {mp.J} coefficients per axis, got {len(adj.s_x)}")
    if mp.Q >= 2:
        for axis, s, demo in (("x", adj.s_x, mp.demo_s_x), ("y", adj.s_y, mp.demo_s_y)):
            mean, sd = demo.mean(axis=0), demo.std(axis=0)
            far = np.abs(s - mean) > sd_limit * np.maximum(sd, 1e-12)
            if np.any(far):
                warnings.warn(
                    f"{mp.id}: s_{axis}[{', '.join(map(str, np.flatnonzero(far)))}] outside "
                    f"{sd_limit:g} sd of the training coefficients",
                    OutsideTrainingWarning,
                    stacklevel=3,
                )


def regenerate(
    mp: LearnedMP,
    adj: AdjustmentSet,
    params: DynamicsParams | None = None,
    n_steps: int | None = None,
) -> Trajectory:
    """Integrate the primitive from rest at ``adj.b`` for ``tau * T`` seconds.

    Returns ``n_steps + 1`` samples (``params.steps + 1`` by default) with
    physical velocities and accelerations.  Long durations whose sample
    step would be unstable are integrated on a finer grid and sampled back.
    """
    params = params or DynamicsParams()
    check_adjustment(mp, adj)
    steps = params.steps if n_steps is None else int(n_steps)
    if steps < 1:
        raise ValueError("n_steps must be positive")
    tau, T = adj.tau, adj.T
    span = tau * T
    h = span / steps
    m = substeps(params, h / tau)
    times = refine_grid(np.arange(steps + 1) * h, m)
    z = phase_profile(T, times, params, tau)
    t_norm = times / span
    fx = forcing_modified(mp.weights_x, adj.s_x, mp.bank, t_norm, z, mp.forcing_scale)
    fy = forcing_modified(mp.weights_y, adj.s_y, mp.bank, t_norm, z, mp.forcing_scale)
    forcing = np.column_stack([fx, fy])
    rate = (adj.g - adj.b) / span
    last = steps * m

    out = integrate(
        times,
        adj.b,
        params,
        forcing=lambda i, t, zi, d, v: forcing[i],
        goal_velocity=lambda i, t: rate if i < last else np.zeros(2),
        phase=z,
        tau=tau,
    )
    k = params.alpha_m * params.beta_m
    acc = (k * (out.r - out.d) - params.alpha_m * out.v + out.f) / tau**2
    return Trajectory(h, out.d[::m], out.v[::m] / tau, acc[::m])


def sweep(
    mp: LearnedMP,
    base: AdjustmentSet,
    vary: str,
    values: Sequence,
    params: DynamicsParams | None = None,
    *,
    axis: str = "y",
    index: int = 0,
) -> list[Trajectory]:
    """One rollout per value with every other field of ``base`` held fixed.

    ``vary`` is ``"goal"`` (values are (x, y) goals), ``"duration"``
    (values are T) or ``"s"`` (values replace ``s_<axis>[index]``).
    """
    if len(values) == 0:
        raise ValueError("sweep needs at least one value")
    out = []
    for value in values:
        if vary == "goal":
            adj = base.replace(g=np.asarray(value, dtype=float))
        elif vary == "duration":
            adj = base.replace(T=float(value))
        elif vary == "s":
            if axis not in ("x", "y"):
                raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
            s = np.array(base.s_x if axis == "x" else base.s_y)
            s[index] = float(value)
            adj = base.replace(**{f"s_{axis}": s})
        else:
            raise ValueError(f"cannot sweep {vary!r}; choose goal, duration or s")
        out.append(regenerate(mp, adj, params))
    return out
