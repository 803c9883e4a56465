"""Synthetic demonstration corpora standing in for recorded drives.

Every generator produces paths in the primitive frame (start at the
origin, initial heading +x) sampled at ``sample_dt`` like a logger would,
so the learning code still has to resample them.  Noisy corpora are moved
back into the primitive frame after the noise is added.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import DynamicsParams, Trajectory, to_mp_frame
from .dynamics import integrate, modified_phase

KINDS = ("sharp_turn", "lane_change", "straight", "custom_forcing")

# default ranges per kind: duration s, amplitude m, speed m/s
_DEFAULTS = {
    "lane_change": dict(duration_range=(4.0, 5.0), amplitude_range=(3.2, 3.8), speed_range=(12.0, 16.0)),
    "sharp_turn": dict(duration_range=(4.0, 5.0), amplitude_range=(12.0, 18.0), speed_range=(0.0, 0.0)),
    "straight": dict(duration_range=(4.0, 5.0), amplitude_range=(0.0, 0.0), speed_range=(8.0, 14.0)),
    "custom_forcing": dict(duration_range=(4.0, 5.0), amplitude_range=(-2.0, 2.0), speed_range=(8.0, 12.0)),
}


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one corpus.

    ``amplitude_range`` is the lateral offset for lane changes, the arc
    radius for sharp turns and the lateral goal for custom forcing.
    ``shape_jitter`` scales the random lateral-shape and speed-profile
    modes that make demos of one type differ in shape, not just in size.
    """

    kind: str
    Q: int = 10
    duration_range: tuple[float, float] | None = None
    amplitude_range: tuple[float, float] | None = None
    speed_range: tuple[float, float] | None = None
    angle_range: tuple[float, float] = (math.radians(75), math.radians(100))
    noise_sd: float = 0.0
    seed: int = 0
    sample_dt: float = 0.1
    shape_jitter: float = 1.0
    forcing: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown demonstration kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        for name, default in _DEFAULTS[self.kind].items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
        if self.Q < 1:
            raise ValueError("Q must be at least 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        if self.sample_dt <= 0:
            raise ValueError("sample_dt must be positive")
        for name in ("duration_range", "amplitude_range", "speed_range", "angle_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValueError(f"{name} must be a non-empty (lo, hi) range")
        if self.duration_range[0] <= 0:
            raise ValueError("durations must be positive")
        if self.kind == "custom_forcing" and self.forcing is None:
            raise ValueError("custom_forcing needs a forcing profile")


def quintic_step(s):
    """Minimum-jerk 0 -> 1 transition with zero end velocity and acceleration."""
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s**2)


def _bump_modes(s):
    # shape modes with zero value, slope and curvature at both ends
    base = 64.0 * s**3 * (1 - s) ** 3
    u = 2 * s - 1
    return np.stack([base * u, base, base * (u**2 - 0.2)], axis=-1)


def _arc_length(t, T, v_mean, speed_modes):
    # speed v = v_mean * (1 + a1 (s - 1/2) + a2 (s^2 - 1/3)), integrated over t
    s = t / T
    a1, a2 = speed_modes
    return v_mean * T * (s + a1 * (s**2 - s) / 2 + a2 * (s**3 - s) / 3)


def _lane_change(t, T, A, V, lateral_modes, speed_modes):
    s = t / T
    x = _arc_length(t, T, V, speed_modes)
    y = A * (quintic_step(s) + _bump_modes(s) @ lateral_modes)
    return np.column_stack([x, y])


def _sharp_turn(t, T, R, theta, speed_modes):
    arc = _arc_length(t, T, R * theta / T, speed_modes)
    phi = arc / R
    return np.column_stack([R * np.sin(phi), R * (1 - np.cos(phi))])


def _straight(t, T, V, speed_modes):
    x = _arc_length(t, T, V, speed_modes)
    return np.column_stack([x, np.zeros_like(x)])


def custom_forcing_demo(
    forcing: Callable[[np.ndarray], np.ndarray],
    goal,
    T: float,
    params: DynamicsParams | None = None,
    steps: int | None = None,
) -> Trajectory:
    """Roll out the transformation system under a known forcing profile.

    ``forcing`` maps normalized time (array) to an (n, 2) forcing array.
    """
    params = params or DynamicsParams()
    steps = steps or params.steps
    h = T / steps
    times = np.arange(steps + 1) * h
    f = np.asarray(forcing(times / T), dtype=float).reshape(len(times), 2)
    goal = np.asarray(goal, dtype=float)
    z = modified_phase(params.alpha_z, 1.0, T, times, params.sample_interval(T))
    out = integrate(
        times,
        np.zeros(2),
        params,
        forcing=lambda i, t, zi, d, v: f[i] * zi,
        goal_velocity=lambda i, t: goal / T if i < steps else np.zeros(2),
        phase=z,
    )
    return Trajectory(h, out.d, out.v)


def synth_demos(spec: SynthSpec) -> list[Trajectory]:
    """Generate ``spec.Q`` demonstrations; identical specs give identical output."""
    rng = np.random.default_rng(spec.seed)
    demos = []
    for _ in range(spec.Q):
        T = rng.uniform(*spec.duration_range)
        amp = rng.uniform(*spec.amplitude_range)
        speed = rng.uniform(*spec.speed_range)
        lateral = spec.shape_jitter * rng.uniform(-1.0, 1.0, size=3) * np.array([0.25, 0.15, 0.15])
        speed_modes = spec.shape_jitter * rng.uniform(-1.0, 1.0, size=2) * np.array([0.25, 0.3])
        theta = rng.uniform(*spec.angle_range)
        n = max(int(round(T / spec.sample_dt)), 2)
        t = np.linspace(0.0, T, n + 1)
        if spec.kind == "lane_change":
            pts = _lane_change(t, T, amp, speed, lateral, speed_modes)
        elif spec.kind == "sharp_turn":
            pts = _sharp_turn(t, T, amp, theta, speed_modes)
        elif spec.kind == "straight":
            pts = _straight(t, T, speed, speed_modes)
        else:
            traj = custom_forcing_demo(spec.forcing, (speed * T, amp), T)
            pts = np.column_stack(
                [np.interp(t, traj.t, traj.points[:, 0]), np.interp(t, traj.t, traj.points[:, 1])]
            )
        demo = Trajectory(T / n, pts)
        if spec.noise_sd > 0:
            # noise moves the start off the origin; clean paths are already exact
            demo = to_mp_frame(Trajectory(T / n, pts + rng.normal(0.0, spec.noise_sd, size=pts.shape)))
        demos.append(demo)
    return demos
