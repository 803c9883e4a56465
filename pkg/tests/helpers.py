"""Builders shared by several test modules."""

import math

import numpy as np

from mpseq.core import AdjustmentSet, InitialCondition, KernelBank, LearnedMP, rotation
from mpseq.dynamics import make_kernel_bank
from mpseq.rollout import regenerate


def make_mp(mp_id="mp", J=2, N=20, Q=4, seed=0, **changes):
    """Random but well-formed primitive; ``changes`` override fields."""
    rng = np.random.default_rng(seed)
    fields = dict(
        id=mp_id,
        weights_x=rng.normal(size=(J, N)),
        weights_y=rng.normal(size=(J, N)),
        bank=make_kernel_bank(N, J),
        mean_duration=4.5,
        forcing_scale=1.0,
        singular_values_x=np.sort(rng.uniform(0, 10, Q))[::-1],
        singular_values_y=np.sort(rng.uniform(0, 10, Q))[::-1],
        demo_s_x=rng.normal(size=(Q, J)),
        demo_s_y=rng.normal(size=(Q, J)),
        demo_goals=rng.normal(size=(Q, 2)),
        demo_durations=rng.uniform(4, 5, Q),
        fit_rms_x=rng.uniform(0, 1, J),
        fit_rms_y=rng.uniform(0, 1, J),
    )
    fields.update(changes)
    return LearnedMP(**fields)


def flat_bank_mp(mp_id, centers, p, J=1, T=1.0):
    """Primitive with a hand-made kernel layout and zero weights."""
    centers = np.tile(np.asarray(centers, dtype=float), (J, 1))
    N = centers.shape[1]
    return make_mp(
        mp_id,
        J=J,
        N=N,
        Q=max(J, 2),
        bank=KernelBank(centers, np.full_like(centers, p)),
        weights_x=np.zeros((J, N)),
        weights_y=np.zeros((J, N)),
        mean_duration=T,
    )


def mixed_chain(lib, ids, rng, params, start=(0.0, 0.0)):
    """Chained conditions whose segments are convex mixtures of training demos.

    Returns (conditions, coefficient overrides).
    """
    pos = np.asarray(start, dtype=float)
    heading = 0.0
    conds, overrides = [], []
    for mp_id in ids:
        mp = lib[mp_id]
        w = rng.dirichlet(np.ones(mp.Q))
        adj = AdjustmentSet(
            b=(0.0, 0.0),
            g=w @ mp.demo_goals,
            T=float(w @ mp.demo_durations),
            s_x=w @ mp.demo_s_x,
            s_y=w @ mp.demo_s_y,
        )
        R = rotation(heading)
        goal = pos + R @ adj.g
        conds.append(InitialCondition(mp_id, adj.T, pos[0], pos[1], goal[0], goal[1]))
        overrides.append((adj.s_x, adj.s_y))
        v = R @ regenerate(mp, adj, params).velocities[-1]
        heading = math.atan2(v[1], v[0])
        pos = goal
    return conds, overrides
