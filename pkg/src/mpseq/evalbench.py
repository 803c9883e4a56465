"""Evaluation metrics and the benchmark harness.

Synthetic corpora stand in for recorded drives (see :mod:`mpseq.synth`).
The benchmark trains one primitive per corpus, measures how well each
rank J reproduces the demos and compares the two joining methods on
two-segment chains.  Reports are plain dicts that serialize to the same
bytes for the same config.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .core import AdjustmentSet, DynamicsParams, InitialCondition, LearnedMP, MPLibrary, Trajectory, rotation
from .core import second_difference
from .learning import DEFAULT_SAMPLES, prepare_demo, train_type
from .rollout import default_adjustment, regenerate
from .sequencer import generate_sequence, simple_join
from .synth import KINDS, SynthSpec, synth_demos

__all__ = [
    "BenchmarkReport",
    "ConfigError",
    "DEFAULT_CONFIG",
    "SynthSpec",
    "chain_conditions",
    "join_metrics",
    "pooled_deviation",
    "representation_deviation",
    "run_benchmark",
    "synth_demos",
]

REPORT_FORMAT = "mpseq-report"
REPORT_VERSION = 1


class ConfigError(ValueError):
    """Benchmark config does not match the expected schema."""


# ---------------------------------------------------------------------------
# Metrics


def pooled_deviation(reference: Sequence[np.ndarray], generated: Sequence[np.ndarray]) -> float:
    """Mean Euclidean distance over every sample of every pair, pooled."""
    if len(reference) != len(generated):
        raise ValueError(f"{len(reference)} reference trajectories but {len(generated)} generated")
    if not reference:
        raise ValueError("nothing to compare")
    dists = []
    for q, (a, b) in enumerate(zip(reference, generated)):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape != b.shape:
            raise ValueError(f"pair {q}: sample count mismatch {a.shape} vs {b.shape}")
        dists.append(np.linalg.norm(a - b, axis=1))
    return float(np.concatenate(dists).mean())


def representation_deviation(
    demos: Sequence[Trajectory],
    mp: LearnedMP,
    params: DynamicsParams | None = None,
    C: int = DEFAULT_SAMPLES,
) -> tuple[float, float]:
    """(mean position deviation, mean velocity deviation) over a type's demos.

    Demo q is regenerated with its stored coefficients and its own start,
    goal and duration, on the same C samples the primitive was trained on.
    """
    params = params or DynamicsParams()
    if len(demos) != mp.Q:
        raise ValueError(f"primitive {mp.id!r} was trained on {mp.Q} demos, got {len(demos)}")
    prepared = [prepare_demo(d, C) for d in demos]
    regen = []
    for q, demo in enumerate(prepared):
        adj = AdjustmentSet(b=demo.start, g=demo.end, T=demo.duration, s_x=mp.demo_s_x[q], s_y=mp.demo_s_y[q])
        regen.append(regenerate(mp, adj, params, n_steps=len(demo) - 1))
    dd = pooled_deviation([d.points for d in prepared], [r.points for r in regen])
    dv = pooled_deviation([d.velocities for d in prepared], [r.velocities for r in regen])
    return dd, dv


def join_metrics(
    traj: Trajectory, targets: Iterable, windows: Sequence[tuple[int, int]] | None = None
) -> tuple[float, list[float]]:
    """(a_max, per-target miss distance) of a joined trajectory.

    a_max is the largest second-difference acceleration magnitude, over
    all interior samples or only those inside the ``windows`` (inclusive
    sample-index ranges).  A miss is the closest approach to a target.
    """
    if len(traj) < 3:
        raise ValueError("need at least 3 samples to measure acceleration")
    acc = np.linalg.norm(second_difference(traj.points, traj.t), axis=1)
    if windows:
        mask = np.zeros(len(acc), dtype=bool)
        for lo, hi in windows:
            lo, hi = max(int(lo), 1), min(int(hi), len(traj) - 2)
            if lo <= hi:
                mask[lo - 1 : hi] = True
        acc = acc[mask]
    a_max = float(acc.max()) if len(acc) else 0.0
    targets = np.asarray(list(targets), dtype=float).reshape(-1, 2)
    misses = [float(np.linalg.norm(traj.points - g, axis=1).min()) for g in targets]
    return a_max, misses


def chain_conditions(
    lib: MPLibrary,
    ids: Sequence[str],
    params: DynamicsParams | None = None,
    start=(0.0, 0.0),
    heading: float = 0.0,
) -> list[InitialCondition]:
    """Initial conditions that chain the primitives' mean manoeuvres.

    Each segment gets its type's mean duration and displacement, rotated
    to the heading a default rollout of the previous segment ends with.
    """
    params = params or DynamicsParams()
    pos = np.asarray(start, dtype=float)
    conds = []
    for mp_id in ids:
        mp = lib[mp_id]
        adj = default_adjustment(mp)
        R = rotation(heading)
        goal = pos + R @ adj.g
        conds.append(InitialCondition(mp_id, float(adj.T), float(pos[0]), float(pos[1]), float(goal[0]), float(goal[1])))
        end_v = R @ regenerate(mp, adj, params).velocities[-1]
        heading = math.atan2(end_v[1], end_v[0])
        pos = goal
    return conds


# ---------------------------------------------------------------------------
# Benchmark config

_SPEC_KEYS = {
    "kind",
    "Q",
    "duration_range",
    "amplitude_range",
    "speed_range",
    "angle_range_deg",
    "noise_sd",
    "shape_jitter",
}
_PARAM_KEYS = {"alpha_m", "alpha_z", "steps"}

DEFAULT_CONFIG: dict[str, Any] = {
    "seed": 0,
    "N": 20,
    "params": {"alpha_m": 25.0, "alpha_z": 8.0, "steps": 100},
    "representation": [
        {"name": "sharp_turn", "corpus": {"kind": "sharp_turn", "Q": 10}, "J": [1, 3, 5]},
        {"name": "lane_change", "corpus": {"kind": "lane_change", "Q": 10}, "J": [1, 3, 5], "round_trip": True},
    ],
    "joining": [
        {
            "name": "low_speed_turn_chain",
            "params": {"alpha_m": 5.0},
            "J": 5,
            "segments": [
                {"id": "turn_left", "corpus": {"kind": "sharp_turn", "Q": 10}},
                {"id": "turn_left"},
            ],
        },
        {
            "name": "high_speed_lane_change_chain",
            "params": {"alpha_m": 5.0},
            "J": 5,
            "segments": [
                {"id": "lane_left", "corpus": {"kind": "lane_change", "Q": 10}},
                {"id": "lane_right", "corpus": {"kind": "lane_change", "Q": 10, "amplitude_range": [-3.8, -3.2]}},
            ],
        },
    ],
    "gates": {
        "round_trip_position_frac": 0.01,
        "round_trip_velocity_frac": 0.02,
        "accel_ratio_max": 0.10,
        "simple_jump_min": 1.0,
        "proposed_jump_max": 0.05,
        "miss_frac_max": 0.05,
    },
}


def _check_keys(doc: dict, allowed: set[str], where: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = set(doc) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(sorted(extra))}")


def _range(value, where: str) -> tuple[float, float]:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{where}: expected a [lo, hi] pair")
    try:
        lo, hi = float(value[0]), float(value[1])
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected numbers") from None
    return lo, hi


def _params(doc: dict | None, base: DynamicsParams, where: str) -> DynamicsParams:
    if doc is None:
        return base
    _check_keys(doc, _PARAM_KEYS, where)
    fields = dict(alpha_m=base.alpha_m, alpha_z=base.alpha_z, steps=base.steps)
    fields.update(doc)
    try:
        return DynamicsParams(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def scenario_seed(seed: int, name: str) -> int:
    """Per-scenario seed derived from the run seed and the scenario name."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *name.encode("utf-8")])
    return int(ss.generate_state(1)[0])


def _spec(doc: dict, seed: int, where: str) -> SynthSpec:
    _check_keys(doc, _SPEC_KEYS, where)
    kind = doc.get("kind")
    if kind not in KINDS or kind == "custom_forcing":
        raise ConfigError(f"{where}: unknown corpus kind {kind!r}")
    kwargs: dict[str, Any] = {"kind": kind, "seed": seed}
    if "Q" in doc:
        if not isinstance(doc["Q"], int) or isinstance(doc["Q"], bool):
            raise ConfigError(f"{where}: Q must be an integer")
        kwargs["Q"] = doc["Q"]
    for key in ("duration_range", "amplitude_range", "speed_range"):
        if key in doc:
            kwargs[key] = _range(doc[key], f"{where}.{key}")
    if "angle_range_deg" in doc:
        lo, hi = _range(doc["angle_range_deg"], f"{where}.angle_range_deg")
        kwargs["angle_range"] = (math.radians(lo), math.radians(hi))
    for key in ("noise_sd", "shape_jitter"):
        if key in doc:
            kwargs[key] = float(doc[key])
    try:
        return SynthSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _int_list(value, where: str) -> list[int]:
    values = value if isinstance(value, list) else [value]
    if not values or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in values):
        raise ConfigError(f"{where}: expected positive integer(s)")
    return values


def validate_config(config: dict) -> dict:
    """Fill defaults and check the schema; returns the normalized config."""
    _check_keys(config, {"seed", "N", "params", "representation", "joining", "gates"}, "config")
    out = {
        "seed": config.get("seed", 0),
        "N": config.get("N", DEFAULT_CONFIG["N"]),
        "params": dict(DEFAULT_CONFIG["params"], **(config.get("params") or {})),
        "representation": config.get("representation", []),
        "joining": config.get("joining", []),
        "gates": dict(DEFAULT_CONFIG["gates"], **(config.get("gates") or {})),
    }
    if not isinstance(out["seed"], int) or isinstance(out["seed"], bool):
        raise ConfigError("config.seed must be an integer")
    if not isinstance(out["N"], int) or out["N"] < 2:
        raise ConfigError("config.N must be an integer >= 2")
    _check_keys(out["gates"], set(DEFAULT_CONFIG["gates"]), "config.gates")
    base = _params(out["params"], DynamicsParams(), "config.params")
    names = set()
    for i, sc in enumerate(out["representation"]):
        where = f"config.representation[{i}]"
        _check_keys(sc, {"name", "corpus", "J", "round_trip"}, where)
        if not isinstance(sc.get("round_trip", False), bool):
            raise ConfigError(f"{where}.round_trip: expected true or false")
        if not isinstance(sc.get("name"), str) or sc["name"] in names:
            raise ConfigError(f"{where}: needs a unique name")
        names.add(sc["name"])
        spec = _spec(sc.get("corpus", {}), 0, f"{where}.corpus")
        for J in _int_list(sc.get("J", [1]), f"{where}.J"):
            if J > spec.Q:
                raise ConfigError(f"{where}.J: J={J} exceeds Q={spec.Q}")
    for i, sc in enumerate(out["joining"]):
        where = f"config.joining[{i}]"
        _check_keys(sc, {"name", "params", "J", "segments"}, where)
        if not isinstance(sc.get("name"), str) or sc["name"] in names:
            raise ConfigError(f"{where}: needs a unique name")
        names.add(sc["name"])
        _params(sc.get("params"), base, f"{where}.params")
        J = _int_list(sc.get("J", 5), f"{where}.J")
        segs = sc.get("segments")
        if not isinstance(segs, list) or not segs:
            raise ConfigError(f"{where}.segments: expected a non-empty list")
        corpora = {}
        for k, seg in enumerate(segs):
            _check_keys(seg, {"id", "corpus"}, f"{where}.segments[{k}]")
            if not isinstance(seg.get("id"), str):
                raise ConfigError(f"{where}.segments[{k}]: needs an id")
            if "corpus" in seg:
                spec = _spec(seg["corpus"], 0, f"{where}.segments[{k}].corpus")
                if J[0] > spec.Q:
                    raise ConfigError(f"{where}.J: J={J[0]} exceeds Q={spec.Q}")
                corpora[seg["id"]] = spec
            elif seg["id"] not in corpora:
                raise ConfigError(f"{where}.segments[{k}]: id {seg['id']!r} has no corpus")
    return out


# ---------------------------------------------------------------------------
# Benchmark run


@dataclass
class BenchmarkReport:
    data: dict
    trajectories: dict[str, Trajectory] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.data["passed"])

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _finite(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


def _gate(name: str, passed: bool, detail: str) -> dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


def _non_increasing(values: Sequence[float], rtol: float = 1e-9) -> bool:
    return all(b <= a * (1 + rtol) + 1e-12 for a, b in zip(values, values[1:]))


def _run_representation(sc: dict, cfg: dict, params: DynamicsParams) -> tuple[dict, list[dict], dict]:
    seed = scenario_seed(cfg["seed"], sc["name"])
    spec = _spec(sc["corpus"], seed, sc["name"])
    demos = synth_demos(spec)
    prepared = [prepare_demo(d) for d in demos]
    length = float(np.mean([p.path_length() for p in prepared]))
    speed = float(np.mean([np.linalg.norm(p.velocities, axis=1).mean() for p in prepared]))
    def row(J: int) -> tuple[dict, LearnedMP]:
        mp = train_type(demos, N=cfg["N"], J=J, params=params, mp_id=sc["name"])
        dd, dv = representation_deviation(demos, mp, params)
        return {
            "J": J,
            "position_deviation": dd,
            "velocity_deviation": dv,
            "position_frac": dd / length,
            "velocity_frac": dv / speed,
            "fit_rms_x": mp.fit_rms_x.tolist(),
            "fit_rms_y": mp.fit_rms_y.tolist(),
        }, mp

    rows = []
    mp = None
    for J in sorted(_int_list(sc.get("J", [1]), sc["name"])):
        r, mp = row(J)
        rows.append(r)
    round_trip = None
    if sc.get("round_trip"):
        round_trip, mp = row(spec.Q)
    if mp is None:
        mp = train_type(demos, N=cfg["N"], J=1, params=params, mp_id=sc["name"])
    # the spectrum does not depend on J
    spectrum = {"x": mp.singular_values_x.tolist(), "y": mp.singular_values_y.tolist()}
    entry = {
        "name": sc["name"],
        "seed": seed,
        "kind": spec.kind,
        "Q": spec.Q,
        "mean_path_length": length,
        "mean_speed": speed,
        "singular_values": spectrum,
        "rows": rows,
        "round_trip": round_trip,
    }
    gates = [
        _gate(
            f"{sc['name']}: deviations non-increasing in J",
            _non_increasing([r["position_deviation"] for r in rows])
            and _non_increasing([r["velocity_deviation"] for r in rows]),
            "J=" + ",".join(str(r["J"]) for r in rows),
        )
    ]
    if round_trip is not None:
        r = round_trip
        limits = cfg["gates"]
        gates.append(
            _gate(
                f"{sc['name']}: round trip at J=Q",
                r["position_frac"] <= limits["round_trip_position_frac"]
                and r["velocity_frac"] <= limits["round_trip_velocity_frac"],
                f"position {r['position_frac']:.4%} of path length, velocity {r['velocity_frac']:.4%} of speed",
            )
        )
    return entry, gates, {}


def _run_joining(sc: dict, cfg: dict, base: DynamicsParams) -> tuple[dict, list[dict], dict]:
    params = _params(sc.get("params"), base, sc["name"])
    J = _int_list(sc.get("J", 5), sc["name"])[0]
    mps, seeds = {}, {}
    for seg in sc["segments"]:
        if "corpus" in seg and seg["id"] not in mps:
            seed = scenario_seed(cfg["seed"], f"{sc['name']}/{seg['id']}")
            spec = _spec(seg["corpus"], seed, seg["id"])
            mps[seg["id"]] = train_type(synth_demos(spec), N=cfg["N"], J=J, params=params, mp_id=seg["id"])
            seeds[seg["id"]] = seed
    lib = MPLibrary(mps.values())
    ids = [seg["id"] for seg in sc["segments"]]
    conds = chain_conditions(lib, ids, params)
    disp = [float(np.linalg.norm(c.goal - c.start)) for c in conds]
    methods, trajs = {}, {}
    for name, fn in (("proposed", generate_sequence), ("simple", simple_join)):
        res = fn(lib, conds, params=params)
        methods[name] = res.report.to_dict()
        trajs[f"{sc['name']}_{name}.csv"] = res.trajectory
    prop, simp = methods["proposed"], methods["simple"]
    ratio = prop["a_max"] / simp["a_max"] if simp["a_max"] > 0 else math.inf
    entry = {
        "name": sc["name"],
        "seeds": seeds,
        "params": {"alpha_m": params.alpha_m, "alpha_z": params.alpha_z, "steps": params.steps},
        "conditions": [
            {"id": c.id, "T": c.T, "x_init": c.x_init, "y_init": c.y_init, "x_g": c.x_g, "y_g": c.y_g} for c in conds
        ],
        "displacements": disp,
        "methods": methods,
        "accel_ratio": _finite(ratio),
        "singular_values": {
            k: {"x": mp.singular_values_x.tolist(), "y": mp.singular_values_y.tolist()} for k, mp in mps.items()
        },
    }
    g = cfg["gates"]
    gates = []
    if len(conds) > 1:
        jump_simple = min(simp["velocity_jumps"])
        gates.append(
            _gate(
                f"{sc['name']}: acceleration ratio",
                jump_simple >= g["simple_jump_min"] and ratio <= g["accel_ratio_max"],
                f"a_max {prop['a_max']:.4g} vs {simp['a_max']:.4g} m/s^2 (ratio {ratio:.4g}), "
                f"simple jump {jump_simple:.4g} m/s",
            )
        )
        gates.append(
            _gate(
                f"{sc['name']}: velocity continuity",
                max(prop["velocity_jumps"]) <= g["proposed_jump_max"] and jump_simple >= g["simple_jump_min"],
                f"proposed {max(prop['velocity_jumps']):.4g} m/s, simple {jump_simple:.4g} m/s",
            )
        )
    fracs = [m / d if d > 0 else (0.0 if m == 0 else math.inf) for m, d in zip(prop["misses"], disp)]
    gates.append(
        _gate(
            f"{sc['name']}: target tracking",
            all(math.isfinite(f) and f <= g["miss_frac_max"] for f in fracs),
            "miss/displacement " + ", ".join(f"{f:.4g}" for f in fracs),
        )
    )
    return entry, gates, trajs


def run_benchmark(config: dict | None = None, *, seed: int | None = None) -> BenchmarkReport:
    """Run every scenario in ``config`` (default :data:`DEFAULT_CONFIG`).

    ``seed`` overrides the config seed.  A scenario that raises is
    recorded with its error and a failing gate; the others still run.
    """
    raw = json.loads(json.dumps(DEFAULT_CONFIG if config is None else config))
    if seed is not None:
        raw["seed"] = int(seed)
    cfg = validate_config(raw)
    base = _params(cfg["params"], DynamicsParams(), "config.params")
    data: dict[str, Any] = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "config": cfg,
        "seed": cfg["seed"],
        "representation": [],
        "joining": [],
        "gates": [],
    }
    trajectories: dict[str, Trajectory] = {}
    for section, runner in (("representation", _run_representation), ("joining", _run_joining)):
        for sc in cfg[section]:
            try:
                entry, gates, trajs = runner(sc, cfg, base)
            except (ArithmeticError, ValueError, LookupError, np.linalg.LinAlgError) as exc:
                entry = {"name": sc["name"], "error": f"{type(exc).__name__}: {exc}"}
                gates, trajs = [_gate(f"{sc['name']}: completed", False, entry["error"])], {}
            data[section].append(entry)
            data["gates"].extend(gates)
            trajectories.update(trajs)
    data["passed"] = all(g["passed"] for g in data["gates"])
    return BenchmarkReport(_sanitize(data), trajectories)


def _sanitize(obj):
    # numpy scalars to Python, non-finite floats to None, so the JSON is strict
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _finite(float(obj))
    return obj
