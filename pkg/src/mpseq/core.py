"""Domain types shared by the learning, rollout and sequencing code.

All types are frozen dataclasses holding read-only numpy arrays, so a
value can be handed to several threads without copying.  The library
file is a versioned JSON document; trajectories travel as CSV.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

LIBRARY_FORMAT = "mpseq-library"
LIBRARY_VERSION = 1


class LibraryFormatError(ValueError):
    """Raised when a library document cannot be parsed."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at byte {position})"
        super().__init__(message)


class UnknownPrimitiveError(LookupError):
    def __init__(self, mp_id: str):
        self.mp_id = mp_id
        super().__init__(f"unknown motion primitive id {mp_id!r}")

    def __str__(self) -> str:
        return self.args[0]


class TrajectoryFormatError(ValueError):
    pass


def _frozen(a, shape_tail: tuple[int, ...] | None = None, name: str = "array") -> np.ndarray:
    arr = np.array(a, dtype=float)
    if shape_tail is not None and (arr.ndim != 1 + len(shape_tail) or arr.shape[1:] != shape_tail):
        raise ValueError(f"{name} must have shape (n, {', '.join(map(str, shape_tail))}), got {arr.shape}")
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Trajectory


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A sampled planar path.

    ``dt`` is the nominal sample interval.  Sequences built from segments
    of different durations are not uniformly sampled; those carry explicit
    ``times`` and ``dt`` then only records the first step.
    """

    dt: float
    points: np.ndarray
    velocities: np.ndarray | None = None
    accelerations: np.ndarray | None = None
    times: np.ndarray | None = None

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        pts = _frozen(self.points, (2,), "points")
        if len(pts) < 2:
            raise ValueError("a trajectory needs at least 2 points")
        object.__setattr__(self, "points", pts)
        for name in ("velocities", "accelerations"):
            val = getattr(self, name)
            if val is not None:
                arr = _frozen(val, (2,), name)
                if len(arr) != len(pts):
                    raise ValueError(f"{name} has {len(arr)} rows, points has {len(pts)}")
                object.__setattr__(self, name, arr)
        if self.times is not None:
            t = _frozen(self.times).reshape(-1)
            if len(t) != len(pts):
                raise ValueError("times and points differ in length")
            if np.any(np.diff(t) <= 0):
                raise ValueError("times must be strictly increasing")
            t.setflags(write=False)
            object.__setattr__(self, "times", t)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def t(self) -> np.ndarray:
        if self.times is not None:
            return self.times
        return np.arange(len(self.points)) * self.dt

    @property
    def duration(self) -> float:
        t = self.t
        return float(t[-1] - t[0])

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def path_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def with_derivatives(self) -> "Trajectory":
        """Fill velocities/accelerations by finite differences of the points."""
        vel = finite_difference(self.points, self.t)
        acc = finite_difference(vel, self.t)
        return Trajectory(self.dt, self.points, vel, acc, self.times)


def finite_difference(values: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Central differences in the interior, one-sided at the ends.

    Works on non-uniform grids (second-order three-point formula).
    """
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        raise ValueError("need at least 2 samples to differentiate")
    if len(values) == 2:
        d = (values[1] - values[0]) / (t[1] - t[0])
        return np.stack([d, d])
    return np.gradient(values, np.asarray(t, dtype=float), axis=0, edge_order=1)


def second_difference(points: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Three-point second derivative at interior samples (len n-2)."""
    points = np.asarray(points, dtype=float)
    h1 = np.diff(t)[:-1, None]
    h2 = np.diff(t)[1:, None]
    fwd = (points[2:] - points[1:-1]) / h2
    bwd = (points[1:-1] - points[:-2]) / h1
    return 2.0 * (fwd - bwd) / (h1 + h2)


# ---------------------------------------------------------------------------
# Kernel bank and learned primitives


@dataclass(frozen=True, eq=False)
class KernelBank:
    """Gaussian kernels laid out as ``rows`` x ``cols`` (J rows of N kernels)."""

    centers: np.ndarray
    widths: np.ndarray

    def __post_init__(self):
        c = np.array(self.centers, dtype=float, ndmin=2)
        w = np.array(self.widths, dtype=float, ndmin=2)
        if c.shape != w.shape or c.ndim != 2:
            raise ValueError(f"centers {c.shape} and widths {w.shape} must be equal 2-D shapes")
        c.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "widths", w)

    @property
    def rows(self) -> int:
        return self.centers.shape[0]

    @property
    def cols(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True, eq=False)
class LearnedMP:
    """One motion-primitive type learned from grouped demonstrations.

    ``weights_x``/``weights_y`` are the basic-shape weights (J x N);
    ``demo_s_x``/``demo_s_y`` hold the fine-tuning coefficients each
    training demo maps to (Q x J).
    """

    id: str
    weights_x: np.ndarray
    weights_y: np.ndarray
    bank: KernelBank
    mean_duration: float
    forcing_scale: float = 1.0
    singular_values_x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    singular_values_y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    demo_s_x: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    demo_s_y: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    demo_goals: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    demo_durations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fit_rms_x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fit_rms_y: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name, nd in (
            ("weights_x", 2),
            ("weights_y", 2),
            ("singular_values_x", 1),
            ("singular_values_y", 1),
            ("demo_s_x", 2),
            ("demo_s_y", 2),
            ("demo_goals", 2),
            ("demo_durations", 1),
            ("fit_rms_x", 1),
            ("fit_rms_y", 1),
        ):
            arr = np.array(getattr(self, name), dtype=float, ndmin=nd)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def J(self) -> int:
        return self.weights_x.shape[0]

    @property
    def N(self) -> int:
        return self.weights_x.shape[1]

    @property
    def Q(self) -> int:
        return self.demo_s_x.shape[0]

    def mean_s(self) -> tuple[np.ndarray, np.ndarray]:
        if self.Q == 0:
            return np.zeros(self.J), np.zeros(self.J)
        return self.demo_s_x.mean(axis=0), self.demo_s_y.mean(axis=0)

    def mean_goal(self) -> np.ndarray:
        if len(self.demo_goals) == 0:
            return np.zeros(2)
        return self.demo_goals.mean(axis=0)

    def s_spread(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-coefficient standard deviation over the training demos."""
        if self.Q < 2:
            return np.ones(self.J), np.ones(self.J)
        return self.demo_s_x.std(axis=0), self.demo_s_y.std(axis=0)


class MPLibrary(Mapping[str, LearnedMP]):
    """Read-only collection of learned primitives keyed by id."""

    def __init__(self, mps: Iterable[LearnedMP] = ()):
        self._mps: dict[str, LearnedMP] = {}
        for mp in mps:
            if mp.id in self._mps:
                raise ValueError(f"duplicate primitive id {mp.id!r}")
            self._mps[mp.id] = mp

    def __getitem__(self, mp_id: str) -> LearnedMP:
        try:
            return self._mps[mp_id]
        except KeyError:
            raise UnknownPrimitiveError(mp_id) from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._mps)

    def __len__(self) -> int:
        return len(self._mps)

    def with_mp(self, mp: LearnedMP) -> "MPLibrary":
        """Return a new library with ``mp`` added or replacing the same id."""
        items = {k: v for k, v in self._mps.items()}
        items[mp.id] = mp
        return MPLibrary(items.values())

    def __repr__(self) -> str:
        return f"MPLibrary({list(self._mps)})"


# ---------------------------------------------------------------------------
# Regeneration inputs


@dataclass(frozen=True, eq=False)
class AdjustmentSet:
    """Start, goal, duration and fine-tuning coefficients for one rollout."""

    b: np.ndarray
    g: np.ndarray
    T: float
    s_x: np.ndarray
    s_y: np.ndarray
    tau: float = 1.0

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"duration T must be positive, got {self.T}")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be positive, got {self.tau}")
        for name, shape in (("b", (2,)), ("g", (2,))):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} must be an (x, y) pair")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("s_x", "s_y"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.s_x) != len(self.s_y):
            raise ValueError("s_x and s_y must have the same length")

    def replace(self, **changes) -> "AdjustmentSet":
        fields = dict(b=self.b, g=self.g, T=self.T, s_x=self.s_x, s_y=self.s_y, tau=self.tau)
        fields.update(changes)
        return AdjustmentSet(**fields)


@dataclass(frozen=True)
class InitialCondition:
    id: str
    T: float
    x_init: float
    y_init: float
    x_g: float
    y_g: float

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"segment {self.id!r}: duration must be positive, got {self.T}")
        for name in ("x_init", "y_init", "x_g", "y_g"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"segment {self.id!r}: {name} is not finite")

    @property
    def start(self) -> np.ndarray:
        return np.array([self.x_init, self.y_init])

    @property
    def goal(self) -> np.ndarray:
        return np.array([self.x_g, self.y_g])


@dataclass(frozen=True)
class DynamicsParams:
    """Transformation/canonical system constants.

    ``beta_m`` is tied to ``alpha_m / 4`` so the spring-damper is always
    critically damped.  ``steps`` fixes the sample interval at
    ``T / steps`` for a primitive of duration ``T``.
    """

    alpha_m: float = 25.0
    alpha_z: float = 8.0
    steps: int = 100

    def __post_init__(self):
        if not (self.alpha_m > 0 and self.alpha_z > 0):
            raise ValueError("alpha_m and alpha_z must be strictly positive")
        if int(self.steps) != self.steps or self.steps < 2:
            raise ValueError("steps must be an integer >= 2")

    @property
    def beta_m(self) -> float:
        return self.alpha_m / 4.0

    def sample_interval(self, T: float, tau: float = 1.0) -> float:
        return tau * T / self.steps

    def step_is_stable(self, h: float) -> bool:
        """Spectral radius check of one semi-implicit Euler step (f = 0)."""
        a, k = self.alpha_m, self.alpha_m * self.beta_m
        step = np.array([[1 - h * a, -h * k], [h * (1 - h * a), 1 - h * h * k]])
        return bool(np.max(np.abs(np.linalg.eigvals(step))) < 1.0)


# ---------------------------------------------------------------------------
# Library validation


@dataclass(frozen=True)
class Violation:
    mp_id: str
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.mp_id}.{self.field}: {self.message}"


def _mp_violations(mp: LearnedMP) -> list[Violation]:
    out: list[Violation] = []

    def bad(name: str, msg: str):
        out.append(Violation(mp.id, name, msg))

    if mp.weights_x.ndim != 2 or mp.weights_y.ndim != 2:
        bad("weights", "weights must be 2-D matrices")
        return out
    if mp.weights_x.shape != mp.weights_y.shape:
        bad("weights_y", f"shape {mp.weights_y.shape} differs from weights_x {mp.weights_x.shape}")
    bank = mp.bank
    if bank.centers.shape != mp.weights_x.shape:
        bad("bank", f"kernel layout {bank.centers.shape} differs from weights {mp.weights_x.shape}")
    if np.any(~np.isfinite(bank.widths)) or np.any(bank.widths <= 0):
        bad("bank.widths", "kernel widths must be strictly positive")
    if np.any(~np.isfinite(bank.centers)):
        bad("bank.centers", "non-finite kernel center")
    elif bank.cols > 1 and np.any(np.diff(bank.centers, axis=1) < 0):
        bad("bank.centers", "centers must be non-decreasing within each row")
    for name in ("weights_x", "weights_y", "demo_s_x", "demo_s_y", "demo_goals", "demo_durations", "fit_rms_x", "fit_rms_y"):
        if not np.all(np.isfinite(getattr(mp, name))):
            bad(name, "contains non-finite values")
    if not (mp.mean_duration > 0 and math.isfinite(mp.mean_duration)):
        bad("mean_duration", "must be positive")
    if not math.isfinite(mp.forcing_scale):
        bad("forcing_scale", "must be finite")
    for name in ("singular_values_x", "singular_values_y"):
        sv = getattr(mp, name)
        if np.any(sv < 0) or np.any(~np.isfinite(sv)):
            bad(name, "singular values must be finite and non-negative")
        elif np.any(np.diff(sv) > 0):
            bad(name, "singular values must be sorted descending")
    J = mp.weights_x.shape[0]
    for name in ("demo_s_x", "demo_s_y"):
        s = getattr(mp, name)
        if s.size and s.shape[1] != J:
            bad(name, f"has {s.shape[1]} columns, expected J={J}")
    Q = mp.demo_s_x.shape[0]
    if mp.demo_s_y.shape[0] != Q:
        bad("demo_s_y", "row count differs from demo_s_x")
    if Q and J > Q:
        bad("weights_x", f"rank J={J} exceeds demonstration count Q={Q}")
    if len(mp.demo_goals) != Q:
        bad("demo_goals", f"{len(mp.demo_goals)} goals for {Q} demonstrations")
    if len(mp.demo_durations) not in (0, Q):
        bad("demo_durations", f"{len(mp.demo_durations)} durations for {Q} demonstrations")
    return out


def validate_library(lib: MPLibrary) -> list[Violation]:
    """Every invariant violation in ``lib``; an empty list means valid."""
    out: list[Violation] = []
    for mp_id in lib:
        mp = lib[mp_id]
        if mp.id != mp_id:
            out.append(Violation(mp_id, "id", f"stored under {mp_id!r} but named {mp.id!r}"))
        out.extend(_mp_violations(mp))
    return out


# ---------------------------------------------------------------------------
# Library serialization


def _matrix(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return {"dims": [len(a)], "data": a.tolist()}
    return {"dims": list(a.shape), "data": a.reshape(-1).tolist()}


def _unmatrix(doc, where: str) -> np.ndarray:
    if not isinstance(doc, dict) or "dims" not in doc or "data" not in doc:
        raise LibraryFormatError(f"{where}: expected a matrix object with dims and data")
    dims, data = doc["dims"], doc["data"]
    if not isinstance(dims, list) or not all(isinstance(d, int) and d >= 0 for d in dims):
        raise LibraryFormatError(f"{where}: bad dims {dims!r}")
    if not isinstance(data, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in data):
        raise LibraryFormatError(f"{where}: data must be a list of numbers")
    if math.prod(dims) != len(data):
        raise LibraryFormatError(f"{where}: dims {dims} do not match {len(data)} values")
    arr = np.array(data, dtype=float).reshape(dims)
    if not np.all(np.isfinite(arr)):
        raise LibraryFormatError(f"{where}: non-finite value")
    return arr


def _number(doc: dict, key: str, where: str) -> float:
    val = doc.get(key)
    if not isinstance(val, (int, float)) or isinstance(val, bool) or not math.isfinite(val):
        raise LibraryFormatError(f"{where}: field {key!r} must be a finite number")
    return float(val)


def serialize_library(lib: MPLibrary) -> bytes:
    """Encode ``lib`` as a versioned, human-diffable JSON document."""
    mps = []
    for mp_id in lib:
        mp = lib[mp_id]
        mps.append(
            {
                "id": mp.id,
                "mean_duration": mp.mean_duration,
                "forcing_scale": mp.forcing_scale,
                "bank": {"centers": _matrix(mp.bank.centers), "widths": _matrix(mp.bank.widths)},
                "weights_x": _matrix(mp.weights_x),
                "weights_y": _matrix(mp.weights_y),
                "singular_values_x": _matrix(mp.singular_values_x),
                "singular_values_y": _matrix(mp.singular_values_y),
                "demo_s_x": _matrix(mp.demo_s_x),
                "demo_s_y": _matrix(mp.demo_s_y),
                "demo_goals": _matrix(mp.demo_goals),
                "demo_durations": _matrix(mp.demo_durations),
                "fit_rms_x": _matrix(mp.fit_rms_x),
                "fit_rms_y": _matrix(mp.fit_rms_y),
            }
        )
    doc = {"format": LIBRARY_FORMAT, "version": LIBRARY_VERSION, "primitives": mps}
    return (json.dumps(doc, indent=1, allow_nan=False) + "\n").encode("utf-8")


def _reject_constant(name: str):
    raise LibraryFormatError(f"non-finite literal {name} is not allowed")


def parse_library(data: bytes) -> MPLibrary:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise LibraryFormatError("library is not valid UTF-8", exc.start) from exc
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise LibraryFormatError(f"malformed library document: {exc.msg}", exc.pos) from exc
    if not isinstance(doc, dict) or doc.get("format") != LIBRARY_FORMAT:
        raise LibraryFormatError("not an mpseq library document")
    if doc.get("version") != LIBRARY_VERSION:
        raise LibraryFormatError(f"unsupported library version {doc.get('version')!r}")
    prims = doc.get("primitives")
    if not isinstance(prims, list):
        raise LibraryFormatError("'primitives' must be a list")
    out = []
    for i, p in enumerate(prims):
        where = f"primitives[{i}]"
        if not isinstance(p, dict) or not isinstance(p.get("id"), str):
            raise LibraryFormatError(f"{where}: missing string id")
        where = f"primitive {p['id']!r}"
        bank = p.get("bank")
        if not isinstance(bank, dict):
            raise LibraryFormatError(f"{where}: missing kernel bank")
        try:
            mp = LearnedMP(
                id=p["id"],
                weights_x=_unmatrix(p.get("weights_x"), f"{where}.weights_x"),
                weights_y=_unmatrix(p.get("weights_y"), f"{where}.weights_y"),
                bank=KernelBank(
                    _unmatrix(bank.get("centers"), f"{where}.bank.centers"),
                    _unmatrix(bank.get("widths"), f"{where}.bank.widths"),
                ),
                mean_duration=_number(p, "mean_duration", where),
                forcing_scale=_number(p, "forcing_scale", where),
                singular_values_x=_unmatrix(p.get("singular_values_x"), f"{where}.singular_values_x"),
                singular_values_y=_unmatrix(p.get("singular_values_y"), f"{where}.singular_values_y"),
                demo_s_x=_unmatrix(p.get("demo_s_x"), f"{where}.demo_s_x"),
                demo_s_y=_unmatrix(p.get("demo_s_y"), f"{where}.demo_s_y"),
                demo_goals=_unmatrix(p.get("demo_goals"), f"{where}.demo_goals"),
                demo_durations=_unmatrix(p.get("demo_durations"), f"{where}.demo_durations"),
                fit_rms_x=_unmatrix(p.get("fit_rms_x", _matrix(np.zeros(0))), f"{where}.fit_rms_x"),
                fit_rms_y=_unmatrix(p.get("fit_rms_y", _matrix(np.zeros(0))), f"{where}.fit_rms_y"),
            )
        except ValueError as exc:
            if isinstance(exc, LibraryFormatError):
                raise
            raise LibraryFormatError(f"{where}: {exc}") from exc
        out.append(mp)
    try:
        return MPLibrary(out)
    except ValueError as exc:
        raise LibraryFormatError(str(exc)) from exc


def load_library(path: str | os.PathLike) -> MPLibrary:
    return parse_library(Path(path).read_bytes())


def save_library(lib: MPLibrary, path: str | os.PathLike) -> None:
    atomic_write(path, serialize_library(lib))


# ---------------------------------------------------------------------------
# File helpers


def atomic_write(path: str | os.PathLike, data: bytes | str) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectory_to_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    vel = traj.velocities
    writer.writerow(["t", "x", "y", "vx", "vy"] if vel is not None else ["t", "x", "y"])
    for i, (t, p) in enumerate(zip(traj.t, traj.points)):
        row = [repr(float(t)), repr(float(p[0])), repr(float(p[1]))]
        if vel is not None:
            row += [repr(float(vel[i, 0])), repr(float(vel[i, 1]))]
        writer.writerow(row)
    return buf.getvalue()


def write_trajectory_csv(path: str | os.PathLike, traj: Trajectory) -> None:
    atomic_write(path, trajectory_to_csv(traj))


def parse_trajectory_csv(text: str, *, step_rtol: float = 1e-6, source: str = "<csv>") -> Trajectory:
    """Parse ``t,x,y[,vx,vy]`` rows; the time step must be constant."""
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise TrajectoryFormatError(f"{source}: empty file")
    header = [c.strip() for c in rows[0]]
    if header not in (["t", "x", "y"], ["t", "x", "y", "vx", "vy"]):
        raise TrajectoryFormatError(f"{source}: header must be t,x,y or t,x,y,vx,vy, got {','.join(header)}")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise TrajectoryFormatError(f"{source}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise TrajectoryFormatError(f"{source}:{lineno}: non-numeric field") from None
        if not all(math.isfinite(v) for v in vals):
            raise TrajectoryFormatError(f"{source}:{lineno}: non-finite value")
        values.append(vals)
    arr = np.array(values, dtype=float).reshape(-1, len(header))
    if len(arr) < 2:
        raise TrajectoryFormatError(f"{source}: need at least 2 samples")
    steps = np.diff(arr[:, 0])
    if np.any(steps <= 0):
        raise TrajectoryFormatError(f"{source}: timestamps must be strictly increasing")
    dt = float(steps.mean())
    if np.max(np.abs(steps - dt)) > step_rtol * dt + 1e-12:
        raise TrajectoryFormatError(f"{source}: time step is not constant")
    vel = arr[:, 3:5] if len(header) == 5 else None
    return Trajectory(dt, arr[:, 1:3], vel)


def read_trajectory_csv(path: str | os.PathLike) -> Trajectory:
    path = Path(path)
    return parse_trajectory_csv(path.read_text(encoding="utf-8"), source=str(path))


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def initial_heading(traj: Trajectory) -> float:
    """Heading of the initial velocity, by a second-order one-sided difference."""
    p = np.asarray(traj.points)
    t = traj.t
    if len(p) >= 3:
        h1, h2 = t[1] - t[0], t[2] - t[1]
        # three-point forward derivative on a possibly non-uniform grid
        c0 = -(2 * h1 + h2) / (h1 * (h1 + h2))
        c1 = (h1 + h2) / (h1 * h2)
        c2 = -h1 / (h2 * (h1 + h2))
        v0 = c0 * p[0] + c1 * p[1] + c2 * p[2]
        if np.any(v0 != 0):
            return math.atan2(v0[1], v0[0])
    for k in range(1, len(p)):
        if np.any(p[k] != p[0]):
            return math.atan2(p[k, 1] - p[0, 1], p[k, 0] - p[0, 0])
    return 0.0


def to_mp_frame(traj: Trajectory) -> Trajectory:
    """Translate the start to the origin and rotate the initial heading onto +x."""
    heading = initial_heading(traj)
    rot = rotation(-heading)
    pts = (np.asarray(traj.points) - traj.points[0]) @ rot.T
    if abs(heading) < 1e-15:
        pts = np.asarray(traj.points) - traj.points[0]
        rot = np.eye(2)
    vel = None if traj.velocities is None else np.asarray(traj.velocities) @ rot.T
    acc = None if traj.accelerations is None else np.asarray(traj.accelerations) @ rot.T
    return Trajectory(traj.dt, pts, vel, acc, traj.times)


__all__: Sequence[str] = [
    "AdjustmentSet",
    "DynamicsParams",
    "InitialCondition",
    "KernelBank",
    "LearnedMP",
    "LibraryFormatError",
    "MPLibrary",
    "Trajectory",
    "TrajectoryFormatError",
    "UnknownPrimitiveError",
    "Violation",
    "atomic_write",
    "finite_difference",
    "load_library",
    "parse_library",
    "parse_trajectory_csv",
    "read_trajectory_csv",
    "rotation",
    "save_library",
    "second_difference",
    "serialize_library",
    "initial_heading",
    "to_mp_frame",
    "trajectory_to_csv",
    "validate_library",
    "write_trajectory_csv",
]
