import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpseq.core import (
    AdjustmentSet,
    DynamicsParams,
    InitialCondition,
    KernelBank,
    LearnedMP,
    LibraryFormatError,
    MPLibrary,
    Trajectory,
    TrajectoryFormatError,
    UnknownPrimitiveError,
    atomic_write,
    finite_difference,
    initial_heading,
    load_library,
    parse_library,
    parse_trajectory_csv,
    rotation,
    save_library,
    second_difference,
    serialize_library,
    to_mp_frame,
    trajectory_to_csv,
    validate_library,
)
from mpseq.dynamics import make_kernel_bank

from helpers import make_mp


# Trajectory -----------------------------------------------------------------


def test_trajectory_rejects_bad_input():
    with pytest.raises(ValueError):
        Trajectory(0.0, [[0, 0], [1, 1]])
    with pytest.raises(ValueError):
        Trajectory(0.1, [[0, 0]])
    with pytest.raises(ValueError):
        Trajectory(0.1, [[0, 0], [1, 1]], velocities=[[0, 0]])
    with pytest.raises(ValueError):
        Trajectory(0.1, [[0, 0], [1, 1]], times=[0.0, 0.0])


def test_trajectory_is_read_only():
    tr = Trajectory(0.1, [[0, 0], [1, 1]])
    with pytest.raises(ValueError):
        tr.points[0, 0] = 5.0


def test_trajectory_time_axis_and_length():
    tr = Trajectory(0.5, [[0, 0], [3, 4], [6, 8]])
    np.testing.assert_allclose(tr.t, [0, 0.5, 1.0])
    assert tr.duration == 1.0
    assert tr.path_length() == pytest.approx(10.0)
    explicit = Trajectory(0.5, [[0, 0], [1, 0], [2, 0]], times=[0.0, 0.5, 2.0])
    assert explicit.duration == 2.0


def test_finite_difference_exact_on_quadratic_interior():
    t = np.cumsum(np.r_[0.0, np.random.default_rng(1).uniform(0.05, 0.2, 30)])
    pts = np.column_stack([3 * t**2 + t, -t**2])
    vel = finite_difference(pts, t)
    np.testing.assert_allclose(vel[1:-1], np.column_stack([6 * t + 1, -2 * t])[1:-1], atol=1e-9)
    acc = second_difference(pts, t)
    np.testing.assert_allclose(acc, np.tile([6.0, -2.0], (len(t) - 2, 1)), atol=1e-8)


# frame normalisation ----------------------------------------------------------


def test_mp_frame_straight_line():
    t = np.linspace(0, 2, 21)
    heading = math.radians(37)
    pts = np.column_stack([5 + 3 * t * math.cos(heading), -2 + 3 * t * math.sin(heading)])
    out = to_mp_frame(Trajectory(0.1, pts))
    np.testing.assert_allclose(out.points[0], 0, atol=1e-12)
    np.testing.assert_allclose(out.points[:, 1], 0, atol=1e-12)
    np.testing.assert_allclose(out.points[:, 0], 3 * t, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-100, 100),
    st.floats(-100, 100),
    st.floats(-math.pi, math.pi),
)
def test_mp_frame_invariant_to_rigid_motion(dx, dy, angle):
    t = np.linspace(0, 4, 41)
    base = np.column_stack([10 * t, 2 * np.sin(t)])
    moved = base @ rotation(angle).T + [dx, dy]
    a = to_mp_frame(Trajectory(0.1, base)).points
    b = to_mp_frame(Trajectory(0.1, moved)).points
    np.testing.assert_allclose(a, b, atol=1e-9)
    assert abs(initial_heading(Trajectory(0.1, b))) < 1e-9


# adjustment / conditions / params ----------------------------------------------


def test_value_types_validate():
    with pytest.raises(ValueError):
        AdjustmentSet(b=(0, 0), g=(1, 0), T=0, s_x=[1], s_y=[1])
    with pytest.raises(ValueError):
        AdjustmentSet(b=(0, 0), g=(1, 0), T=1, s_x=[1], s_y=[1], tau=-1)
    with pytest.raises(ValueError):
        AdjustmentSet(b=(0, 0), g=(1, 0), T=1, s_x=[1, 2], s_y=[1])
    with pytest.raises(ValueError):
        InitialCondition("a", -1.0, 0, 0, 1, 1)
    with pytest.raises(ValueError):
        DynamicsParams(alpha_m=0)
    p = DynamicsParams(alpha_m=20)
    assert p.beta_m == 5.0
    assert p.sample_interval(4.0) == pytest.approx(0.04)


def test_step_stability_check_matches_known_region():
    p = DynamicsParams()
    assert p.step_is_stable(0.01)
    assert not p.step_is_stable(0.1)


# validation ---------------------------------------------------------------------


def test_validate_well_formed_library():
    assert validate_library(MPLibrary([make_mp("a"), make_mp("b", J=3)])) == []


def test_validate_negative_width_names_id_and_field():
    bank = make_kernel_bank(20, 2)
    widths = np.array(bank.widths)
    widths[1, 4] = -1.0
    lib = MPLibrary([make_mp("bad", bank=KernelBank(bank.centers, widths))])
    out = validate_library(lib)
    assert len(out) == 1
    assert out[0].mp_id == "bad" and out[0].field == "bank.widths"


def test_validate_weight_shape_mismatch():
    mp = make_mp("m", weights_y=np.zeros((2, 19)))
    fields = {v.field for v in validate_library(MPLibrary([mp]))}
    assert "weights_y" in fields


def test_validate_unsorted_spectrum_and_rank():
    mp = make_mp("m", singular_values_x=np.array([1.0, 2.0, 0.5, 0.1]))
    assert {v.field for v in validate_library(MPLibrary([mp]))} == {"singular_values_x"}
    mp = make_mp("m", J=5, Q=3)
    assert "weights_x" in {v.field for v in validate_library(MPLibrary([mp]))}


BREAKERS = {
    "negative_width": lambda mp: dict(bank=KernelBank(mp.bank.centers, -np.asarray(mp.bank.widths))),
    "shape_mismatch": lambda mp: dict(weights_y=np.zeros((mp.J, mp.N + 1))),
    "unsorted_spectrum": lambda mp: dict(singular_values_x=np.asarray(mp.singular_values_x)[::-1].copy()),
    "negative_spectrum": lambda mp: dict(singular_values_y=-np.asarray(mp.singular_values_y)),
    "nan_weight": lambda mp: dict(weights_x=np.full((mp.J, mp.N), np.nan)),
    "decreasing_centers": lambda mp: dict(bank=KernelBank(np.asarray(mp.bank.centers)[:, ::-1], mp.bank.widths)),
    "bad_duration": lambda mp: dict(mean_duration=0.0),
}


@settings(max_examples=60, deadline=None)
@given(
    J=st.integers(1, 4),
    N=st.integers(2, 25),
    extra_q=st.integers(0, 4),
    seed=st.integers(0, 2**16),
    breaker=st.sampled_from([None, *BREAKERS]),
)
def test_validate_classifies_random_libraries(J, N, extra_q, seed, breaker):
    Q = max(J + extra_q, 2)
    # strictly separated spectrum so reversal always breaks ordering
    mp = make_mp("m", J=J, N=N, Q=Q, seed=seed, singular_values_x=np.arange(Q, 0, -1.0) + 1)
    if breaker is not None:
        fields = {f: getattr(mp, f) for f in mp.__dataclass_fields__}
        fields.update(BREAKERS[breaker](mp))
        mp = LearnedMP(**fields)
    problems = validate_library(MPLibrary([mp]))
    assert (problems == []) == (breaker is None)


# serialization -------------------------------------------------------------------


def test_empty_library_round_trip():
    assert len(parse_library(serialize_library(MPLibrary()))) == 0


def test_round_trip_is_bit_identical():
    mp = make_mp("lane", J=2, N=20, Q=6, seed=3)
    back = parse_library(serialize_library(MPLibrary([mp])))["lane"]
    for name in mp.__dataclass_fields__:
        a, b = getattr(mp, name), getattr(back, name)
        if name == "bank":
            assert np.array_equal(a.centers, b.centers) and np.array_equal(a.widths, b.widths)
        elif isinstance(a, np.ndarray):
            assert a.shape == b.shape and np.array_equal(a, b), name
        else:
            assert a == b, name


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**20), J=st.integers(1, 3), N=st.integers(2, 12))
def test_round_trip_property(seed, J, N):
    lib = MPLibrary([make_mp("x", J=J, N=N, Q=J + 1, seed=seed)])
    again = serialize_library(parse_library(serialize_library(lib)))
    assert again == serialize_library(lib)


def test_truncated_document_reports_position():
    data = serialize_library(MPLibrary([make_mp()]))
    with pytest.raises(LibraryFormatError) as err:
        parse_library(data[: len(data) // 2])
    assert err.value.position is not None


def test_rejects_nan_and_unknown_version():
    doc = json.loads(serialize_library(MPLibrary([make_mp()])))
    doc["primitives"][0]["mean_duration"] = float("nan")
    with pytest.raises(LibraryFormatError):
        parse_library(json.dumps(doc).encode())
    doc = json.loads(serialize_library(MPLibrary([make_mp()])))
    doc["version"] = 99
    with pytest.raises(LibraryFormatError):
        parse_library(json.dumps(doc).encode())
    doc = json.loads(serialize_library(MPLibrary([make_mp()])))
    doc["primitives"][0]["weights_x"]["data"][0] = 1e400  # parses to inf
    with pytest.raises(LibraryFormatError):
        parse_library(json.dumps(doc).replace("Infinity", "1e400").encode())


def test_unknown_id_error_names_id():
    with pytest.raises(UnknownPrimitiveError, match="nope"):
        MPLibrary([make_mp("a")])["nope"]


def test_save_load_and_atomic_write(tmp_path):
    lib = MPLibrary([make_mp("a")])
    path = tmp_path / "sub" / "lib.json"
    save_library(lib, path)
    assert serialize_library(load_library(path)) == serialize_library(lib)
    atomic_write(path, "x")
    assert path.read_text() == "x"
    assert os.listdir(path.parent) == ["lib.json"]


# trajectory csv -------------------------------------------------------------------


def test_csv_round_trip():
    tr = Trajectory(0.1, [[0, 0], [1, 0.5], [2, 1.5]], velocities=[[1, 0], [1, 1], [1, 2]])
    back = parse_trajectory_csv(trajectory_to_csv(tr))
    np.testing.assert_array_equal(back.points, tr.points)
    np.testing.assert_array_equal(back.velocities, tr.velocities)
    assert back.dt == pytest.approx(0.1)


@pytest.mark.parametrize(
    "text, match",
    [
        ("", "empty"),
        ("a,b,c\n0,0,0\n", "header"),
        ("t,x,y\n0,0,0\n0.1,1\n", ":3"),
        ("t,x,y\n0,0,0\n0.1,q,1\n", ":3"),
        ("t,x,y\n0,0,0\n0.1,1,1\n0.3,2,2\n", "constant"),
        ("t,x,y\n0,0,0\n", "at least 2"),
        ("t,x,y\n0,0,0\n0.1,nan,0\n", "non-finite"),
    ],
)
def test_csv_errors(text, match):
    with pytest.raises(TrajectoryFormatError, match=match):
        parse_trajectory_csv(text)
