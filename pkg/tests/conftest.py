import numpy as np
import pytest

from mpseq.core import DynamicsParams, MPLibrary
from mpseq.learning import train_type
from mpseq.synth import SynthSpec, synth_demos


@pytest.fixture(scope="session")
def lane_demos():
    return synth_demos(SynthSpec("lane_change", Q=10, seed=1))


@pytest.fixture(scope="session")
def turn_demos():
    return synth_demos(SynthSpec("sharp_turn", Q=10, seed=2))


@pytest.fixture(scope="session")
def lane_mp(lane_demos):
    return train_type(lane_demos, N=20, J=5, mp_id="lane_left")


@pytest.fixture(scope="session")
def turn_mp(turn_demos):
    return train_type(turn_demos, N=20, J=5, mp_id="turn_left")


@pytest.fixture(scope="session")
def soft_params():
    # stiffness used for joining scenarios
    return DynamicsParams(alpha_m=5.0)


@pytest.fixture(scope="session")
def soft_lib(soft_params):
    mps = [
        train_type(synth_demos(SynthSpec("sharp_turn", seed=11)), J=5, params=soft_params, mp_id="turn_left"),
        train_type(synth_demos(SynthSpec("lane_change", seed=12)), J=5, params=soft_params, mp_id="lane_left"),
        train_type(
            synth_demos(SynthSpec("lane_change", amplitude_range=(-3.8, -3.2), seed=13)),
            J=5,
            params=soft_params,
            mp_id="lane_right",
        ),
    ]
    return MPLibrary(mps)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance summary ---------------------------------------------------------------

_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Store one pass/fail line per acceptance criterion for the terminal summary."""

    def _record(criterion: str, passed: bool, detail: str) -> bool:
        _ACCEPTANCE[criterion] = (bool(passed), detail)
        print(f"{criterion}: {'PASS' if passed else 'FAIL'}  {detail}")
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n.split()[0][2:])):
        passed, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
