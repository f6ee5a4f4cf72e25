import numpy as np
import pytest

from l1fault.plant import fault_vector

from l1fault.errors import ValidationError
from l1fault.scenario import BUNDLED, load_scenario, parse_scenario


def test_fig1_left_bundle():
    s = load_scenario("fig1_left")
    assert (s.M, s.n, s.horizon) == (3, 1, 41)
    assert [s.leader(k) for k in (0, 19, 20, 40)] == [1, 1, 0, 0]
    sched = s.fault_schedule()
    assert sched.faulty_nodes(29) == frozenset()
    assert sched.faulty_nodes(30) == frozenset({1})
    np.testing.assert_array_equal(s.x0(), [2.0, 4.0, 6.0])


def test_platoon9_bundle():
    s = load_scenario("platoon9")
    assert (s.M, s.n) == (9, 4)
    assert s.distributed.enabled
    sched = s.fault_schedule()
    assert sched.faulty_nodes(150) == frozenset({2, 4, 6, 9})
    assert sched.faulty_nodes(301) == frozenset()


@pytest.mark.parametrize("name", BUNDLED)
def test_every_bundle_loads(name):
    s = load_scenario(name)
    assert s.horizon >= 1 and s.name == name


def test_random_faults_depend_only_on_seed():
    s = load_scenario("platoon9")
    a, b = s.fault_schedule(3), s.fault_schedule(3)
    np.testing.assert_array_equal(fault_vector(a, 120)[0], fault_vector(b, 120)[0])
    assert not np.array_equal(fault_vector(a, 120)[0], fault_vector(s.fault_schedule(4), 120)[0])


BASE = {"horizon": 5, "graph": {"nodes": 2, "edges": [[1, 2]]}}


@pytest.mark.parametrize(
    "patch",
    [
        {"graph": None},
        {"horizon": None},
        {"horizon": 0},
        {"estimators": ["magic"]},
        {"faults": [{"node": 3, "k_start": 0, "vector": [1.0]}]},
        {"faults": [{"node": 1, "k_start": 3, "k_end": 1, "vector": [1.0]}]},
        {"faults": [{"node": 1, "k_start": 0}]},
        {"initial_state": [1.0]},
        {"w_max": 0.1},
        {"dynamics": {"preset": "rocket"}},
    ],
)
def test_bad_scenarios_rejected(patch):
    data = {**BASE, **patch}
    data = {k: v for k, v in data.items() if v is not None}
    with pytest.raises(ValidationError):
        parse_scenario(data)


def test_toml_syntax_error_is_validation_error(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("horizon = = 3\n")
    with pytest.raises(ValidationError):
        load_scenario(p)


def test_missing_file():
    with pytest.raises(ValidationError, match="not found"):
        load_scenario("/nonexistent/zzz.toml")
