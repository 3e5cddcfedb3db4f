"""Scenario parsing, artifacts and the command line."""

import json
import math
import textwrap

import numpy as np
import pytest

from nlkpp import io
from nlkpp.cli import main
from nlkpp.kernel_domain import build_domain
from nlkpp.scenario import ScenarioError, load_scenario, make_initial, number, shipped_scenarios

SMALL = """
name = "small"
experiments = ["simulate", "lyapunov", "eigen", "entire"]
seed = 3

[domain]
kind = "torus"
bounds = [[0, "2*pi"]]
counts = [32]

[kernel]
family = "gaussian"
sigma = 1.0

[a]
constant = 0.5

[b]
constant = 1.0

[initial]
kind = "random"
lo = 0.1
hi = 0.5

[simulate]
t1 = 20.0

[lyapunov]
horizon = 100.0

[entire]
window = [0.0, 5.0]

[expect]
"simulate.final_sup" = {{ value = {final}, tol = 1e-4 }}
"eigen.estimate" = {{ value = 1.5, tol = 1e-10 }}
"entire.floor" = {{ min = 1.0 }}
"""


def write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


@pytest.fixture
def small(tmp_path):
    return write(tmp_path, SMALL.format(final=1.5))


# ---------------------------------------------------------------------------
# numbers and scenarios
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("text,value", [("2*pi", 2 * math.pi), ("sqrt(2)/2", math.sqrt(0.5)), ("-pi/2", -math.pi / 2),
                                        ("e**2", math.e ** 2), (3, 3.0)])
def test_number_expressions(text, value):
    assert number(text, "x") == pytest.approx(value)


@pytest.mark.parametrize("text", ["__import__('os')", "pi.real", "open", "2 +", True, [1]])
def test_number_rejects_unsafe_or_invalid(text):
    with pytest.raises(ScenarioError):
        number(text, "x")


@pytest.mark.parametrize("name", shipped_scenarios())
def test_shipped_scenarios_load(name):
    scn = load_scenario(name)
    assert scn.name == name and scn.experiments
    assert scn.initial_field().shape == scn.domain.shape


def test_quasi_periodic_frequencies():
    scn = load_scenario("quasi_periodic")
    assert scn.a.frequencies == [1.0] and scn.b.frequencies == [pytest.approx(math.sqrt(2))]


def test_json_scenario_equivalent(tmp_path, small):
    from nlkpp.scenario import tomllib

    raw = tomllib.loads(small.read_text())
    js = tmp_path / "s.json"
    js.write_text(json.dumps(raw))
    a, b = load_scenario(small), load_scenario(js)
    assert a.domain == b.domain and a.a == b.a and a.expect == b.expect


@pytest.mark.parametrize(
    "edit,message",
    [
        (lambda s: s.replace('kind = "torus"', 'kind = "sphere"'), "domain"),
        (lambda s: s.replace('family = "gaussian"', 'family = "cauchy"'), "kernel"),
        (lambda s: s.replace("[b]\nconstant = 1.0", "[b]\nconstant = -1.0"), "b"),
        (lambda s: s.replace("[b]\nconstant = 1.0", ""), "b: required"),
        (lambda s: s.replace('"simulate", "lyapunov"', '"simulate", "bogus"'), "experiments"),
        (lambda s: s.replace("seed = 3", "seed = -1"), "seed"),
        (lambda s: s.replace('"eigen.estimate"', '"nothing"'), "expect"),
        (lambda s: s.replace("counts = [32]", 'counts = ["many"]'), "domain.counts"),
        (lambda s: s.replace('[[0, "2*pi"]]', '[[0, "2*tau"]]'), "domain.bounds"),
        (lambda s: s.replace("[domain]", "[domain"), "line"),
    ],
)
def test_invalid_scenarios_name_location(tmp_path, edit, message):
    p = write(tmp_path, edit(SMALL.format(final=1.5)))
    with pytest.raises(ScenarioError, match=message):
        load_scenario(p)


def test_missing_file():
    with pytest.raises(ScenarioError, match="no such file"):
        load_scenario("/nonexistent/x.toml")


def test_initial_fields():
    d = build_domain("box", (-2.0, 2.0), 81)
    ind = make_initial(d, {"kind": "indicator", "center": [0.0], "radius": 0.5})
    assert float(d.integrate(ind)) == pytest.approx(1.0, abs=1e-12)
    cos = make_initial(d, {"kind": "cosine", "value": 1.0, "amplitude": 0.5})
    assert cos.min() == pytest.approx(0.5) and cos.max() == pytest.approx(1.5)
    r1 = make_initial(d, {"kind": "random"}, seed=1)
    np.testing.assert_array_equal(r1, make_initial(d, {"kind": "random"}, seed=1))
    assert not np.array_equal(r1, make_initial(d, {"kind": "random"}, seed=2))


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    d = build_domain("box", [(0, 1), (0, 2)], [8, 9])
    vals = np.arange(72.0).reshape(8, 9) / 7
    header, data = io.read_csv(io.write_field_csv(tmp_path / "f.csv", d, vals))
    assert header == ["x", "y", "value"]
    np.testing.assert_array_equal(data[:, 2], vals.ravel())
    np.testing.assert_array_equal(data[:, :2], d.points())


def test_trajectory_csv_long_format(tmp_path):
    d = build_domain("torus", (0, 1), 8)
    times = np.array([0.0, 0.5, 1.0])
    vals = np.arange(24.0).reshape(3, 8)
    header, data = io.read_csv(io.write_trajectory_csv(tmp_path / "t.csv", d, times, vals, stride=2))
    assert header == ["t", "x", "value"]
    np.testing.assert_array_equal(np.unique(data[:, 0]), [0.0, 1.0])
    np.testing.assert_array_equal(data[8:, 2], vals[2])


def test_json_schema_and_special_floats(tmp_path):
    p = io.write_json(tmp_path / "x.json", {"a": np.float64(1.5), "b": math.nan, "c": [math.inf], "d": np.bool_(True)}, "demo")
    doc = io.read_json(p)
    assert doc["schema_version"] == io.SCHEMA_VERSION and doc["kind"] == "demo"
    assert doc["a"] == 1.5 and doc["b"] == "nan" and doc["c"] == ["inf"] and doc["d"] is True


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def test_verify_scenario_passes(small, tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["verify", "--scenario", str(small), "--out", str(out)]) == 0
    files = {p.name for p in (out / "small").iterdir()}
    assert {"trajectory.csv", "simulate.json", "lyapunov.json", "eigen.json", "entire.json", "checks.json"} <= files
    checks = io.read_json(out / "small" / "checks.json")
    assert checks["passed"] and checks["seed"] == 3
    assert "PASS small" in capsys.readouterr().out


def test_failed_expectation_exits_one(tmp_path, capsys):
    p = write(tmp_path, SMALL.format(final=2.0))
    assert main(["simulate", "--scenario", str(p), "--out", str(tmp_path / "r")]) == 1
    err = capsys.readouterr().err
    assert "FAIL small" in err and "simulate.final_sup" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate"],
        ["simulate", "--scenario", "/no/such.toml"],
        ["verify", "--criteria", "one,two"],
        ["simulate", "--scenario", "x", "--seed", "-4"],
    ],
)
def test_usage_errors_exit_two(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == 2


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_incompatible_experiment_exits_two(tmp_path):
    assert main(["eigen", "--scenario", "quasi_periodic", "--out", str(tmp_path)]) == 2


def test_output_root_from_environment(small, tmp_path, monkeypatch):
    monkeypatch.setenv("NLKPP_OUT", str(tmp_path / "env"))
    assert main(["eigen", "--scenario", str(small)]) == 0
    assert (tmp_path / "env" / "small" / "eigen.json").exists()


def test_runs_are_reproducible(small, tmp_path):
    for run in ("r1", "r2"):
        assert main(["simulate", "--scenario", str(small), "--out", str(tmp_path / run)]) == 0
    a = (tmp_path / "r1" / "small" / "trajectory.csv").read_bytes()
    b = (tmp_path / "r2" / "small" / "trajectory.csv").read_bytes()
    assert a == b
    main(["simulate", "--scenario", str(small), "--out", str(tmp_path / "r3"), "--seed", "9"])
    assert (tmp_path / "r3" / "small" / "trajectory.csv").read_bytes() != a


def test_parallel_jobs_match_serial(small, tmp_path):
    other = write(tmp_path, SMALL.format(final=1.5).replace('name = "small"', 'name = "other"'), "o.toml")
    assert main(["eigen", "--scenario", str(small), "--scenario", str(other), "--jobs", "2",
                 "--out", str(tmp_path / "par")]) == 0
    assert main(["eigen", "--scenario", str(small), "--out", str(tmp_path / "ser")]) == 0
    par = io.read_json(tmp_path / "par" / "small" / "eigen.json")
    ser = io.read_json(tmp_path / "ser" / "small" / "eigen.json")
    assert par == ser


def test_verify_acceptance_subset(tmp_path, capsys):
    assert main(["verify", "--criteria", "13", "--out", str(tmp_path)]) == 0
    assert "[PASS] criterion 13" in capsys.readouterr().out
    assert io.read_json(tmp_path / "acceptance.json")["results"][0]["passed"]


def test_verify_all_alias_and_fail_fast(tmp_path, capsys, monkeypatch):
    from nlkpp import acceptance

    monkeypatch.setitem(acceptance.CRITERIA, 5, lambda: acceptance.CriterionResult(5, "forced", False, {}, 0.0))
    assert main(["verify-all", "--criteria", "5,13", "--fail-fast", "--out", str(tmp_path)]) == 1
    out = capsys.readouterr().out
    assert "[FAIL] criterion  5" in out and "criterion 13" not in out
