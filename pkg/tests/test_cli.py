import json
import subprocess
import sys
import textwrap

import pytest
import yaml

from shortfall.cli import main
from shortfall.scenario import ScenarioError, parse_scenario, serialize

KNOWN = textwrap.dedent("""\
    version: 1
    instance:
      type: known
      budget: 4.0
      users:
        - {cost: {kind: sqrt, scale: 1.0}, mean_rate: 4.0}
        - {cost: {kind: linear, slope: 1.0}, mean_rate: 2.0}
    """)

MINIMAL = textwrap.dedent("""\
    version: 1
    instance:
      type: known
      budget: 1.5
      users:
        - {cost: {kind: linear, slope: 1.0}, mean_rate: 1.0}
        - {cost: {kind: linear, slope: 2.0}, mean_rate: 1.0}
    """)

SYMMETRIC = textwrap.dedent("""\
    version: 1
    instance:
      type: unknown
      budget: 2.0
      symmetric: true
      users:
        - cost: {kind: linear, slope: 1.0}
          prior: {kind: uniform, lo: 1.0, hi: 2.0}
        - cost: {kind: linear, slope: 1.0}
          prior: {kind: uniform, lo: 1.0, hi: 2.0}
    simulation:
      horizon: 50000
      seed: 4
      availability: {kind: iid_uniform, lo: 1.0, hi: 3.0}
      consumption:
        - {kind: iid_uniform, lo: 1.0, hi: 2.0}
        - {kind: iid_uniform, lo: 1.0, hi: 2.0}
    output:
      format: json
    """)

FULL = textwrap.dedent("""\
    version: 1
    instance:
      type: known
      budget: 2.0
      users:
        - {cost: {kind: piecewise_linear, breakpoints: [[0, 0], [1, 2], [3, 3]]}, mean_rate: 1.5}
        - {cost: {kind: log1p, scale: 2.0}, mean_rate: 2.0}
    simulation:
      horizon: 1000
      seed: 9
      buffer_cap: 3.0
      availability: {kind: cyclostationary, phase_means: [1.0, 3.0], noise: 0.5}
      consumption:
        - {kind: iid_bernoulli, peak: 3.0, p: 0.5}
        - {kind: deterministic, rate: 2.0}
    output: {path: null, format: csv}
    """)


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_minimal_known_scenario():
    sc = parse_scenario(MINIMAL)
    assert sc.instance.m == 2 and sc.known and sc.simulation is None


@pytest.mark.parametrize("text", [MINIMAL, SYMMETRIC, FULL])
def test_round_trip(text):
    sc = parse_scenario(text)
    again = parse_scenario(serialize(sc))
    assert again == sc
    assert serialize(again) == serialize(sc)


def test_negative_budget_reports_line():
    with pytest.raises(ScenarioError) as err:
        parse_scenario(MINIMAL.replace("budget: 1.5", "budget: -1"))
    assert any("budget must be positive" in e and e.startswith("line 4:") for e in err.value.errors)


def test_symmetric_with_different_priors_rejected():
    old = "prior: {kind: uniform, lo: 1.0, hi: 2.0}"
    i = SYMMETRIC.rfind(old)
    text = SYMMETRIC[:i] + "prior: {kind: uniform, lo: 1.0, hi: 3.0}" + SYMMETRIC[i + len(old):]
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text)
    assert any("identical priors" in e and e.startswith("line 10:") for e in err.value.errors)


@pytest.mark.parametrize("mutation,needle", [
    (("slope: 2.0}", "slope: 2.0, slpoe: 1}"), "unknown key"),
    (("kind: linear, slope: 2.0", "kind: cubic, slope: 2.0"), "unknown cost kind"),
    (("version: 1", "version: 2"), "unsupported schema version"),
    (("type: known", "type: maybe"), "instance type"),
    (("budget: 1.5", "budget: 1.5\n  colour: red"), "unknown key 'colour'"),
    (("users:", "users: ["), "syntax error"),
])
def test_rejections(mutation, needle):
    with pytest.raises(ScenarioError) as err:
        parse_scenario(MINIMAL.replace(*mutation))
    assert any(needle in e for e in err.value.errors)
    assert all(e.startswith("line ") for e in err.value.errors)


def test_error_line_points_at_offending_user():
    with pytest.raises(ScenarioError) as err:
        parse_scenario(MINIMAL.replace("slope: 2.0}, mean_rate: 1.0", "slope: 2.0}, mean_rate: -1.0"))
    assert any(e.startswith("line 7: instance.users[1]") for e in err.value.errors)


def test_availability_must_match_budget():
    with pytest.raises(ScenarioError, match="must equal the instance budget"):
        parse_scenario(SYMMETRIC.replace("lo: 1.0, hi: 3.0}", "lo: 1.0, hi: 5.0}"))


def test_zero_horizon_rejected_in_file():
    with pytest.raises(ScenarioError, match="horizon"):
        parse_scenario(SYMMETRIC.replace("horizon: 50000", "horizon: 0"))


def test_solve_known_json(tmp_path, capsys):
    path = _write(tmp_path, "ex.yaml", KNOWN)
    assert main(["solve-known", path, "--oracle"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["true_objective"] == 0.707106781187
    assert doc["rates"] == [2.0, 2.0]
    assert doc["oracle"]["objective"] == 0.707106781187
    assert doc["build"] and doc["command"] == "solve-known" and doc["scenario"] == "ex"


def test_solve_known_csv_columns(tmp_path):
    path = _write(tmp_path, "ex.yaml", KNOWN)
    assert main(["solve-known", path, "--format", "csv", "--out", str(tmp_path / "out")]) == 0
    rows = (tmp_path / "out" / "ex.solve-known.csv").read_text().splitlines()
    assert rows[0] == "user,mean_rate,rate,shortfall,cost,oracle_rate,build"
    assert rows[1].startswith("0,4,2,2,1.41421356237,,")


def test_solve_unknown_and_oracle(tmp_path, capsys):
    path = _write(tmp_path, "sym.yaml", SYMMETRIC)
    assert main(["solve-unknown", path, "--oracle"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["normalized_objective"] == 0.5
    assert doc["oracle"]["objective"] == 0.5


def test_solve_unknown_refuses_known_scenario(tmp_path):
    assert main(["solve-unknown", _write(tmp_path, "k.yaml", KNOWN)]) == 2


def test_verify_symmetric_table(tmp_path, capsys):
    path = _write(tmp_path, "sym.yaml", SYMMETRIC)
    assert main(["verify", path, "--seed", "1"]) == 0
    captured = capsys.readouterr()
    doc = json.loads(captured.out)
    names = [c["check"] for c in doc["checks"]]
    assert "symalloc vs grid oracle" in names
    assert all(c["status"] == "pass" for c in doc["checks"])
    assert "PASS  symalloc vs grid oracle" in captured.err


def test_verify_known_passes(tmp_path):
    assert main(["verify", _write(tmp_path, "full.yaml", FULL), "--format", "json",
                 "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "full.verify.json").read_text())
    assert doc["passed"] and any(c["check"] == "finite-buffer shortfall bound" for c in doc["checks"])


def test_verify_failure_exit_code(tmp_path, monkeypatch):
    import shortfall.cli as cli
    monkeypatch.setattr(cli, "corner_structure_violations", lambda s, f: 3)
    assert main(["verify", _write(tmp_path, "k.yaml", KNOWN)]) == 1


def test_verify_is_byte_identical(tmp_path):
    path = _write(tmp_path, "sym.yaml", SYMMETRIC)
    docs = []
    for run_id in range(2):
        out = tmp_path / f"run{run_id}"
        assert main(["verify", path, "--seed", "3", "--out", str(out)]) == 0
        docs.append((out / "sym.verify.json").read_bytes())
    assert docs[0] == docs[1]


def test_simulate_zero_horizon_is_usage_error(tmp_path):
    assert main(["simulate", _write(tmp_path, "k.yaml", KNOWN), "--horizon", "0"]) == 2


def test_simulate_with_trace(tmp_path):
    path = _write(tmp_path, "full.yaml", FULL)
    assert main(["simulate", path, "--trace", "--out", str(tmp_path / "o")]) == 0
    out = (tmp_path / "o" / "full.simulate.csv").read_text().splitlines()
    assert out[0].split(",")[:3] == ["user", "policy_rate", "mean_consumption"]
    trace = (tmp_path / "o" / "full.trace.csv").read_text().splitlines()
    assert len(trace) == 1001
    assert not [p for p in (tmp_path / "o").iterdir() if p.name.startswith(".")]


def test_known_scenario_simulates_at_mean_rates_by_default(tmp_path, capsys):
    assert main(["simulate", _write(tmp_path, "k.yaml", KNOWN), "--horizon", "100"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert [u["mean_shortfall"] for u in doc["users"]] == [2.0, 0.0]


def test_input_errors_exit_2(tmp_path, capsys):
    assert main(["solve-known", str(tmp_path / "missing.yaml")]) == 2
    bad = _write(tmp_path, "bad.yaml", MINIMAL.replace("budget: 1.5", "budget: -1"))
    assert main(["solve-known", bad]) == 2
    assert "line 4" in capsys.readouterr().err
    assert main(["frobnicate"]) == 2


def test_worker_fan_out_preserves_order(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SHORTFALL_WORKERS", "3")
    paths = [_write(tmp_path, f"s{i}.yaml", KNOWN) for i in range(4)]
    assert main(["solve-known", *paths]) == 0
    out = capsys.readouterr().out
    names = [json.loads(chunk)["scenario"] for chunk in out.replace("}\n{", "}\n\x00{").split("\x00")]
    assert names == ["s0", "s1", "s2", "s3"]


def test_bad_worker_count(tmp_path, monkeypatch):
    monkeypatch.setenv("SHORTFALL_WORKERS", "many")
    assert main(["solve-known", _write(tmp_path, "k.yaml", KNOWN)]) == 2


def test_module_entry_point(tmp_path):
    path = _write(tmp_path, "k.yaml", KNOWN)
    out = subprocess.run([sys.executable, "-m", "shortfall", "solve-known", path, "--format", "csv"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.startswith("user,mean_rate")


def test_serialized_scenario_is_plain_yaml():
    data = yaml.safe_load(serialize(parse_scenario(FULL)))
    assert data["simulation"]["availability"]["kind"] == "cyclostationary"
