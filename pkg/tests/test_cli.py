import json
import subprocess
import sys

import yaml

from costmap_traffic.cli import main


def test_validate_ok(scenario_root, capsys):
    assert main(["validate", str(scenario_root["narrow"])]) == 0
    assert "narrow" in capsys.readouterr().out


def test_validate_nonconvex_region(scenario_root, tmp_path, capsys):
    src = scenario_root["narrow"].parent
    for f in src.iterdir():
        (tmp_path / f.name).write_bytes(f.read_bytes())
    (tmp_path / "regions.yaml").write_text(yaml.safe_dump(
        {"regions": [{"id": "dented", "vertices": [[0, 0], [2, 0], [1, 0.5], [2, 2], [0, 2]]}]}))
    assert main(["validate", str(tmp_path / "scenario.yaml")]) == 2
    assert "dented" in capsys.readouterr().err


def test_validate_missing_file(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "none.yaml")]) == 2


def test_run_steps_writes_exact_records(scenario_root, tmp_path, capsys):
    log = tmp_path / "log.jsonl"
    code = main(["run", str(scenario_root["fleet"]), "--steps", "10", "--log", str(log)])
    assert code == 1                                  # stopped early, so not arrived
    report = json.loads(capsys.readouterr().out)
    assert report["steps"] == 10 and report["outcome"] == "timeout"
    recs = [json.loads(x) for x in log.read_text().splitlines()]
    for name in ("A", "B"):
        assert sum(r["robot"] == name for r in recs) == 10


def test_run_success_exit_code(scenario_root, capsys):
    assert main(["run", str(scenario_root["trivial"])]) == 0
    assert json.loads(capsys.readouterr().out)["outcome"] == "arrived"


def test_run_same_seed_same_log(scenario_root, tmp_path, capsys):
    logs = []
    for i in range(2):
        log = tmp_path / f"log{i}.jsonl"
        main(["run", str(scenario_root["fleet"]), "--steps", "60", "--seed", "3", "--log", str(log)])
        logs.append(log.read_bytes())
    assert logs[0] == logs[1]


def test_inspect_map(scenario_root, capsys):
    d = scenario_root["trivial"].parent
    assert main(["inspect-map", str(d / "static.pgm"), str(d / "static.yaml")]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["width"] == 60 and info["cells"]["occupied"] > 0


def test_module_entry_point(scenario_root):
    out = subprocess.run([sys.executable, "-m", "costmap_traffic", "validate",
                          str(scenario_root["trivial"])], capture_output=True, text=True)
    assert out.returncode == 0
