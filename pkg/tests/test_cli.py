import csv
import json

import pytest

from myopic.cli import main


def render(tmp_path, name, *args):
    path = tmp_path / name
    assert main(["scenario", "render", *args, "-o", str(path)]) == 0
    return path


def test_scenario_list(capsys):
    assert main(["scenario", "list", "--json"]) == 0
    kinds = json.loads(capsys.readouterr().out)
    assert len(kinds) >= 5


def test_render_equilateral(tmp_path):
    obj = json.loads(render(tmp_path, "t.json", "--kind", "equilateral", "--side", "1", "--d", "2").read_text())
    assert len(obj["processes"]) == 3
    assert obj["policy"]["tie"]["kind"] == "cyclic-equilateral"


def test_render_chain(tmp_path):
    obj = json.loads(render(tmp_path, "c.json", "--kind", "chain", "--n", "8", "--D", "2").read_text())
    assert [p["pos"] for p in obj["processes"]] == [[2.0 * i] for i in range(8)]


def test_render_bad_params(capsys):
    assert main(["scenario", "render", "--kind", "chain"]) == 2
    assert main(["scenario", "render", "--kind", "equilateral", "--side", "0"]) == 2


def test_run_chain(tmp_path):
    scen = render(tmp_path, "chain.json", "--kind", "chain", "--n", "6")
    out = tmp_path / "out"
    code = main(["run", "--scenario", str(scen), "--algo", "mm", "--tie", "order", "--steps", "100",
                 "--out", str(out), "--check"])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["stop"] == "gathered" and summary["gathered_at"] == 5
    assert summary["manifest"]["steps"] == 100
    assert all(c["passed"] for c in summary["certificates"])
    rows = list(csv.DictReader(open(out / "metrics.csv")))
    assert len(rows) == 6
    assert len((out / "trace.jsonl").read_text().splitlines()) == 6


def test_run_triangle(tmp_path):
    scen = render(tmp_path, "tri.json", "--kind", "equilateral", "--side", "1", "--d", "2", "--centered")
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(scen), "--steps", "50", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["stop"] == "budget" and summary["gathered"] is False
    R = [float(r["R"]) for r in csv.DictReader(open(out / "metrics.csv"))]
    assert len(R) == 51
    for a, b in zip(R, R[1:]):
        assert b == pytest.approx(a / 2, rel=1e-9)


def test_run_empty_scenario(tmp_path, capsys):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    assert main(["run", "--scenario", str(empty)]) == 2
    assert "empty" in capsys.readouterr().err


def test_run_needs_scenario(capsys):
    assert main(["run"]) == 2


def test_manifest_with_flag_override(tmp_path):
    render(tmp_path, "cloud.json", "--kind", "random-cloud", "--n", "5", "--d", "2", "--seed", "3")
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"scenario": "cloud.json", "steps": 2, "tie": "random", "seed": 9,
                                    "out": str(tmp_path / "o1")}))
    assert main(["run", "--manifest", str(manifest)]) == 0
    first = (tmp_path / "o1" / "trace.jsonl").read_text()
    assert main(["run", "--manifest", str(manifest)]) == 0
    assert (tmp_path / "o1" / "trace.jsonl").read_text() == first
    assert main(["run", "--manifest", str(manifest), "--steps", "1", "--out", str(tmp_path / "o2")]) == 0
    summary = json.loads((tmp_path / "o2" / "summary.json").read_text())
    assert summary["manifest"]["steps"] == 1 and summary["manifest"]["seed"] == 9
    assert summary["manifest"]["tie"]["kind"] == "seeded-random"


def test_manifest_unknown_field(tmp_path):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"scenario": "x.json", "colour": "red"}))
    assert main(["run", "--manifest", str(manifest)]) == 2


def test_run_with_crash_check(tmp_path):
    scen = tmp_path / "f.json"
    scen.write_text(json.dumps({"kind": "random-cloud", "params": {"n": 5, "d": 2, "seed": 1}, "crashes": [0]}))
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(scen), "--steps", "200", "--out", str(out), "--check"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["f"] == 1
    assert any(c["name"] == "fault-contraction" for c in summary["certificates"])


def test_seed_from_environment(tmp_path, monkeypatch):
    scen = tmp_path / "s.json"
    scen.write_text(json.dumps({"kind": "random-cloud", "params": {"n": 4}}))
    monkeypatch.setenv("MYOPIC_SEED", "17")
    assert main(["run", "--scenario", str(scen), "--steps", "1", "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["manifest"]["seed"] == 17
    monkeypatch.setenv("MYOPIC_SEED", "abc")
    assert main(["run", "--scenario", str(scen), "--out", str(tmp_path / "o")]) == 2


def test_verify_exit_codes(capsys):
    assert main(["verify", "order-gathering", "--trials", "5"]) == 0
    assert "5/5 passed" in capsys.readouterr().out
    assert main(["verify", "nope"]) == 2


def test_verify_fault_f2_reports_impossible(capsys):
    assert main(["verify", "fault-f2", "--trials", "2"]) == 0
    out = capsys.readouterr().out
    assert "impossible" in out


def test_verify_failure_prints_counterexample(capsys):
    code = main(["verify", "impossibility-n6"])
    out = capsys.readouterr().out
    if code == 1:
        assert "first counterexample" in out and '"processes"' in out
    else:
        assert code == 0


def test_oracle_seb(capsys):
    assert main(["oracle", "seb", "--points", "[[0,0],[4,0],[2,1]]"]) == 0
    obj = json.loads(capsys.readouterr().out)
    assert obj["agree"] and obj["oracle"]["radius"] == pytest.approx(2)
    assert main(["oracle", "seb", "--points", "[[0,0],[1]]"]) == 2
    assert main(["oracle", "seb"]) == 2
