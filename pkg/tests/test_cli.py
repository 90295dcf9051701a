from __future__ import annotations

import json
import subprocess
import sys

import pytest

from spt_mbqc.cli import EXIT_CAPACITY, EXIT_FAIL, EXIT_OK, EXIT_USAGE, main


def run(argv, tmp_path, name="report.json"):
    path = tmp_path / name
    code = main(argv + ["--report", str(path)])
    return code, json.loads(path.read_text()) if path.exists() else None


def test_verify_cocycle(tmp_path):
    code, rep = run(["verify", "cocycle", "--group", "Z2", "--c", "1"], tmp_path)
    assert code == EXIT_OK
    assert rep["class_invariant"]["re"] == -1.0
    assert rep["class_invariant"]["num"] == 1 and rep["class_invariant"]["order"] == 2


def test_c_out_of_range_is_usage_error(tmp_path, capsys):
    code, _ = run(["verify", "cocycle", "--group", "Z2", "--c", "2"], tmp_path)
    assert code == EXIT_USAGE
    assert "out of range" in capsys.readouterr().err


def test_bad_group_and_unknown_command(capsys):
    assert main(["verify", "cocycle", "--group", "S3"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE


def test_verify_symmetry_kagome(tmp_path):
    code, rep = run(["verify", "symmetry", "--lattice", "builtin:kagome", "--group", "Z2", "--c", "1"], tmp_path)
    assert code == EXIT_OK
    assert rep["global"]["F3"] == {"0": {"num": 0, "order": 1}, "1": {"num": 0, "order": 1}}
    assert set(rep["linear_rep"]) == {"A", "B", "C"}


def test_verify_symmetry_with_derived_branching(tmp_path):
    code, rep = run(["verify", "symmetry", "--lattice", "builtin:honeycomb:2x1", "--group", "Z3", "--derive"], tmp_path)
    assert code == EXIT_OK and rep["branching_derived"]


def test_verify_symmetry_flags_broken_file(tmp_path):
    from spt_mbqc.lattice import builtin, lattice_to_dict

    lat, br = builtin("square", 2, 2)
    data = lattice_to_dict(lat.with_branching(br.toggled(0, 0)), include_edges=False)
    path = tmp_path / "flipped.lat"
    path.write_text(json.dumps(data))
    code, rep = run(["verify", "symmetry", "--lattice", str(path), "--group", "Z2"], tmp_path)
    # the lattice file itself fails validation: the branching is not parallel
    assert code == EXIT_USAGE
    assert "orientation" in rep["error"]


def test_capacity_exit(tmp_path):
    code, rep = run(["verify", "symmetry", "--lattice", "builtin:square:4x4", "--group", "Z2", "--max-amps", "100"], tmp_path)
    assert code == EXIT_CAPACITY and rep["kind"] == "capacity"


def test_verify_boundary_and_czx(tmp_path):
    code, rep = run(["verify", "boundary", "--group", "Z3", "--c", "1", "--length", "4", "--directions", "+-+-"], tmp_path)
    assert code == EXIT_OK
    code, rep = run(["verify", "czx", "--lattice", "builtin:honeycomb"], tmp_path)
    assert code == EXIT_FAIL and "-1" in rep["error"]
    code, _ = run(["verify", "czx", "--lattice", "builtin:square:2x2"], tmp_path)
    assert code == EXIT_OK


def test_reduce_teleport_route(tmp_path):
    assert run(["reduce", "--lattice", "builtin:square:2x2", "--d", "2", "--pattern", "checkerboard"], tmp_path)[0] == EXIT_OK
    assert run(["reduce", "--lattice", "builtin:kagome:2x2", "--d", "2", "--pattern", "builtin", "--policy", "exhaustive"], tmp_path)[0] == EXIT_OK
    code, rep = run(["teleport", "--gate", "F", "--d", "3"], tmp_path)
    assert code == EXIT_OK
    code, rep = run(["teleport", "--gate", "CZ", "--d", "2"], tmp_path)
    assert code == EXIT_OK
    out = tmp_path / "plan.json"
    code, rep = run(["route", "--lattice", "builtin:square:12x12", "--spacing", "4", "--out", str(out), "--execute"], tmp_path)
    assert code == EXIT_OK
    plan = json.loads(out.read_text())
    assert len(plan["lines"]) == 24 and max(plan["face_usage"].values()) == 1
    # the saved plan can be replayed as a reduction pattern
    assert run(["reduce", "--lattice", "builtin:square:12x12", "--d", "2", "--pattern", str(out)], tmp_path)[0] == EXIT_OK


def test_teleport_unitary_file(tmp_path):
    u = tmp_path / "u.json"
    u.write_text(json.dumps([[0, 1], [1, 0]]))
    assert run(["teleport", "--gate", str(u), "--d", "2"], tmp_path)[0] == EXIT_OK
    u.write_text(json.dumps([[1, 1], [0, 1]]))
    assert run(["teleport", "--gate", str(u), "--d", "2"], tmp_path)[0] == EXIT_USAGE


def test_run_circuit(tmp_path):
    circ = tmp_path / "c.json"
    circ.write_text(json.dumps([{"gate": "H", "targets": [0]}, {"gate": "H", "targets": [1]}, {"gate": "CZ", "targets": [0, 1]}]))
    code, rep = run(["run", "--circuit", str(circ), "--lattice", "builtin:kagome:3x1", "--d", "2", "--policy", "seed:4"], tmp_path)
    assert code == EXIT_OK
    code, rep = run(["run", "--circuit", str(circ), "--lattice", "builtin:kagome", "--d", "2"], tmp_path)
    assert code == EXIT_FAIL and rep["kind"] == "resource"


def test_reports_are_deterministic(tmp_path, monkeypatch):
    argv = ["route", "--lattice", "builtin:square:12x12", "--dilute", "0.05", "--spacing", "4"]
    monkeypatch.setenv("SPT_MBQC_SEED", "3")
    main(argv + ["--report", str(tmp_path / "a.json")])
    main(argv + ["--report", str(tmp_path / "b.json")])
    main(argv + ["--seed", "3", "--report", str(tmp_path / "c.json")])
    a, b, c = ((tmp_path / n).read_bytes() for n in ("a.json", "b.json", "c.json"))
    assert a == b == c


def test_failure_names_witness(tmp_path):
    code, rep = run(["route", "--lattice", "builtin:square:12x12", "--dilute", "0.05", "--seed", "6"], tmp_path)
    if code == EXIT_FAIL:
        assert rep["region"]["hubs"]
    else:
        assert code == EXIT_OK


def test_module_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "spt_mbqc", "verify", "cocycle", "--group", "Z3", "--c", "1", "--format", "json"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert out.returncode == 0
    rep = json.loads(out.stdout)
    assert rep["class_invariant"]["num"] == 1 and rep["class_invariant"]["order"] == 3
