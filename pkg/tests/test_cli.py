import importlib.util
import json
import pathlib
import subprocess
import sys

import numpy as np
import pytest

from qbc.cli import Report, RunConfig, build_parser, config_from_args, main, run

from conftest import FIXTURES

ROOT = pathlib.Path(__file__).resolve().parents[1]


def _load_make_fixtures():
    spec = importlib.util.spec_from_file_location("make_fixtures",
                                                  ROOT / "tools" / "make_fixtures.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def fixture(name):
    return str(FIXTURES / f"{name}.qbc.json")


def run_json(capsys, *argv):
    code = main([*argv, "--format", "json"])
    out = capsys.readouterr()
    text = out.out if out.out.strip() else out.err
    return code, (Report.from_json(text) if text.strip().startswith("{") else None)


EXIT_TABLE = [
    ("check", "bell_commit", 0),
    ("check", "concealing_3omega", 0),
    ("check", "concealing_singleton", 0),
    ("check", "nonconcealing", 1),
    ("attack", "bell_commit", 0),
    ("attack", "concealing_3omega", 0),
    ("attack", "nonconcealing", 1),
    ("theorem1", "bell_commit", 0),
    ("theorem1", "concealing_3omega", 0),
    ("theorem1", "concealing_singleton", 0),
    ("theorem1", "nonconcealing", 1),
    ("theorem1", "zero_pi", 2),
    ("flatten", "bell_commit", 0),
    ("flatten", "concealing_3omega", 0),
    ("corollary", "corollary_half", 0),
    ("corollary", "corollary_singleton", 0),
    ("corollary", "corollary_infeasible", 1),
    ("corollary", "bell_commit", 2),
]


@pytest.mark.parametrize("cmd, name, code", EXIT_TABLE)
def test_exit_codes(capsys, cmd, name, code):
    got, report = run_json(capsys, cmd, "--input", fixture(name))
    assert got == code
    assert report is not None and report.exit_code == code


def test_zero_pi_message(capsys):
    assert main(["theorem1", "--input", fixture("zero_pi")]) == 2
    assert "Consider the case where p_i != 0" in capsys.readouterr().err


def test_nonconcealing_reports_bound(capsys):
    _, report = run_json(capsys, "attack", "--input", fixture("nonconcealing"))
    assert report.verdicts == {"concealing": False, "attack_succeeds": False}
    assert report.diagnostics["max_trace_distance"] == pytest.approx(1, abs=1e-10)
    assert 0 <= report.diagnostics["fidelity_bound"] <= 1e-9


@pytest.mark.parametrize("argv", [
    ["check", "--input", "/nonexistent/file.json"],
    ["check"],
    ["frobnicate"],
    ["generate", "--d-a", "1"],
    ["generate", "--d-b", "0"],
    ["check", "--input", fixture("bell_commit"), "--tol-conceal", "-1"],
    ["corollary", "--input", fixture("corollary_half"), "--trials", "0"],
])
def test_input_errors_exit_2(capsys, argv):
    assert main(argv) == 2


def test_malformed_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"layout": ')
    assert main(["check", "--input", str(bad)]) == 2
    assert "line" in capsys.readouterr().err


def test_json_round_trip(capsys):
    main(["attack", "--input", fixture("bell_commit"), "--format", "json"])
    text = capsys.readouterr().out
    report = Report.from_json(text)
    assert report.to_json() == text.rstrip("\n")
    assert json.loads(text)["subcommand"] == "attack"


def test_text_format_default_and_env(capsys, monkeypatch):
    main(["check", "--input", fixture("bell_commit")])
    assert capsys.readouterr().out.startswith("qbc check: exit 0")
    monkeypatch.setenv("QBC_FORMAT", "json")
    main(["check", "--input", fixture("bell_commit")])
    assert json.loads(capsys.readouterr().out)["verdicts"]["concealing"] is True


def test_text_elides_matrices(capsys):
    main(["attack", "--input", fixture("bell_commit")])
    assert "use --format json" in capsys.readouterr().out


def test_attack_transcripts(capsys):
    _, report = run_json(capsys, "attack", "--input", fixture("bell_commit"), "--unveil", "0")
    t = report.diagnostics["epr_transcripts"]
    assert list(t) == ["0"]
    assert t["0"]["verification_overlap"] == 1.0 and not t["0"]["applied_unitary"]

    _, report = run_json(capsys, "attack", "--input", fixture("bell_commit"))
    t = report.diagnostics["epr_transcripts"]
    assert t["1"]["applied_unitary"] and t["1"]["verification_overlap"] >= 1 - 1e-9


def test_bell_unitary_is_x(capsys):
    _, report = run_json(capsys, "attack", "--input", fixture("bell_commit"))
    u = np.array([[complex(*z) for z in row] for row in report.diagnostics["cheating_unitary"]])
    phase = u[0, 1]
    np.testing.assert_allclose(u / phase, [[0, 1], [1, 0]], atol=1e-12)


def test_flatten_effective_distribution(capsys):
    _, report = run_json(capsys, "flatten", "--input", fixture("bell_commit"))
    np.testing.assert_allclose(report.diagnostics["effective_distribution"], [0.29, 0.71],
                               atol=1e-15)
    assert report.diagnostics["identity_overlap_b0"] >= 1 - 1e-12


def test_singleton_theorem1_matches_attack(capsys):
    _, t1 = run_json(capsys, "theorem1", "--input", fixture("concealing_singleton"))
    _, at = run_json(capsys, "attack", "--input", fixture("concealing_singleton"))
    np.testing.assert_allclose(t1.diagnostics["cheating_unitary"],
                               at.diagnostics["cheating_unitary"], atol=1e-14)
    assert t1.diagnostics["attack_overlap"] == pytest.approx(at.diagnostics["attack_overlap"],
                                                             abs=1e-14)


def test_theorem1_pi_independence(capsys):
    _, report = run_json(capsys, "theorem1", "--input", fixture("concealing_3omega"),
                         "--seed", "17")
    assert min(report.diagnostics["pi_independence_overlaps"]) >= 1 - 1e-9
    assert min(report.diagnostics["per_branch_overlaps"]) >= 1 - 1e-9


def test_corollary_diagnostics(capsys):
    _, report = run_json(capsys, "corollary", "--input", fixture("corollary_half"),
                         "--seed", "3", "--trials", "4")
    d = report.diagnostics
    assert d["trials"] == 4 and d["checks_passed"] == 4
    assert d["all_match_probability"] == 0.0 and d["match_mass"] == 0.0
    assert d["switched_fraction"] == 1.0
    np.testing.assert_allclose(d["mixing"], [0.5, 0.5], atol=1e-12)

    _, single = run_json(capsys, "corollary", "--input", fixture("corollary_singleton"))
    assert single.diagnostics["all_match_probability"] == 1.0
    assert single.diagnostics["switched_fraction"] == 0.0


def test_corollary_seeded_reproducible(capsys):
    runs = [run_json(capsys, "corollary", "--input", fixture("corollary_half"), "--seed", "9")[1]
            for _ in range(2)]
    assert runs[0].diagnostics == runs[1].diagnostics
    assert runs[0].verdicts == runs[1].verdicts


class TestGenerate:
    @pytest.mark.parametrize("name, args", list(_load_make_fixtures().GENERATED.items()))
    def test_bundled_fixture_byte_identical(self, tmp_path, name, args, capsys):
        out = tmp_path / f"{name}.json"
        assert main(["generate", *args, "--out", str(out)]) == 0
        assert out.read_bytes() == (FIXTURES / f"{name}.qbc.json").read_bytes()

    def test_stdout_twice_identical(self, capsys):
        argv = ["generate", "--seed", "42", "--d-a", "3", "--d-b", "4", "--branches", "3"]
        main(argv)
        first = capsys.readouterr().out
        main(argv)
        assert capsys.readouterr().out == first and first.startswith("{")

    @pytest.mark.parametrize("flag, code", [("--concealing", 0), ("--non-concealing", 1)])
    def test_generate_then_check(self, tmp_path, capsys, flag, code):
        path = tmp_path / "p.json"
        assert main(["generate", flag, "--seed", "2", "--d-a", "3", "--out", str(path)]) == 0
        assert main(["check", "--input", str(path)]) == code
        assert main(["attack", "--input", str(path)]) == code


def test_run_api():
    args = build_parser().parse_args(["check", "--input", fixture("bell_commit")])
    report, payload = run(config_from_args(args))
    assert payload is None and report.exit_code == 0 and report.wall_time >= 0


def test_run_config_rejects_trials():
    with pytest.raises(Exception):
        RunConfig("corollary", trials=0)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qbc", "check", "--input", fixture("nonconcealing")],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert "concealing: False" in proc.stdout
