import io
import json
import shutil
import subprocess
import sys

import pytest

from aipi.cli import run
from helpers import FIXTURE, RELEASE_CONFIG

BUILD = ["--dataset", str(FIXTURE), "--version", "0.1.0", "--cutoff", "2025-09-30"]


def cli(*argv):
    out = io.StringIO()
    code = run([str(a) for a in argv], out)
    return code, out.getvalue()


def test_validate_clean_fixture():
    code, text = cli("validate", "--dataset", FIXTURE)
    assert code == 0
    assert text.strip().startswith("0 errors, ") and text.strip().endswith(" warnings")


def test_validate_reports_cutoff_errors(tmp_path):
    code, text = cli("validate", "--dataset", FIXTURE, "--cutoff", "2025-06-01", "--out", tmp_path)
    assert code == 1
    assert "E_AFTER_CUTOFF" in text
    violations = json.loads((tmp_path / "violations.json").read_text())
    assert any(v["code"] == "E_AFTER_CUTOFF" for v in violations)


def test_validate_parse_errors_exit_one(tmp_path):
    data = tmp_path / "data"
    shutil.copytree(FIXTURE, data)
    (data / "codes.json").write_text("[{]")
    code, text = cli("validate", "--dataset", data)
    assert code == 1 and "E_SYNTAX" in text


def test_build_and_diff(tmp_path):
    code, text = cli("build", *BUILD, "--out", tmp_path / "a")
    assert code == 0 and (tmp_path / "a" / "manifest.json").is_file()
    assert "release 0.1.0" in text
    code, _ = cli("build", *BUILD, "--out", tmp_path / "b", "--workers", 4)
    assert code == 0
    code, text = cli("diff", tmp_path / "a", tmp_path / "b", "--out", tmp_path / "d")
    assert (code, text.strip()) == (0, "no changes")
    assert json.loads((tmp_path / "d" / "diff.json").read_text())["scores"] == {}


def test_build_from_config_matches_flags(tmp_path):
    assert cli("build", "--config", RELEASE_CONFIG, "--dataset", FIXTURE, "--out", tmp_path / "a")[0] == 0
    argv = ["build", *BUILD, "--out", tmp_path / "b", "--required", "AC-01,AC-03,TR-01",
            "--sampling-seed", 7, "--bootstrap-seed", 11]
    assert cli(*argv)[0] == 0
    a = (tmp_path / "a" / "manifest.json").read_bytes()
    assert a == (tmp_path / "b" / "manifest.json").read_bytes()


def test_flags_override_config(tmp_path):
    code, _ = cli("build", "--config", RELEASE_CONFIG, "--dataset", FIXTURE, "--cutoff", "2025-06-01",
                  "--out", tmp_path / "rel")
    assert code == 1
    assert not (tmp_path / "rel").exists()
    code, _ = cli("build", "--config", RELEASE_CONFIG, "--dataset", FIXTURE, "--version", "2.0.0",
                  "--out", tmp_path / "rel2")
    assert code == 0
    assert json.loads((tmp_path / "rel2" / "manifest.json").read_text())["version"] == "2.0.0"


def test_config_file_may_carry_paths(tmp_path):
    cfg = json.loads(RELEASE_CONFIG.read_text())
    cfg.update(dataset=str(FIXTURE), out=str(tmp_path / "rel"))
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    assert cli("build", "--config", path)[0] == 0
    assert (tmp_path / "rel" / "manifest.json").is_file()


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["build", "--dataset", str(FIXTURE), "--out", "x"],  # no version or cutoff
    ["score", "--dataset", str(FIXTURE), "--out", "x", "--bogus"],
    ["score", "--dataset", "/no/such/dir", "--out", "x"],
    ["score", "--dataset", str(FIXTURE)],  # no --out
    ["linkcheck", "--dataset", str(FIXTURE), "--out", "x", "--live", "--offline"],
    ["build", *BUILD, "--out", "x", "--version", "one"],
    ["score", "--dataset", str(FIXTURE), "--out", "x", "--workers", "0"],
    ["diff", "/no/a", "/no/b"],
])
def test_usage_errors_exit_two(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert run(argv, io.StringIO()) == 2
    assert not (tmp_path / "x").exists()


def test_subcommands_are_idempotent(tmp_path):
    first, second = tmp_path / "one", tmp_path / "two"
    runs = [
        ["score", "--dataset", FIXTURE],
        ["floors", "--config", RELEASE_CONFIG, "--dataset", FIXTURE],
        ["reliability", "--config", RELEASE_CONFIG, "--dataset", FIXTURE],
        ["sensitivity", "--config", RELEASE_CONFIG, "--dataset", FIXTURE, "--n-resamples", 200],
    ]
    for argv in runs:
        for out in (first, second, first):
            code, _ = cli(*argv, "--out", out)
            assert code == 0
    names = sorted(p.name for p in first.iterdir())
    assert "floor_verdicts.json" in names and "sensitivity.json" in names and "scores.csv" in names
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_score_prints_known_only_table(tmp_path):
    code, text = cli("score", "--dataset", FIXTURE, "--out", tmp_path)
    lines = text.splitlines()
    assert code == 0 and lines[0].startswith("provider") and len(lines) == 14
    assert lines[-1].startswith("scored 16 subjects, 12 providers")


def test_rescore_against_prior_release(tmp_path):
    cli("build", *BUILD, "--out", tmp_path / "rel")
    code, _ = cli("rescore", "--dataset", FIXTURE, "--c-ref", tmp_path / "rel" / "c_ref.json",
                  "--out", tmp_path / "re")
    assert code == 0
    assert (tmp_path / "re" / "scores.json").read_bytes() == (tmp_path / "rel" / "scores.json").read_bytes()
    (tmp_path / "bad.json").write_text("{}")
    code, _ = cli("rescore", "--dataset", FIXTURE, "--c-ref", tmp_path / "bad.json", "--out", tmp_path / "x")
    assert code == 1


def test_partial_outputs_never_land_in_a_release(tmp_path):
    cli("build", *BUILD, "--out", tmp_path / "rel")
    code, _ = cli("score", "--dataset", FIXTURE, "--out", tmp_path / "rel")
    assert code == 2


def test_linkcheck_offline(tmp_path):
    code, text = cli("linkcheck", "--dataset", FIXTURE, "--out", tmp_path)
    assert code == 0 and text.strip().endswith("not_attempted")
    statuses = json.loads((tmp_path / "link_status.json").read_text())
    assert {s["status"] for s in statuses} == {"not_attempted"}


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "aipi", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("validate", "score", "reliability", "sensitivity", "build", "diff", "rescore",
                 "floors", "linkcheck"):
        assert name in proc.stdout
