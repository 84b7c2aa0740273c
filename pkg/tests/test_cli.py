import json
import subprocess
import sys

import pytest

from ouspde.checks import CHECK_IDS, SUITE_FUNCTIONS, SUITES, SuiteConfig, TOLERANCES
from ouspde.cli import EXIT_FAIL, EXIT_IO, EXIT_OK, EXIT_PRECONDITION, EXIT_USAGE, main, run_suite


@pytest.fixture
def empty_config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text("{}")
    return p


def strip_time(text):
    d = json.loads(text)
    d.pop("timestamp")
    return d


def test_registry_ids_are_unique_and_namespaced():
    assert set(CHECK_IDS) == set(SUITES) == set(SUITE_FUNCTIONS)
    ids = [c for suite in CHECK_IDS.values() for c in suite]
    assert len(ids) == len(set(ids))
    for suite, checks in CHECK_IDS.items():
        prefix = "derivative" if suite == "derivative_scaling" else suite
        assert all(c.startswith(prefix + ".") for c in checks)


@pytest.mark.parametrize("suite", ["linalg", "jaffard"])
def test_cheap_suites_emit_registered_ids(suite):
    report = run_suite(SuiteConfig(suite))
    assert [c.check_id for c in report.checks] == CHECK_IDS[suite]
    assert all(c.anchor for c in report.checks)


def test_linalg_defaults_pass_and_report_is_reproducible(tmp_path, empty_config, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["linalg", "--config", str(empty_config), "--out", str(a), "--seed", "3"]) == EXIT_OK
    assert main(["linalg", "--config", str(empty_config), "--out", str(b), "--seed", "3"]) == EXIT_OK
    ra = (a / "linalg.report.json").read_text()
    rb = (b / "linalg.report.json").read_text()
    assert strip_time(ra) == strip_time(rb)
    d = json.loads(ra)
    assert d["counts"]["FAIL"] == 0 and d["environment"]["seed"] == 3
    assert {"check_id", "anchor", "values", "threshold", "status"} <= set(d["checks"][0])
    assert "linalg: 10 pass" in capsys.readouterr().out


def test_config_values_and_tolerances_are_used(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"samples": 20, "tolerances": {"linalg_margin": 1e-3}, "extra": 1}))
    c = SuiteConfig.from_file("linalg", cfg, seed=5)
    assert c.samples == 20 and c.seed == 5 and c.options == {"extra": 1}
    assert c.tol("linalg_margin") == 1e-3 and c.tol("schur_complement_rel") == TOLERANCES["schur_complement_rel"]
    assert SuiteConfig.from_file("simulator", cfg, half_qv_convention=True).qv_scale == 2.0


def test_kernel_mass_with_constant_field(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"field": {"kind": "constant", "value": 1.0}, "samples": 20000}))
    assert main(["kernel_mass", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    d = json.loads((tmp_path / "o" / "kernel_mass.report.json").read_text())
    assert [c["status"] for c in d["checks"]] == ["PASS"] * 3
    assert (tmp_path / "o" / "kernel_mass.kernel_mass_K_sweep.csv").read_text().startswith(
        "param,estimate,stderr")


def test_uniqueness_with_too_few_paths(tmp_path, empty_config, capsys):
    code = main(["uniqueness", "--config", str(empty_config), "--samples", "50",
                 "--out", str(tmp_path)])
    assert code == EXIT_PRECONDITION != EXIT_OK
    assert "insufficient samples" in capsys.readouterr().err


def test_unknown_suite_is_a_usage_error(empty_config):
    with pytest.raises(SystemExit) as e:
        main(["bogus", "--config", str(empty_config)])
    assert e.value.code == EXIT_USAGE
    with pytest.raises(ValueError):
        SuiteConfig("bogus")


def test_missing_config_is_an_io_error(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["linalg", "--config", str(missing)]) == EXIT_IO
    assert str(missing) in capsys.readouterr().err


def test_malformed_config_is_a_usage_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["linalg", "--config", str(p)]) == EXIT_USAGE
    p.write_text("[1, 2]")
    assert main(["linalg", "--config", str(p)]) == EXIT_USAGE


def test_failing_check_sets_exit_code(tmp_path):
    cfg = tmp_path / "strict.json"
    # a negative margin requirement no instance can meet
    cfg.write_text(json.dumps({"tolerances": {"linalg_margin": -1e3}}))
    assert main(["linalg", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_FAIL


def test_console_entry_point(tmp_path, empty_config):
    out = subprocess.run([sys.executable, "-m", "ouspde.cli", "jaffard", "--config", str(empty_config),
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == EXIT_OK, out.stderr
    assert "jaffard.offdiagonal_decay" in out.stdout
