"""Tests for check manager orchestration functionality."""

import csv
import json
import math

import pytest

from waveop.checks.check_manager import VerifyReport, check_manager, run_family, write_report
from waveop.checks.context import CheckResult, VerifyContext
from waveop.config import config_from_mapping
from waveop.errors import NotInvertible


@pytest.fixture
def cfg():
    return config_from_mapping({"potential": {"amplitudes": [0.0], "widths": [1.0]}, "corpus": []})


def _passing(context):
    return [CheckResult.at_most("small", 0.1, 1.0)]


def _failing(context):
    return [CheckResult.at_most("large", 2.0, 1.0)]


# ---------- Result records ----------


def test_at_most_passes_within_tolerance():
    assert CheckResult.at_most("x", 0.5, 0.5).passed
    assert not CheckResult.at_most("x", 0.6, 0.5).passed


def test_at_most_rejects_non_finite_values():
    assert not CheckResult.at_most("x", math.nan, 1.0).passed
    assert not CheckResult.at_most("x", math.inf, math.inf).passed


def test_flag_result():
    ok = CheckResult.flag("raised", True, extra=3)
    assert ok.passed and ok.value == 1.0
    assert ok.details == {"extra": 3}
    assert not CheckResult.flag("raised", False).passed


def test_failed_result_carries_error_code():
    result = CheckResult.failed("wiener", NotInvertible("1 + f^ vanishes", minimum=0.0))
    assert not result.passed
    assert result.error["code"] == "not_invertible"
    assert result.describe() == "wiener: not_invertible: 1 + f^ vanishes"


def test_skipped_result_passes():
    result = CheckResult.skipped("inequalities", "empty corpus")
    assert result.passed
    assert result.describe() == "inequalities: skipped (empty corpus)"


def test_describe_shows_value_and_tolerance():
    assert CheckResult.at_most("oracle", 0.01234, 0.05).describe() == "oracle: 0.01234 (tolerance 0.05)"


# ---------- Core orchestration behavior ----------


def test_run_family_maps_domain_errors():
    def broken(context):
        raise NotInvertible("singular")

    results = run_family("wiener", broken, None)
    assert len(results) == 1
    assert results[0].error["code"] == "not_invertible"


def test_run_family_lets_other_exceptions_propagate():
    def broken(context):
        raise RuntimeError("Simulated check failure")

    with pytest.raises(RuntimeError, match="Simulated check failure"):
        run_family("wiener", broken, None)


def test_check_manager_success(monkeypatch, capsys, cfg, tmp_path):
    monkeypatch.setattr("waveop.checks.check_manager.CHECK_FAMILIES", {"a": _passing})
    report = check_manager(cfg, output_dir=tmp_path)
    assert report.passed
    captured = capsys.readouterr()
    assert "verify completed successfully" in captured.out


def test_check_manager_failure(monkeypatch, capsys, cfg, tmp_path):
    monkeypatch.setattr("waveop.checks.check_manager.CHECK_FAMILIES", {"a": _passing, "b": _failing})
    report = check_manager(cfg, output_dir=tmp_path)
    assert not report.passed
    assert [r.name for r in report.failures] == ["large"]
    captured = capsys.readouterr()
    assert "verify failed" in captured.out


def test_check_manager_runs_selected_families(monkeypatch, cfg, tmp_path):
    seen = []

    def record(context):
        seen.append(context)
        return _passing(context)

    monkeypatch.setattr("waveop.checks.check_manager.CHECK_FAMILIES", {"a": record, "b": _failing})
    report = check_manager(cfg, ["a"], tmp_path)
    assert report.passed
    assert len(seen) == 1
    assert isinstance(seen[0], VerifyContext)
    assert seen[0].cfg is cfg


def test_check_manager_rejects_unknown_family(cfg, tmp_path):
    with pytest.raises(KeyError):
        check_manager(cfg, ["nonexistent"], tmp_path)


def test_families_share_one_context(monkeypatch, cfg, tmp_path):
    seen = []

    def record(context):
        seen.append(context)
        return []

    monkeypatch.setattr("waveop.checks.check_manager.CHECK_FAMILIES", {"a": record, "b": record})
    check_manager(cfg, output_dir=tmp_path)
    assert seen[0] is seen[1]


# ---------- Report files ----------


def test_report_files(tmp_path):
    report = VerifyReport([CheckResult.at_most("small", 0.1, 1.0), CheckResult.flag("raised", False)])
    written = write_report(report, tmp_path / "out")
    assert [p.name for p in written] == ["summary.json", "checks.csv"]
    summary = json.loads((tmp_path / "out" / "summary.json").read_text(encoding="utf-8"))
    assert summary["passed"] is False
    assert [c["name"] for c in summary["checks"]] == ["small", "raised"]
    with (tmp_path / "out" / "checks.csv").open(newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["name", "value", "tolerance", "passed"]
    assert rows[2] == ["raised", "0.0", "1.0", "False"]


def test_check_manager_defaults_to_config_output_dir(monkeypatch, tmp_path):
    cfg = config_from_mapping({"output_dir": str(tmp_path / "from-config")})
    monkeypatch.setattr("waveop.checks.check_manager.CHECK_FAMILIES", {"a": _passing})
    check_manager(cfg)
    assert (tmp_path / "from-config" / "summary.json").exists()


def test_check_manager_reports_families_and_skips(monkeypatch, capsys, cfg, tmp_path):
    def skipping(context):
        return [CheckResult.skipped("oracle_refinement", "no coarser sphere rule"), *_passing(context)]

    monkeypatch.setattr("waveop.checks.check_manager.CHECK_FAMILIES", {"a": skipping, "b": _failing})
    check_manager(cfg, output_dir=tmp_path)
    out = capsys.readouterr().out
    assert "⚠ oracle_refinement: skipped (no coarser sphere rule)" in out
    assert "✓ a: 2 checks passed" in out
    assert "b: 1 checks passed" not in out
