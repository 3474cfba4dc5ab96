"""Tests for CLI argument parsing functionality."""

import pytest
from pathlib import Path

from waveop.cli import parse_arguments


# ---------- Argument parsing ----------


def test_parse_arguments_requires_command():
    # Argparse should exit with code 2 when the subcommand is missing
    with pytest.raises(SystemExit) as exc:
        parse_arguments([])
    assert exc.value.code == 2


def test_parse_arguments_config_flag_short():
    ns = parse_arguments(["g1", "-c", "/configs/reference.yaml"])
    assert ns.command == "g1"
    assert isinstance(ns.config, Path)
    assert ns.config == Path("/configs/reference.yaml")


def test_parse_arguments_config_flag_long():
    ns = parse_arguments(["cook", "--config", "/configs/zero.yaml", "--output", "/out"])
    assert ns.config == Path("/configs/zero.yaml")
    assert ns.output == Path("/out")


def test_parse_arguments_config_flag_optional():
    ns = parse_arguments(["full-g"])
    assert ns.config is None
    assert ns.output is None
    assert ns.verbose == 0


def test_parse_arguments_born_order():
    assert parse_arguments(["born"]).order == 2
    assert parse_arguments(["born", "-n", "4"]).order == 4


def test_parse_arguments_born_order_out_of_range():
    with pytest.raises(SystemExit) as exc:
        parse_arguments(["born", "-n", "5"])
    assert exc.value.code == 2


def test_parse_arguments_quant():
    ns = parse_arguments(["quant", "--normV", "1", "--m0", "2", "--gamma", "0.5"])
    assert (ns.norm_v, ns.m0, ns.gamma, ns.c) == (1.0, 2.0, 0.5, None)


def test_parse_arguments_quant_requires_all_inputs():
    with pytest.raises(SystemExit) as exc:
        parse_arguments(["quant", "--normV", "1"])
    assert exc.value.code == 2


def test_parse_arguments_wiener_needs_a_source():
    with pytest.raises(SystemExit) as exc:
        parse_arguments(["wiener-scalar"])
    assert exc.value.code == 2
    ns = parse_arguments(["wiener-scalar", "--demo", "--check"])
    assert ns.demo and ns.check and ns.input is None


def test_parse_arguments_wiener_sources_are_exclusive():
    with pytest.raises(SystemExit) as exc:
        parse_arguments(["wiener-scalar", "--demo", "--input", "f.wopf"])
    assert exc.value.code == 2


@pytest.mark.parametrize("family", ["all", "zero_identity", "oracle", "wiener", "inequalities"])
def test_parse_arguments_verify_families(family):
    assert parse_arguments(["verify", family]).family == family


def test_parse_arguments_verify_unknown_family():
    with pytest.raises(SystemExit) as exc:
        parse_arguments(["verify", "everything"])
    assert exc.value.code == 2


def test_parse_arguments_verbosity_counts():
    assert parse_arguments(["-vv", "g1"]).verbose == 2


def test_parse_arguments_version_flag_prints_version_and_exits(monkeypatch, capsys):
    # Mock version() to ensure deterministic output
    import importlib.metadata as im

    monkeypatch.setattr(im, "version", lambda _: "1.2.3")
    with pytest.raises(SystemExit) as exc:
        parse_arguments(["-V"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    # argparse "version" action prints "<prog> <version>"
    assert "waveop 1.2.3" in out


def test_parse_arguments_version_flag_without_package(monkeypatch, capsys):
    import importlib.metadata as im
    from importlib.metadata import PackageNotFoundError

    def raise_not_found(_):
        raise PackageNotFoundError

    monkeypatch.setattr(im, "version", raise_not_found)

    with pytest.raises(SystemExit) as exc:
        parse_arguments(["-V"])
    assert exc.value.code == 0

    out = capsys.readouterr().out
    assert out.startswith("waveop ")
    assert "0.0.0+local" in out


def test_parse_arguments_required_argument_missing_value():
    """A flag that needs a value fails with the usage exit code when the value is missing."""
    with pytest.raises(SystemExit) as exc_info:
        parse_arguments(["g1", "-c"])
    assert exc_info.value.code == 2

    with pytest.raises(SystemExit) as exc_info:
        parse_arguments(["g1", "--config"])
    assert exc_info.value.code == 2
