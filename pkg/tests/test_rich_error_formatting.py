"""Tests for rich error formatting in CLI argument parsing.

This module specifically tests the rich formatting aspect of error messages,
ensuring consistent visual presentation across all CLI error scenarios.
"""

import pytest
from unittest.mock import patch
from waveop.cli import RichArgumentParser
from waveop.output import output, OutputManager


class TestRichArgumentParser:
    """Tests for the RichArgumentParser class that provides rich-formatted error messages."""

    def test_missing_required_argument_formatting(self):
        """Missing arguments use the red error icon and a help hint."""
        parser = RichArgumentParser(prog="waveop", output_manager=OutputManager())
        parser.add_argument("family", help="Check family")

        with patch("waveop.output.console") as mock_console:
            with pytest.raises(SystemExit) as exc_info:
                parser.parse_args([])

            assert exc_info.value.code == 2
            assert mock_console.print.call_count == 2

            error_call = mock_console.print.call_args_list[0]
            help_call = mock_console.print.call_args_list[1]

            assert "[red]✗ Error:[/red]" in str(error_call)
            assert "Missing required argument: family" in str(error_call)
            assert "[bold cyan]waveop --help[/bold cyan]" in str(help_call)

    def test_unrecognized_argument_formatting(self):
        parser = RichArgumentParser(prog="waveop", output_manager=OutputManager())
        parser.add_argument("family", help="Check family")

        with patch("waveop.output.console") as mock_console:
            with pytest.raises(SystemExit) as exc_info:
                parser.parse_args(["oracle", "--nonexistent-flag"])

            assert exc_info.value.code == 2
            assert mock_console.print.call_count == 2

            error_call = mock_console.print.call_args_list[0]
            help_call = mock_console.print.call_args_list[1]

            assert "[red]✗ Error:[/red]" in str(error_call)
            assert "Unrecognized argument: --nonexistent-flag" in str(error_call)
            assert "[bold cyan]waveop --help[/bold cyan]" in str(help_call)

    def test_invalid_choice_formatting(self):
        """Choice errors keep the offending value and drop the argparse prefix."""
        parser = RichArgumentParser(prog="waveop", output_manager=OutputManager())
        parser.add_argument("family", choices=["all", "oracle"])

        with patch("waveop.output.console") as mock_console:
            with pytest.raises(SystemExit) as exc_info:
                parser.parse_args(["everything"])

            assert exc_info.value.code == 2
            error_call = mock_console.print.call_args_list[0]
            assert "Invalid choice: 'everything'" in str(error_call)

    def test_multiple_unrecognized_arguments_formatting(self):
        parser = RichArgumentParser(prog="testprog", output_manager=OutputManager())
        parser.add_argument("family", help="Check family")

        with patch("waveop.output.console") as mock_console:
            with pytest.raises(SystemExit) as exc_info:
                parser.parse_args(["oracle", "-x", "-y", "--invalid"])

            assert exc_info.value.code == 2
            assert mock_console.print.call_count == 2

            error_call = mock_console.print.call_args_list[0]
            assert "[red]✗ Error:[/red]" in str(error_call)
            assert "Unrecognized argument:" in str(error_call)


class TestOutputUsageErrorMethod:
    """Tests for the output module's print_usage_error method."""

    def test_print_usage_error_formatting(self):
        with patch("waveop.output.console") as mock_console:
            output.print_usage_error("testprog", "Test error message")

            assert mock_console.print.call_count == 2

            error_call = mock_console.print.call_args_list[0]
            help_call = mock_console.print.call_args_list[1]

            assert "[red]✗ Error:[/red] Test error message" in str(error_call)
            assert "[bold cyan]testprog --help[/bold cyan]" in str(help_call)

    def test_print_usage_error_with_different_programs(self):
        with patch("waveop.output.console") as mock_console:
            output.print_usage_error("different-tool", "Some error")

            assert mock_console.print.call_count == 2
            help_call = mock_console.print.call_args_list[1]
            assert "[bold cyan]different-tool --help[/bold cyan]" in str(help_call)


class TestSummaryPanels:
    def test_failure_panel_lists_failures(self):
        with patch("waveop.output.console") as mock_console:
            output.print_summary_failure("verify", "out", checks=["a: 0.1"], failures=["b: [x]"])
            panel = mock_console.print.call_args_list[0].args[0]
            assert "verify failed" in panel.renderable
            assert "Checks run: [bold]2[/bold]" in panel.renderable
            # escaped for markup
            assert "b: \\[x]" in panel.renderable

    def test_success_panel_counts_files(self):
        with patch("waveop.output.console") as mock_console:
            output.print_summary_success("g1", "out", files_written=3)
            panel = mock_console.print.call_args_list[0].args[0]
            assert "g1 completed successfully" in panel.renderable
            assert "Files written: [bold]3[/bold]" in panel.renderable
