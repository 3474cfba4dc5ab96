"""
Output utilities using Rich for the waveop command line.
Minimal, clean, and consistent styling.
"""

import time
from typing import Optional, Sequence

from rich.console import Console
from rich.markup import escape
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn

# Global console instance
console = Console()


class OutputManager:
    """Manages clean, consistent output for waveop."""

    def __init__(self):
        self.start_time = None

    def start_timing(self):
        """Start timing for operations."""
        self.start_time = time.time()

    def get_elapsed_time(self):
        """Get elapsed time since start_timing() was called."""
        if self.start_time is None:
            return 0.0
        return time.time() - self.start_time

    def print_running(self, command: str, config_name: Optional[str] = None):
        """Print the subcommand being run and its configuration."""
        console.print(f"Running: [bold cyan]{command}[/bold cyan]")
        if config_name:
            console.print(f"Using configuration: [bold]{config_name}[/bold]")
        else:
            console.print("Using default configuration")

    def print_success(self, message: str):
        """Print success message with green checkmark."""
        console.print(f"[green]✓[/green] {message}")

    def print_error(self, message: str, path: Optional[str] = None):
        """Print error message with red X."""
        if path:
            console.print(f"[red]✗ {message} '[bold red]{path}[/bold red]'[/red]")
        else:
            console.print(f"[red]✗ {message}[/red]")

    def print_warning(self, message: str, path: Optional[str] = None):
        """Print warning message with yellow warning triangle."""
        if path:
            console.print(f"[yellow]⚠ {message} '[bold yellow]{path}[/bold yellow]'[/yellow]")
        else:
            console.print(f"[yellow]⚠ {message}[/yellow]")

    def print_usage_error(self, prog: str, message: str):
        """Print argument parsing error with rich formatting."""
        console.print(f"[red]✗ Error:[/red] {message}")
        console.print(f"\nFor help, use: [bold cyan]{prog} --help[/bold cyan]")

    def print_json(self, text: str):
        """Print a JSON document without markup processing."""
        console.print(text, markup=False, highlight=False, soft_wrap=True)

    def show_progress(self, description: str):
        """Show animated progress spinner."""
        return Progress(
            SpinnerColumn(),
            TextColumn("{task.description}"),
            console=console,
            transient=True,
        )

    def print_summary_success(
        self,
        command: str,
        output_dir: str,
        checks: Sequence[str] = (),
        files_written: int = 0,
    ):
        """Print success summary panel."""
        elapsed = self.get_elapsed_time()

        content = f"{command} completed successfully\n\n"
        content += f"Output: [bold cyan]{output_dir}[/bold cyan]\n"
        if files_written > 0:
            content += f"Files written: [bold]{files_written}[/bold]\n"
        if checks:
            content += f"Checks run: [bold]{len(checks)}[/bold]\n"
        content += "Failures: [bold]0[/bold]\n"
        content += f"Time taken: [dim]{elapsed:.1f} seconds[/dim]"
        if checks:
            content += "\n\n"
            content += "\n".join(f"[green]✓[/green] {escape(line)}" for line in checks)

        console.print(Panel(content, title="Summary", border_style="green"))

    def print_summary_failure(
        self,
        command: str,
        output_dir: str,
        checks: Sequence[str] = (),
        failures: Sequence[str] = (),
        files_written: int = 0,
    ):
        """Print failure summary panel; passing checks are listed before the failures."""
        elapsed = self.get_elapsed_time()

        content = f"{command} failed\n\n"
        content += f"Output: [bold cyan]{output_dir}[/bold cyan]\n"
        if files_written > 0:
            content += f"Files written: [bold]{files_written}[/bold]\n"
        content += f"Checks run: [bold]{len(checks) + len(failures)}[/bold]\n"
        content += f"Failures: [bold red]{len(failures)}[/bold red]\n"
        content += f"Time taken: [dim]{elapsed:.1f} seconds[/dim]"
        if checks or failures:
            content += "\n\n"
            lines = [f"[green]✓[/green] {escape(line)}" for line in checks]
            lines += [f"[red]✗ {escape(line)}[/red]" for line in failures]
            content += "\n".join(lines)

        console.print(Panel(content, title="Summary", border_style="red"))


# Global output manager instance
output = OutputManager()
