"""Check manager that coordinates execution of all verification checks."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from waveop.config import ExperimentConfig
from waveop.errors import WaveOpError
from waveop.io import write_csv, write_json
from waveop.output import output

from .adjoint import run_adjoint_checks
from .algebra import run_wiener_checks
from .bounds import run_bound_checks
from .context import CheckResult, VerifyContext
from .inequalities import run_inequality_checks, run_structure_checks
from .oracle import run_oracle_checks, run_zero_identity
from .spectral import run_spectral_checks, run_sweep_checks
from .stability import run_stability_checks

LOG = logging.getLogger("waveop.checks.check_manager")

Runner = Callable[[VerifyContext], list[CheckResult]]

# Run order: the cheap families first so a broken setup fails fast.
CHECK_FAMILIES: dict[str, Runner] = {
    "zero_identity": run_zero_identity,
    "spectral": run_spectral_checks,
    "wiener": run_wiener_checks,
    "structure": run_structure_checks,
    "oracle": run_oracle_checks,
    "bounds": run_bound_checks,
    "stability": run_stability_checks,
    "adjoint": run_adjoint_checks,
    "inequalities": run_inequality_checks,
    "sweeps": run_sweep_checks,
}


@dataclass
class VerifyReport:
    results: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list[CheckResult]:
        return [r for r in self.results if not r.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [r.to_dict() for r in self.results]}


def run_family(name: str, runner: Runner, context: VerifyContext) -> list[CheckResult]:
    """Run one family; a domain error becomes a single failed result carrying its code."""
    try:
        return runner(context)
    except WaveOpError as e:
        LOG.error("check family %s stopped: %s", name, e)
        return [CheckResult.failed(name, e)]


def write_report(report: VerifyReport, output_dir: Path) -> list[Path]:
    """summary.json plus a flat checks.csv."""
    output_dir.mkdir(parents=True, exist_ok=True)
    summary = output_dir / "summary.json"
    table = output_dir / "checks.csv"
    write_json(summary, report.to_dict())
    write_csv(
        table,
        ("name", "value", "tolerance", "passed"),
        ((r.name, r.value, r.tolerance, r.passed) for r in report.results),
    )
    return [summary, table]


def check_manager(
    cfg: ExperimentConfig,
    families: Optional[Sequence[str]] = None,
    output_dir: Optional[Path] = None,
) -> VerifyReport:
    """Run the selected check families (all by default) against one configuration.

    Args:
        cfg: validated experiment configuration
        families: names from CHECK_FAMILIES; None runs every family
        output_dir: where summary.json and checks.csv go; defaults to cfg.output_dir

    Returns:
        VerifyReport: every result in run order
    """
    names = list(CHECK_FAMILIES) if families is None else list(families)
    unknown = [n for n in names if n not in CHECK_FAMILIES]
    if unknown:
        raise KeyError(f"unknown check families: {', '.join(unknown)}")

    context = VerifyContext(cfg)
    report = VerifyReport()
    for name in names:
        with output.show_progress(f"Running {name} checks") as progress:
            progress.add_task(f"Running {name} checks", total=None)
            results = run_family(name, CHECK_FAMILIES[name], context)
        for r in results:
            LOG.info("%s %s", "pass" if r.passed else "FAIL", r.describe())
            if "skipped" in r.details:
                output.print_warning(r.describe())
        if results and all(r.passed for r in results):
            output.print_success(f"{name}: {len(results)} checks passed")
        report.results.extend(results)

    target = Path(output_dir) if output_dir is not None else Path(cfg.output_dir)
    written = write_report(report, target)

    if report.passed:
        output.print_summary_success(
            command="verify",
            output_dir=str(target),
            checks=[r.describe() for r in report.results],
            files_written=len(written),
        )
    else:
        output.print_summary_failure(
            command="verify",
            output_dir=str(target),
            checks=[r.describe() for r in report.results if r.passed],
            failures=[r.describe() for r in report.failures],
            files_written=len(written),
        )
    return report
