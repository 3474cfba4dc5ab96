"""Command-line interface for waveop."""

import sys
import logging
import argparse
from pathlib import Path
from typing import Callable
import importlib.metadata as im

import numpy as np
import yaml

from .config import ExperimentConfig, load_config
from .errors import ConfigInvalid, WaveOpError
from .fields import ScalarField, gaussian_field
from .io import read_field, to_json, write_array, write_csv, write_field, write_json
from .output import output
from .propagator import cook_wave_operator
from .resolvent import bound_state_energies, m0_scan, zero_energy_check
from .structure import (
    apply_g,
    born_g_n,
    full_g,
    g1,
    l_table,
    omega_norm_table,
    save_structure,
    structure_norm,
    x_omega_regularity,
)
from .wiener import DEFAULT_C, ConvElement, check_inverse, quant_params, wiener_solve

# Exit codes
EXIT_SUCCESS = 0
EXIT_CHECK_FAILURE = 1  # Domain errors and missed tolerances
EXIT_USAGE_ERROR = 2  # Command-line argument and configuration errors
EXIT_KEYBOARD_INTERRUPT = 130

# Logging verbosity level constants
VERBOSITY_QUIET = 0  # Default verbosity level (WARNING)
VERBOSITY_VERBOSE = 1  # Single -v flag (INFO)
VERBOSITY_DEBUG = 2  # Double -vv flag (DEBUG)

# Package version constants
PACKAGE_NAME = "waveop"
FALLBACK_VERSION = "0.0.0+local"

BORN_ORDERS = (1, 2, 3, 4)


LOG = logging.getLogger("waveop.cli")


class RichArgumentParser(argparse.ArgumentParser):
    """Custom ArgumentParser that uses rich formatting for error messages."""

    def __init__(self, *args, output_manager, **kwargs):
        """Initialize with explicit output manager dependency injection."""
        super().__init__(*args, **kwargs)
        self._output_manager = output_manager

    def error(self, message: str) -> None:
        """Override error method to use rich formatting."""
        if "required:" in message:
            friendly_message = message.replace(
                "the following arguments are required: ",
                "Missing required argument: ",
            )
        elif "unrecognized arguments:" in message:
            args = message.replace("unrecognized arguments: ", "")
            friendly_message = f"Unrecognized argument: {args}"
        elif "invalid choice:" in message:
            friendly_message = "Invalid choice: " + message.split("invalid choice: ", 1)[1]
        else:
            friendly_message = message[:1].upper() + message[1:]

        self._output_manager.print_usage_error(self.prog, friendly_message)
        self.exit(EXIT_USAGE_ERROR)


def _package_version() -> str:
    try:
        return im.version(PACKAGE_NAME)
    except im.PackageNotFoundError:
        return FALLBACK_VERSION


def parse_arguments(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse and return command-line arguments."""
    parser = RichArgumentParser(
        prog="waveop",
        description=(
            "Structure formula, time-domain oracle and verification pipelines "
            "for the wave operators of -Laplace + V in three dimensions"
        ),
        output_manager=output,
    )
    parser.add_argument("-V", "--version", action="version", version=f"%(prog)s {_package_version()}")
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="Increase verbosity (use -vv for debug)",
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", type=Path, help="Experiment configuration (YAML or JSON)")
    common.add_argument("-o", "--output", type=Path, help="Output directory (default: output_dir of the config)")

    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, help_text: str, parents=(common,)) -> argparse.ArgumentParser:
        return sub.add_parser(name, help=help_text, parents=list(parents), output_manager=output)

    add("l-table", "Tabulate L(r, omega) for the configured potential")
    add("g1", "First Born structure measure")
    born = add("born", "Structure measure of one Born term")
    born.add_argument("-n", "--order", type=int, choices=BORN_ORDERS, default=2, help="Born order (default: 2)")
    add("full-g", "Full structure function g and W+ applied to the probe")
    add("cook", "Time-domain W+ of the probe (Cook's method)")
    add("spectral-scan", "M0 scan, zero-energy check and bound states")

    wiener = add("wiener-scalar", "Invert delta + f in the convolution algebra")
    source = wiener.add_mutually_exclusive_group(required=True)
    source.add_argument("--input", type=Path, help="Field file holding the density of f")
    source.add_argument("--demo", action="store_true", help="Use a random admissible density on the line")
    wiener.add_argument("--check", action="store_true", help="Fail unless the inverse residual meets its tolerance")

    quant = add("quant", "Quantitative parameters as functions of ||V||, M0 and gamma", parents=())
    quant.add_argument("--normV", dest="norm_v", type=float, required=True, help="||V||")
    quant.add_argument("--m0", type=float, required=True, help="M0")
    quant.add_argument("--gamma", type=float, required=True, help="gamma in (0, 1/2]")
    quant.add_argument("--c", type=float, default=None, help="absolute constant c (default: 0.01)")
    quant.add_argument("-o", "--output", type=Path, help="Output directory (default: waveop-out)")

    from .checks.check_manager import CHECK_FAMILIES

    verify = add("verify", "Run verification checks")
    verify.add_argument(
        "family",
        choices=["all", *CHECK_FAMILIES],
        help="Check family to run, or 'all'",
    )
    return parser.parse_args(argv)


def _configure_logging(verbosity: int) -> None:
    """Configure logging without clobbering existing handlers (e.g., pytest caplog)."""
    level = (
        logging.WARNING
        if verbosity == VERBOSITY_QUIET
        else (logging.INFO if verbosity == VERBOSITY_VERBOSE else logging.DEBUG)
    )

    # Configure our package logger
    pkg_logger = logging.getLogger("waveop")
    pkg_logger.setLevel(level)

    mod_logger = logging.getLogger("waveop.cli")
    mod_logger.setLevel(level)
    mod_logger.propagate = True  # bubble up to 'waveop' if needed

    # If running as a standalone CLI (no handlers configured), attach a simple handler
    root = logging.getLogger()
    if not root.handlers and not pkg_logger.handlers and not mod_logger.handlers:
        try:
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
            pkg_logger.addHandler(handler)
            # Prevent duplicate emission if a root handler is configured later.
            pkg_logger.propagate = False
        except (IOError, LookupError) as exc:
            sys.stderr.write(f"Failed to configure logging: {exc}\n")
            sys.exit(EXIT_CHECK_FAILURE)


# ---------- Subcommands ----------
# Each returns (summary, written files, passed).

Result = tuple[dict, list[Path], bool]


def _probe(cfg: ExperimentConfig) -> ScalarField:
    return gaussian_field(cfg.x_grid(), cfg.probe.width)


def _write_structure(g, out: Path, stem: str) -> tuple[dict, list[Path]]:
    manifest = save_structure(g, out / f"{stem}.json")
    table = out / f"{stem}_omega.csv"
    write_csv(table, ("index", "wx", "wy", "wz", "weight", "line_norm", "grid_norm"), omega_norm_table(g))
    summary = {
        "structure_norm": structure_norm(g),
        "x_omega_regularity": x_omega_regularity(g),
        "epsilon": g.epsilon,
        "info": g.info,
    }
    return summary, [manifest, table]


def cmd_l_table(cfg: ExperimentConfig, out: Path, args: argparse.Namespace) -> Result:
    grids = cfg.structure_grids()
    sphere = cfg.sphere()
    table = l_table(cfg.build_potential(), grids.r, sphere, cfg.epsilon_value(), grids.damping(cfg.epsilon_value()))
    r = grids.r.values
    path = out / "l_table.csv"
    write_csv(
        path,
        ("r", "omega_index", "re", "im"),
        ((r[k], i, table.limit[k, i].real, table.limit[k, i].imag) for k in range(len(r)) for i in range(len(sphere))),
    )
    summary = {"l1_norm": table.l1_norm(), "l2_norm": table.l2_norm(), "damping": table.damping}
    return summary, [path], True


def cmd_g1(cfg: ExperimentConfig, out: Path, args: argparse.Namespace) -> Result:
    grids = cfg.structure_grids()
    eps = cfg.epsilon_value()
    g = g1(cfg.build_potential(), cfg.sphere(), grids.r, eps, damping=grids.damping(eps))
    summary, written = _write_structure(g, out, "g1")
    return summary, written, True


def cmd_born(cfg: ExperimentConfig, out: Path, args: argparse.Namespace) -> Result:
    g = born_g_n(cfg.build_potential(), args.order, cfg.sphere(), cfg.structure_grids(), cfg.epsilon_value())
    summary, written = _write_structure(g, out, f"born{args.order}")
    summary["order"] = args.order
    return summary, written, True


def cmd_full_g(cfg: ExperimentConfig, out: Path, args: argparse.Namespace) -> Result:
    s = cfg.structure
    g = full_g(cfg.build_potential(), cfg.sphere(), cfg.structure_grids(), cfg.epsilon_value(), s.method, s.born_order)
    summary, written = _write_structure(g, out, "full_g")
    f = _probe(cfg)
    w = f if g.is_empty else f + apply_g(g, f)
    path = out / "w_plus.wopf"
    write_field(path, w)
    summary["w_plus_ratio"] = w.l2_norm() / f.l2_norm()
    summary["method"] = s.method
    return summary, [*written, path], True


def cmd_cook(cfg: ExperimentConfig, out: Path, args: argparse.Namespace) -> Result:
    f = _probe(cfg)
    evolution = cfg.evolution()
    w = cook_wave_operator(f, cfg.build_potential(), evolution)
    path = out / "cook.wopf"
    write_field(path, w)
    summary = {
        "ratio": w.l2_norm() / f.l2_norm(),
        "dt": evolution.dt,
        "t_max": evolution.t_max,
        "eps_reg": evolution.eps_reg,
    }
    return summary, [path], True


def cmd_spectral_scan(cfg: ExperimentConfig, out: Path, args: argparse.Namespace) -> Result:
    pot = cfg.build_potential()
    grid = cfg.structure_grids().kernel
    scan = m0_scan(pot, cfg.scan.lambdas, cfg.scan.epsilons, grid)
    table = out / "m0_scan.csv"
    write_csv(table, ("lambda", "epsilon", "sign", "norm"), scan.table())
    zero = zero_energy_check(pot, grid)
    energies = bound_state_energies(pot, grid)
    summary = {
        "M0": scan.M0,
        "argmax": scan.argmax,
        "boundary_maximum": scan.boundary_maximum,
        "offending": scan.offending,
        "zero_energy_regular": zero.regular,
        "zero_energy_inverse_norm": zero.inverse_norm,
        "bound_state_energies": energies,
    }
    passed = bool(np.isfinite(scan.M0)) and zero.regular
    return summary, [table], passed


def cmd_wiener_scalar(cfg: ExperimentConfig, out: Path, args: argparse.Namespace) -> Result:
    if args.demo:
        from .checks.algebra import admissible_inputs

        f = admissible_inputs(count=1, seed=cfg.seed)[0]
    else:
        field = read_field(args.input)
        f = ConvElement(3, field.grid.n_per_axis, field.grid.box_length, field.values)
    solution = wiener_solve(f, cfg.wiener.neumann_cap, cfg.wiener.neumann_tol)
    g = solution.inverse
    path = out / "inverse.bin"
    write_array(path, g.density)
    residual = check_inverse(f, g)
    p = solution.params
    summary = {
        "dimension": f.dimension,
        "n": f.n,
        "box": f.box,
        "residual": residual,
        "tolerance": cfg.tolerances.wiener,
        "R": p.R,
        "eps_loc": p.eps_loc,
        "n_neumann": p.n_neumann,
        "partition_centers": len(p.partition_centers),
    }
    passed = residual <= cfg.tolerances.wiener if args.check else True
    return summary, [path], passed


COMMANDS: dict[str, Callable[[ExperimentConfig, Path, argparse.Namespace], Result]] = {
    "l-table": cmd_l_table,
    "g1": cmd_g1,
    "born": cmd_born,
    "full-g": cmd_full_g,
    "cook": cmd_cook,
    "spectral-scan": cmd_spectral_scan,
    "wiener-scalar": cmd_wiener_scalar,
}


def run_quant(args: argparse.Namespace) -> int:
    """Print the quantitative parameters as JSON and write quant.json."""
    params = quant_params(args.norm_v, args.m0, args.gamma, DEFAULT_C if args.c is None else args.c)
    out = args.output or Path("waveop-out")
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "quant.json", params)
    output.print_json(to_json(params))
    return EXIT_SUCCESS


def run(args: argparse.Namespace) -> int:
    """Core runner: load the configuration and dispatch the subcommand."""
    output.start_timing()

    if args.command == "quant":
        return run_quant(args)

    config_path = args.config
    output.print_running(args.command, config_path.name if config_path else None)
    cfg = load_config(config_path)
    out = args.output or cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)

    if args.command == "verify":
        from .checks.check_manager import check_manager

        families = None if args.family == "all" else [args.family]
        report = check_manager(cfg, families, out)
        return EXIT_SUCCESS if report.passed else EXIT_CHECK_FAILURE

    with output.show_progress(f"Running {args.command}") as progress:
        progress.add_task(f"Running {args.command}", total=None)
        summary, written, passed = COMMANDS[args.command](cfg, out, args)

    summary_path = out / "summary.json"
    write_json(summary_path, {"command": args.command, "passed": passed, **summary})
    written.append(summary_path)
    if passed:
        output.print_summary_success(command=args.command, output_dir=str(out), files_written=len(written))
        return EXIT_SUCCESS
    output.print_summary_failure(command=args.command, output_dir=str(out), files_written=len(written))
    return EXIT_CHECK_FAILURE


def main(argv: list[str] | None = None) -> int:
    """Entry point for the waveop command."""
    args = parse_arguments(argv)
    _configure_logging(args.verbose)
    try:
        return run(args)
    except ConfigInvalid as e:
        output.print_error(f"{e.code}: {e}")
        return EXIT_USAGE_ERROR
    except FileNotFoundError:
        output.print_error("Configuration file not found", str(getattr(args, "config", None)))
        return EXIT_USAGE_ERROR
    except PermissionError:
        output.print_error("Configuration file is not readable", str(getattr(args, "config", None)))
        return EXIT_USAGE_ERROR
    except yaml.YAMLError as e:
        output.print_error(f"Invalid configuration file: {e}", str(getattr(args, "config", None)))
        return EXIT_USAGE_ERROR
    except WaveOpError as e:
        output.print_error(f"{e.code}: {e}")
        return EXIT_CHECK_FAILURE
    except KeyboardInterrupt:
        output.print_error("Operation interrupted by user")
        return EXIT_KEYBOARD_INTERRUPT


if __name__ == "__main__":
    sys.exit(main())
