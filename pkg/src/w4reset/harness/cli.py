"""Command-line entry point: ``w4reset <subcommand> ...``.

Exit codes: 0 on success, 2 for an invalid configuration, 3 when a numerical
routine (CPTP projection, noise calibration) fails to converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema

from ..tomography import ConvergenceError
from .config import SCHEMA, ConfigError, ExperimentConfig, parse_override, _merge
from .plots import emit_plot_data
from .runner import CalibrationError, calibrate_noise, load_rows, run_case

OUTPUT_ENV = "W4RESET_OUTPUT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("w4reset")


def _overrides(items: list[str] | None) -> dict:
    out: dict = {}
    for text in items or []:
        out = _merge(out, parse_override(text))
    return out


def _build(doc: dict, args) -> ExperimentConfig:
    doc = dict(doc)
    if args.output:
        doc["output_dir"] = args.output
    elif "output_dir" not in doc and os.environ.get(OUTPUT_ENV):
        doc["output_dir"] = os.environ[OUTPUT_ENV]
    if args.seed is not None:
        doc["master_seed"] = args.seed
    if args.workers is not None:
        doc["workers"] = args.workers
    return ExperimentConfig.from_dict(doc, _overrides(args.set))


def _read_doc(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _report(cfg: ExperimentConfig, rows) -> None:
    out = cfg.output_dir
    print(f"{cfg.case_id}: {len(rows)} rows -> {out / 'results.csv'}")
    summary = json.loads((out / "summary.json").read_text())
    for key in ("mean_p_success", "mean_trace_distance", "process_fidelity"):
        if summary.get(key) is not None:
            print(f"  {key} = {summary[key]}")
    if "bootstrap" in summary:
        b = summary["bootstrap"]
        print(f"  bootstrap process fidelity = {b['mean_process_fidelity']} +/- {b['error_bar']}")


def cmd_run(args) -> int:
    cfg = _build(_read_doc(args.config), args)
    rows = run_case(cfg, resume=args.resume, stop_after=args.stop_after)
    _report(cfg, rows)
    return EXIT_OK


def cmd_sweep(args) -> int:
    doc: dict = {"case_id": args.case}
    if args.phi:
        doc["sweep"] = {"phi_over_pi": args.phi}
    cfg = _build(doc, args)
    if cfg.mode != "sweep":
        raise ConfigError(f"{args.case} has no phase sweep")
    _report(cfg, run_case(cfg))
    return EXIT_OK


def cmd_random(args) -> int:
    doc: dict = {"case_id": "case3_random", "n_random": args.n}
    if args.initial:
        doc["protocol"] = {"initial_target": args.initial}
    cfg = _build(doc, args)
    _report(cfg, run_case(cfg, resume=args.resume, stop_after=args.stop_after))
    return EXIT_OK


def cmd_qpt(args) -> int:
    cfg = _build({"case_id": "case2_qpt"}, args)
    _report(cfg, run_case(cfg, bootstrap=False))
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    tomo = {"n_bootstrap": args.n_sets, "shots": args.shots, "order": args.order}
    cfg = _build({"case_id": "case2_qpt", "tomography": tomo}, args)
    _report(cfg, run_case(cfg, bootstrap=True))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    model, achieved = calibrate_noise(args.target, args.value)
    print(json.dumps({"target": args.target, "value": args.value, "achieved": achieved,
                      "t_phi_us": model.t_phi[0], "t1_us": model.t1[0]}, indent=2))
    return EXIT_OK


def cmd_emit_plots(args) -> int:
    """Rebuild plot tables and figures from an existing output directory."""
    out = Path(args.directory)
    summary_path = out / "summary.json"
    if not summary_path.exists():
        raise ConfigError(f"{summary_path} not found")
    summary = json.loads(summary_path.read_text())
    plot_dir = out / "plotdata"
    written = []
    if summary.get("mode") == "random":
        rows = load_rows(out / "results.csv")
        written += emit_plot_data(rows, "cumulative_average", plot_dir, figure=not args.no_figures)
        written += emit_plot_data(rows, "bar_per_unitary", plot_dir, figure=not args.no_figures)
    for i, run in enumerate(summary.get("runs", [])):
        written += emit_plot_data(run["bloch"], "bloch_trajectory", plot_dir, name=f"bloch_{i}",
                                  figure=not args.no_figures)
    if "chi" in summary:
        chi = [[complex(*c) for c in row] for row in summary["chi"]]
        written += emit_plot_data(chi, "density_matrix_city", plot_dir, name="chi", figure=not args.no_figures)
    for p in written:
        print(p)
    return EXIT_OK


def cmd_schema(args) -> int:
    print(json.dumps(SCHEMA, indent=2))
    return EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", "-o", help=f"output directory (default: ${OUTPUT_ENV} or the config value)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workers", type=int, help="worker processes for campaigns and bootstrap")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field, e.g. noise.t_phi=5 (value parsed as JSON)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="w4reset", description="Simulate the W4 quantum resetting protocol.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a JSON config")
    p.add_argument("config")
    p.add_argument("--resume", action="store_true", help="continue a partially written results.csv")
    p.add_argument("--stop-after", type=int, help="stop a random campaign after this many new runs")
    _common(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="deterministic reset over a phase grid")
    p.add_argument("--case", choices=["case1a", "case1b", "case1c"], default="case1a")
    p.add_argument("--phi", type=float, nargs="+", help="phases in units of pi")
    _common(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("random", help="random-interaction campaign")
    p.add_argument("-n", type=int, default=100, help="number of random unitaries")
    p.add_argument("--initial", choices=["0", "1", "+", "-", "i", "-i"])
    p.add_argument("--resume", action="store_true")
    p.add_argument("--stop-after", type=int)
    _common(p)
    p.set_defaults(fn=cmd_random)

    p = sub.add_parser("qpt", help="process tomography of the reset channel (exact expectations)")
    _common(p)
    p.set_defaults(fn=cmd_qpt)

    p = sub.add_parser("bootstrap", help="process tomography with shot-noise bootstrap error bars")
    p.add_argument("--n-sets", type=int, default=200)
    p.add_argument("--shots", type=int, default=10000)
    p.add_argument("--order", choices=["cp_first", "subspace_first"], default="cp_first")
    _common(p)
    p.set_defaults(fn=cmd_bootstrap)

    p = sub.add_parser("calibrate", help="solve for T_phi matching an observable")
    p.add_argument("--target", choices=["five_qubit_fidelity", "initial_mixed_D"], default="five_qubit_fidelity")
    p.add_argument("--value", type=float, default=0.386)
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("emit-plots", help="regenerate plot tables and figures for an output directory")
    p.add_argument("directory")
    p.add_argument("--no-figures", action="store_true", help="write CSV tables only")
    p.set_defaults(fn=cmd_emit_plots)

    p = sub.add_parser("schema", help="print the config JSON schema")
    p.set_defaults(fn=cmd_schema)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, jsonschema.ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
