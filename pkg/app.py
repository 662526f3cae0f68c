"""
ConserveAI - Conservation-Based Uncertainty Monitoring
Command-line entry point
"""

import argparse
import json
import logging
import sys
from contextlib import ExitStack

from core.exceptions import ConserveAIError
from core.models import ConservationSpec, ReferencePolicy, StaticScan
from core.pipeline import PipelineRunner, analyze_window, window_stream
from core.propagation import PropagationMode, average_estimates, relative_discrepancy
from core.synth_oracle import (
    ConstantNoise,
    DriftingScan,
    SkeletonWalk,
    StaticScanScenario,
    VelocityCoupledNoise,
    generate,
)
from utils.config import Config, PipelineConfig, load_truth
from utils.frame_io import parse_frames, write_frames
from utils.report_writer import SINKS, ReportWriter

logger = logging.getLogger("conserveai")

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2


# --- ARGUMENTS ---

def _add_pipeline_flags(parser):
    parser.add_argument("--config", help="KEY=value configuration file")
    parser.add_argument("--input", default="-", help="frame file ('-' for stdin)")
    parser.add_argument("--format", default="jsonl", choices=("jsonl", "csv"))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--window-size", type=int)
    parser.add_argument("--confidence", type=float)
    parser.add_argument("--propagation", choices=[m.value for m in PropagationMode])
    parser.add_argument("--workers", type=int)
    parser.add_argument("--operating-range", type=float)


def build_parser():
    """
    Build the argument parser

    Returns:
        argparse.ArgumentParser
    """
    parser = argparse.ArgumentParser(prog="conserveai", description="Conservation-based uncertainty monitoring")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbs = parser.add_subparsers(dest="verb", required=True)

    run = verbs.add_parser("run", help="run the full pipeline over a frame stream")
    _add_pipeline_flags(run)
    run.add_argument("--mode", choices=Config.ESTIMATION_MODES)
    run.add_argument("--sink", default="jsonl", choices=SINKS)
    run.add_argument("--output", default="-", help="report file ('-' for stdout)")

    scanner = verbs.add_parser("validate-scanner", help="conservation vs baseline on a static scan")
    _add_pipeline_flags(scanner)
    scanner.add_argument("--reference", help="uniform range in m or file:<truth.json>")
    scanner.add_argument("--datasheet-u", type=float, help="manufacturer uncertainty in m")
    scanner.add_argument("--datasheet-range", type=float, help="range the data-sheet value applies to")

    synth = verbs.add_parser("synth", help="generate a synthetic stream with ground truth")
    synth.add_argument("--scenario", default="static_scan", choices=("static_scan", "drifting_scan", "skeleton_walk"))
    synth.add_argument("--frames", type=int, default=100)
    synth.add_argument("--sigma", type=float, default=0.002)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--range", type=float, default=4.0, help="scan range profile in m")
    synth.add_argument("--drift", type=float, default=1e-5, help="drift in m per frame")
    synth.add_argument("--noise", default="gaussian", choices=("gaussian", "uniform"))
    synth.add_argument("--dropout", type=float, default=0.0)
    synth.add_argument("--gain", type=float, default=0.0, help="velocity coupling of skeleton noise")
    synth.add_argument("--speed", type=float, default=1.0, help="walking speed in m/s after 1 s at rest")
    synth.add_argument("--frame-rate", type=float)
    synth.add_argument("--output", required=True, help="frame file (JSONL)")
    synth.add_argument("--truth", required=True, help="ground-truth sidecar (JSON)")

    check = verbs.add_parser("check-config", help="validate a configuration file")
    check.add_argument("--config", required=True)

    return parser


def _overrides(args):
    flags = {
        "SEED": getattr(args, "seed", None),
        "WINDOW_SIZE": getattr(args, "window_size", None),
        "CONFIDENCE": getattr(args, "confidence", None),
        "PROPAGATION_MODE": getattr(args, "propagation", None),
        "WORKERS": getattr(args, "workers", None),
        "OPERATING_RANGE": getattr(args, "operating_range", None),
        "ESTIMATION_MODE": getattr(args, "mode", None),
    }
    return {key: value for key, value in flags.items() if value is not None}


def load_config(args):
    """Configuration from file, defaults and command-line flags"""
    return PipelineConfig.from_file(args.config, _overrides(args))


def _require_valid(config):
    is_valid, errors = config.validate_config()
    if not is_valid:
        for error in errors:
            logger.error(f"❌ {error}")
        raise ConserveAIError("invalid configuration")


def _open_input(stack, path):
    if path == "-":
        return sys.stdin.buffer
    return stack.enter_context(open(path, "rb"))


def _open_output(stack, path):
    if path == "-":
        return sys.stdout.buffer
    return stack.enter_context(open(path, "wb"))


# --- VERBS ---

def cmd_run(args):
    """Run the pipeline and write reports; exit code reflects the verdicts"""
    config = load_config(args)
    _require_valid(config)
    config.print_config()

    runner = PipelineRunner(config)
    with ExitStack() as stack:
        frames = parse_frames(
            _open_input(stack, args.input), args.format, max_range=config.max_range, scan_fov=config.scan_fov
        )
        writer = ReportWriter(_open_output(stack, args.output), args.sink, config.histogram_bins)
        for report in runner.run(frames):
            writer.write(report)
        writer.write_summary(runner.summary)

    return EXIT_PASS if runner.summary.passed else EXIT_FAIL


def _scanner_config(args):
    config = load_config(args)
    if any(isinstance(spec.kind, StaticScan) for spec in config.specs):
        scan_specs = tuple(spec for spec in config.specs if isinstance(spec.kind, StaticScan))
    else:
        reference = args.reference or ""
        if reference.startswith("file:"):
            kind = StaticScan(reference=tuple(load_truth(reference[len("file:"):]).references["scan"]))
            policy = ReferencePolicy.GROUND_TRUTH
        elif reference:
            kind = StaticScan(uniform_reference=float(reference))
            policy = ReferencePolicy.GROUND_TRUTH
        else:
            kind = StaticScan()
            policy = ReferencePolicy.WINDOW_MEAN
        scan_specs = (ConservationSpec("scan", kind, policy),)
    return config.with_overrides(specs=scan_specs, covariates=(), estimation_mode="conservation")


def cmd_validate_scanner(args):
    """Compare conservation-based and raw-spread uncertainty of a static scan"""
    conservation = _scanner_config(args)
    _require_valid(conservation)
    baseline = conservation.with_overrides(estimation_mode="baseline")

    results = {"conservation": [], "baseline": []}
    with ExitStack() as stack:
        frames = parse_frames(
            _open_input(stack, args.input), args.format,
            max_range=conservation.max_range, scan_fov=conservation.scan_fov,
        )
        for window in window_stream(frames, conservation.window_size):
            for name, config in (("conservation", conservation), ("baseline", baseline)):
                report = analyze_window(config, window)
                for message in report.errors:
                    logger.warning(f"⚠️ {name} window {window.window_id}: {message}")
                if report.pooled is not None:
                    results[name].append(report.pooled)

    if not results["conservation"] or not results["baseline"]:
        raise ConserveAIError("no complete window to evaluate")

    summary = {}
    for name, estimates in results.items():
        average = average_estimates(estimates)
        summary[name] = {"u": average.u, "relative": average.relative, "windows": len(estimates)}
        relative = "" if average.relative is None else f" ({average.relative * 100:.4g}%)"
        print(f"{name:>12}: u = {average.u:.6g} m{relative} over {len(estimates)} window(s)")

    conservation_u = summary["conservation"]["u"]
    if args.datasheet_u is not None:
        datasheet = args.datasheet_u
        measured = conservation_u
        if args.datasheet_range:
            datasheet = args.datasheet_u / args.datasheet_range
            if summary["conservation"]["relative"] is None:
                raise ConserveAIError("--datasheet-range needs an operating range to compare relative values")
            measured = summary["conservation"]["relative"]
        summary["datasheet_discrepancy"] = relative_discrepancy(measured, datasheet)
        print(f"   datasheet: discrepancy {summary['datasheet_discrepancy'] * 100:.3g}%")

    print(json.dumps(summary, sort_keys=True))
    better = conservation_u < summary["baseline"]["u"]
    logger.info(f"{'✅' if better else '⚠️'} conservation u {'<' if better else '>='} baseline u")
    return EXIT_PASS


def _scenario(args):
    if args.scenario == "skeleton_walk":
        noise = VelocityCoupledNoise(args.sigma, args.gain) if args.gain > 0 else ConstantNoise(args.sigma)
        rate = args.frame_rate or 30.0
        duration = args.frames / rate
        waypoints = ((0.0, (0.0, 0.0, 0.0)), (1.0, (0.0, 0.0, 0.0)))
        if duration > 1.0:
            waypoints += ((duration, (args.speed * (duration - 1.0), 0.0, 0.0)),)
        return SkeletonWalk(
            noise=noise, waypoints=waypoints, n_frames=args.frames, frame_rate=rate,
            noise_kind=args.noise, seed=args.seed,
        )
    common = dict(
        range_profile=args.range, noise_sigma=args.sigma, n_frames=args.frames,
        frame_rate=args.frame_rate or 10.0, noise=args.noise, dropout_rate=args.dropout, seed=args.seed,
    )
    if args.scenario == "drifting_scan":
        return DriftingScan(drift_per_frame=args.drift, **common)
    return StaticScanScenario(**common)


def cmd_synth(args):
    """Write a synthetic frame stream and its ground-truth sidecar"""
    frames, truth = generate(_scenario(args))
    with open(args.output, "w", encoding="utf-8") as f:
        count = write_frames(frames, f)
    with open(args.truth, "w", encoding="utf-8") as f:
        json.dump(truth.to_dict(), f, sort_keys=True)
    logger.info(f"✅ Wrote {count} frames to {args.output} and ground truth to {args.truth}")
    return EXIT_PASS


def cmd_check_config(args):
    """Validate a configuration file and print its summary"""
    config = PipelineConfig.from_file(args.config)
    is_valid, errors = config.validate_config()
    print(json.dumps(config.get_config_summary(), sort_keys=True, indent=2))
    for error in errors:
        print(f"❌ {error}")
    if is_valid:
        print("✅ Configuration valid")
        return EXIT_PASS
    return EXIT_ERROR


COMMANDS = {
    "run": cmd_run,
    "validate-scanner": cmd_validate_scanner,
    "synth": cmd_synth,
    "check-config": cmd_check_config,
}


def main(argv=None):
    """
    CLI entry point

    Returns:
        int: 0 all verdicts pass, 1 any verdict fails, 2 error
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.verb](args)
    except (ConserveAIError, OSError, ValueError) as e:
        logger.error(f"❌ {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
