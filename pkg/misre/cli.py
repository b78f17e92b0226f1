"""
Command-line front end.

  python -m misre fit --model line2d --input points.csv --output result.json
  python -m misre synth --scenario five-lines --seed 7 --output lines.csv
  python -m misre bench --scenario five-lines --repeats 100 --trials 1000

Exit codes: 0 success, 2 usage or invalid input, 1 any other failure.
"""
import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

from misre import __version__
from misre.bench import run_bench
from misre.core.config import settings
from misre.core.errors import InvalidInputError, MisreError
from misre.core.sentry import init_sentry
from misre.data import io as data_io
from misre.data.svg import render_svg
from misre.data.synth import PRESETS, generate, preset
from misre.estimation import EstimationConfig, run
from misre.estimation.mean_shift import INLIER_RULES
from misre.geometry import MODEL_IDS, get_model
from misre.schemas.bench import BenchReport
from misre.schemas.results import StructureReport
from misre.schemas.scenario import ScenarioSpec

logger = logging.getLogger("misre.cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, settings.log_level.upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")


def _fmt(value: Optional[float], spec: str = ".4g") -> str:
    return "-" if value is None else format(value, spec)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


# ===== table printers =====


def print_structures(structures: Sequence[StructureReport], top_k: Optional[int] = None) -> None:
    rows = list(structures)[:top_k] if top_k else list(structures)
    hdr = f"{'rank':>4} | {'scale':>10} | {'sigma_hat':>10} | {'inliers':>7} | {'strength':>10} | flags"
    print(hdr)
    print("-" * len(hdr))
    for s in rows:
        print(
            f"{s.rank:>4} | {_fmt(s.scale):>10} | {_fmt(s.scale_estimate):>10} | {s.n_in:>7} | "
            f"{_fmt(s.strength):>10} | {','.join(s.flags)}"
        )
    if top_k and len(structures) > top_k:
        print(f"({len(structures) - top_k} weaker structures not shown)")


def print_bench(report: BenchReport) -> None:
    print(f"\n## {report.scenario} ({report.method}, R={report.repeats}, M={report.trials}, eps={report.epsilon:g})")
    hdr = (
        f"{'#':>2} | {'kind':9} | {'sigma_g':>7} | {'n_in':>5} | {'success':>7} | "
        f"{'scale':>8} | {'std':>7} | {'sigma_hat':>9} | {'inliers':>8} | {'std':>6}"
    )
    print(hdr)
    print("-" * len(hdr))
    for p in report.planted:
        print(
            f"{p.planted_index + 1:>2} | {p.kind:9} | {p.sigma_g:>7g} | {p.n_in:>5} | "
            f"{p.successes:>3}/{report.repeats:<3} | {_fmt(p.mean_scale, '.2f'):>8} | "
            f"{_fmt(p.std_scale, '.2f'):>7} | {_fmt(p.mean_scale_estimate, '.2f'):>9} | "
            f"{_fmt(p.mean_inliers, '.1f'):>8} | {_fmt(p.std_inliers, '.1f'):>6}"
        )
    print(f"all recovered: {report.all_recovered}/{report.repeats}; mean wall {report.mean_duration_ms:.0f} ms/run")


# ===== scenario resolution =====


def resolve_scenario(name: str, seed: Optional[int], sigma: Optional[float] = None) -> ScenarioSpec:
    """Preset name or YAML/JSON scenario file; --seed overrides the file's seed."""
    if name in PRESETS:
        return preset(name, seed or 0, sigma)
    path = Path(name)
    if not path.is_file():
        raise InvalidInputError(f"unknown scenario {name!r}; expected a file or one of {', '.join(PRESETS)}")
    spec = data_io.load_scenario(path)
    if seed is not None:
        spec = spec.model_copy(update={"seed": seed})
    return spec


# ===== commands =====


def cmd_fit(args: argparse.Namespace) -> int:
    model = get_model(args.model)
    points = data_io.read_points(args.input, model.spec.l)
    covariance = None
    if args.covariance:
        covariance = data_io.read_covariances(args.covariance, model.spec.l, points.shape[0])
    config = EstimationConfig(
        model_id=args.model,
        trials=args.trials,
        epsilon=args.epsilon,
        seed=args.seed,
        covariance=covariance,
        inlier_rule=args.inlier_rule,
        workers=args.workers,
    )
    result = run(points, config)
    doc = result.to_document()
    print(f"\n=== {args.model} on {Path(args.input).name}: {len(doc.structures)} structures, "
          f"{len(doc.residual_indices)} residual points ({doc.total_duration_ms:.0f} ms) ===")
    print_structures(doc.structures, args.top_k)
    if args.output:
        data_io.write_result(doc, args.output)
        print(f"saved -> {args.output}")
    if args.svg:
        render_svg(points, doc.structures, args.svg, top_k=args.top_k)
        print(f"saved -> {args.svg}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = resolve_scenario(args.scenario, args.seed, args.sigma)
    dataset = generate(spec)
    out = Path(args.output)
    labels_path = out.with_name(f"{out.stem}.labels.csv")
    scenario_path = out.with_name(f"{out.stem}.scenario.yaml")
    data_io.write_points(out, dataset.points)
    data_io.write_labels(labels_path, dataset.labels)
    data_io.write_scenario(spec, scenario_path)
    pops = ", ".join(f"{k}:{v}" for k, v in sorted(dataset.populations().items()))
    print(f"{spec.name}: {len(dataset)} points (seed {spec.seed}; labels {pops})")
    for path in (out, labels_path, scenario_path):
        print(f"saved -> {path}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    spec = resolve_scenario(args.scenario, args.seed)
    if args.baseline == "ransac" and args.ransac_threshold is None:
        raise InvalidInputError("--baseline ransac needs --ransac-threshold")
    EstimationConfig(model_id=spec.model_id, trials=args.trials, epsilon=args.epsilon).validate()
    t0 = time.perf_counter()
    report = run_bench(
        spec,
        repeats=args.repeats,
        trials=args.trials,
        epsilon=args.epsilon,
        seed=args.seed or 0,
        workers=args.workers,
        baseline=args.baseline,
        threshold=args.ransac_threshold,
    )
    wall_s = round(time.perf_counter() - t0, 1)
    print_bench(report)
    print(f"wall {wall_s}s")
    if args.output:
        Path(args.output).write_text(report.model_dump_json(indent=2), encoding="utf-8")
        print(f"saved -> {args.output}")
    else:
        print(json.dumps(report.model_dump(mode="json", exclude={"runs"}), indent=2))
    return EXIT_OK


# ===== parser =====


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="misre", description="Multiple-structure robust estimation.")
    ap.add_argument("--version", action="version", version=f"misre {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="debug logging")
    common.add_argument("--workers", type=_positive_int, default=None, help="default: MISRE_WORKERS")
    sub = ap.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", parents=[common], help="segment a point file into structures")
    fit.add_argument("--model", required=True, choices=MODEL_IDS)
    fit.add_argument("--input", required=True)
    fit.add_argument("--trials", type=_positive_int, default=settings.default_trials)
    fit.add_argument("--epsilon", type=float, default=settings.default_epsilon)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--output", default="")
    fit.add_argument("--svg", default="")
    fit.add_argument("--top-k", type=_positive_int, default=None, help="display filter only")
    fit.add_argument("--covariance", default="", help="CSV of row-major l*l covariance bases")
    fit.add_argument("--inlier-rule", default="trajectory", choices=INLIER_RULES)
    fit.set_defaults(handler=cmd_fit)

    synth = sub.add_parser("synth", parents=[common], help="generate a labelled scenario")
    synth.add_argument("--scenario", required=True, help=f"preset ({', '.join(PRESETS)}) or YAML/JSON file")
    synth.add_argument("--seed", type=int, default=None)
    synth.add_argument("--sigma", type=float, default=None, help="noise override for presets that take one")
    synth.add_argument("--output", required=True)
    synth.set_defaults(handler=cmd_synth)

    bench = sub.add_parser("bench", parents=[common], help="repeated generate-and-fit statistics")
    bench.add_argument("--scenario", required=True)
    bench.add_argument("--repeats", type=_positive_int, default=100)
    bench.add_argument("--trials", type=_positive_int, default=settings.default_trials)
    bench.add_argument("--epsilon", type=float, default=settings.default_epsilon)
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--baseline", default=None, choices=["ransac"])
    bench.add_argument("--ransac-threshold", type=float, default=None)
    bench.add_argument("--output", default="")
    bench.set_defaults(handler=cmd_bench)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    _configure_logging(args.verbose)
    init_sentry(args.command)
    try:
        return args.handler(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MisreError as exc:
        logger.debug("[CLI] %s failed (%s)", args.command, exc.kind, exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        if exc.details:
            print(json.dumps(exc.details, default=str, indent=2), file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
