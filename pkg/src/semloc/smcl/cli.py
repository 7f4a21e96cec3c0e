"""Semantic Monte Carlo localization: generate sequences, run the filter, evaluate and render."""
import argparse
import logging
import os
import sys
from typing import Dict
from typing import List
from typing import Optional
from typing import Tuple

import yaml

from .argparse import add_config_argument
from .argparse import add_standard_arguments
from .argparse import add_world_arguments
from .config import load_config
from .config import load_manifest
from .config import RunManifest
from .config import Settings
from .config import with_seed
from .errors import ConfigError
from .errors import SmclError
from .errors import TrajectoryError
from .evaluation import aggregate
from .evaluation import evaluate_run
from .evaluation import RunResult
from .evaluation import write_report
from .evaluation import write_results_csv
from .localizer import Mode
from .localizer import replay
from .localizer import SemanticMCL
from .particle_filter import estimate_pose
from .render import render_snapshot
from .render import render_trajectory
from .semantic_map import compute_edt
from .semantic_map import load_map
from .semantic_map import save_map
from .semantic_map import SemanticGridMap
from .sequence import checkpoints
from .sequence import load_snapshot
from .sequence import read_estimates
from .sequence import read_sequence
from .sequence import save_snapshot
from .sequence import write_estimates
from .sequence import write_sequence
from .simulator import generate_sequence
from .worlds import load_world
from .worlds import Routes


BENCHMARK_SEEDS = list(range(1, 11))
BENCHMARK_ROUTE = "room_a_loop"

_logger = logging.getLogger(__name__)


def _stem(path) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _load_map(
    world: Optional[str], map_image: Optional[str], annotations: Optional[str]
) -> Tuple[SemanticGridMap, Routes]:
    if world:
        return load_world(world)
    if map_image:
        if not annotations:
            raise ConfigError("--map needs --annotations")
        return load_map(map_image, annotations), {}
    raise ConfigError("name a map with --world or --map")


def _waypoints(args, routes: Routes) -> List[Tuple[float, float]]:
    if args.waypoints:
        with open(args.waypoints) as _file:
            waypoints = yaml.load(_file, Loader=yaml.FullLoader) or []
        if isinstance(waypoints, dict):
            waypoints = waypoints.get("waypoints") or []
    elif args.route:
        if args.route not in routes:
            raise TrajectoryError(f"unknown route {args.route!r}; available: {', '.join(routes) or 'none'}")
        waypoints = routes[args.route]
    else:
        raise TrajectoryError("give a waypoint file with --waypoints or a bundled route with --route")
    if not waypoints:
        raise TrajectoryError(
            "the waypoint file holds no waypoints; it should be a YAML list of [x, y] pairs in meters"
        )
    return [(float(x), float(y)) for x, y in waypoints]


def _output_for_seed(output: str, seed: int, several: bool) -> str:
    if not several:
        return output
    root, ext = os.path.splitext(output)
    return f"{root}_s{seed:02d}{ext or '.jsonl'}"


def cmd_generate(args):
    """Simulate one sequence per seed."""
    semantic_map, routes = _load_map(args.world, args.map_image, args.annotations)
    waypoints = _waypoints(args, routes)
    settings = load_config(args.config)
    for seed in args.seeds:
        seeded = with_seed(settings, seed)
        events = generate_sequence(semantic_map, waypoints, seeded.simulation, seeded.camera)
        path = _output_for_seed(args.output, seed, len(args.seeds) > 1)
        write_sequence(path, events, semantic_map.class_table)


def run_sequences(
    semantic_map: SemanticGridMap,
    sequences: List[str],
    settings: Settings,
    mode: Mode,
    output: str,
    snapshot_times: Tuple[float, ...] = (),
) -> List[RunResult]:
    """Localize on every sequence, write the estimates and snapshots, and evaluate each run."""
    os.makedirs(output, exist_ok=True)
    edt = compute_edt(semantic_map, settings.sensor_model.r_max)
    results = []
    for path in sequences:
        events = read_sequence(path, semantic_map.class_table)
        localizer = SemanticMCL(semantic_map, settings.filter, settings.sensor_model, settings.camera, mode, edt)
        estimates, snapshots = replay(localizer, events, snapshot_times)
        name = f"{_stem(path)}_{mode.value}"
        write_estimates(os.path.join(output, f"{name}.csv"), estimates)
        for t, particles in snapshots:
            save_snapshot(os.path.join(output, f"{name}_t{t:07.2f}.npz"), t, particles)

        truth = checkpoints(events)
        if truth:
            result = evaluate_run(estimates, truth, sequence=_stem(path))
            results.append(result)
            _logger.info(
                "%s (%s): %s, convergence %s s, ATE %s m",
                _stem(path),
                mode.value,
                "converged" if result.success else "did not converge",
                "-" if result.convergence_time is None else f"{result.convergence_time:.1f}",
                "-" if result.ate_after_convergence is None else f"{result.ate_after_convergence:.2f}",
            )
        for kind, timing in localizer.timing_summary().items():
            _logger.info(
                "%s updates: %d, mean %.2f ms, max %.2f ms", kind, timing["count"], timing["mean_ms"], timing["max_ms"]
            )
    return results


def _manifest(args) -> RunManifest:
    base = load_manifest(args.manifest) if args.manifest else None

    def pick(flag, attribute, default=None):
        if flag is not None:
            return flag
        return getattr(base, attribute) if base is not None else default

    world, map_image = args.world, args.map_image
    if base is not None and world is None and map_image is None:
        world, map_image = base.world, base.map_image
    return RunManifest(
        sequences=pick(args.sequences, "sequences", []),
        output=pick(args.output, "output", "."),
        world=world,
        map_image=map_image,
        annotations=pick(args.annotations, "annotations"),
        mode=pick(args.mode, "mode", Mode.FUSION),
        config=pick(args.config, "config"),
    )


def cmd_run(args):
    """Localize on the sequences of a manifest."""
    manifest = _manifest(args)
    semantic_map, _ = _load_map(manifest.world, manifest.map_image, manifest.annotations)
    settings = load_config(manifest.config)
    if args.seed is not None:
        settings = with_seed(settings, args.seed)
    results = run_sequences(
        semantic_map, manifest.sequences, settings, manifest.mode, manifest.output, tuple(args.snapshot_at or ())
    )
    if results:
        write_results_csv(os.path.join(manifest.output, f"results_{manifest.mode.value}.csv"), results)
        summary = aggregate(results)
        _logger.info(
            "%d/%d runs converged, mean ATE %s m",
            summary.successes,
            summary.runs,
            "-" if summary.mean_ate is None else f"{summary.mean_ate:.2f}",
        )


def cmd_eval(args):
    """Evaluate estimate files against the checkpoints of their sequences."""
    if len(args.estimates) != len(args.sequences):
        raise ConfigError("give one sequence per estimate file")
    results = []
    for estimates_path, sequence_path in zip(args.estimates, args.sequences):
        truth = checkpoints(read_sequence(sequence_path))
        results.append(
            evaluate_run(
                read_estimates(estimates_path),
                truth,
                threshold=args.threshold,
                strict=not args.lenient,
                sequence=_stem(sequence_path),
            )
        )
    write_results_csv(args.output, results)
    summary = aggregate(results)
    _logger.info(
        "Success rate %.0f%%, mean ATE %s m, mean convergence %s s",
        100.0 * summary.success_rate,
        "-" if summary.mean_ate is None else f"{summary.mean_ate:.2f}",
        "-" if summary.mean_convergence_time is None else f"{summary.mean_convergence_time:.1f}",
    )


def cmd_render(args):
    """Render a particle snapshot or an estimated trajectory."""
    semantic_map, _ = _load_map(args.world, args.map_image, args.annotations)
    if args.snapshot:
        t, particles = load_snapshot(args.snapshot)
        truth = None
        if args.sequence:
            stamped = checkpoints(read_sequence(args.sequence))
            if stamped:
                truth = min(stamped, key=lambda item: abs(item[0] - t))[1]
        estimate = None
        if len(particles) and particles.weights.sum() > 0:
            estimate = estimate_pose(particles)
        render_snapshot(semantic_map, particles.poses, particles.weights, args.output, estimate, truth)
    elif args.estimates:
        truth = checkpoints(read_sequence(args.sequence)) if args.sequence else []
        render_trajectory(semantic_map, read_estimates(args.estimates), truth, args.output)
    else:
        render_snapshot(semantic_map, [], [], args.output)


def cmd_export_world(args):
    """Write a bundled world as a map image and annotation sidecar."""
    semantic_map, _ = load_world(args.name)
    os.makedirs(args.outdir, exist_ok=True)
    save_map(
        semantic_map,
        os.path.join(args.outdir, f"{args.name}.png"),
        os.path.join(args.outdir, f"{args.name}.json"),
    )


def cmd_benchmark(args):
    """Generate sequences for several seeds, localize in both modes, and report."""
    semantic_map, routes = _load_map(args.world, args.map_image, args.annotations)
    waypoints = _waypoints(args, routes)
    settings = load_config(args.config)
    sequence_dir = os.path.join(args.output, "sequences")
    os.makedirs(sequence_dir, exist_ok=True)

    sequences = []
    for seed in args.seeds:
        seeded = with_seed(settings, seed)
        path = os.path.join(sequence_dir, f"S{seed}.jsonl")
        events = generate_sequence(semantic_map, waypoints, seeded.simulation, seeded.camera)
        write_sequence(path, events, semantic_map.class_table)
        sequences.append(path)

    results: Dict[str, List[RunResult]] = {}
    for mode in (Mode.FUSION, Mode.RANGE_ONLY):
        results[mode.value] = run_sequences(
            semantic_map, sequences, settings, mode, os.path.join(args.output, mode.value)
        )
        write_results_csv(os.path.join(args.output, f"results_{mode.value}.csv"), results[mode.value])
    write_report(os.path.join(args.output, "report"), results)
    for method, method_results in results.items():
        summary = aggregate(method_results)
        _logger.info("%s: %d/%d converged", method, summary.successes, summary.runs)


def _route_arguments(parser: argparse.ArgumentParser):
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--route", help="name of a route of the bundled world, e.g. room_a_loop")
    group.add_argument("--waypoints", help="YAML file listing [x, y] waypoints in meters")


def main():
    """Main entrypoint."""
    parser = argparse.ArgumentParser(formatter_class=argparse.RawDescriptionHelpFormatter, description=__doc__)
    add_standard_arguments(parser)
    subparsers = parser.add_subparsers(dest="command", required=True)

    generate = subparsers.add_parser("generate", help="simulate sequences along a route")
    add_world_arguments(generate)
    add_config_argument(generate)
    _route_arguments(generate)
    generate.add_argument("--seeds", type=int, nargs="+", default=[0], help="one sequence per seed")
    generate.add_argument("-o", "--output", required=True, help="sequence file; with several seeds a name template")
    generate.set_defaults(func=cmd_generate)

    run = subparsers.add_parser("run", help="localize on sequences")
    run.add_argument("manifest", nargs="?", help="YAML run manifest; options below override it")
    add_world_arguments(run)
    add_config_argument(run)
    run.add_argument("--sequences", nargs="+", help="sequence files")
    run.add_argument("--mode", choices=[m.value for m in Mode], help="fusion (default) or range_only")
    run.add_argument("-o", "--output", help="output directory")
    run.add_argument("--seed", type=int, help="filter seed, overriding the configuration")
    run.add_argument("--snapshot-at", type=float, nargs="+", help="save particle snapshots at these times (s)")
    run.set_defaults(func=cmd_run)

    evaluate = subparsers.add_parser("eval", help="evaluate estimate files against sequence checkpoints")
    evaluate.add_argument("--estimates", nargs="+", required=True, help="estimate CSV files")
    evaluate.add_argument("--sequences", nargs="+", required=True, help="the matching sequence files")
    evaluate.add_argument("--threshold", type=float, default=0.5, help="convergence threshold in meters")
    evaluate.add_argument("--lenient", action="store_true", help="converge at the first checkpoint under threshold")
    evaluate.add_argument("-o", "--output", default="results.csv", help="results CSV")
    evaluate.set_defaults(func=cmd_eval)

    render = subparsers.add_parser("render", help="render a snapshot or a trajectory as PNG")
    add_world_arguments(render)
    render.add_argument("--snapshot", help="particle snapshot (.npz)")
    render.add_argument("--estimates", help="estimate CSV")
    render.add_argument("--sequence", help="sequence file supplying ground-truth checkpoints")
    render.add_argument("-o", "--output", required=True, help="PNG file")
    render.set_defaults(func=cmd_render)

    export = subparsers.add_parser("export-world", help="write a bundled world as image + annotation sidecar")
    export.add_argument("name", help="bundled world name")
    export.add_argument("outdir", help="output directory")
    export.set_defaults(func=cmd_export_world)

    benchmark = subparsers.add_parser("benchmark", help="compare fusion and range-only localization over seeds")
    add_world_arguments(benchmark)
    add_config_argument(benchmark)
    _route_arguments(benchmark)
    benchmark.add_argument("--seeds", type=int, nargs="+", default=BENCHMARK_SEEDS, help="sequence seeds")
    benchmark.add_argument("-o", "--output", default="benchmark", help="output directory")
    benchmark.set_defaults(func=cmd_benchmark)

    args = parser.parse_args()
    logging.basicConfig(level=args.loglevel, format="%(levelname)s %(message)s")

    if args.command == "benchmark" and not (args.world or args.map_image):
        args.world = "demo_office"
        args.route = args.route or (None if args.waypoints else BENCHMARK_ROUTE)

    try:
        args.func(args)
    except SmclError as error:
        _logger.error(str(error))
        sys.exit(1)


if __name__ == "__main__":
    main()
