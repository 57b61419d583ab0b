"""Command-line front end: ``geocuts {synth,build-graph,partition,evaluate,export-geojson}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import grid_partition, hilbert_partition
from .graph_builder import NORMALIZATIONS, USER_FILTERS, build_graph
from .io import (TRUTH_COLUMNS, FormatError, dump_json, partition_geojson, read_cells_csv,
                 read_graph_json, read_partition_csv, read_visits_csv, round_sig, sha256_file,
                 write_cells_csv, write_graph_json, write_partition_csv, write_visits_csv)
from .metrics import DEFAULT_THRESHOLDS, evaluate
from .partition import PartitionError, achieved_alpha, cut_size
from .partitioner import PartitionConfig, geocuts_partition
from .spatial import GridSpec
from .synthgen import SynthConfig, generate

log = logging.getLogger("geocuts")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
METHODS = ("geocuts", "grid", "hilbert")
WORLD = (-90.0, 90.0, -180.0, 180.0)


class UsageError(Exception):
    """Invalid flag values; maps to exit code 2."""


def _provenance(command: str, args: argparse.Namespace, inputs: dict[str, str]) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}
    digests = {name: sha256_file(path) for name, path in sorted(inputs.items())}
    return {"tool": "geocuts", "version": __version__, "command": command,
            "flags": flags, "inputs_sha256": digests}


def _positive(kind):
    def parse(text):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def _region(text: str) -> tuple[float, ...]:
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected lat_min,lat_max,lon_min,lon_max") from None
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected lat_min,lat_max,lon_min,lon_max")
    return parts


def _thresholds(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers") from None
    if not values or any(not 0 <= v <= 1 for v in values):
        raise argparse.ArgumentTypeError("thresholds must lie in [0, 1]")
    return values


def cmd_synth(args) -> int:
    try:
        config = SynthConfig(rng_seed=args.seed, n_users=args.users, n_metros=args.metros,
                             travel_prob=args.travel_prob, metro_sigma=args.metro_sigma,
                             local_sigma=args.local_sigma, metro_size_skew=args.size_skew)
        grid = config.grid(args.cell_width)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    data = generate(config)
    prov = _provenance("synth", args, {})
    write_visits_csv(args.out, data.visits, prov)
    if args.truth_out:
        cells, metro = data.ground_truth(grid)
        write_cells_csv(args.truth_out, cells, metro, TRUTH_COLUMNS, prov)
    log.info("wrote %d visits of %d users", len(data.visits), config.n_users)
    return EXIT_OK


def cmd_build_graph(args) -> int:
    try:
        grid = GridSpec(args.cell_width, *args.region)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    visits, problems = read_visits_csv(args.visits)
    for p in problems[:20]:
        log.warning("skipped malformed row %s", p)
    if len(problems) > 20:
        log.warning("... %d more malformed rows", len(problems) - 20)
    graph = build_graph(visits, grid, args.filter, args.max_edge_km, args.normalize,
                        args.max_cells_per_user)
    prov = _provenance("build-graph", args, {"visits": args.visits})
    prov["malformed_rows"] = len(problems)
    write_graph_json(args.out, graph, prov)
    log.info("graph: %d nodes, %d edges", graph.n_nodes, graph.n_edges)
    return EXIT_OK


def cmd_partition(args) -> int:
    graph = read_graph_json(args.graph)
    if args.clusters > graph.n_nodes:
        raise UsageError(f"--clusters {args.clusters} exceeds the {graph.n_nodes} graph nodes")
    t0 = time.perf_counter()
    if args.method == "geocuts":
        try:
            config = PartitionConfig(args.clusters, args.alpha, args.core_fraction, args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        part = geocuts_partition(graph, config)
    elif args.method == "grid":
        part = grid_partition(graph, args.clusters)
    else:
        part = hilbert_partition(graph, args.clusters)
    wall = time.perf_counter() - t0

    prov = _provenance("partition", args, {"graph": args.graph})
    write_partition_csv(args.out, part, prov)
    cut, frac = cut_size(graph, part)
    report = {
        "provenance": prov,
        "method": args.method,
        "n_clusters": part.n_clusters,
        "target_clusters": args.clusters,
        "cut_size": round_sig(cut),
        "cut_fraction": round_sig(frac),
        "achieved_alpha": round_sig(achieved_alpha(part)),
        "cluster_weights": [round_sig(w) for w in part.cluster_weights.tolist()],
        "info": _jsonable({k: v for k, v in part.info.items() if k != "seconds"}),
    }
    if args.record_time:
        report["wall_time_seconds"] = round_sig(wall)
    if args.report:
        dump_json(report, args.report)
    print(f"{args.method}: {part.n_clusters} clusters, cut fraction {frac:.4f}, "
          f"achieved alpha {achieved_alpha(part):.4f}, {wall:.2f} s", file=sys.stderr)
    return EXIT_OK


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return round_sig(float(x))
    return x


def _tagged(spec: str) -> tuple[str, str]:
    if "=" in spec:
        tag, path = spec.split("=", 1)
        return tag, path
    return Path(spec).stem, spec


def cmd_evaluate(args) -> int:
    tagged = [_tagged(s) for s in args.partition]
    tags = [t for t, _ in tagged]
    if len(set(tags)) != len(tags):
        raise UsageError(f"duplicate partition tags {tags}; use TAG=PATH")
    grid = GridSpec(args.cell_width, *WORLD)
    visits, problems = read_visits_csv(args.visits)
    graph = read_graph_json(args.graph) if args.graph else None
    inputs = {"visits": args.visits, **{f"partition:{t}": p for t, p in tagged}}
    if args.graph:
        inputs["graph"] = args.graph
    results = {}
    for tag, path in tagged:
        part = read_partition_csv(path, graph)
        results[tag] = _jsonable(evaluate(visits, part, grid, graph, args.thresholds, tag).to_dict())
    out = {"provenance": _provenance("evaluate", args, inputs), "malformed_rows": len(problems)}
    if len(results) == 1:
        out["report"] = next(iter(results.values()))
    else:
        out["comparison"] = results
    dump_json(out, args.out)
    for tag, r in results.items():
        print(f"{tag}: weighted Q {r['q_weighted_mean']:.4f}, B {r['b_metric']:.3g}",
              file=sys.stderr)
    return EXIT_OK


def cmd_export_geojson(args) -> int:
    cells, ids = read_cells_csv(args.partition)
    prov = _provenance("export-geojson", args, {"partition": args.partition})
    dump_json(partition_geojson(cells, ids, args.cell_width, prov), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geocuts", description="Geographic cluster construction "
                                "for geo experiments from mobility data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic visit CSV with planted metros")
    s.add_argument("--users", type=_positive(int), default=50_000)
    s.add_argument("--metros", type=_positive(int), default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--travel-prob", type=float, default=0.1)
    s.add_argument("--metro-sigma", type=float, default=SynthConfig.metro_sigma)
    s.add_argument("--local-sigma", type=float, default=SynthConfig.local_sigma)
    s.add_argument("--size-skew", type=float, default=0.0)
    s.add_argument("--cell-width", type=_positive(float), default=0.25,
                   help="grid used for the ground-truth file")
    s.add_argument("--out", required=True)
    s.add_argument("--truth-out")
    s.set_defaults(func=cmd_synth)

    b = sub.add_parser("build-graph", help="build the mobility graph from a visit CSV")
    b.add_argument("--visits", required=True)
    b.add_argument("--cell-width", type=_positive(float), default=0.25)
    b.add_argument("--region", type=_region, default=WORLD,
                   help="lat_min,lat_max,lon_min,lon_max; visits outside are dropped")
    b.add_argument("--max-edge-km", type=_positive(float), default=300.0)
    b.add_argument("--max-cells-per-user", type=_positive(int), default=64)
    b.add_argument("--normalize", choices=NORMALIZATIONS, default="log")
    b.add_argument("--filter", choices=USER_FILTERS, default="all")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build_graph)

    q = sub.add_parser("partition", help="partition a graph")
    q.add_argument("--graph", required=True)
    q.add_argument("--clusters", type=_positive(int), required=True)
    q.add_argument("--alpha", type=float, default=0.1)
    q.add_argument("--core-fraction", type=float, default=0.1)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--method", choices=METHODS, default="geocuts")
    q.add_argument("--out", required=True)
    q.add_argument("--report", help="run-report JSON path")
    q.add_argument("--record-time", action="store_true",
                   help="store wall time in the report (makes it non-reproducible)")
    q.set_defaults(func=cmd_partition)

    e = sub.add_parser("evaluate", help="Q and B metrics of one or more partitions")
    e.add_argument("--visits", required=True)
    e.add_argument("--partition", action="append", required=True, metavar="[TAG=]PATH")
    e.add_argument("--graph", help="graph JSON; adds cut statistics")
    e.add_argument("--cell-width", type=_positive(float), default=0.25)
    e.add_argument("--thresholds", type=_thresholds, default=list(DEFAULT_THRESHOLDS))
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("export-geojson", help="render a partition as GeoJSON cell polygons")
    g.add_argument("--partition", required=True)
    g.add_argument("--cell-width", type=_positive(float), default=0.25)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_export_geojson)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"geocuts {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, PartitionError, OSError, ValueError, RuntimeError) as exc:
        print(f"geocuts {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
