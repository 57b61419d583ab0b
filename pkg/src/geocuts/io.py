"""File formats shared by the command-line tools.

* visit CSV: ``user_id,lat,lon,day,count`` with a header row
* graph JSON: grid spec, node list ``[lat_index, lon_index, weight]`` and edge
  list ``[i, j, weight]`` over node-array positions
* partition CSV: ``lat_index,lon_index,cluster_id``
* GeoJSON FeatureCollection of square cell polygons

Every writer embeds a provenance record. CSV files carry it on leading ``#``
lines, which all readers skip. Floats are written with 9 significant digits.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .graph_builder import MobilityGraph, Visits
from .partition import Partition, PartitionError
from .spatial import GridSpec

FLOAT_DIGITS = 9
MAX_BAD_ROW_FRACTION = 0.01
VISIT_COLUMNS = ["user_id", "lat", "lon", "day", "count"]
PARTITION_COLUMNS = ["lat_index", "lon_index", "cluster_id"]
TRUTH_COLUMNS = ["lat_index", "lon_index", "metro_id"]
GRAPH_FORMAT = "geocuts-graph/1"
N_COLORS = 20


class FormatError(ValueError):
    """An input file does not follow its format."""


def fmt(x: float) -> str:
    return f"{float(x):.{FLOAT_DIGITS}g}"


def round_sig(x: float) -> float:
    x = float(x)
    if x == 0 or not math.isfinite(x):
        return x
    return float(fmt(x))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dump_json(obj, path) -> None:
    text = json.dumps(obj, indent=1, sort_keys=False, ensure_ascii=False, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8", newline="\n")


def _comment_lines(provenance: dict | None) -> str:
    if not provenance:
        return ""
    return "# provenance: " + json.dumps(provenance, sort_keys=True) + "\n"


def _data_lines(fh):
    """Yield ``(line_number, line)`` for every non-comment line."""
    for lineno, line in enumerate(fh, start=1):
        if not line.startswith("#"):
            yield lineno, line


def read_provenance(path) -> dict | None:
    """Provenance record from the leading comment of a CSV file, if any."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                return None
            if line.startswith("# provenance: "):
                return json.loads(line[len("# provenance: "):])
    return None


# visits

def write_visits_csv(path, visits: Visits, provenance: dict | None = None) -> None:
    buf = io.StringIO()
    buf.write(_comment_lines(provenance))
    buf.write(",".join(VISIT_COLUMNS) + "\n")
    for u, la, lo, d, c in zip(visits.user_id.tolist(), visits.lat.tolist(), visits.lon.tolist(),
                               visits.day.tolist(), visits.count.tolist()):
        buf.write(f"{u},{fmt(la)},{fmt(lo)},{d},{c}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def read_visits_csv(path, max_bad_fraction: float = MAX_BAD_ROW_FRACTION) -> tuple[Visits, list[str]]:
    """Parse a visit CSV.

    Malformed rows are skipped and described in the returned list (with line
    numbers).

    Raises:
        FormatError: on a missing or wrong header, or when more than
            ``max_bad_fraction`` of the data rows are malformed.
    """
    users, lat, lon, day, count = [], [], [], [], []
    problems: list[str] = []
    n_rows = 0
    with open(path, newline="", encoding="utf-8") as fh:
        lines = _data_lines(fh)
        first = next(lines, None)
        if first is None:
            raise FormatError(f"{path}: empty file, expected header {','.join(VISIT_COLUMNS)}")
        header = [h.strip() for h in first[1].rstrip("\r\n").split(",")]
        if header != VISIT_COLUMNS:
            raise FormatError(f"{path}:{first[0]}: expected header {','.join(VISIT_COLUMNS)}, "
                              f"got {','.join(header)}")
        for lineno, line in lines:
            if not line.strip():
                continue
            n_rows += 1
            row = next(csv.reader([line]))
            try:
                if len(row) != 5 or not row[0]:
                    raise ValueError("expected 5 fields")
                la, lo = float(row[1]), float(row[2])
                d, c = int(row[3]), int(row[4])
                if not (math.isfinite(la) and math.isfinite(lo)):
                    raise ValueError("non-finite coordinate")
                if not -90 <= la <= 90 or not -180 <= lo <= 180:
                    raise ValueError("coordinate out of range")
                if not 0 <= d < 28:
                    raise ValueError("day outside 0..27")
                if c < 1:
                    raise ValueError("count must be >= 1")
            except ValueError as exc:
                problems.append(f"{path}:{lineno}: {exc}: {line.rstrip()!r}")
                continue
            users.append(row[0])
            lat.append(la)
            lon.append(lo)
            day.append(d)
            count.append(c)
    if n_rows and len(problems) > max_bad_fraction * n_rows:
        raise FormatError(
            f"{path}: {len(problems)} of {n_rows} rows malformed (limit {max_bad_fraction:.0%}); "
            f"first: {problems[0]}")
    visits = Visits(np.array(users, dtype=str), np.array(lat, dtype=float), np.array(lon, dtype=float),
                    np.array(day, dtype=np.int64), np.array(count, dtype=np.int64))
    return visits, problems


# ground truth and partitions

def write_cells_csv(path, cells: np.ndarray, ids: np.ndarray, columns=PARTITION_COLUMNS,
                    provenance: dict | None = None) -> None:
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    ids = np.asarray(ids, dtype=np.int64)
    order = np.lexsort((cells[:, 1], cells[:, 0]))
    buf = io.StringIO()
    buf.write(_comment_lines(provenance))
    buf.write(",".join(columns) + "\n")
    for (a, b), c in zip(cells[order].tolist(), ids[order].tolist()):
        buf.write(f"{a},{b},{c}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def write_partition_csv(path, partition: Partition, provenance: dict | None = None) -> None:
    write_cells_csv(path, partition.cells, partition.labels, PARTITION_COLUMNS, provenance)


def read_cells_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``(cells, ids)`` from a partition or ground-truth CSV.

    The third column may be named ``cluster_id`` or ``metro_id``.

    Raises:
        PartitionError: on a wrong header, malformed rows or duplicate cells.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        lines = _data_lines(fh)
        first = next(lines, None)
        header = [] if first is None else [h.strip() for h in first[1].rstrip("\r\n").split(",")]
        if header not in (PARTITION_COLUMNS, TRUTH_COLUMNS):
            raise PartitionError(f"{path}: expected header {','.join(PARTITION_COLUMNS)}")
        for lineno, line in lines:
            if not line.strip():
                continue
            try:
                a, b, c = (int(x) for x in line.split(","))
            except ValueError:
                raise PartitionError(f"{path}:{lineno}: malformed row {line.rstrip()!r}") from None
            rows.append((a, b, c))
    arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
    if len(arr) == 0:
        raise PartitionError(f"{path}: no rows")
    uniq, counts = np.unique(arr[:, :2], axis=0, return_counts=True)
    if (counts > 1).any():
        raise PartitionError(f"{path}: cells assigned more than once: "
                             f"{[tuple(c) for c in uniq[counts > 1][:10].tolist()]}")
    return arr[:, :2], arr[:, 2]


def read_partition_csv(path, graph: MobilityGraph | None = None) -> Partition:
    """Load a partition file.

    With ``graph`` the file must cover exactly its nodes and cluster weights are
    graph node weights; without it, cluster weights are cell counts.
    """
    from .baselines import load_external_partition

    if graph is not None:
        return load_external_partition(path, graph)
    cells, ids = read_cells_csv(path)
    _, labels = np.unique(ids, return_inverse=True)
    labels = labels.ravel()
    weights = np.bincount(labels).astype(float)
    return Partition(cells, labels, weights, "external", {"path": str(path), "weights": "cell counts"})


# graphs

def graph_to_dict(graph: MobilityGraph, provenance: dict | None = None) -> dict:
    nw, ew = graph.node_weight, graph.edge_weight
    return {
        "format": GRAPH_FORMAT,
        "provenance": provenance or {},
        "grid": graph.grid.to_dict(),
        "normalization": graph.normalization,
        "max_edge_km": round_sig(graph.max_edge_km),
        "user_filter": graph.user_filter,
        "n_nodes": graph.n_nodes,
        "n_edges": graph.n_edges,
        "nodes": [[a, b, round_sig(w)] for (a, b), w in zip(graph.cells.tolist(), nw.tolist())],
        "edges": [[i, j, round_sig(w)] for (i, j), w in zip(graph.edges.tolist(), ew.tolist())],
        "raw_node_weights": [round_sig(w) for w in graph.raw_node_weight.tolist()],
        "raw_edge_weights": [round_sig(w) for w in graph.raw_edge_weight.tolist()],
        "metadata": {k: v for k, v in graph.metadata.items() if isinstance(v, (int, float, str))},
    }


def graph_from_dict(d: dict) -> MobilityGraph:
    """Rebuild a graph from :func:`graph_to_dict` output.

    Raw weights are used when present, so re-normalizing a loaded graph works;
    otherwise the listed weights are taken as already normalized.
    """
    if d.get("format") != GRAPH_FORMAT:
        raise FormatError(f"not a graph file (format {d.get('format')!r})")
    try:
        grid = GridSpec.from_dict(d["grid"])
        nodes = d["nodes"]
        edges = d["edges"]
        cells = np.array([[n[0], n[1]] for n in nodes], dtype=np.int64).reshape(-1, 2)
        pairs = np.array([[e[0], e[1]] for e in edges], dtype=np.int64).reshape(-1, 2)
        if "raw_node_weights" in d:
            nw = np.array(d["raw_node_weights"], dtype=float)
            ew = np.array(d["raw_edge_weights"], dtype=float)
            norm = d["normalization"]
        else:
            nw = np.array([n[2] for n in nodes], dtype=float)
            ew = np.array([e[2] for e in edges], dtype=float)
            norm = "none"
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed graph file: {exc}") from None
    if len(nw) != len(cells) or len(ew) != len(pairs):
        raise FormatError("weight lists do not match node / edge lists")
    if len(pairs) and (pairs.min() < 0 or pairs.max() >= len(cells) or (pairs[:, 0] >= pairs[:, 1]).any()):
        raise FormatError("edge endpoints must be node positions with i < j")
    return MobilityGraph(grid, cells, nw, pairs, ew, norm, float(d.get("max_edge_km", 300.0)),
                         d.get("user_filter", "all"), dict(d.get("metadata", {})))


def write_graph_json(path, graph: MobilityGraph, provenance: dict | None = None) -> None:
    dump_json(graph_to_dict(graph, provenance), path)


def read_graph_json(path) -> MobilityGraph:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from None
    return graph_from_dict(d)


# GeoJSON

def cell_ring(lat_index: int, lon_index: int, cell_width: float) -> list[list[float]]:
    """Closed counter-clockwise ring ``[lon, lat]`` of a cell's square."""
    lat, lon = lat_index * cell_width, lon_index * cell_width
    h = cell_width / 2
    s, n, w, e = (round_sig(lat - h), round_sig(lat + h), round_sig(lon - h), round_sig(lon + h))
    return [[w, s], [e, s], [e, n], [w, n], [w, s]]


def partition_geojson(cells, labels, cell_width: float, provenance: dict | None = None) -> dict:
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    labels = np.asarray(labels, dtype=np.int64)
    order = np.lexsort((cells[:, 1], cells[:, 0]))
    features = []
    for (a, b), c in zip(cells[order].tolist(), labels[order].tolist()):
        features.append({
            "type": "Feature",
            "properties": {"lat_index": a, "lon_index": b, "cluster_id": c, "color": c % N_COLORS},
            "geometry": {"type": "Polygon", "coordinates": [cell_ring(a, b, cell_width)]},
        })
    out = {"type": "FeatureCollection", "features": features}
    if provenance:
        out["provenance"] = provenance
    return out


def ring_area(ring) -> float:
    """Signed shoelace area; positive for counter-clockwise rings."""
    pts = np.asarray(ring, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))


def validate_geojson(obj: dict) -> list[str]:
    """Structural problems of a polygon FeatureCollection (empty when valid)."""
    errs = []
    if obj.get("type") != "FeatureCollection" or not isinstance(obj.get("features"), list):
        return ["top level must be a FeatureCollection with a features list"]
    for i, f in enumerate(obj["features"]):
        if f.get("type") != "Feature" or not isinstance(f.get("properties"), dict):
            errs.append(f"feature {i}: not a Feature with properties")
            continue
        g = f.get("geometry") or {}
        if g.get("type") != "Polygon" or not isinstance(g.get("coordinates"), list) or not g["coordinates"]:
            errs.append(f"feature {i}: geometry must be a Polygon")
            continue
        for j, ring in enumerate(g["coordinates"]):
            if len(ring) < 4 or any(len(p) != 2 for p in ring):
                errs.append(f"feature {i} ring {j}: needs >= 4 [lon, lat] positions")
            elif ring[0] != ring[-1]:
                errs.append(f"feature {i} ring {j}: not closed")
            elif (ring_area(ring) > 0) != (j == 0):
                errs.append(f"feature {i} ring {j}: wrong winding")
    return errs
