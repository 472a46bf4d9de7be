"""Command-line front end: ``cubeclust <command> points.csv [options]``.

Exit codes: 0 success, 1 parameter error, 2 parse error, 3 oracle mismatch.
"""

from __future__ import annotations

import argparse
import colorsys
import csv
import io
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import synthetic
from .dbscan import DEFAULT_ORACLE_CAP, assign_borders, dbscan_oracle, dbscan_star_oracle, s_dbscan_star
from .errors import ParameterError, ParseError
from .hier import hdbscan_star_oracle
from .labels import NOISE, Labeling
from .shdbscan import s_hdbscan_star, suggest_schedule, validate_schedule

EXIT_OK, EXIT_PARAM, EXIT_PARSE, EXIT_MISMATCH = 0, 1, 2, 3


# Input and output


def ingest(path) -> np.ndarray:
    """Read an ``(N, n)`` array from a comma-separated file; row ``i`` gets id ``i``.

    A first row with any non-numeric field is taken as a header. An empty
    file gives an empty ``(0, 2)`` array and a warning on stderr.
    """
    text = Path(path).read_text(encoding="utf-8")
    rows = []
    width = None
    for line_no, fields in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not fields or all(not f.strip() for f in fields):
            continue
        try:
            values = [float(f) for f in fields]
        except ValueError:
            if not rows and width is None:
                width = len(fields)
                continue
            raise ParseError(f"non-numeric field in {fields!r}", line_no) from None
        if width is None:
            width = len(values)
        if len(values) != width:
            raise ParseError(f"expected {width} fields, found {len(values)}", line_no)
        if width < 2:
            raise ParseError("points need at least 2 coordinates", line_no)
        if not all(math.isfinite(v) for v in values):
            raise ParseError("non-finite coordinate", line_no)
        rows.append(values)
    if not rows:
        print(f"warning: {path} holds no points", file=sys.stderr)
        return np.zeros((0, width if width and width >= 2 else 2))
    return np.array(rows, dtype=np.float64)


def write_points(points, path) -> None:
    """Write coordinates with 17 significant digits so :func:`ingest` reads them back exactly."""
    points = np.asarray(points, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in points:
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")


def labels_csv(labeling: Labeling, n_points: int) -> str:
    lab = np.full(n_points, NOISE, dtype=np.int64)
    lab[labeling.ids] = labeling.labels
    lines = ["id,cluster"] + [f"{i},{c}" for i, c in enumerate(lab.tolist())]
    return "\n".join(lines) + "\n"


def report_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["phase", "metric", "value"])
    for phase, metric, value in rows:
        w.writerow([phase, metric, repr(value) if isinstance(value, float) else value])
    return buf.getvalue()


def cluster_colour(cid: int) -> str:
    """Fixed colour per cluster id: golden-ratio hue steps."""
    hue = (0.13 + cid * 0.618033988749895) % 1.0
    r, g, b = colorsys.hls_to_rgb(hue, 0.5, 0.7)
    return "#{:02x}{:02x}{:02x}".format(round(r * 255), round(g * 255), round(b * 255))


NOISE_COLOUR = "#9e9e9e"


def emit_svg(points, labeling: Labeling, path, size: int = 800) -> bool:
    """Scatter plot of 2-D points coloured by cluster; returns False (no file) for other dimensions."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        dim = points.shape[1] if points.ndim == 2 else "?"
        print(f"notice: SVG output needs 2-D points, got dimension {dim}; no file written", file=sys.stderr)
        return False
    lab = np.full(len(points), NOISE, dtype=np.int64)
    lab[labeling.ids] = labeling.labels
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    if len(points):
        lo = points.min(axis=0)
        span = float(max(np.ptp(points, axis=0).max(), 1e-300))
        pad = 10
        scale = (size - 2 * pad) / span
        r = max(1.0, min(4.0, 400.0 / math.sqrt(len(points))))
        # noise first so clusters draw on top
        order = np.lexsort((np.arange(len(points)), lab >= 0))
        for i in order.tolist():
            x = pad + (points[i, 0] - lo[0]) * scale
            y = size - pad - (points[i, 1] - lo[1]) * scale
            fill = NOISE_COLOUR if lab[i] < 0 else cluster_colour(int(lab[i]))
            out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r:.2f}" fill="{fill}"/>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
    return True


# Commands


def _star_rows(phase, res, seconds):
    lab = res.labeling
    sizes = lab.cluster_sizes()
    cat = res.categories.category
    return [
        (phase, "eps", res.eps),
        (phase, "k", res.k),
        (phase, "n_points", len(lab.ids)),
        (phase, "n_core", int(res.core.sum())),
        (phase, "n_clusters", lab.n_clusters),
        (phase, "max_cluster", int(sizes.max()) if len(sizes) else 0),
        (phase, "mean_cluster", float(sizes.mean()) if len(sizes) else 0.0),
        (phase, "dense_cubes", int((cat == 1).sum())),
        (phase, "locally_dense_cubes", int((cat == 2).sum())),
        (phase, "sparse_cubes", int((cat == 0).sum())),
        (phase, "distance_evaluations_local_scan", res.distance_evaluations["local_scan"]),
        (phase, "distance_evaluations_dense_merge", res.distance_evaluations["dense_merge"]),
        (phase, "seconds", seconds),
    ]


def _need_eps(args):
    if args.eps is None:
        raise ParameterError("--eps is required for this command")
    return args.eps


def _schedule(args, points):
    if args.eps_schedule is None:
        if args.eps is not None:
            return [args.eps]
        raise ParameterError("--eps-schedule (or --eps) is required for this command")
    if args.eps_schedule.strip().lower() == "auto":
        return suggest_schedule(points, args.k, seed=args.seed)
    try:
        values = [float(v) for v in args.eps_schedule.split(",") if v.strip()]
    except ValueError as exc:
        raise ParameterError(f"bad --eps-schedule {args.eps_schedule!r}") from exc
    return validate_schedule(values)


def _min_size(args):
    return args.k if args.min_cluster_size is None else args.min_cluster_size


def run_dbscan_star(args, points):
    t0 = time.perf_counter()
    res = s_dbscan_star(points, _need_eps(args), args.k, workers=args.workers)
    return res.labeling, _star_rows("dbscan_star", res, time.perf_counter() - t0)


def run_dbscan(args, points):
    t0 = time.perf_counter()
    res = s_dbscan_star(points, _need_eps(args), args.k, workers=args.workers)
    t1 = time.perf_counter()
    lab, count = assign_borders(res)
    rows = _star_rows("dbscan_star", res, t1 - t0)
    rows += [
        ("borders", "n_assigned", int((lab.labels >= 0).sum() - res.core.sum())),
        ("borders", "distance_evaluations", count),
        ("borders", "seconds", time.perf_counter() - t1),
    ]
    return lab, rows


def run_hdbscan_star(args, points):
    sched = _schedule(args, points)
    res = s_hdbscan_star(points, args.k, _min_size(args), sched, workers=args.workers,
                         exclude_root=args.exclude_root, early_stop=args.early_stop)
    rows = [("schedule", f"eps_{i + 1}", e) for i, e in enumerate(sched)]
    rows += list(res.report)
    if res.approximate:
        rows.append(("final", "approximate", 1))
    return res.labeling, rows


def _mismatch(name, a: Labeling, b: Labeling):
    diff = a.first_difference(b)
    if diff is None:
        print(f"{name}: match")
        return False
    print(f"{name}: MISMATCH, first differing point id {diff}")
    return True


def run_oracle_check(args, points):
    cap = args.oracle_cap
    if len(points) > cap:
        raise ParameterError(f"oracle check refuses {len(points)} points (cap {cap})")
    rows = []
    bad = False
    lab = None
    if args.eps is not None:
        res = s_dbscan_star(points, args.eps, args.k, workers=args.workers)
        ref = dbscan_star_oracle(points, args.eps, args.k, cap=cap)
        bad |= _mismatch("dbscan-star", res.labeling, ref)
        border, _ = assign_borders(res)
        bad |= _mismatch("dbscan", border, dbscan_oracle(points, args.eps, args.k, cap=cap))
        rows += _star_rows("dbscan_star", res, 0.0)
        lab = border
    if args.eps_schedule is not None or args.eps is None:
        sched = _schedule(args, points)
        m = _min_size(args)
        res = s_hdbscan_star(points, args.k, m, sched, workers=args.workers, exclude_root=args.exclude_root)
        ref = hdbscan_star_oracle(points, args.k, m, cap=cap, exclude_root=args.exclude_root)
        bad |= _mismatch("hdbscan-star", res.labeling, ref.labeling)
        rows += list(res.report)
        lab = res.labeling
    rows.append(("oracle_check", "mismatch", int(bad)))
    return lab, rows, bad


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cubeclust", description="Exact DBSCAN*, DBSCAN and HDBSCAN* on a cube lattice.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("input", help="CSV file of points, one row per point")
        p.add_argument("--eps", type=float, help="clustering scale")
        p.add_argument("--eps-schedule", help="increasing scales a,b,c or 'auto'")
        p.add_argument("--k", type=int, default=5, help="a core point has more than k points in its eps-ball")
        p.add_argument("--min-cluster-size", type=int, help="smallest cluster kept by HDBSCAN* (default: k)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--oracle-cap", type=int, default=DEFAULT_ORACLE_CAP)
        p.add_argument("--exclude-root", action="store_true", help="never select the root class")
        p.add_argument("--early-stop", action="store_true", help="skip the final graph (approximate)")
        p.add_argument("--svg", help="write a 2-D scatter plot")
        p.add_argument("--seed", type=int, default=0, help="seed for the sampled 'auto' schedule")
        p.add_argument("--labels", help="labels CSV path (default: stdout)")
        p.add_argument("--report", help="report CSV path")

    for name in ("dbscan-star", "dbscan", "hdbscan-star", "oracle-check"):
        common(sub.add_parser(name))
    gen = sub.add_parser("generate", help="write a synthetic point set")
    gen.add_argument("output")
    gen.add_argument("--kind", choices=sorted(synthetic.GENERATORS), default="blobs")
    gen.add_argument("--n", type=int, default=1000)
    gen.add_argument("--dim", type=int, default=2)
    gen.add_argument("--seed", type=int, default=0)
    return parser


def _generate(args) -> int:
    if args.n < 0 or args.dim < 2:
        raise ParameterError("need n >= 0 and dim >= 2")
    if args.kind == "towns":
        if args.dim != 2:
            raise ParameterError("towns data is 2-D")
        pts = synthetic.towns(args.n, seed=args.seed)
    else:
        pts = synthetic.GENERATORS[args.kind](args.n, args.dim, seed=args.seed)
    write_points(pts, args.output)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            return _generate(args)
        if args.workers < 1:
            raise ParameterError("--workers must be >= 1")
        if args.k < 1:
            raise ParameterError("--k must be >= 1")
        if args.min_cluster_size is not None and args.min_cluster_size < 1:
            raise ParameterError("--min-cluster-size must be >= 1")
        try:
            points = ingest(args.input)
        except OSError as exc:
            raise ParseError(f"cannot read {args.input}: {exc.strerror or exc}") from exc
        mismatch = False
        if args.command == "dbscan-star":
            lab, rows = run_dbscan_star(args, points)
        elif args.command == "dbscan":
            lab, rows = run_dbscan(args, points)
        elif args.command == "hdbscan-star":
            lab, rows = run_hdbscan_star(args, points)
        else:
            lab, rows, mismatch = run_oracle_check(args, points)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ParameterError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return EXIT_PARAM

    text = labels_csv(lab, len(points))
    if args.labels:
        Path(args.labels).write_text(text, encoding="utf-8")
    elif args.command != "oracle-check":
        sys.stdout.write(text)
    if args.report:
        Path(args.report).write_text(report_csv(rows), encoding="utf-8")
    if args.svg:
        emit_svg(points, lab, args.svg)
    return EXIT_MISMATCH if mismatch else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
