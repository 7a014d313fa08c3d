"""Command-line interface: ``build``, ``cut``, ``curve`` and ``compare``.

Exit codes: 0 on success, 1 on runtime errors, 2 on usage or configuration
errors (including unreadable input paths).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import hierarchy as hmod
from . import plotting
from .builders import BuilderConfig, ConfigError, build
from .energy import EnergyModel
from .raster import (flat_zone_partition, load_image, load_label_map, save_image,
                     save_label_map)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- helpers -------------------------------------------------------------------

def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def _model(args) -> EnergyModel:
    return EnergyModel(args.energy, args.sigmoid_center, args.sigmoid_steepness)


def _config(name: str, args) -> BuilderConfig:
    try:
        return BuilderConfig.parse(name, args.k, _model(args))
    except (ConfigError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _inputs(args):
    img = load_image(_existing(args.image))
    if args.labels:
        base = load_label_map(_existing(args.labels), img)
    else:
        base = flat_zone_partition(img)
    return img, base


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _sibling(path: Path, suffix: str, ext: str) -> Path:
    return path.with_name(path.stem + suffix + ext)


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _num(x) -> str:
    return repr(float(x))


# -- subcommands -----------------------------------------------------------------

def cmd_build(args) -> int:
    config = _config(args.heuristic, args)
    img, base = _inputs(args)
    result = build(img, base, config)
    hmod.serialize(result.hierarchy, args.out)
    if args.metrics:
        _write_json(args.metrics, result.metrics)
    print(f"{config.label}: {base.region_count} regions -> {len(result.hierarchy)} persistent "
          f"nodes, lambda_max={result.metrics['lambda_max']:.6g}")
    return EXIT_OK


def _scales(args, lam_max: float) -> list[tuple[float, float | None]]:
    if args.lam and args.x:
        raise UsageError("use either --lambda or --x, not both")
    if not args.lam and not args.x:
        raise UsageError("scale list is empty: give --lambda or --x")
    if args.lam:
        if any(v < 0 for v in args.lam):
            raise UsageError("lambda values must be non-negative")
        return [(v, v / lam_max if lam_max > 0 else None) for v in args.lam]
    if any(not 0.0 <= v <= 1.0 for v in args.x):
        raise UsageError("x values must lie in [0, 1]")
    return [(v * lam_max, v) for v in args.x]


def cmd_cut(args) -> int:
    h = hmod.deserialize(_existing(args.hierarchy))
    lam_max = hmod.lambda_max(h)
    scales = _scales(args, lam_max)
    prefix = Path(args.out)
    ext = ".pgm" if h.stats[0].sum.size == 1 else ".ppm"
    rows = []
    for i, (lam, x) in enumerate(scales):
        cut = hmod.optimal_cut(h, lam)
        save_label_map(cut.labels, prefix.with_name(f"{prefix.name}_{i:02d}_labels.pgm"))
        save_image(hmod.render_cut(h, cut), prefix.with_name(f"{prefix.name}_{i:02d}_render{ext}"))
        rows.append([i, _num(lam), "" if x is None else _num(x), len(cut.nodes),
                     _num(h.node_energy(cut.nodes, lam))])
        print(f"[{i:02d}] lambda={lam:.6g} regions={len(cut.nodes)}")
    _write_rows(prefix.with_name(prefix.name + "_cuts.csv"),
                ["index", "lambda", "x_lambda", "regions", "energy"], rows)
    return EXIT_OK


def cmd_curve(args) -> int:
    h = hmod.deserialize(_existing(args.hierarchy))
    curve = hmod.energy_curve(h)
    nc = ev.normalize(h, curve, args.samples)
    out = Path(args.out)
    energy = curve(nc.x * nc.lambda_max)
    _write_rows(out, ["x_lambda", "lambda", "energy", "normalized_energy", "lower_bound"],
                [[_num(x), _num(x * nc.lambda_max), _num(e), _num(v), _num(lo)]
                 for x, e, v, lo in zip(nc.x, energy, nc.value, nc.lower)])
    _write_rows(_sibling(out, "_breakpoints", ".csv"), ["lambda", "value", "slope"],
                [[_num(a), _num(b), _num(c)] for a, b, c in curve.rows()])
    summary = ev.summary(h)
    summary["bounds_ok"] = ev.check_bounds(nc).ok
    if args.metrics:
        _write_json(args.metrics, summary)
    if not args.no_plot:
        plotting.plot_normalized({"optimal cut": nc}, _sibling(out, "", ".png"))
        plotting.plot_energy_curve(curve, nc.d_image, nc.c_image, nc.lambda_max,
                                   _sibling(out, "_energy", ".png"))
    print(f"lambda_max={nc.lambda_max:.6g} E_I={nc.e_image:.6g} "
          f"quality_area={summary['quality_area']:.6g}")
    return EXIT_OK


def cmd_compare(args) -> int:
    names = [n for n in args.heuristics.replace(",", " ").split() if n]
    if not names:
        raise UsageError("no heuristic given")
    configs = [_config(n, args) for n in names]
    img, base = _inputs(args)
    grid = ev.uniform_grid(args.samples)
    results, curves, ranking = {}, {}, []
    for config in configs:
        res = build(img, base, config)
        nc = ev.normalize(res.hierarchy, samples=args.samples)
        results[config.label] = res
        curves[config.label] = nc
        ranking.append((ev.quality_area(res.hierarchy), config.label))
    ranking.sort(key=lambda t: (-t[0], t[1]))  # larger area = lower energies
    out = Path(args.out)
    rows = []
    for label, nc in curves.items():
        for x, v, lo in zip(grid, nc.at(grid), ev.lower_bound(grid, nc.e_image)):
            rows.append([label, _num(x), _num(v), _num(lo)])
    _write_rows(out, ["heuristic", "x_lambda", "normalized_energy", "lower_bound"], rows)
    _write_rows(_sibling(out, "_ranking", ".csv"),
                ["rank", "heuristic", "quality_area", "lambda_max", "first_merge_lambda",
                 "persistent_nodes"],
                [[i + 1, label, _num(qa), _num(results[label].metrics["lambda_max"]),
                  _num(results[label].metrics["first_merge_lambda"] or 0.0),
                  results[label].metrics["persistent_nodes"]]
                 for i, (qa, label) in enumerate(ranking)])
    lmax = np.array([r.metrics["lambda_max"] for r in results.values()])
    report = {
        "ranking": [label for _, label in ranking],
        "lambda_max_spread": {"min": float(lmax.min()), "max": float(lmax.max()),
                              "ratio": float(lmax.max() / lmax.min()) if lmax.min() > 0 else None},
        "heuristics": {label: dict(r.metrics, quality_area=qa)
                       for qa, label in ranking for r in [results[label]]},
    }
    if args.metrics:
        _write_json(args.metrics, report)
    if not args.no_plot:
        plotting.plot_normalized(curves, _sibling(out, "", ".png"))
    for i, (qa, label) in enumerate(ranking, start=1):
        print(f"{i}. {label}: quality_area={qa:.6g}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def _add_model_flags(p) -> None:
    p.add_argument("--energy", choices=("mumford", "contrast"), default="mumford")
    p.add_argument("--sigmoid-center", type=float, default=0.5)
    p.add_argument("--sigmoid-steepness", type=float, default=8.0)
    p.add_argument("--k", type=int, default=None, help="subset size bound for smk")
    p.add_argument("--labels", help="initial partition (16-bit PGM or raw u32); default: flat zones")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scaleset", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a persistent hierarchy file")
    p.add_argument("image")
    p.add_argument("--heuristic", default="sm2", help="sm2, smk, sm, mm, mm1 or smN")
    _add_model_flags(p)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--metrics", help="write build metrics as JSON")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("cut", help="optimal cuts at given scales")
    p.add_argument("hierarchy")
    p.add_argument("--lambda", dest="lam", type=float, nargs="+", default=[])
    p.add_argument("--x", type=float, nargs="+", default=[])
    p.add_argument("-o", "--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_cut)

    p = sub.add_parser("curve", help="energy curve, normalised curve and bounds")
    p.add_argument("hierarchy")
    p.add_argument("-o", "--out", required=True, help="CSV path; figures are written beside it")
    p.add_argument("--metrics", help="write a JSON summary")
    p.add_argument("--samples", type=int, default=ev.DEFAULT_SAMPLES)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("compare", help="compare heuristics on one image")
    p.add_argument("image")
    p.add_argument("--heuristics", default="sm2,sm5,mm1,mm")
    _add_model_flags(p)
    p.add_argument("-o", "--out", required=True, help="CSV path; ranking and figure go beside it")
    p.add_argument("--metrics", help="write metrics and the lambda_max spread as JSON")
    p.add_argument("--samples", type=int, default=ev.DEFAULT_SAMPLES)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"scaleset: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"scaleset: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
