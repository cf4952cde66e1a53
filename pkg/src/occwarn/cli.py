"""Command line front end: ``occwarn run | visibility-stats | enhance | twin``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .geometry import GeometryError
from .mapingest import enhance_file
from .rldm import MapError, save_graph
from .sim import PipelineError, ScenarioError, load_scenario, run, visibility_stats
from .visibility import profile_csv

EXIT_OK, EXIT_INPUT, EXIT_PIPELINE = 0, 1, 2

log = logging.getLogger("occwarn")


def _params(path):
    if path is None:
        return None
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"--params {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"--params {path}: expected a JSON object")
    return doc


def cmd_run(args) -> int:
    scn = load_scenario(args.scenario, _params(args.params))
    summary = run(scn, args.out, dump_riskmaps=args.dump_riskmaps)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_visibility_stats(args) -> int:
    scn = load_scenario(args.scenario)
    text = profile_csv(visibility_stats(scn))
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return EXIT_OK


def cmd_enhance(args) -> int:
    g = enhance_file(args.osm, args.rules, lane_width=args.lane_width)
    save_graph(g, args.out)
    print(f"{len(g.nodes)} nodes, {len(g.relations)} relations -> {args.out}")
    return EXIT_OK


def cmd_twin(args) -> int:
    from .twins import write_twin

    print(write_twin(args.name, args.out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="occwarn", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="replay a scenario through the warning pipeline")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dump-riskmaps", action="store_true", help="write riskmap_<k>.csv/.pgm per frame")
    p.add_argument("--params", help="JSON file overriding scenario params")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("visibility-stats", help="road visibility per distance bin as CSV")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="CSV path, or - for stdout")
    p.set_defaults(func=cmd_visibility_stats)

    p = sub.add_parser("enhance", help="build a lane-level map from OSM XML")
    p.add_argument("--osm", required=True)
    p.add_argument("--rules", help="priority rule file (JSON)")
    p.add_argument("--lane-width", type=float, default=3.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("twin", help="write a synthetic fixture (map + scenario)")
    p.add_argument("name", choices=["corridor", "safe", "critical"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_twin)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, MapError, OSError) as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT
    except (PipelineError, GeometryError) as exc:
        log.error("pipeline error: %s", exc)
        return EXIT_PIPELINE
    except ValueError as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
