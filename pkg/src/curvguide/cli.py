"""Command line entry point.

    curvguide validate --config run.json
    curvguide forward --config run.json --out out/
    curvguide inverse-eigen | inverse-poisson | discriminate --config run.json
    curvguide sweep --config run.json --axis grid.n_s --values 149,299,599
    curvguide geometry dump --config run.json --out curve.csv

Exit codes: 0 ok, 2 config or assumption error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
import sys

from .config import ConfigError, load_config
from .pipelines import EXIT_CONFIG, EXIT_OK, execute, geometry_dump, sweep

log = logging.getLogger("curvguide")

PIPELINE_COMMANDS = ("validate", "forward", "inverse-eigen", "inverse-poisson", "discriminate")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides config 'output')")
    p.add_argument("--deterministic", action="store_true", help="fixed seeds and reduction order")
    p.add_argument("--dim", type=int, choices=(2, 3), help="override guide.dim")
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curvguide", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in PIPELINE_COMMANDS:
        _common(sub.add_parser(name, help=f"run the {name} pipeline"))
    sp = sub.add_parser("sweep", help="independent runs over one config value")
    _common(sp)
    sp.add_argument("--axis", required=True, help="dotted config path, e.g. profile.a or grid.n_s")
    sp.add_argument("--values", default="", help="comma-separated values")
    sp.add_argument("--pipeline", choices=PIPELINE_COMMANDS[1:], help="pipeline per run (default: config)")
    sp.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
    gp = sub.add_parser("geometry", help="geometry utilities")
    gp.add_argument("action", choices=("dump",))
    _common(gp)
    gp.add_argument("--samples", type=int, help="number of s samples")
    return parser


def _parse_values(text: str):
    out = []
    for tok in filter(None, (t.strip() for t in text.split(","))):
        try:
            out.append(int(tok))
        except ValueError:
            out.append(float(tok))
    return out


def _overrides(args) -> dict:
    ov = {}
    if args.dim is not None:
        ov["guide.dim"] = args.dim
    if args.deterministic:
        ov["deterministic"] = True
    return ov


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")

    if args.command == "sweep":
        status, manifests = sweep(
            args.config, args.axis, _parse_values(args.values), out=args.out,
            pipeline=args.pipeline, workers=args.workers,
        )
        if status != EXIT_OK:
            log.error(manifests[0]["scalars"]["error"])
        else:
            log.info("sweep: %d runs, statuses %s", len(manifests), [m.get("status") for m in manifests])
        return status

    try:
        cfg = load_config(args.config, _overrides(args))
    except (ConfigError, OSError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG

    if args.command == "geometry":
        target = Path(args.out) if args.out else cfg.out_dir / "geometry.csv"
        if target.suffix != ".csv":
            target.mkdir(parents=True, exist_ok=True)
            target = target / "geometry.csv"
        else:
            target.parent.mkdir(parents=True, exist_ok=True)
        geometry_dump(cfg, target, args.samples)
        log.info("wrote %s", target)
        return EXIT_OK

    status, manifest = execute(cfg, args.command, args.out)
    scalars = manifest["scalars"]
    if status != EXIT_OK:
        log.error("%s failed (status %d): %s", args.command, status, scalars.get("error"))
    elif not args.quiet:
        log.info(json.dumps(scalars, indent=2, default=str))
    return status


if __name__ == "__main__":
    sys.exit(main())
