"""Command line entry point: analyze, extract, nest and pressure runs."""
import argparse
import dataclasses
import json
import sys

from .errors import ConfigError, HorseshoeError
from .pipeline import PipelineConfig, RUNNERS, emit, load_config


def build_parser():
    p = argparse.ArgumentParser(prog="horseshoes",
                                description="Horseshoe extraction from hyperbolic measures")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("analyze", "spectrum and regularity only"),
                           ("extract", "extract a horseshoe and verify it"),
                           ("nest", "nested horseshoes with decreasing entropy"),
                           ("pressure", "extraction plus a pressure table")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", metavar="PATH", help="YAML configuration file")
        s.add_argument("--seed", type=int, help="override the configured seed")
        s.add_argument("--out", metavar="DIR", default="out", help="output directory")
        s.add_argument("--json", action="store_true", help="write report.json and timing.json")
        s.add_argument("--csv", action="store_true", help="write CSV tables")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else PipelineConfig().validate()
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed).validate()
        report = RUNNERS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except HorseshoeError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    # neither flag given: write both
    both = not (args.json or args.csv)
    paths = emit(report, args.out, write_json=args.json or both, write_csv=args.csv or both)
    summary = {"kind": report.kind, "written": paths, "timing": report.timing}
    led = report.data.get("ledger")
    if led:
        summary["ledger"] = {k: v["pass"] for k, v in led.items()
                             if isinstance(v, dict) and "pass" in v}
        summary["entropy"] = report.data["horseshoe"]["entropy"]
    if "nest" in report.data:
        summary["nested_entropies"] = report.data["nest"]["entropies"]
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
