"""Command line entry point ``fracfp``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import SCENARIOS, RunConfig, load_config
from .errors import ConfigError, FracFPError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPT = 0, 2, 3, 4

_STAGES = {
    "resolvent": ["validate", "resolvent"],
    "evolve": ["validate", "evolve"],
    "gauge": ["validate", "evolve", "gauge"],
    "kernel": ["kernel"],
    "sde": ["validate", "evolve", "sde"],
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracfp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in list(_STAGES) + ["accept"]:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON run configuration")
        sp.add_argument("--scenario", choices=sorted(SCENARIOS), help="catalog scenario when no config is given")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed override")
        sp.add_argument("--level", choices=("quick", "full"), default="quick")
    return p


def _load(args) -> RunConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    elif args.scenario is not None:
        cfg = RunConfig.from_dict({"scenario": args.scenario})
    else:
        raise ConfigError("--config or --scenario is required")
    if args.seed is not None:
        raw = cfg.to_dict()
        raw["seed"] = args.seed
        cfg = RunConfig.from_dict(raw)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "accept":
            from .acceptance import acceptance_suite
            from .io import atomic_write_json

            report = acceptance_suite(args.level, seed=args.seed or 0)
            for line in report["lines"]:
                print(line)
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                atomic_write_json(report, args.out / "report.json")
            return EXIT_OK if report["passed"] else EXIT_ACCEPT
        cfg = _load(args)
        from .runner import run_scenario

        out = args.out or Path(cfg.raw.get("out", f"runs/{cfg.scenario}"))
        manifest = run_scenario(cfg, out, _STAGES[args.command])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FracFPError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    summary = {"status": manifest.status, "out": str(out), "warnings": len(manifest.warnings),
               "failed": [i["name"] for i in manifest.invariants if not i["ok"]]}
    print(json.dumps(summary))
    return EXIT_OK if manifest.ok else EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
