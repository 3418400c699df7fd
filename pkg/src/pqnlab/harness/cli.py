"""``pqnlab <preset> --config <path> --seeds <list> --out <dir>``."""
from __future__ import annotations

import argparse
import sys

from .config import SCHEMAS, ConfigError, parse_config, parse_seeds, schema_doc

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pqnlab", description="Run a preset experiment and judge it against its "
                                "acceptance thresholds.  Exit status: 0 all checks pass, 1 a check failed, "
                                "2 usage or configuration error.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SCHEMAS:
        sp = sub.add_parser(name, help=f"run the {name} preset")
        sp.add_argument("--config", help="key = value file; omitted keys take the preset defaults")
        sp.add_argument("--seeds", help="seed list such as 0,1,2 or 0-9 (overrides the config)")
        sp.add_argument("--out", help="output directory (default runs/<preset>)")
        if name in ("baird", "jacobian"):
            sp.add_argument("--variant", choices=("linear", "layernorm"), help="override the variant key")
    sc = sub.add_parser("schema", help="print the documented keys and defaults of a preset")
    sc.add_argument("preset", choices=list(SCHEMAS))
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "run":
        argv = argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.command == "schema":
        sys.stdout.write(schema_doc(args.preset))
        return EXIT_OK
    try:
        cfg = parse_config(args.config, args.command)
        if args.seeds is not None:
            cfg.values["seeds"] = parse_seeds(args.seeds)
        if getattr(args, "variant", None):
            cfg.values["variant"] = args.variant
        from .runner import run_experiment, thread_cap
        workers = thread_cap()
    except (ConfigError, ValueError) as err:
        print(f"pqnlab: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out or f"runs/{args.command}"
    verdict = run_experiment(cfg, out, workers)
    for c in verdict["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['detail']}")
    print(f"{'PASS' if verdict['passed'] else 'FAIL'} {cfg.preset} ({out})")
    return EXIT_OK if verdict["passed"] else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
