"""Command line entry point: ``genalpha <study> --config cfg.json --out result.csv``.

Exit codes: 0 on success, 2 when at least one run was aborted by the
stability check or the instability detector (the CSV is still written),
3 for invalid configurations.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .studies import STUDIES, ConfigError

EXIT_OK = 0
EXIT_ABORTED = 2
EXIT_CONFIG = 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="genalpha", description="Explicit generalized-alpha wave studies.")
    ap.add_argument("study", choices=sorted(STUDIES))
    ap.add_argument("--config", required=True, help="JSON configuration file")
    ap.add_argument("--out", required=True, help="output CSV path")
    ap.add_argument("--plot", action="store_true", help="also write a PNG figure next to the CSV")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ConfigError("configuration must be a JSON object")
        result = STUDIES[args.study](cfg)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result.write_csv(args.out)
    if args.plot:
        from .plotting import plot_result
        plot_result(result, args.out)
    if result.aborted:
        print(f"{result.aborted} run(s) aborted by the stability check", file=sys.stderr)
        return EXIT_ABORTED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
