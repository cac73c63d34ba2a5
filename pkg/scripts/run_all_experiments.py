"""Run every CLI experiment on one config and print the verdicts.

    python3 scripts/run_all_experiments.py [--config configs/default.ini] [--out runs]
"""
import argparse
import sys
import time

from jumpnls.cli import COMMANDS, main


def run():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/default.ini")
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()
    codes = {}
    for cmd in COMMANDS:
        start = time.perf_counter()
        codes[cmd] = main([cmd, "--config", args.config, "--out", args.out])
        print(f"{cmd:12s} exit {codes[cmd]}  ({time.perf_counter() - start:.1f}s)", file=sys.stderr)
    return max(codes.values())


if __name__ == "__main__":
    sys.exit(run())
