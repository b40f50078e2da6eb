"""Desk reconstruction: simulate, reconstruct, and re-check every solver invariant from the trace.

Usage: python3 scripts/run_desk.py [--config configs/desk.json] [--out out/desk]
"""

import argparse
import dataclasses
import json
from pathlib import Path

from lamact import cli
from lamact.config import default_config, load_config


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", type=Path)
    ap.add_argument("--out", type=Path, default=Path("out/desk"))
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else default_config()
    cfg = dataclasses.replace(cfg, out=str(args.out))
    args.out.mkdir(parents=True, exist_ok=True)
    cli.cmd_simulate(cfg)
    rec = cli.cmd_reconstruct(cfg)
    print(json.dumps(rec.metrics, indent=2))
    for c in cli.cmd_report(args.out):
        print(c.line())


if __name__ == "__main__":
    main()
