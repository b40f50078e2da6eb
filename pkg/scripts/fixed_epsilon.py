"""Fixed-epsilon run (sigma = 0): running minimum of the gradient norm and the telescoped sum bound."""

import argparse
from pathlib import Path

from lamact import diagnostics as dg
from lamact.config import load_config
from lamact.pipeline import reconstruct, simulate

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "fixed_eps_32.json")
    args = ap.parse_args()
    cfg = load_config(args.config)
    rec = reconstruct(cfg, simulate(cfg))
    trace = rec.result.trace
    best = float("inf")
    for r in trace:
        best = min(best, r.grad_norm)
        if r.k % 50 == 0 or r.k == len(trace) - 1:
            print(f"k={r.k:4d} phi_eps={r.phi_eps:.6e} grad={r.grad_norm:.3e} running min={best:.3e} {r.branch}")
    lhs, rhs, c3 = dg.descent_sums(trace, rec.meta)
    print(f"sum of squared gradients {lhs:.4e} <= C3 * drop {rhs:.4e} (C3 = {c3:.3e}): {lhs <= rhs}")


if __name__ == "__main__":
    main()
