#!/usr/bin/env python3
"""Regenerate the synthetic demonstration datasets as demo JSON files.

Writes three families -- limit cycle, S-curve, figure-eight -- with seven
noisy demos each (noise ~1% of the family's spatial scale), matching the
datasets the evaluation suite trains on. Output files feed `nodeplan train`
/ `nodeplan eval` directly.
"""
from __future__ import annotations

import argparse
from pathlib import Path

from nodeplan.core import save_demo_json
from nodeplan.synth import figure_eight_demos, limit_cycle_demos, s_curve_demos


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("data"),
                    help="output directory (default: ./data)")
    ap.add_argument("--n-demos", type=int, default=7)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    families = {
        "limit_cycle": limit_cycle_demos(
            n_demos=args.n_demos, radius=0.5, omega=1.5, duration=6.0,
            dt=0.01, noise=0.01, radius_spread=0.1, radial_gain=0.0, seed=42),
        "s_curve": s_curve_demos(n_demos=args.n_demos, noise=0.017, seed=43),
        "figure_eight": figure_eight_demos(n_demos=args.n_demos, noise=0.012,
                                           seed=44),
    }
    for name, ds in families.items():
        path = args.out / f"{name}.json"
        save_demo_json(ds, path)
        demo = ds.demos[0]
        print(f"{path}: {len(ds)} demos x {len(demo.times)} samples, "
              f"dim {demo.states.shape[1]}")


if __name__ == "__main__":
    main()
