#!/usr/bin/env python3
"""Design and simulate one bundled preset, printing a short summary.

Example:
    python scripts/run_preset.py fig6-linkfail --out out/linkfail --seed 3
"""

import argparse
import json
import sys
from pathlib import Path

from resest.cli import main as cli_main
from resest.presets import PRESET_NAMES


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("preset", choices=PRESET_NAMES)
    ap.add_argument("--out", default="out")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    out = Path(args.out)
    design_args = ["design", "--preset", args.preset, "--out", str(out)]
    rc = cli_main(design_args)
    if rc != 0:
        print(f"design failed with exit code {rc}", file=sys.stderr)
        return rc
    sim_args = ["simulate", "--preset", args.preset, "--out", str(out),
                "--artifacts", str(out)]
    if args.seed is not None:
        sim_args += ["--seed", str(args.seed)]
    rc = cli_main(sim_args)
    if rc != 0:
        print(f"simulate failed with exit code {rc}", file=sys.stderr)
        return rc

    with open(out / "design_report.json") as f:
        design = json.load(f)
    with open(out / "trace_meta.json") as f:
        meta = json.load(f)
    print(f"preset            {args.preset}")
    print(f"sensors / states  {design['m']} / {design['n']}")
    print(f"rho (closed loop) {design['rho']:.6f}")
    print(f"rho after events  {meta['rho_post']:.6f}")
    print(f"trace             {out / 'trace.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
