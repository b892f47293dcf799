#!/usr/bin/env python3
"""Worst-case fidelity and measurement-merit bounds over a noise grid."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from hardy_dicka.cli import main

OUT = Path(__file__).resolve().parents[1] / "results"

if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    level = sys.argv[1] if len(sys.argv) > 1 else "2"
    for target in ("fidelity", "merit"):
        out = OUT / f"robust_{target}_level{level}.csv"
        main(["robust", "--target", target, "--level", level,
              "--eps1", "0:0.005:0.001", "--eps2", "0,0.00001,0.0001",
              "--out", str(out)])
        print(f"wrote {out}")
