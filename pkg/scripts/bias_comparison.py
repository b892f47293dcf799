#!/usr/bin/env python3
"""Eavesdropper guessing probability versus RNG bias, for the input-key
protocol and the two benchmark inequalities."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from hardy_dicka.cli import main

OUT = Path(__file__).resolve().parents[1] / "results"

if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    grid = "0,0.03,0.06,0.09,0.12"
    for inequality in ("hardy", "holz", "parity-chsh"):
        out = OUT / f"bias_{inequality}.csv"
        main(["bias", "--inequality", inequality, "--eps", grid,
              "--level", "2", "--out", str(out)])
        print(f"wrote {out}")
