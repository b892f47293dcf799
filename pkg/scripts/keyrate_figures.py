#!/usr/bin/env python3
"""Generate the ideal key-rate tables for both protocols (CSV, plot-ready)."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from hardy_dicka.cli import main

OUT = Path(__file__).resolve().parents[1] / "results"

if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    for protocol in (1, 2):
        out = OUT / f"keyrate_protocol{protocol}.csv"
        main(["keyrate", "--protocol", str(protocol), "--n-min", "3",
              "--n-max", "10", "--out", str(out)])
        print(f"wrote {out}")
