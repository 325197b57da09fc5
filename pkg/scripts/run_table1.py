#!/usr/bin/env python3
"""Run the algorithmic-properties experiment with the shipped config."""

import pathlib
import sys

from reject_explain.cli import main

ROOT = pathlib.Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    argv = ["run-table1", "--config", str(ROOT / "configs" / "tables.json"),
            "--out", str(ROOT / "results"), "--workers", "4", "-v"]
    sys.exit(main(argv + sys.argv[1:]))
