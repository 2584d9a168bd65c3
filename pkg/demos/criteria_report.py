"""Evaluate the oscillation criteria for every bundled configuration.

Uses the same code path as ``fracdde criteria --config ...`` and prints a
verdict table instead of writing JSON files.
"""

import time
from pathlib import Path

from fracdde.cli import RunConfig, run_criteria

HERE = Path(__file__).resolve().parent

for path in sorted((HERE / "configs").glob("*.ini")):
    cfg = RunConfig.load(path)
    selection = cfg.criteria.get("thm", ["A4", "3.1"])
    start = time.perf_counter()
    reports = run_criteria(cfg, selection)
    print(f"\n{path.stem}  ({time.perf_counter() - start:.1f} s)")
    for r in reports:
        print(f"  {r.id:<14} {r.verdict.value:<13} {r.conclusion}")
        for flag in r.flags:
            print(f"  {'':<14} note: {flag}")
