"""Regenerate the plot-ready data for every bundled figure preset.

Usage: python3 scripts/run_figures.py [--out runs] [--only fig3 fig5] [--threads 4]
"""

import argparse
import sys
import time
from pathlib import Path

from ioncool.cli import main as ioncool

COMMANDS = {"fig1": "steady", "fig2": "sweep", "fig3": "steady", "fig4": "sweep", "fig5": "sweep",
            "fig6": "sweep", "fig7": "evolve", "fig8": "sweep"}


def run(out: Path, names, threads: int) -> int:
    worst = 0
    for name in names:
        t = time.perf_counter()
        code = ioncool([COMMANDS[name], "--preset", name, "--out", str(out / name), "--threads", str(threads)])
        print(f"{name:5s} {COMMANDS[name]:7s} exit {code}  {time.perf_counter() - t:7.1f} s")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs"))
    p.add_argument("--only", nargs="+", choices=sorted(COMMANDS), default=sorted(COMMANDS))
    p.add_argument("--threads", type=int, default=4)
    a = p.parse_args()
    sys.exit(run(a.out, a.only, a.threads))
