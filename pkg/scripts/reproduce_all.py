"""Run every CLI experiment with its default configuration into one directory."""

import argparse
import sys
from pathlib import Path

from ntkseries import cli

RUNS = {
    "coeffs": ["--depth", "3"],
    "truncation-error": ["--depth", "3"],
    "gram-spectrum": ["--n", "400", "--d", "30"],
    "sphere-spectrum": ["--d", "2", "--gamma-b", "0.7071067811865476", "--empirical-n", "1000"],
    "finite-width": ["--n", "128", "--d", "16", "--widths", "100,512"],
    "tail-bounds": ["--n", "40", "--d", "8", "--rank", "3"],
}

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", type=Path, default=Path("results/cli"))
    root = ap.parse_args().out_dir
    failed = 0
    for name, extra in RUNS.items():
        code = cli.main([name, *extra, "--out", str(root / name)])
        print(f"{name}: exit {code}", file=sys.stderr)
        failed += code != 0
    sys.exit(1 if failed else 0)
