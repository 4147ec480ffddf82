"""Worst-case error of the truncated ReLU NTK series against the closed form.

Sweeps truncation order and depth and writes one row per (T, L) with the
maximum error on |rho| <= 0.5 and on the whole interval.
"""

import argparse
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ntkseries.hermite import ActivationSpec
from ntkseries.kernels import relu_ntk_analytic
from ntkseries.powerseries import LayerHyperparams, eval_truncated, propagate_layers


@dataclass
class TruncationStudy:
    truncations: tuple[int, ...] = (5, 10, 20, 50, 100, 200, 500)
    depths: tuple[int, ...] = (1, 2, 3, 4)
    grid_points: int = 2001
    out: Path = field(default_factory=lambda: Path("results/truncation_error.csv"))


def run(cfg: TruncationStudy) -> list[tuple]:
    rho = np.linspace(-1, 1, cfg.grid_points)
    inner = np.abs(rho) <= 0.5
    rows = []
    for L in cfg.depths:
        exact = relu_ntk_analytic(rho, L)
        for T in cfg.truncations:
            coeffs = propagate_layers(ActivationSpec.relu(), LayerHyperparams.relu_default(L), T)
            err = np.abs(eval_truncated(coeffs, L + 1, rho) - exact)
            rows.append((L, T, float(err[inner].max()), float(err.max())))
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    with open(cfg.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["depth", "T", "max_error_inner", "max_error"])
        w.writerows(rows)
    return rows


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=TruncationStudy().out)
    for row in run(TruncationStudy(out=ap.parse_args().out)):
        print("L=%d T=%4d inner=%.3e all=%.3e" % row)
