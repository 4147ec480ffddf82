"""Command-line experiments.

    ntkseries coeffs            coefficient tables and effective-rank constants
    ntkseries truncation-error  truncated series vs closed-form ReLU NTK
    ntkseries gram-spectrum     Gram spectrum, effective rank and bounds on a dataset
    ntkseries sphere-spectrum   per-frequency eigenvalues on the sphere and decay fits
    ntkseries finite-width      effective rank of finite-width empirical NTKs
    ntkseries tail-bounds       small-eigenvalue bounds for low-rank data

Every run writes its tables plus config.json into --out. Exit status is 0 on
success, 1 when the configuration is invalid and 2 when a numerical check fails.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .hermite import ActivationSpec
from .kernels import finite_width_ntk, relu_ntk_analytic, sample_net
from .powerseries import (
    LayerHyperparams,
    eval_truncated,
    kappa_two_layer,
    propagate_layers,
    write_coefficients,
)
from .spectral import (
    DataMatrix,
    assemble_gram,
    effective_rank,
    eig_sym,
    head_count,
    head_tail_bound,
    numerical_rank,
    outlier_census,
    write_spectrum,
)
from .sphere import flatten_and_fit, sphere_spectrum, sphere_volume, uniform_sphere_sample

EXPERIMENTS = ("coeffs", "truncation-error", "gram-spectrum", "sphere-spectrum", "finite-width", "tail-bounds")
EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class ConfigError(ValueError):
    """A parameter combination that no experiment accepts."""


@dataclass
class ExperimentConfig:
    experiment: str
    activation: str = "relu"
    gamma_w: Optional[float] = None
    gamma_b: float = 0.0
    sigma_w: Optional[float] = None
    sigma_b: float = 0.0
    depth: int = 1
    truncation: Optional[int] = None
    kmax: Optional[int] = None
    n: int = 200
    d: int = 40
    rank: int = 5
    seed: int = 0
    dataset: str = "gaussian"
    normalize_rows: bool = False
    out: str = "out"
    pmax: Optional[int] = None
    fit_form: str = "power"
    fit_window: tuple[int, int] = (50, 2000)
    kmax_frequency: int = 50
    widths: tuple[int, ...] = ()
    seeds: int = 10
    outer_mode: str = "gaussian-outer"
    decay_ratio: float = 0.5
    empirical_n: int = 0
    extra: dict = field(default_factory=dict)

    def digest(self) -> str:
        # the output directory does not change results, so it is left out
        params = {k: v for k, v in asdict(self).items() if k != "out"}
        blob = json.dumps(params, sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # -- derived objects --

    def activation_spec(self) -> ActivationSpec:
        name, _, arg = self.activation.partition(":")
        if name == "relu":
            return ActivationSpec.relu()
        if name == "tanh":
            return ActivationSpec.tanh()
        if name == "linear":
            return ActivationSpec.linear()
        if name == "gaussian":
            return ActivationSpec.gaussian(float(arg) if arg else 1.0)
        raise ConfigError(f"unknown activation {self.activation!r}")

    def hyperparams(self) -> LayerHyperparams:
        act = self.activation_spec()
        gamma_w = math.sqrt(max(0.0, 1.0 - self.gamma_b**2)) if self.gamma_w is None else self.gamma_w
        if self.sigma_w is None:
            if self.sigma_b >= 1:
                raise ConfigError("sigma_b must be < 1 under unit variance")
            sigma_w = math.sqrt((1.0 - self.sigma_b**2) / act.second_moment())
        else:
            sigma_w = self.sigma_w
        hp = LayerHyperparams(gamma_w, self.gamma_b, sigma_w, self.sigma_b, self.depth)
        try:
            hp.check_unit_variance(act.second_moment())
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return hp

    def default_T(self) -> int:
        if self.truncation is not None:
            return self.truncation
        return 512 if self.depth > 1 else 2000

    def data(self) -> DataMatrix:
        kind, _, path = self.dataset.partition(":")
        if kind == "gaussian":
            return DataMatrix.gaussian(self.n, self.d, self.seed)
        if kind == "lowrank":
            return DataMatrix.lowrank(self.n, self.d, self.rank, self.seed)
        if kind == "sphere":
            return uniform_sphere_sample(self.n, self.d - 1, self.seed)
        if kind == "file":
            X = DataMatrix.from_file(path, normalize=self.normalize_rows)
            if not X.row_norms_unit:
                raise ConfigError(f"{path}: rows are not unit norm; pass --normalize-rows")
            return X
        raise ConfigError(f"unknown dataset {self.dataset!r}")

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        for name in ("truncation", "kmax", "pmax"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"--{name} must be >= 1")
        if self.n < 1 or self.d < 1:
            raise ConfigError("n and d must be positive")
        if not 0 <= self.gamma_b <= 1 or self.sigma_b < 0:
            raise ConfigError("need 0 <= gamma_b <= 1 and sigma_b >= 0")
        if self.dataset.split(":")[0] == "lowrank" and not 1 <= self.rank <= self.d:
            raise ConfigError("need 1 <= rank <= d")
        if self.dataset.split(":")[0] == "sphere" and self.d < 3 and self.experiment != "sphere-spectrum":
            raise ConfigError("sphere data lives in R^d; need d >= 3")
        lo, hi = self.fit_window
        if not 1 <= lo < hi:
            raise ConfigError("fit window must satisfy 1 <= lo < hi")
        if self.experiment == "truncation-error":
            if self.activation != "relu" or self.gamma_b != 0 or self.sigma_b != 0:
                raise ConfigError("truncation-error compares against the closed form for bias-free ReLU only")
            if self.gamma_w not in (None, 1.0) or self.sigma_w not in (None, math.sqrt(2.0)):
                raise ConfigError("truncation-error uses gamma_w = 1 and sigma_w^2 = 2")
        if self.experiment == "sphere-spectrum":
            if self.d < 2:
                raise ConfigError("sphere dimension d must be >= 2")
            if self.depth != 1:
                raise ConfigError("sphere-spectrum uses the two-layer coefficients (depth 1)")
            if self.fit_form not in ("power", "tanh-form", "gauss-form"):
                raise ConfigError("fit form must be power, tanh-form or gauss-form")
        if self.experiment == "finite-width":
            if self.activation != "relu":
                raise ConfigError("finite-width runs use shallow ReLU networks")
            if self.outer_mode not in ("gaussian-outer", "fixed-magnitude"):
                raise ConfigError("outer mode must be gaussian-outer or fixed-magnitude")
            if self.seeds < 1 or any(m < 1 for m in self.widths):
                raise ConfigError("seeds and widths must be positive")
        if self.experiment == "tail-bounds":
            if not 0 < self.decay_ratio < 1:
                raise ConfigError("decay ratio must lie in (0, 1)")
            if self.rank < 2:
                raise ConfigError("tail bounds need rank >= 2")
        self.activation_spec()
        self.hyperparams()


# -- output helpers ---------------------------------------------------------------


def _provenance(cfg: ExperimentConfig) -> str:
    return f"config={cfg.digest()} seed={cfg.seed} experiment={cfg.experiment}"


def _write_table(path: Path, header: Sequence[str], rows, cfg: ExperimentConfig) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {_provenance(cfg)}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _two_layer_kappa(cfg: ExperimentConfig, T: int) -> np.ndarray:
    return kappa_two_layer(cfg.activation_spec(), cfg.hyperparams(), T)


def _kappa(cfg: ExperimentConfig) -> np.ndarray:
    T = cfg.default_T()
    if cfg.depth == 1:
        return _two_layer_kappa(cfg, T)
    coeffs = propagate_layers(cfg.activation_spec(), cfg.hyperparams(), T, cfg.kmax)
    return coeffs.kappa_at(cfg.depth + 1)


# -- experiments ------------------------------------------------------------------


def run_coeffs(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out)
    T = cfg.truncation or 512
    coeffs = propagate_layers(cfg.activation_spec(), cfg.hyperparams(), T, cfg.kmax)
    write_coefficients(coeffs, out / "coefficients.csv", comment=_provenance(cfg))
    summary = {"chi": coeffs.chi, "Kmax": coeffs.outer_truncation_Kmax, "T": T,
               "alpha_tail": coeffs.alpha_tail, "upsilon_tail": coeffs.upsilon_tail, "layers": {}}
    for l in range(2, cfg.depth + 2):
        k = coeffs.kappa_at(l)
        entry = {"sum_kappa": float(k.sum())}
        entry["constant_bound"] = float(k.sum() / k[0]) if k[0] > 0 else None
        entry["centered_factor"] = float(k[1:].sum() / k[1]) if k[1] > 0 else None
        summary["layers"][str(l)] = entry
    _write_json(out / "summary.json", summary)
    return summary


def run_truncation_error(cfg: ExperimentConfig) -> dict:
    rho = np.linspace(-1.0, 1.0, 201)
    rows, worst = [], {}
    for T in (5, 50):
        for L in range(1, cfg.depth + 1):
            coeffs = propagate_layers(ActivationSpec.relu(), LayerHyperparams.relu_default(L), T, cfg.kmax)
            err = np.abs(eval_truncated(coeffs, L + 1, rho) - relu_ntk_analytic(rho, L))
            inner = np.abs(rho) <= 0.5
            worst[f"T={T},L={L}"] = {"max_abs_error": float(err.max()), "max_abs_error_inner": float(err[inner].max())}
            rows.extend((r, L, T, e) for r, e in zip(rho, err))
    _write_table(Path(cfg.out) / "truncation_error.csv", ["rho", "depth", "T", "abs_error"], rows, cfg)
    _write_json(Path(cfg.out) / "summary.json", worst)
    return worst


def run_gram_spectrum(cfg: ExperimentConfig) -> dict:
    X = cfg.data()
    k = _kappa(cfg)
    K = assemble_gram(X, k)
    rep = eig_sym(K)
    write_spectrum(rep, Path(cfg.out) / "spectrum.csv", comment=_provenance(cfg))
    eff_x = effective_rank(X.X @ X.X.T)
    summary = {
        "n": X.n, "d": X.d, "rank": X.rank_r, "dataset": X.provenance,
        "trace": rep.trace, "lambda_1": rep.lambda_1, "effective_rank": rep.effective_rank,
        "top_fraction": rep.lambda_1 / rep.trace, "c0_fraction": float(k[0] / k.sum()),
        "outliers_half": outlier_census(rep, 0.5), "eff_data": eff_x,
    }
    if k[0] > 0:
        summary["constant_bound"] = float(k.sum() / k[0])
    if len(k) > 1 and k[1] > 0:
        Kc = K - k[0] / X.n * np.ones_like(K)
        eff_c = effective_rank(Kc)
        summary.update(eff_centered=eff_c, centered_bound=float(eff_x * k[1:].sum() / k[1]),
                       centered_ratio=eff_c / eff_x)
    _write_json(Path(cfg.out) / "summary.json", summary)
    return summary


def run_sphere_spectrum(cfg: ExperimentConfig) -> dict:
    d = cfg.d
    k = _two_layer_kappa(cfg, cfg.pmax or 10**5)
    decay = "power" if cfg.activation == "relu" else "geometric"
    spec = sphere_spectrum(k, d, cfg.kmax_frequency, decay=decay)
    spec.write(Path(cfg.out) / "sphere_spectrum.csv", comment=_provenance(cfg))
    flat = spec.flattened
    lo, hi = cfg.fit_window
    hi = min(hi, len(flat))
    summary = {"d": d, "frequencies": cfg.kmax_frequency, "flattened_length": int(len(flat))}
    if np.all(flat[lo - 1:hi] > 0):
        a, b, res = flatten_and_fit(spec, cfg.fit_form, (lo, hi))
        summary["fit"] = {"form": cfg.fit_form, "window": [lo, hi], "a": a, "b": b, "residual": res}
    else:
        summary["fit"] = {"form": cfg.fit_form, "skipped": "zero eigenvalues inside the window"}
    summary["zero_frequencies"] = [int(i) for i in np.nonzero(spec.bar_lambda == 0)[0]]
    if cfg.empirical_n:
        # Gram/n of uniform samples approximates the operator scaled by 1/Vol; compare
        # block means over the leading degenerate groups since sampling splits ties
        X = uniform_sphere_sample(cfg.empirical_n, d, cfg.seed)
        # high Hadamard powers vanish off the diagonal, so the tail beyond 400 terms
        # is placed on the diagonal instead of being summed
        K = assemble_gram(X, k[:400]) + np.eye(X.n) * (k[400:].sum() / X.n)
        emp = eig_sym(K).eigenvalues
        pred = flat / sphere_volume(d)
        gaps, start = [], 0
        for _ in range(4):
            stop = start + int(np.sum(np.isclose(pred, pred[start], rtol=1e-12)))
            gaps.append(float(abs(emp[start:stop].mean() - pred[start]) / pred[start]))
            start = stop
        summary["empirical_block_rel_gaps"] = gaps
    _write_json(Path(cfg.out) / "summary.json", summary)
    return summary


def run_finite_width(cfg: ExperimentConfig) -> dict:
    X = cfg.data()
    n, d = X.n, X.d
    widths = cfg.widths or (4 * n,)
    eff_x = effective_rank(X.X @ X.X.T)
    rows = []
    for m in widths:
        for s in range(cfg.seeds):
            # inner std 1/sqrt(m) keeps the pre-activations O(1/sqrt(m)) per unit
            net = sample_net(m, d, 1.0 / math.sqrt(m), 1.0 / math.sqrt(m), cfg.outer_mode,
                             seed=cfg.seed * 100003 + s, R=1.0 / math.sqrt(m))
            pair = finite_width_ntk(net, X)
            e_in = effective_rank(pair.K_inner)
            e_tot = effective_rank(pair.K_total)
            rows.append((m, s, cfg.outer_mode, e_tot, e_in, eff_x, e_tot / eff_x, e_in / eff_x))
    _write_table(Path(cfg.out) / "finite_width.csv",
                 ["m", "seed", "outer_mode", "eff_K", "eff_K_inner", "eff_XXt", "ratio", "inner_ratio"], rows, cfg)
    summary = {"eff_data": eff_x, "max_ratio": max(r[6] for r in rows), "min_inner_ratio": min(r[7] for r in rows),
               "max_inner_ratio": max(r[7] for r in rows)}
    _write_json(Path(cfg.out) / "summary.json", summary)
    return summary


def run_tail_bounds(cfg: ExperimentConfig) -> dict:
    X = DataMatrix.lowrank(cfg.n, cfg.d, cfg.rank, cfg.seed)
    q = cfg.decay_ratio
    c = q ** np.arange(400)
    ev = eig_sym(assemble_gram(X, c)).eigenvalues
    rows = []
    m = 1
    while head_count(X.rank_r, m) < X.n:
        hc = head_count(X.rank_r, m)
        bound = head_tail_bound(X, c, m, tail=lambda j: q**j / (1 - q))
        head_rank = numerical_rank(assemble_gram(X, np.concatenate([c[:m], [0.0]])))
        rows.append((m, hc, head_rank, float(ev[hc:].max()), bound))
        m += 1
    _write_table(Path(cfg.out) / "tail_bounds.csv",
                 ["m", "head_count", "head_rank", "max_eig_beyond_head", "bound"], rows, cfg)
    summary = {"rank": X.rank_r, "all_hold": all(r[3] <= r[4] for r in rows) and all(r[2] <= r[1] for r in rows)}
    _write_json(Path(cfg.out) / "summary.json", summary)
    return summary


RUNNERS = {
    "coeffs": run_coeffs,
    "truncation-error": run_truncation_error,
    "gram-spectrum": run_gram_spectrum,
    "sphere-spectrum": run_sphere_spectrum,
    "finite-width": run_finite_width,
    "tail-bounds": run_tail_bounds,
}


# -- argument parsing -------------------------------------------------------------


def _window(text: str) -> tuple[int, int]:
    lo, hi = (int(v) for v in text.split(","))
    return lo, hi


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--activation", default="relu", help="relu, tanh, linear or gaussian:SIGMA")
    common.add_argument("--gamma-w", type=float)
    common.add_argument("--gamma-b", type=float, default=0.0)
    common.add_argument("--sigma-w", type=float, help="defaults to the unit-variance value")
    common.add_argument("--sigma-b", type=float, default=0.0)
    common.add_argument("--depth", type=int, default=1)
    common.add_argument("--truncation", type=int)
    common.add_argument("--kmax", type=int)
    common.add_argument("--n", type=int, default=200)
    common.add_argument("--d", type=int, default=40)
    common.add_argument("--rank", type=int, default=5)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--dataset", default="gaussian", help="gaussian, lowrank, sphere or file:PATH")
    common.add_argument("--normalize-rows", action="store_true")
    common.add_argument("--out", default="out")
    common.add_argument("--pmax", type=int)
    common.add_argument("--fit-form", default="power")
    common.add_argument("--fit-window", type=_window, default=(50, 2000))
    common.add_argument("--frequencies", dest="kmax_frequency", type=int, default=50)
    common.add_argument("--widths", type=_int_list, default=())
    common.add_argument("--seeds", type=int, default=10)
    common.add_argument("--outer-mode", default="gaussian-outer")
    common.add_argument("--decay-ratio", type=float, default=0.5)
    common.add_argument("--empirical-n", type=int, default=0)

    parser = argparse.ArgumentParser(prog="ntkseries", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common])
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    fields = {k: v for k, v in vars(args).items() if k in ExperimentConfig.__dataclass_fields__}
    return ExperimentConfig(**fields)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    cfg = config_from_args(args)
    try:
        cfg.validate()
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", {**asdict(cfg), "digest": cfg.digest()})
    try:
        summary = RUNNERS[cfg.experiment](cfg)
    except (ValueError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(summary, indent=2, sort_keys=True, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
