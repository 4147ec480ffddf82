"""Layer-wise NTK power-series coefficients.

For a network in NTK parameterization with unit-variance initialization, the
layer-l NNGP kernel, its derivative kernel and the NTK are power series in the
input correlation rho:

    Sigma_l(rho)    = sum_p alpha[l, p]   rho^p
    SigmaDot_l(rho) = sum_p upsilon[l, p] rho^p
    Theta_l(rho)    = sum_p kappa[l, p]   rho^p

Deeper layers follow by composing the two-layer series with the previous NNGP
series, and Theta_l = Sigma_l + Theta_{l-1} * SigmaDot_l.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .hermite import ActivationSpec, HermiteCoefficients, derivative_coeffs, hermite_squares

UNIT_VARIANCE_TOL = 1e-8
KMAX_TAIL_TARGET = 1e-12
KMAX_SEARCH_FACTOR = 4


@dataclass(frozen=True)
class LayerHyperparams:
    """NTK-parameterization hyperparameters shared by every hidden layer."""

    gamma_w: float
    gamma_b: float
    sigma_w: float
    sigma_b: float
    depth_L: int

    def __post_init__(self) -> None:
        if self.gamma_w < 0 or self.gamma_b < 0 or self.sigma_b < 0:
            raise ValueError("gamma_w, gamma_b, sigma_b must be nonnegative")
        if not self.sigma_w > 0:
            raise ValueError("sigma_w must be positive")
        if int(self.depth_L) != self.depth_L or self.depth_L < 1:
            raise ValueError("depth_L must be a positive integer")

    @classmethod
    def unit_variance(
        cls, activation: ActivationSpec, depth_L: int = 1, gamma_b: float = 0.0, sigma_b: float = 0.0
    ) -> "LayerHyperparams":
        """Solve the unit-variance constraints for gamma_w and sigma_w."""
        if not 0 <= gamma_b <= 1 or not 0 <= sigma_b < 1:
            raise ValueError("need 0 <= gamma_b <= 1 and 0 <= sigma_b < 1")
        gamma_w = math.sqrt(1.0 - gamma_b**2)
        sigma_w = math.sqrt((1.0 - sigma_b**2) / activation.second_moment())
        return cls(gamma_w, gamma_b, sigma_w, sigma_b, depth_L)

    @classmethod
    def relu_default(cls, depth_L: int = 1) -> "LayerHyperparams":
        """gamma_w^2 = 1, sigma_w^2 = 2, no biases: unit variance with chi = 1."""
        return cls(1.0, 0.0, math.sqrt(2.0), 0.0, depth_L)

    def unit_variance_gap(self, second_moment: float) -> tuple[float, float]:
        return (
            abs(self.gamma_w**2 + self.gamma_b**2 - 1.0),
            abs(self.sigma_w**2 * second_moment + self.sigma_b**2 - 1.0),
        )

    def check_unit_variance(self, second_moment: float, tol: float = UNIT_VARIANCE_TOL) -> None:
        g, s = self.unit_variance_gap(second_moment)
        if g > tol:
            raise ValueError(f"gamma_w^2 + gamma_b^2 = {1 + g:.12g} != 1")
        if s > tol:
            raise ValueError(f"sigma_w^2 E[phi^2] + sigma_b^2 is off from 1 by {s:.3e}")


@dataclass(frozen=True)
class LayerCoefficients:
    """Truncated coefficient tables.

    ``alpha[l]`` and ``upsilon[l]`` are meaningful for l in [2, L+1] and
    ``kappa[l]`` for l in [1, L+1]; unused rows are zero.
    """

    alpha: np.ndarray
    upsilon: np.ndarray
    kappa: np.ndarray
    truncation_T: int
    outer_truncation_Kmax: int
    chi: float
    alpha_tail: float
    upsilon_tail: float

    @property
    def depth_L(self) -> int:
        return self.kappa.shape[0] - 2

    def kappa_at(self, layer: int) -> np.ndarray:
        if not 1 <= layer <= self.depth_L + 1:
            raise ValueError(f"layer must be in [1, {self.depth_L + 1}]")
        return self.kappa[layer]


MuLike = Union[ActivationSpec, HermiteCoefficients, Sequence[float], np.ndarray]


def _squares_and_moments(mu: MuLike, K: int, second_moment: Optional[float]):
    """mu_k^2 for k <= K plus E[phi^2] and E[phi'^2] (exact when the activation is known)."""
    if isinstance(mu, ActivationSpec):
        sq = hermite_squares(mu, K)
        m2 = mu.second_moment() if second_moment is None else second_moment
        return sq, m2, mu.derivative_second_moment()
    vals = mu.values if isinstance(mu, HermiteCoefficients) else np.asarray(mu, dtype=float)
    if len(vals) < K + 1:
        raise ValueError(f"need Hermite coefficients up to index {K}, got {len(vals) - 1}")
    vals = vals[: K + 1]
    sq = vals**2
    m2 = float(np.sum(sq)) if second_moment is None else second_moment
    dsq = derivative_coeffs(HermiteCoefficients(vals)).values ** 2
    return sq, m2, float(np.sum(dsq))


def alpha_base(mu: MuLike, hp: LayerHyperparams, T: int) -> np.ndarray:
    """alpha[2, p] = sigma_w^2 mu_p^2 + [p = 0] sigma_b^2 for p <= T."""
    sq, _, _ = _squares_and_moments(mu, T, None)
    out = hp.sigma_w**2 * sq
    out[0] += hp.sigma_b**2
    return out


def power_table(inner: np.ndarray, K: int, T: int) -> np.ndarray:
    """Rows k = 0..K hold the coefficients of inner^k truncated at degree T."""
    inner = np.asarray(inner, dtype=float)[: T + 1]
    P = np.zeros((K + 1, T + 1))
    P[0, 0] = 1.0
    for k in range(1, K + 1):
        if inner[0] == 0.0 and k > T:
            break  # inner^k starts at degree k
        row = np.convolve(P[k - 1], inner)[: T + 1]
        row[row < 1e-300] = 0.0  # keep subnormals out of the hot loop
        P[k, : len(row)] = row
    return P


def _check_nonneg(name: str, c: np.ndarray) -> None:
    if np.any(c < 0):
        raise ValueError(f"{name} coefficients must be nonnegative (min {c.min():.3e})")


def compose_series(outer: Sequence[float], inner: Sequence[float], T: int) -> np.ndarray:
    """Coefficients of sum_k outer[k] * inner(rho)^k up to degree T.

    Every output coefficient is a sum of nonnegative terms, and since the inner
    series sums to at most one, dropping outer terms k > Kmax changes the result
    by at most sum_{k > Kmax} outer[k].
    """
    outer = np.asarray(outer, dtype=float)
    inner = np.asarray(inner, dtype=float)
    _check_nonneg("outer", outer)
    _check_nonneg("inner", inner)
    return outer @ power_table(inner, len(outer) - 1, T)


def default_kmax(alpha2_total: float, alpha2: np.ndarray, T: int) -> int:
    """Smallest K <= len(alpha2)-1 whose outer tail is below 1e-12, else T."""
    tails = alpha2_total - np.cumsum(alpha2)
    ok = np.nonzero(tails < KMAX_TAIL_TARGET)[0]
    return int(ok[0]) if len(ok) else T


def propagate_layers(
    mu: MuLike,
    hp: LayerHyperparams,
    T: int = 512,
    Kmax: Optional[int] = None,
    tail_tol: Optional[float] = None,
    second_moment: Optional[float] = None,
) -> LayerCoefficients:
    """Build alpha, upsilon and kappa tables for layers 1..L+1 up to degree T.

    ``mu`` may be an ActivationSpec (closed forms are used where available) or
    a coefficient sequence long enough to cover max(T, Kmax) + 1.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if Kmax is not None and Kmax < 1:
        raise ValueError("Kmax must be >= 1")
    L = hp.depth_L
    if Kmax is not None:
        K_probe = max(T, Kmax) + 1
    elif L == 1:
        K_probe = T + 1
    elif isinstance(mu, ActivationSpec):
        # only closed-form activations are cheap enough to search for Kmax
        closed = mu.kind in ("relu", "gaussian", "linear")
        K_probe = (KMAX_SEARCH_FACTOR * T if closed else T) + 1
    else:
        n_avail = len(mu.values if isinstance(mu, HermiteCoefficients) else mu) - 1
        K_probe = max(T + 1, min(n_avail, KMAX_SEARCH_FACTOR * T + 1))
    sq, m2, dm2 = _squares_and_moments(mu, K_probe, second_moment)
    hp.check_unit_variance(m2)
    chi = hp.sigma_w**2 * dm2

    alpha2 = hp.sigma_w**2 * sq
    alpha2[0] += hp.sigma_b**2
    # derivative series: sigma_w^2 mu_p(phi')^2 = (p+1) alpha[2, p+1]
    p = np.arange(len(alpha2) - 1)
    upsilon2 = (p + 1) * alpha2[1:]

    if Kmax is None:
        Kmax = default_kmax(1.0, alpha2[: len(upsilon2)], T)
    Kmax = min(Kmax, len(upsilon2) - 1)
    alpha_tail = max(0.0, 1.0 - float(np.sum(alpha2[: Kmax + 1])))
    upsilon_tail = max(0.0, chi - float(np.sum(upsilon2[: Kmax + 1])))
    if tail_tol is not None and L > 1 and max(alpha_tail, upsilon_tail) > tail_tol:
        raise ArithmeticError(
            f"outer truncation Kmax={Kmax} leaves tail {max(alpha_tail, upsilon_tail):.3e} > {tail_tol:.3e}"
        )

    alpha = np.zeros((L + 2, T + 1))
    upsilon = np.zeros((L + 2, T + 1))
    kappa = np.zeros((L + 2, T + 1))
    alpha[2] = alpha2[: T + 1]
    upsilon[2] = upsilon2[: T + 1]
    for l in range(3, L + 2):
        P = power_table(alpha[l - 1], Kmax, T)
        alpha[l] = alpha2[: Kmax + 1] @ P
        upsilon[l] = upsilon2[: Kmax + 1] @ P

    kappa[1, 0] = hp.gamma_b**2
    if T >= 1:
        kappa[1, 1] = hp.gamma_w**2
    for l in range(2, L + 2):
        kappa[l] = alpha[l] + np.convolve(kappa[l - 1], upsilon[l])[: T + 1]

    return LayerCoefficients(alpha, upsilon, kappa, T, Kmax, chi, alpha_tail, upsilon_tail)


def kappa_two_layer(mu: MuLike, hp: LayerHyperparams, T: int) -> np.ndarray:
    """kappa[2, p] for p <= T from the direct two-layer formula.

    kappa_p = sigma_w^2 (1 + gamma_w^2 p) mu_p^2
              + sigma_w^2 gamma_b^2 (p + 1) mu_{p+1}^2 + [p = 0] sigma_b^2
    """
    sq, m2, _ = _squares_and_moments(mu, T + 1, None)
    hp.check_unit_variance(m2)
    p = np.arange(T + 1, dtype=float)
    sw2 = hp.sigma_w**2
    out = sw2 * (1.0 + hp.gamma_w**2 * p) * sq[:-1] + sw2 * hp.gamma_b**2 * (p + 1.0) * sq[1:]
    out[0] += hp.sigma_b**2
    return out


def eval_series(coeffs: np.ndarray, rho):
    """sum_p coeffs[p] rho^p by Horner's rule."""
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) > 1.0 + 1e-12):
        raise ValueError("|rho| must not exceed 1")
    acc = np.zeros_like(rho)
    for c in coeffs[::-1]:
        acc = acc * rho + c
    return acc if acc.ndim else float(acc)


def eval_truncated(coeffs: LayerCoefficients, layer: int, rho):
    """The truncated layer-``layer`` NTK at correlation ``rho``."""
    return eval_series(coeffs.kappa_at(layer), rho)


FIT_FORMS = ("power", "sqrt-exp", "geometric")


def coefficient_decay_fit(
    series: Sequence[float], form: str, window: tuple[int, int], parity: Optional[str] = None
) -> tuple[float, float, float]:
    """Least-squares fit of log c_p over p in [window[0], window[1]].

    Forms: power a p^-b, sqrt-exp a exp(-b sqrt p), geometric a p^(1/2) b^-p.
    ``parity`` ('even' or 'odd') restricts the fit to one residue class, for
    series whose two parities carry different constants. Returns (a, b, rms residual).
    """
    if form not in FIT_FORMS:
        raise ValueError(f"form must be one of {FIT_FORMS}")
    c = np.asarray(series, dtype=float)
    lo, hi = window
    p = np.arange(max(lo, 0), min(hi, len(c) - 1) + 1)
    if parity is not None:
        p = p[p % 2 == (0 if parity == "even" else 1)]
    y = c[p]
    if np.any(y <= 0):
        raise ValueError("log fit window contains nonpositive entries")
    if len(p) < 50:
        raise ValueError("need at least 50 points in the fit window")
    pf = p.astype(float)
    logy = np.log(y)
    if form == "power":
        design = np.column_stack([np.ones_like(pf), -np.log(pf)])
    elif form == "sqrt-exp":
        design = np.column_stack([np.ones_like(pf), -np.sqrt(pf)])
    else:
        logy = logy - 0.5 * np.log(pf)
        design = np.column_stack([np.ones_like(pf), -pf])
    sol, *_ = np.linalg.lstsq(design, logy, rcond=None)
    resid = float(np.sqrt(np.mean((design @ sol - logy) ** 2)))
    a = math.exp(sol[0])
    b = math.exp(sol[1]) if form == "geometric" else float(sol[1])
    return a, b, resid


def write_coefficients(coeffs: LayerCoefficients, path, comment: Optional[str] = None) -> None:
    """Export as CSV with columns layer,degree,alpha,upsilon,kappa."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(["layer", "degree", "alpha", "upsilon", "kappa"])
        for l in range(1, coeffs.depth_L + 2):
            for p in range(coeffs.truncation_T + 1):
                a = coeffs.alpha[l, p] if l >= 2 else ""
                u = coeffs.upsilon[l, p] if l >= 2 else ""
                w.writerow([l, p, a if a == "" else repr(float(a)), u if u == "" else repr(float(u)), repr(float(coeffs.kappa[l, p]))])
