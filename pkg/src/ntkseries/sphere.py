"""Eigenvalues of dot-product kernels for data uniform on the sphere S^d in R^(d+1).

A kernel theta(<x, y>) is diagonalized by spherical harmonics; all harmonics of
frequency k share the eigenvalue bar_lambda_k, which has multiplicity N(d, k).
For theta(t) = sum_p c_p t^p the eigenvalues are an explicit positive sum over
p >= k with p - k even. A Gegenbauer-weighted quadrature gives an independent route.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import comb, gammaln

from .spectral import DataMatrix, integrate_to_infinity

LOG_OVERFLOW_GUARD = 700.0
P_MAX_DEFAULTS = {"power": 10**5, "sqrt-exp": 10**3, "geometric": 10**3, None: 10**5}


def log_sphere_volume(d: int) -> float:
    """log of the surface area of S^d = {x in R^(d+1): |x| = 1}."""
    return math.log(2.0) + 0.5 * (d + 1) * math.log(math.pi) - gammaln(0.5 * (d + 1))


def sphere_volume(d: int) -> float:
    return math.exp(log_sphere_volume(d))


def multiplicity(d: int, k: int) -> int:
    """Number of linearly independent degree-k spherical harmonics on S^d."""
    if d < 2 or k < 0:
        raise ValueError("need d >= 2 and k >= 0")
    if k == 0:
        return 1
    # (2k + d - 1)/k * C(k + d - 2, k - 1), kept in integers
    return (2 * k + d - 1) * int(comb(k + d - 2, k - 1, exact=True)) // k


def gegenbauer(k: int, d: int, t):
    """Gegenbauer polynomial with parameter (d-1)/2, scaled so that P(1) = 1."""
    t = np.asarray(t, dtype=float)
    lam2 = d - 1.0  # 2 * lambda
    prev, cur = np.zeros_like(t), np.ones_like(t)
    for j in range(k):
        prev, cur = cur, ((2 * j + lam2) * t * cur - j * prev) / (j + lam2)
    return cur


def _log_terms(k: int, d: int, p: np.ndarray) -> np.ndarray:
    """log of the per-degree weight multiplying c_p in bar_lambda_k (p - k even, p >= k)."""
    h = 0.5 * (p - k + 1)
    return (
        0.5 * d * math.log(math.pi)
        - (k - 1) * math.log(2.0)
        + gammaln(p + 1)
        + gammaln(h)
        - gammaln(p - k + 1)
        - gammaln(h + k + 0.5 * d)
    )


class EigenvalueEstimate(NamedTuple):
    value: float
    tail: float


Coeffs = Union[Sequence[float], np.ndarray, Callable[[np.ndarray], np.ndarray]]


def funk_hecke_eigenvalue(
    coeffs: Coeffs, k: int, d: int, P_max: Optional[int] = None, decay: Optional[str] = None
) -> EigenvalueEstimate:
    """bar_lambda_k of theta(t) = sum_p c_p t^p on S^d from the closed-form series.

    ``coeffs`` is a finite array or a callable p -> c_p. The sum stops at P_max
    (for an array, by default its last index) and ``tail`` estimates the rest as
    half the integral of the term over [P_max + 1, inf), since only every other
    degree contributes. An array gets a tail only when ``decay`` names its
    decay form; the form is then fitted to the last half of the array.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    if k < 0:
        raise ValueError("k must be >= 0")
    fn = coeffs if callable(coeffs) else None
    if fn is None:
        c = np.asarray(coeffs, dtype=float)
        if np.any(c < 0):
            raise ValueError("coefficients must be nonnegative")
        P_max = len(c) - 1 if P_max is None else min(P_max, len(c) - 1)
    else:
        P_max = P_MAX_DEFAULTS.get(decay, 10**5) if P_max is None else P_max
    if P_max < k:
        return EigenvalueEstimate(0.0, 0.0)
    p = np.arange(k, P_max + 1, 2)
    cp = np.asarray(fn(p) if fn else c[p], dtype=float)
    if np.any(cp < 0):
        raise ValueError("coefficients must be nonnegative")
    logw = _log_terms(k, d, p.astype(float))
    if np.any(logw > LOG_OVERFLOW_GUARD):
        raise OverflowError(f"series term exceeds exp({LOG_OVERFLOW_GUARD:g}) at k={k}, d={d}")
    value = math.fsum(cp * np.exp(logw))
    tail = 0.0
    tail_fn = fn if fn is not None else _fitted_tail(cp, p, decay)
    if tail_fn is not None:
        def term(x):
            cx = float(tail_fn(np.array([x]))[0])
            return cx * math.exp(_log_terms(k, d, np.array([x]))[0]) if cx > 0 else 0.0

        tail = 0.5 * integrate_to_infinity(term, P_max + 1.0)
    return EigenvalueEstimate(value, tail)


def _fitted_tail(cp: np.ndarray, p: np.ndarray, decay: Optional[str]):
    """Extrapolate c_p past the array end by fitting the named decay form to its last half."""
    if decay is None:
        return None
    sel = (p >= p[-1] / 2) & (cp > 0)
    if np.sum(sel) < 10:
        return None
    x, y = p[sel].astype(float), np.log(cp[sel])
    if decay == "power":
        A, b = np.polyfit(np.log(x), y, 1)[::-1]
        return lambda t: np.exp(A + b * np.log(t))
    if decay == "sqrt-exp":
        A, b = np.polyfit(np.sqrt(x), y, 1)[::-1]
        return lambda t: np.exp(A + b * np.sqrt(t))
    if decay == "geometric":
        A, b = np.polyfit(x, y - 0.5 * np.log(x), 1)[::-1]
        return lambda t: np.exp(A + b * t + 0.5 * np.log(t))
    raise ValueError("decay must be power, sqrt-exp or geometric")


def funk_hecke_quadrature(
    theta: Callable[[np.ndarray], np.ndarray], k: int, d: int, nodes: int = 64, max_nodes: int = 2**16
) -> float:
    """bar_lambda_k = Vol(S^(d-1)) * int_{-1}^{1} theta(t) P_k(t) (1 - t^2)^((d-2)/2) dt.

    Integrates in the angle t = cos(phi), where the weight becomes sin(phi)^(d-1),
    with Gauss-Legendre nodes doubled until successive values agree to 1e-9.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    scale = math.exp(log_sphere_volume(d - 1))

    def rule(n):
        x, w = leggauss(n)
        phi = 0.5 * math.pi * (x + 1.0)
        t = np.cos(phi)
        vals = np.asarray(theta(t), dtype=float) * gegenbauer(k, d, t) * np.sin(phi) ** (d - 1)
        return scale * 0.5 * math.pi * float(np.dot(w, vals))

    prev = rule(nodes)
    n = nodes
    while n < max_nodes:
        n *= 2
        cur = rule(n)
        if abs(cur - prev) <= 1e-9 * max(abs(cur), 1e-300) or abs(cur - prev) < 1e-15 * scale:
            return cur
        prev = cur
    raise ArithmeticError(f"Funk-Hecke quadrature did not converge for k={k}, d={d}")


@dataclass(frozen=True)
class SphereSpectrum:
    """Per-frequency eigenvalues and the flattened spectrum with multiplicities."""

    dimension_d: int
    bar_lambda: np.ndarray
    multiplicities: np.ndarray

    @property
    def frequencies_flat(self) -> np.ndarray:
        """Frequency of each flattened eigenvalue, descending by value, ties by ascending k."""
        order = np.argsort(-self.bar_lambda, kind="stable")
        return np.repeat(order, self.multiplicities[order])

    @property
    def flattened(self) -> np.ndarray:
        return self.bar_lambda[self.frequencies_flat]

    def ell_start(self) -> np.ndarray:
        """1-based position of each frequency's first copy in the flattened spectrum."""
        order = np.argsort(-self.bar_lambda, kind="stable")
        starts = np.empty(len(order), dtype=int)
        starts[order] = 1 + np.concatenate([[0], np.cumsum(self.multiplicities[order])[:-1]])
        return starts

    def write(self, path, comment: Optional[str] = None) -> None:
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh)
            w.writerow(["k", "multiplicity", "bar_lambda", "ell_start"])
            for k, (m, lam, s) in enumerate(zip(self.multiplicities, self.bar_lambda, self.ell_start())):
                w.writerow([k, int(m), repr(float(lam)), int(s)])


def sphere_spectrum(coeffs: Coeffs, d: int, K_max: int, P_max: Optional[int] = None, decay: Optional[str] = None) -> SphereSpectrum:
    """bar_lambda_0..bar_lambda_{K_max}, with the series tail estimate added when available."""
    vals = []
    for k in range(K_max + 1):
        est = funk_hecke_eigenvalue(coeffs, k, d, P_max, decay)
        vals.append(est.value + est.tail)
    mult = np.array([multiplicity(d, k) for k in range(K_max + 1)], dtype=np.int64)
    return SphereSpectrum(d, np.array(vals), mult)


SPECTRUM_FORMS = ("power", "tanh-form", "gauss-form")


def flatten_and_fit(
    spectrum: Union[SphereSpectrum, Sequence[float], np.ndarray], form: str, window: tuple[int, int]
) -> tuple[float, float, float]:
    """Log-space least squares of the flattened spectrum over ell in [window[0], window[1]] (1-based).

    Forms: power a ell^-b, tanh-form a ell^-0.75 b^(-ell^(1/4)),
    gauss-form a ell^-0.5 b^(-ell^(1/2)). Returns (a, b, rms residual).
    """
    if form not in SPECTRUM_FORMS:
        raise ValueError(f"form must be one of {SPECTRUM_FORMS}")
    lam = spectrum.flattened if isinstance(spectrum, SphereSpectrum) else np.asarray(spectrum, dtype=float)
    if np.sum(lam > 1e-300) < 30:
        raise ValueError("need at least 30 flattened eigenvalues above 1e-300")
    lo, hi = window
    ell = np.arange(max(lo, 1), min(hi, len(lam)) + 1)
    y = lam[ell - 1]
    if np.any(y <= 0):
        raise ValueError("nonpositive eigenvalue inside the fit window")
    le = ell.astype(float)
    logy = np.log(y)
    if form == "power":
        design = np.column_stack([np.ones_like(le), -np.log(le)])
    elif form == "tanh-form":
        logy = logy + 0.75 * np.log(le)
        design = np.column_stack([np.ones_like(le), -(le**0.25)])
    else:
        logy = logy + 0.5 * np.log(le)
        design = np.column_stack([np.ones_like(le), -np.sqrt(le)])
    sol, *_ = np.linalg.lstsq(design, logy, rcond=None)
    resid = float(np.sqrt(np.mean((design @ sol - logy) ** 2)))
    b = float(sol[1]) if form == "power" else math.exp(sol[1])
    return math.exp(sol[0]), b, resid


def uniform_sphere_sample(n: int, d: int, seed: int = 0) -> DataMatrix:
    """n points uniform on S^d, as rows in R^(d+1)."""
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    Z = rng.standard_normal((n, d + 1))
    return DataMatrix.from_array(Z, normalize=True, provenance=f"sphere(n={n},d={d},seed={seed})")


@dataclass(frozen=True)
class DecayPrediction:
    """Predicted behaviour of bar_lambda_k for a coefficient decay class."""

    decay: str
    exponent: Optional[float]
    lower: Optional[Callable[[np.ndarray], np.ndarray]]
    upper: Callable[[np.ndarray], np.ndarray]
    zero_parity: Optional[str] = None


def decay_rate_table(decay: str, a: float, d: int) -> DecayPrediction:
    """Envelope shapes (up to constants) of bar_lambda_k for coefficients c_p of a given decay.

    power / even-power: k^(-d-2a+2); for even-power (c_p supported on even p,
    plus possibly p = 1) the odd frequencies k >= 3 vanish.
    sqrt-exp: k^(-d+1/2) exp(-a sqrt k).
    geometric (c_p ~ p^(1/2) a^-p): between k^(-d/2+1) 2^-k a^-k and k^(-d+1) a^-k.
    """
    if decay in ("power", "even-power"):
        e = -d - 2.0 * a + 2.0
        f = lambda k: np.asarray(k, dtype=float) ** e
        return DecayPrediction(decay, e, f, f, "odd" if decay == "even-power" else None)
    if decay == "sqrt-exp":
        return DecayPrediction(
            decay, None, None, lambda k: np.asarray(k, float) ** (-d + 0.5) * np.exp(-a * np.sqrt(k))
        )
    if decay == "geometric":
        return DecayPrediction(
            decay,
            None,
            lambda k: np.asarray(k, float) ** (-d / 2 + 1) * (2.0 * a) ** (-np.asarray(k, float)),
            lambda k: np.asarray(k, float) ** (-d + 1) * a ** (-np.asarray(k, float)),
        )
    raise ValueError("decay must be power, even-power, sqrt-exp or geometric")
