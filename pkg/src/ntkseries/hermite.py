"""Normalized probabilist's Hermite polynomials and Hermite coefficients of activations.

The basis is h_k = He_k / sqrt(k!), orthonormal under the standard Gaussian
measure. Coefficients are mu_k(phi) = E[phi(Z) h_k(Z)] with Z ~ N(0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln, roots_hermitenorm

SQRT_2PI = math.sqrt(2.0 * math.pi)

KINDS = ("relu", "tanh", "gaussian", "linear", "custom")


@dataclass(frozen=True)
class ActivationSpec:
    """An activation function together with what is known about it analytically.

    Use the constructors ``relu()``, ``tanh()``, ``gaussian(sigma)``, ``linear()``
    and ``custom(fn, ...)`` rather than building instances by hand.

    ``kinks`` lists points where the function (or its derivative) is not smooth;
    quadrature splits its domain there.
    """

    kind: str
    sigma: Optional[float] = None
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    fn_prime: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    polynomial_growth: bool = True
    kinks: tuple[float, ...] = ()
    name: str = ""

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "gaussian":
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("gaussian-density activation needs sigma > 0")
        if self.kind == "custom" and self.fn is None:
            raise ValueError("custom activation needs a callable")

    @classmethod
    def relu(cls) -> "ActivationSpec":
        return cls("relu", kinks=(0.0,), name="relu")

    @classmethod
    def tanh(cls) -> "ActivationSpec":
        return cls("tanh", name="tanh")

    @classmethod
    def gaussian(cls, sigma: float) -> "ActivationSpec":
        return cls("gaussian", sigma=float(sigma), name=f"gaussian(sigma={sigma:g})")

    @classmethod
    def linear(cls) -> "ActivationSpec":
        return cls("linear", name="linear")

    @classmethod
    def custom(
        cls,
        fn: Callable[[np.ndarray], np.ndarray],
        fn_prime: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        polynomial_growth: bool = True,
        kinks: Sequence[float] = (),
        name: str = "custom",
    ) -> "ActivationSpec":
        spec = cls(
            "custom",
            fn=fn,
            fn_prime=fn_prime,
            polynomial_growth=polynomial_growth,
            kinks=tuple(float(k) for k in kinks),
            name=name,
        )
        m2 = spec.second_moment()
        if not np.isfinite(m2):
            raise ValueError("custom activation is not square integrable under N(0,1)")
        return spec

    @property
    def smooth(self) -> bool:
        return not self.kinks

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "relu":
            return np.maximum(x, 0.0)
        if self.kind == "tanh":
            return np.tanh(x)
        if self.kind == "gaussian":
            s2 = self.sigma**2
            return np.exp(-0.5 * x * x / s2) / math.sqrt(2.0 * math.pi * s2)
        if self.kind == "linear":
            return x.copy()
        return np.asarray(self.fn(x), dtype=float)

    def prime(self, x):
        """Derivative of the activation. ReLU uses the convention phi'(0) = 0."""
        x = np.asarray(x, dtype=float)
        if self.kind == "relu":
            return (x > 0).astype(float)
        if self.kind == "tanh":
            return 1.0 - np.tanh(x) ** 2
        if self.kind == "gaussian":
            return -x / self.sigma**2 * self(x)
        if self.kind == "linear":
            return np.ones_like(x)
        if self.fn_prime is not None:
            return np.asarray(self.fn_prime(x), dtype=float)
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        return (self(x + h) - self(x - h)) / (2.0 * h)

    def second_moment(self) -> float:
        """E[phi(Z)^2] for Z ~ N(0, 1)."""
        if self.kind == "relu":
            return 0.5
        if self.kind == "linear":
            return 1.0
        if self.kind == "gaussian":
            s = self.sigma
            return 1.0 / (2.0 * math.pi * s * math.sqrt(s * s + 2.0))
        return gaussian_expectation(lambda z: self(z) ** 2, self.kinks)

    def derivative_second_moment(self) -> float:
        """E[phi'(Z)^2] for Z ~ N(0, 1)."""
        if self.kind == "relu":
            return 0.5
        if self.kind == "linear":
            return 1.0
        return gaussian_expectation(lambda z: self.prime(z) ** 2, self.kinks)


@dataclass(frozen=True)
class HermiteCoefficients:
    """mu_0..mu_K of an activation, with where they came from."""

    values: np.ndarray
    source: str = "closed-form"
    quadrature_error: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def truncation(self) -> int:
        return len(self.values) - 1

    def squared(self) -> np.ndarray:
        return self.values**2

    def parseval_partial(self) -> np.ndarray:
        return np.cumsum(self.values**2)


def hermite_table(K: int, x) -> np.ndarray:
    """Rows h_0(x) .. h_K(x) via the normalized upward recurrence."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    x = np.asarray(x, dtype=float)
    out = np.empty((K + 1,) + x.shape)
    out[0] = 1.0
    if K >= 1:
        out[1] = x
    for k in range(1, K):
        out[k + 1] = (x * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


def hermite_eval(k: int, x):
    """h_k(x), the degree-k normalized probabilist's Hermite polynomial."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    x = np.asarray(x, dtype=float)
    prev, cur = np.zeros_like(x), np.ones_like(x)
    for j in range(k):
        prev, cur = cur, (x * cur - math.sqrt(j) * prev) / math.sqrt(j + 1)
    return cur if cur.ndim else float(cur)


def hermite_at_zero(k: int) -> float:
    """h_k(0): zero for odd k, (-1)^(k/2) (k-1)!!/sqrt(k!) for even k."""
    if k % 2:
        return 0.0
    sign = -1.0 if (k // 2) % 2 else 1.0
    return sign * math.exp(log_double_factorial(k - 1) - 0.5 * gammaln(k + 1))


def log_double_factorial(n):
    """log(n!!) with the convention n!! = 1 for n <= 0. Vectorized over n."""
    n = np.asarray(n)
    out = np.zeros(n.shape, dtype=float)
    pos = n > 0
    m = n[pos]
    even = m % 2 == 0
    half = np.where(even, m // 2, (m + 1) // 2).astype(float)
    # even n = 2h: 2^h h!;  odd n = 2h-1: (2h)! / (2^h h!)
    out_pos = np.where(
        even,
        half * math.log(2.0) + gammaln(half + 1),
        gammaln(2 * half + 1) - half * math.log(2.0) - gammaln(half + 1),
    )
    out[pos] = out_pos
    return out if out.ndim else float(out)


def relu_log_abs_hermite(K: int) -> tuple[np.ndarray, np.ndarray]:
    """log|mu_k| and sign(mu_k) for ReLU, k = 0..K (log of zero is -inf)."""
    k = np.arange(K + 1)
    logs = np.full(K + 1, -np.inf)
    signs = np.zeros(K + 1)
    logs[0] = -0.5 * math.log(2 * math.pi)
    signs[0] = 1.0
    if K >= 1:
        logs[1] = math.log(0.5)
        signs[1] = 1.0
    ev = k[(k >= 2) & (k % 2 == 0)]
    logs[ev] = log_double_factorial(ev - 3) - 0.5 * (math.log(2 * math.pi) + gammaln(ev + 1))
    # the sign alternates: E[Z_+ h_4(Z)] < 0, E[Z_+ h_2(Z)] > 0
    signs[ev] = np.where((ev // 2) % 2 == 1, 1.0, -1.0)
    return logs, signs


def relu_hermite(K: int) -> HermiteCoefficients:
    """Closed-form ReLU coefficients mu_0..mu_K, evaluated in log-space."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    logs, signs = relu_log_abs_hermite(K)
    return HermiteCoefficients(signs * np.exp(logs), source="closed-form")


def relu_hermite_sq(K: int) -> np.ndarray:
    """mu_k^2 for ReLU, k = 0..K. Safe for K in the millions."""
    logs, _ = relu_log_abs_hermite(K)
    return np.exp(2.0 * logs)


def gaussian_density_log_hermite_sq(sigma: float, K: int) -> np.ndarray:
    """log(mu_p^2) of the N(0, sigma^2) density, p = 0..K (-inf at odd p)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    p = np.arange(K + 1)
    out = np.full(K + 1, -np.inf)
    ev = p[p % 2 == 0]
    out[ev] = (
        gammaln(ev + 1)
        - 2.0 * gammaln(ev / 2 + 1)
        - ev * math.log(2.0)
        - math.log(2.0 * math.pi)
        - (ev + 1) * math.log(sigma**2 + 1.0)
    )
    return out


def gaussian_density_hermite_sq(sigma: float, K: int) -> np.ndarray:
    """mu_p^2 of the N(0, sigma^2) density, p = 0..K."""
    return np.exp(gaussian_density_log_hermite_sq(sigma, K))


def _split_legendre(breaks: Sequence[float], half_width: float, nodes: int):
    """Gauss-Legendre nodes/weights for the Gaussian measure on [-L, L], split at breaks."""
    pts = sorted({-half_width, half_width, *[b for b in breaks if abs(b) < half_width]})
    t, w = leggauss(nodes)
    xs, ws = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        xs.append(0.5 * (b - a) * t + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    x = np.concatenate(xs)
    w = np.concatenate(ws) * np.exp(-0.5 * x * x) / SQRT_2PI
    return x, w


def gaussian_rule(nodes: int, kinks: Sequence[float] = (), degree: int = 0):
    """Nodes and weights for E[f(Z)], Z ~ N(0, 1).

    Smooth integrands use Gauss-Hermite with the probabilist's weight. With kinks,
    the truncated line is split at each kink and Gauss-Legendre is used per piece,
    which keeps spectral accuracy for piecewise-smooth integrands.
    """
    if not kinks:
        x, w = roots_hermitenorm(nodes)
        w = w / SQRT_2PI
        if not np.all(np.isfinite(w)) or abs(w.sum() - 1.0) > 1e-10:
            raise ArithmeticError(f"Gauss-Hermite rule with {nodes} nodes failed to converge")
        return x, w
    half_width = 2.0 * math.sqrt(degree + 1) + 14.0
    x, w = _split_legendre(kinks, half_width, nodes)
    if abs(w.sum() - 1.0) > 1e-12:
        raise ArithmeticError("split Gauss-Legendre rule lost mass")
    return x, w


def gaussian_expectation(f: Callable[[np.ndarray], np.ndarray], kinks: Sequence[float] = (), nodes: int = 400) -> float:
    x, w = gaussian_rule(nodes, kinks)
    return float(np.dot(w, f(x)))


def quadrature_hermite(spec: ActivationSpec, K: int, nodes: int = 400, tol: float = 1e-8) -> HermiteCoefficients:
    """mu_0..mu_K by numerical integration against the Gaussian weight.

    The reported ``quadrature_error`` is the gap between the Parseval partial sum
    and the quadrature estimate of E[phi^2] when the former overshoots, else the
    change in the coefficients when the rule is refined to 1.5x nodes.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    if nodes < 2 * K + 2:
        raise ValueError(f"need nodes >= 2K+2 = {2 * K + 2}, got {nodes}")

    def run(n):
        x, w = gaussian_rule(n, spec.kinks, degree=K)
        fx = spec(x)
        return hermite_table(K, x) @ (w * fx), float(np.dot(w, fx * fx))

    mu, m2 = run(nodes)
    mu_ref, _ = run(int(1.5 * nodes))
    err = float(np.max(np.abs(mu - mu_ref)))
    excess = float(np.sum(mu**2) - m2)
    if excess > tol * max(1.0, m2):
        raise ArithmeticError(
            f"Parseval partial sum exceeds E[phi^2] by {excess:.3e}; quadrature is unstable"
        )
    return HermiteCoefficients(mu, source=f"quadrature({nodes})", quadrature_error=err)


def hermite_coefficients(spec: ActivationSpec, K: int, nodes: int = 400) -> HermiteCoefficients:
    """Closed form where one exists, quadrature otherwise."""
    if spec.kind == "relu":
        return relu_hermite(K)
    if spec.kind == "linear":
        v = np.zeros(K + 1)
        if K >= 1:
            v[1] = 1.0
        return HermiteCoefficients(v)
    if spec.kind == "gaussian":
        # the density is even, so odd coefficients vanish; even ones alternate in sign
        sq = gaussian_density_hermite_sq(spec.sigma, K)
        p = np.arange(K + 1)
        sign = np.where((p // 2) % 2 == 0, 1.0, -1.0)
        return HermiteCoefficients(sign * np.sqrt(sq))
    return quadrature_hermite(spec, K, max(nodes, 2 * K + 2))


def hermite_squares(spec: ActivationSpec, K: int) -> np.ndarray:
    """mu_k^2 for k = 0..K. Closed-form kinds stay in log-space so K can be very large."""
    if spec.kind == "relu":
        return relu_hermite_sq(K)
    if spec.kind == "gaussian":
        return gaussian_density_hermite_sq(spec.sigma, K)
    return hermite_coefficients(spec, K).values ** 2


def derivative_coeffs(mu: HermiteCoefficients) -> HermiteCoefficients:
    """Coefficients of phi' from those of phi: mu_k(phi') = sqrt(k+1) mu_{k+1}(phi)."""
    if mu.truncation < 1:
        raise ValueError("need at least two coefficients")
    k = np.arange(mu.truncation)
    return HermiteCoefficients(np.sqrt(k + 1) * mu.values[1:], source=mu.source)


def wallis_ratio(p: int) -> float:
    """(p-1)!!/p!! for even p >= 2.

    With n = p/2 it lies strictly between 1/sqrt(pi (n + 1/2)) and 1/sqrt(pi (n + 1/4)).
    """
    if p < 2 or p % 2:
        raise ValueError("p must be an even integer >= 2")
    return math.exp(log_double_factorial(p - 1) - log_double_factorial(p))
