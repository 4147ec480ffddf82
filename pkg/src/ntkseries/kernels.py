"""Independent NTK oracles: arc-cosine closed form, Gaussian quadrature of the
kernel recurrences, Monte Carlo for the matrix Hermite expansion, and the
empirical NTK of a finite shallow network."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_hermitenorm

from .hermite import SQRT_2PI, ActivationSpec, hermite_coefficients
from .powerseries import LayerHyperparams

ARCSIN_GUARD = 1e-14


def _check_rho(rho: np.ndarray) -> np.ndarray:
    if np.any(np.abs(rho) > 1.0 + 1e-12):
        raise ValueError("|rho| must not exceed 1")
    return np.clip(rho, -1.0, 1.0)


def _clamp(rho):
    """Pull values that rounding pushed just past +-1 back into the arcsin domain."""
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) > 1.0 + ARCSIN_GUARD):
        raise ValueError("correlation outside [-1, 1]")
    return np.clip(rho, -1.0, 1.0)


def relu_corr(rho):
    """NNGP map of ReLU at sigma_w^2 = 2: (sqrt(1-rho^2) + rho arcsin rho)/pi + rho/2."""
    r = _clamp(rho)
    return (np.sqrt(1.0 - r * r) + r * np.arcsin(r)) / math.pi + r / 2.0


def relu_corr_prime(rho):
    """Derivative-kernel map of ReLU at sigma_w^2 = 2: arcsin(rho)/pi + 1/2."""
    return np.arcsin(_clamp(rho)) / math.pi + 0.5


def relu_ntk_analytic(rho, L: int):
    """Closed-form ReLU NTK after L hidden layers (gamma_w^2 = 1, sigma_w^2 = 2, no biases).

    Returns the layer-(L+1) kernel; L = 0 gives the input kernel rho.
    """
    if L < 0:
        raise ValueError("L must be nonnegative")
    rho = _check_rho(np.asarray(rho, dtype=float))
    corr, theta = rho, rho
    for _ in range(L):
        # Theta_l = Sigma_l + Theta_{l-1} * SigmaDot_l, both maps taken at the previous correlation
        theta = relu_corr(corr) + theta * relu_corr_prime(corr)
        corr = np.clip(relu_corr(corr), -1.0, 1.0)
    return theta if theta.ndim else float(theta)


def relu_derivative_kernel(rho):
    """E[1{U1>0} 1{U2>0}] for standard normals with correlation rho."""
    rho = _check_rho(np.asarray(rho, dtype=float))
    return (math.pi - np.arccos(rho)) / (2.0 * math.pi)


# -- bivariate Gaussian quadrature -------------------------------------------------

_HALF_WIDTH = 12.0


def _legendre_pieces(breaks: np.ndarray, t: np.ndarray, w: np.ndarray):
    """Nodes/weights of the Gaussian measure on [-H, H] split at per-row breakpoints.

    ``breaks`` has shape (rows, nb); returns arrays of shape (rows, (nb+1)*len(t)).
    """
    H = _HALF_WIDTH
    rows = breaks.shape[0]
    edges = np.sort(np.clip(breaks, -H, H), axis=1)
    edges = np.concatenate([np.full((rows, 1), -H), edges, np.full((rows, 1), H)], axis=1)
    a, b = edges[:, :-1, None], edges[:, 1:, None]
    x = 0.5 * (b - a) * t + 0.5 * (a + b)
    ww = 0.5 * (b - a) * w * np.exp(-0.5 * x * x) / SQRT_2PI
    return x.reshape(rows, -1), ww.reshape(rows, -1)


def bivariate_expectation(
    f: Callable[[np.ndarray], np.ndarray],
    g: Callable[[np.ndarray], np.ndarray],
    r: float,
    kinks: Sequence[float] = (),
    nodes: int = 200,
) -> float:
    """E[f(U1) g(U2)] for standard normals with correlation r.

    U1 = Z1 and U2 = r Z1 + sqrt(1 - r^2) Z2 with Z1, Z2 independent. Smooth
    integrands use a tensor Gauss-Hermite grid. With kinks, both coordinates use
    Gauss-Legendre split where U1 or U2 crosses a kink, so the accuracy of the
    rule does not degrade for piecewise-smooth activations. Kinks only at the
    origin get a polar rule instead, which stays accurate as |r| -> 1.
    """
    r = float(np.clip(r, -1.0, 1.0))
    s = math.sqrt(max(0.0, 1.0 - r * r))
    if kinks and all(k == 0.0 for k in kinks):
        return _polar_expectation(f, g, r, nodes)
    if not kinks:
        z, w = roots_hermitenorm(nodes)
        w = w / SQRT_2PI
        if s == 0.0:
            return float(np.dot(w, f(z) * g(r * z)))
        z1, z2 = z[:, None], z[None, :]
        vals = f(z1) * g(r * z1 + s * z2)
        return float(w @ vals @ w)

    t, tw = leggauss(nodes)
    kk = np.asarray(kinks, dtype=float)
    # outer nodes: split where U1 crosses a kink, and (when s = 0) where U2 does
    outer_breaks = list(kk)
    if r != 0.0:
        outer_breaks += list(kk / r)
    z1, w1 = _legendre_pieces(np.asarray(outer_breaks)[None, :], t, tw)
    z1, w1 = z1[0], w1[0]
    if s == 0.0:
        return float(np.dot(w1, f(z1) * g(r * z1)))
    inner_breaks = (kk[None, :] - r * z1[:, None]) / s
    z2, w2 = _legendre_pieces(inner_breaks, t, tw)
    psi = np.sum(w2 * g(r * z1[:, None] + s * z2), axis=1)
    return float(np.dot(w1, f(z1) * psi))


def _polar_expectation(f, g, r: float, nodes: int) -> float:
    """E[f(U1) g(U2)] in polar coordinates, split at the angles where U1 or U2 vanishes.

    With Z = R (cos t, sin t), U1 = R cos t and U2 = R cos(t - beta), cos beta = r.
    Inside each angular sector both signs are fixed, so the integrand is smooth.
    """
    beta = math.acos(r)
    cuts = np.mod([math.pi / 2, 3 * math.pi / 2, beta + math.pi / 2, beta + 3 * math.pi / 2], 2 * math.pi)
    edges = np.unique(np.concatenate([[0.0, 2 * math.pi], cuts]))
    t, tw = leggauss(nodes)
    a, b = edges[:-1, None], edges[1:, None]
    th = (0.5 * (b - a) * t + 0.5 * (a + b)).ravel()
    thw = (0.5 * (b - a) * tw).ravel() / (2 * math.pi)
    rad = 0.5 * _HALF_WIDTH * (t + 1.0)
    radw = 0.5 * _HALF_WIDTH * tw * rad * np.exp(-0.5 * rad * rad)
    R, TH = rad[:, None], th[None, :]
    vals = f(R * np.cos(TH)) * g(R * np.cos(TH - beta))
    return float(radw @ vals @ thw)


@dataclass(frozen=True)
class KernelTables:
    """Sigma, SigmaDot and Theta on a correlation grid; row l holds layer l."""

    rho: np.ndarray
    sigma: np.ndarray
    sigma_dot: np.ndarray
    theta: np.ndarray


def gauss_kernel_quadrature(
    rho_grid,
    spec: ActivationSpec,
    hp: LayerHyperparams,
    L: Optional[int] = None,
    nodes: int = 200,
    first_layer_bias: bool = True,
) -> KernelTables:
    """Layer-wise NNGP, derivative and NTK kernels by numerical integration.

    Row 1 is the input layer: Sigma_1 = Theta_1 = gamma_w^2 rho + gamma_b^2.
    Rows 2..L+1 follow the Gaussian-process recurrences. SigmaDot row 1 is unused.

    With ``first_layer_bias=False`` the second layer integrates against the raw
    correlation rho while Theta_1 keeps the affine form. That is the convention
    of the power-series coefficients in ``powerseries``; the two agree when
    gamma_w = 1 and gamma_b = 0.
    """
    L = hp.depth_L if L is None else L
    rho = _check_rho(np.atleast_1d(np.asarray(rho_grid, dtype=float)))
    sw2, sb2 = hp.sigma_w**2, hp.sigma_b**2

    def corr(r):
        return sw2 * bivariate_expectation(spec, spec, r, spec.kinks, nodes) + sb2

    def corr_prime(r):
        return sw2 * bivariate_expectation(spec.prime, spec.prime, r, spec.kinks, nodes)

    sigma = np.zeros((L + 2, len(rho)))
    sigma_dot = np.zeros((L + 2, len(rho)))
    theta = np.zeros((L + 2, len(rho)))
    theta[1] = hp.gamma_w**2 * rho + hp.gamma_b**2
    sigma[1] = theta[1] if first_layer_bias else rho
    diag = hp.gamma_w**2 + hp.gamma_b**2 if first_layer_bias else 1.0
    for l in range(2, L + 2):
        prev = np.clip(sigma[l - 1], -1.0, 1.0)
        sigma[l] = [corr(r) for r in prev]
        sigma_dot[l] = [corr_prime(r) for r in prev]
        theta[l] = theta[l - 1] * sigma_dot[l] + sigma[l]
        diag = corr(min(diag, 1.0))
        if not np.isfinite(diag):
            raise ArithmeticError("quadrature produced a non-finite value")
        if abs(diag - 1.0) > 1e-6:
            raise ArithmeticError(f"layer {l} kernel at rho=1 is {diag:.9f}, not 1; check unit variance")
    return KernelTables(rho, sigma, sigma_dot, theta)


# -- Monte Carlo check of the matrix Hermite expansion ----------------------------


@dataclass(frozen=True)
class ExpansionCheck:
    M_mc: np.ndarray
    S_K: np.ndarray
    max_abs_gap: float
    stderr: np.ndarray

    def within(self, n_sigma: float = 3.0, floor: float = 1e-2) -> bool:
        gap = np.abs(self.M_mc - self.S_K)
        return bool(np.all(gap <= np.maximum(n_sigma * self.stderr, floor)))


def hermite_matrix_series(A: np.ndarray, mu_sq: np.ndarray) -> np.ndarray:
    """sum_k mu_k^2 (A A^T)^{(.)k}, the truncated Hermite expansion of E[phi(Aw) phi(Aw)^T]."""
    G = A @ A.T
    out = np.zeros_like(G)
    Gk = np.ones_like(G)
    for c in mu_sq:
        out += c * Gk
        Gk = Gk * G
    return out


def _mc_batch(A: np.ndarray, spec: ActivationSpec, n: int, seed_seq: np.random.SeedSequence):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    w = rng.standard_normal((A.shape[1], n))
    F = spec(A @ w)
    outer = np.einsum("in,jn->ijn", F, F)
    return outer.sum(axis=2), (outer**2).sum(axis=2)


def mc_expansion_check(
    A,
    spec: ActivationSpec,
    K: int,
    samples: int = 10**6,
    seed: int = 0,
    batch: int = 50_000,
    workers: int = 1,
) -> ExpansionCheck:
    """Compare a Monte Carlo estimate of E[phi(Aw) phi(Aw)^T] with the K-term Hermite series.

    Batches draw from independent PCG64 streams spawned from ``seed`` and are
    reduced in batch order, so the result depends only on (seed, samples, batch).
    """
    A = np.asarray(A, dtype=float)
    norms = np.linalg.norm(A, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-10):
        raise ValueError("rows of A must have unit norm")
    if samples < 10**4:
        raise ValueError("need at least 1e4 samples")
    sizes = [batch] * (samples // batch)
    if samples % batch:
        sizes.append(samples % batch)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(sizes, streams))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda j: _mc_batch(A, spec, *j), jobs))
    else:
        parts = [_mc_batch(A, spec, *j) for j in jobs]
    s1 = np.sum(np.stack([p[0] for p in parts]), axis=0)
    s2 = np.sum(np.stack([p[1] for p in parts]), axis=0)
    M = s1 / samples
    var = np.maximum(s2 / samples - M**2, 0.0)
    stderr = np.sqrt(var / samples)
    mu_sq = hermite_coefficients(spec, K).values ** 2
    S = hermite_matrix_series(A, mu_sq)
    return ExpansionCheck(M, S, float(np.max(np.abs(M - S))), stderr)


# -- finite-width shallow networks ------------------------------------------------


@dataclass(frozen=True)
class FiniteWidthNet:
    """f(x) = a^T phi(W x) with W of shape (m, d)."""

    W: np.ndarray
    a: np.ndarray
    activation: ActivationSpec
    init_meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.W.ndim != 2 or self.W.shape[0] < 1 or self.W.shape[1] < 1:
            raise ValueError("W must be a nonempty 2-D array")
        if self.a.shape != (self.W.shape[0],):
            raise ValueError("a must have one entry per hidden unit")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.a))):
            raise ValueError("weights must be finite")

    @property
    def width(self) -> int:
        return self.W.shape[0]

    def __call__(self, X) -> np.ndarray:
        return self.activation(np.asarray(X) @ self.W.T) @ self.a


OUTER_MODES = ("gaussian-outer", "fixed-magnitude")


def sample_net(
    m: int,
    d: int,
    nu1: float,
    nu2: float = 1.0,
    mode: str = "gaussian-outer",
    seed: int = 0,
    activation: Optional[ActivationSpec] = None,
    R: Optional[float] = None,
) -> FiniteWidthNet:
    """W ~ N(0, nu1^2) entrywise; a ~ N(0, nu2^2) or uniform random signs times R.

    In fixed-magnitude mode R defaults to nu2.
    """
    if m < 1 or d < 1:
        raise ValueError("m and d must be positive")
    if mode not in OUTER_MODES:
        raise ValueError(f"mode must be one of {OUTER_MODES}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    W = nu1 * rng.standard_normal((m, d))
    if mode == "gaussian-outer":
        a = nu2 * rng.standard_normal(m)
    else:
        mag = nu2 if R is None else R
        a = mag * rng.choice(np.array([-1.0, 1.0]), size=m)
    act = ActivationSpec.relu() if activation is None else activation
    meta = {"nu1": nu1, "nu2": nu2, "mode": mode, "seed": seed, "R": R}
    return FiniteWidthNet(W, a, act, meta)


@dataclass(frozen=True)
class KernelMatrixPair:
    K_inner: np.ndarray
    K_outer: np.ndarray

    @property
    def K_total(self) -> np.ndarray:
        return self.K_inner + self.K_outer


def _as_array(X) -> np.ndarray:
    return np.asarray(getattr(X, "X", X), dtype=float)


def finite_width_ntk(net: FiniteWidthNet, X) -> KernelMatrixPair:
    """Empirical NTK split into the inner-weight and outer-weight Jacobian Grams."""
    X = _as_array(X)
    if X.shape[1] != net.W.shape[1]:
        raise ValueError(f"data dimension {X.shape[1]} does not match network input {net.W.shape[1]}")
    pre = X @ net.W.T
    Y = net.a * net.activation.prime(pre)
    Phi = net.activation(pre)
    K_inner = (Y @ Y.T) * (X @ X.T)
    K_outer = Phi @ Phi.T
    return KernelMatrixPair(0.5 * (K_inner + K_inner.T), 0.5 * (K_outer + K_outer.T))


def inner_jacobian(net: FiniteWidthNet, X) -> np.ndarray:
    """Rows are d f(x_i) / d vec(W), i.e. Kronecker products Y_i (x) x_i."""
    X = _as_array(X)
    Y = net.a * net.activation.prime(X @ net.W.T)
    return np.einsum("il,ij->ilj", Y, X).reshape(X.shape[0], -1)
