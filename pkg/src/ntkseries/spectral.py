"""Gram matrices of dot-product kernel power series and their spectra.

With unit-norm data rows X and G = X X^T, a kernel sum_p c_p rho^p has the
normalized Gram matrix K = (1/n) sum_p c_p G^{(.)p}, where (.)p is the
entrywise power.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from scipy import integrate
from scipy.special import comb

ROW_NORM_TOL = 1e-10


def numerical_rank(M: np.ndarray) -> int:
    """Singular values below 1e-9 * s_1 * max(n, d) count as zero."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > 1e-9 * s[0] * max(M.shape)))


@dataclass(frozen=True)
class DataMatrix:
    """n points in R^d stored row-wise, plus where they came from."""

    X: np.ndarray
    row_norms_unit: bool
    rank_r: int
    provenance: str = ""

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a 2-D array")
        if not np.all(np.isfinite(X)):
            raise ValueError("X must be finite")
        object.__setattr__(self, "X", X)
        if self.row_norms_unit:
            norms = np.linalg.norm(X, axis=1)
            if np.any(np.abs(norms - 1.0) > ROW_NORM_TOL):
                raise ValueError("rows are flagged unit-norm but are not")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_array(cls, X, normalize: bool = True, provenance: str = "array") -> "DataMatrix":
        X = np.asarray(X, dtype=float)
        if normalize:
            norms = np.linalg.norm(X, axis=1, keepdims=True)
            if np.any(norms == 0):
                raise ValueError("cannot normalize a zero row")
            X = X / norms
        unit = bool(np.all(np.abs(np.linalg.norm(X, axis=1) - 1.0) <= ROW_NORM_TOL))
        return cls(X, unit, numerical_rank(X), provenance)

    @classmethod
    def gaussian(cls, n: int, d: int, seed: int = 0) -> "DataMatrix":
        """Isotropic Gaussian rows projected to the unit sphere."""
        rng = np.random.Generator(np.random.PCG64(seed))
        return cls.from_array(rng.standard_normal((n, d)), provenance=f"gaussian(n={n},d={d},seed={seed})")

    @classmethod
    def lowrank(cls, n: int, d: int, r: int, seed: int = 0) -> "DataMatrix":
        """Unit rows drawn from a random r-dimensional subspace of R^d."""
        if not 1 <= r <= d:
            raise ValueError("need 1 <= r <= d")
        rng = np.random.Generator(np.random.PCG64(seed))
        basis, _ = np.linalg.qr(rng.standard_normal((d, r)))
        X = rng.standard_normal((n, r)) @ basis.T
        return cls.from_array(X, provenance=f"lowrank(n={n},d={d},r={r},seed={seed})")

    @classmethod
    def from_file(cls, path, normalize: bool = False) -> "DataMatrix":
        return cls.from_array(read_matrix(path), normalize=normalize, provenance=f"file:{path}")


def read_matrix(path) -> np.ndarray:
    """Read the text format: first line 'n d', then n rows of d numbers (comma or space separated)."""
    with open(path) as fh:
        lines = [ln for ln in (l.strip() for l in fh) if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    header = lines[0].replace(",", " ").split()
    if len(header) != 2:
        raise ValueError(f"{path}: first line must be 'n d'")
    n, d = (int(v) for v in header)
    rows = [[float(v) for v in ln.replace(",", " ").split()] for ln in lines[1:]]
    M = np.array(rows, dtype=float)
    if M.shape != (n, d):
        raise ValueError(f"{path}: header says {n}x{d} but found {M.shape}")
    return M


def write_matrix(M: np.ndarray, path) -> None:
    M = np.asarray(M, dtype=float)
    with open(path, "w") as fh:
        fh.write(f"{M.shape[0]} {M.shape[1]}\n")
        for row in M:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _coeff_array(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 1 or len(c) == 0:
        raise ValueError("coefficients must be a nonempty 1-D sequence")
    if np.any(c < 0):
        raise ValueError("kernel coefficients must be nonnegative")
    return c


def _unit_rows(X) -> np.ndarray:
    if isinstance(X, DataMatrix):
        if not X.row_norms_unit:
            raise ValueError("data rows must have unit norm")
        return X.X
    X = np.asarray(X, dtype=float)
    if np.any(np.abs(np.linalg.norm(X, axis=1) - 1.0) > ROW_NORM_TOL):
        raise ValueError("data rows must have unit norm")
    return X


def unit_gram(X) -> np.ndarray:
    """X X^T with the diagonal pinned to exactly one."""
    X = _unit_rows(X)
    G = X @ X.T
    G = 0.5 * (G + G.T)
    np.fill_diagonal(G, 1.0)
    return G


def hadamard_series(G: np.ndarray, coeffs) -> np.ndarray:
    """sum_p c_p G^{(.)p} with Kahan-compensated accumulation over p."""
    c = _coeff_array(coeffs)
    total = np.zeros_like(G)
    comp = np.zeros_like(G)
    Gp = np.ones_like(G)
    for p, cp in enumerate(c):
        if cp != 0.0:
            y = cp * Gp - comp
            t = total + y
            comp = (t - total) - y
            total = t
        if p + 1 < len(c):
            Gp = Gp * G
    return total


def assemble_gram(X, coeffs) -> np.ndarray:
    """K with n K = sum_p c_p (X X^T)^{(.)p}."""
    G = unit_gram(X)
    return hadamard_series(G, coeffs) / G.shape[0]


@dataclass(frozen=True)
class SpectrumReport:
    """Descending eigenvalues of a symmetric matrix with summary statistics."""

    eigenvalues: np.ndarray
    trace: float
    eigenvectors: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def lambda_1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def effective_rank(self) -> float:
        if not self.lambda_1 > 0:
            raise ArithmeticError("effective rank is undefined when the top eigenvalue is not positive")
        return self.trace / self.lambda_1

    def outlier_count(self, c: float) -> int:
        return outlier_census(self, c)

    def normalized(self) -> np.ndarray:
        return self.eigenvalues / self.lambda_1


def eig_sym(M, with_vectors: bool = False) -> SpectrumReport:
    """Full symmetric eigendecomposition (LAPACK tridiagonal reduction + divide and conquer)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(np.max(np.abs(M)), 1e-300)
    if np.max(np.abs(M - M.T)) > 1e-8 * scale:
        raise ValueError("matrix is not symmetric")
    S = 0.5 * (M + M.T)
    try:
        w, Q = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"symmetric eigensolver did not converge: {exc}") from exc
    fro = np.linalg.norm(S)
    if fro > 0 and np.linalg.norm((Q * w) @ Q.T - S) > 1e-8 * fro:
        raise ArithmeticError("eigendecomposition failed the reconstruction check")
    order = np.argsort(w)[::-1]
    return SpectrumReport(w[order], float(np.trace(S)), Q[:, order] if with_vectors else None)


def write_spectrum(report: SpectrumReport, path, comment: Optional[str] = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(["index", "eigenvalue", "normalized_eigenvalue"])
        for i, (lam, nl) in enumerate(zip(report.eigenvalues, report.normalized()), start=1):
            w.writerow([i, repr(float(lam)), repr(float(nl))])


def effective_rank(M) -> float:
    return eig_sym(M).effective_rank


def outlier_census(report: SpectrumReport, c: float) -> int:
    """Number of eigenvalues at least c * lambda_1; never more than eff / c."""
    if not 0 < c <= 1:
        raise ValueError("c must lie in (0, 1]")
    count = int(np.sum(report.eigenvalues >= c * report.lambda_1))
    assert count <= report.effective_rank / c * (1 + 1e-10) + 1e-10
    return count


@dataclass(frozen=True)
class EffectiveRankBounds:
    eff_K: float
    bound_constant: float
    eff_centered: float
    bound_centered: float
    eff_data: float

    @property
    def centered_ratio(self) -> float:
        return self.eff_centered / self.eff_data


def constant_term_bound(coeffs, X, slack: float = 1e-8) -> tuple[float, float]:
    """(eff(K), sum c / c_0); the first never exceeds the second."""
    c = _coeff_array(coeffs)
    if c[0] == 0:
        raise ValueError("c_0 = 0: the constant-term bound needs a positive constant coefficient")
    eff_K = effective_rank(assemble_gram(X, c))
    bound = float(c.sum() / c[0])
    if eff_K > bound + slack:
        raise ArithmeticError(f"effective-rank bound violated: eff(K)={eff_K:.6g} > {bound:.6g}")
    return eff_K, bound


def centered_bound(coeffs, X, slack: float = 1e-8) -> tuple[float, float, float]:
    """(eff(K - (c_0/n) 11^T), eff(X X^T) sum_{p>=1} c / c_1, eff(X X^T))."""
    c = _coeff_array(coeffs)
    if len(c) < 2 or c[1] == 0:
        raise ValueError("c_1 = 0: the centered bound needs a positive linear coefficient")
    Xa = _unit_rows(X)
    n = Xa.shape[0]
    eff_c = effective_rank(assemble_gram(Xa, c) - c[0] / n * np.ones((n, n)))
    eff_x = effective_rank(Xa @ Xa.T)
    bound = float(eff_x * c[1:].sum() / c[1])
    if eff_c > bound + slack:
        raise ArithmeticError(f"centered effective-rank bound violated: {eff_c:.6g} > {bound:.6g}")
    return eff_c, bound, eff_x


def effective_rank_bounds(coeffs, X, slack: float = 1e-8) -> EffectiveRankBounds:
    """eff(K) <= sum c / c_0 and eff(K - (c_0/n) 11^T) <= eff(X X^T) * sum_{p>=1} c / c_1."""
    eff_K, b0 = constant_term_bound(coeffs, X, slack)
    eff_c, b1, eff_x = centered_bound(coeffs, X, slack)
    return EffectiveRankBounds(eff_K, b0, eff_c, b1, eff_x)


def power_iteration(M: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Top eigenvalue of a PSD matrix with nonnegative entries, started from the all-ones direction."""
    n = M.shape[0]
    v = np.full(n, 1.0 / math.sqrt(n))
    lam = float(v @ M @ v)
    for _ in range(max_iter):
        w = M @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        new = float(v @ M @ v)
        if abs(new - lam) <= tol * max(abs(new), 1e-300):
            return new
        lam = new
    return lam


def integrate_to_infinity(f: Callable[[float], float], start: float) -> float:
    """int_start^inf f(x) dx via x = start / u, which maps the range onto (0, 1]."""
    if start <= 0:
        raise ValueError("start must be positive")
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(lambda u: f(start / u) * start / (u * u) if u > 0 else 0.0, 0.0, 1.0, limit=200)
        except integrate.IntegrationWarning as exc:
            raise ArithmeticError(f"tail integral did not converge: {exc}") from exc
    return val


CoeffSource = Union[Sequence[float], np.ndarray, Callable[[np.ndarray], np.ndarray]]

NUMERIC_TAIL_TERMS = 10**6


def tail_sum(coeffs: CoeffSource, m: int, tail: Optional[Callable[[int], float]] = None) -> float:
    """sum_{j >= m} c_j.

    Uses ``tail`` when given. A callable ``coeffs`` is summed to 1e6 terms and
    the remainder is bounded by the integral of c over [1e6 - 1, inf). A finite
    prefix is taken to be the whole series only if its last entry is zero.
    """
    if tail is not None:
        return float(tail(m))
    if callable(coeffs):
        j = np.arange(m, max(m, NUMERIC_TAIL_TERMS))
        head = float(math.fsum(np.asarray(coeffs(j), dtype=float))) if len(j) else 0.0
        start = max(m, NUMERIC_TAIL_TERMS)
        rem = integrate_to_infinity(lambda x: float(coeffs(np.array([x]))[0]), start - 1.0)
        if not (np.isfinite(rem) and np.isfinite(head)):
            raise ArithmeticError("coefficient tail does not converge numerically")
        return head + rem
    c = _coeff_array(coeffs)
    if c[-1] != 0:
        raise ValueError("a finite prefix needs an analytic tail function")
    return float(math.fsum(c[m:]))


def head_tail_bound(X, coeffs: CoeffSource, m: int, tail: Optional[Callable[[int], float]] = None) -> float:
    """Bound on lambda_k(K) for every k beyond the rank of the degree-(m-1) head.

    Equals ||G^{(.)m}||_2 / n * sum_{j >= m} c_j.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    G = unit_gram(X)
    n = G.shape[0]
    top = power_iteration(G**m) if m > 0 else float(n)
    return top / n * tail_sum(coeffs, m, tail)


@dataclass(frozen=True)
class RankBound:
    loose: float
    simplified: Optional[float]
    exact: int


def head_count(r: int, m: int) -> int:
    """1 + sum_{j=1}^{m-1} C(r+j-1, r-1), counting monomials of degree 1..m-1 in r variables plus the constant."""
    return 1 + sum(int(comb(r + j - 1, r - 1, exact=True)) for j in range(1, m))


def rank_bound(r: int, m: int) -> RankBound:
    """Upper bounds on rank(sum_{p<m} c_p G^{(.)p}) for rank-r G."""
    if r < 2:
        raise ValueError("rank bound needs r >= 2")
    if m < 1:
        raise ValueError("m must be >= 1")
    e2 = 2.0 * math.e
    loose = (
        1.0
        + min(r - 1, m - 1) * e2 ** (r - 1)
        + max(0, m - r) * (e2 / (r - 1)) ** (r - 1) * (m - 1) ** (r - 1)
    )
    simplified = 2.0 * m**r if m >= r >= 7 else None
    return RankBound(loose, simplified, head_count(r, m))


@dataclass(frozen=True)
class TailCheckRow:
    n: int
    r: int
    m: int
    lambda_n: float
    envelope: float
    trace_bound: float

    @property
    def ratio(self) -> float:
        return self.lambda_n / self.envelope


DECAYS = ("power", "sqrt-exp", "exp")


def decay_coefficients(decay: str, alpha: float, T: int) -> np.ndarray:
    """c_0 = 1 and c_p = p^-alpha, exp(-alpha sqrt p) or exp(-alpha p) for p >= 1."""
    p = np.arange(1, T + 1, dtype=float)
    if decay == "power":
        tail = p**-alpha
    elif decay == "sqrt-exp":
        tail = np.exp(-alpha * np.sqrt(p))
    elif decay == "exp":
        tail = np.exp(-alpha * p)
    else:
        raise ValueError(f"decay must be one of {DECAYS}")
    return np.concatenate([[1.0], tail])


def envelope(decay: str, alpha: float, n: int, r: int) -> float:
    """Predicted order of lambda_n for n points in a rank-r subspace."""
    if decay == "power":
        return n ** (-(alpha - 1.0) / r)
    a2 = 0.99 * alpha * 2.0 ** (-1.0 / (2 * r))
    if decay == "sqrt-exp":
        u = n ** (1.0 / (2 * r))
        return u * math.exp(-a2 * u)
    if decay == "exp":
        a2 = 0.99 * alpha * 2.0 ** (-1.0 / r)
        return math.exp(-a2 * n ** (1.0 / r))
    raise ValueError(f"decay must be one of {DECAYS}")


def tail_asymptote_check(
    X_family: Iterable[DataMatrix],
    decay: str,
    alpha: float,
    T: int = 400,
    require_m_ge_r: bool = True,
) -> list[TailCheckRow]:
    """Smallest eigenvalue of each Gram in a family against the predicted envelope.

    ``require_m_ge_r`` enforces m(n) = floor((n/2)^(1/r)) >= r, the regime where
    the envelope is proved; pass False to report ratios outside it.
    """
    c = decay_coefficients(decay, alpha, T)
    rows = []
    for X in X_family:
        n, r = X.n, X.rank_r
        m = int(math.floor((n / 2.0) ** (1.0 / r)))
        if require_m_ge_r and m < r:
            raise ValueError(f"n={n}, r={r}: m(n)={m} < r, outside the proved regime")
        lam = eig_sym(assemble_gram(X, c)).eigenvalues[-1]
        rows.append(TailCheckRow(n, r, m, float(lam), envelope(decay, alpha, n, r), float(c.sum() / n)))
    return rows
