"""Small dense linear algebra, Gaussian/mixture primitives, and a seeded RNG.

Everything downstream (motion models, filters, simulator, network) builds on
this module.  Matrices are plain ``numpy.ndarray`` objects; the closed-form
kernels here only cover the sizes the filters need (up to 3x3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# SplitMix64 constants (Steele, Lea, Flood 2014).
_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = 0xFFFFFFFFFFFFFFFF


class SingularMatrixError(ValueError):
    """Matrix is singular or not positive definite where it must be."""


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return 0.5 * (A + A^T); cheap guard against drift in covariances."""
    return 0.5 * (a + a.T)


def inverse_small(a: np.ndarray) -> np.ndarray:
    """Closed-form inverse for 1x1, 2x2 and 3x3 matrices.

    Raises
    ------
    SingularMatrixError
        If ``|det| < 1e-12 * scale`` where scale follows the magnitude of the
        entries, or the matrix is larger than 3x3.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n > 3:
        raise ValueError("closed-form inverse only implemented up to 3x3")
    scale = max(1.0, float(np.abs(a).max())) ** n
    if n == 1:
        det = a[0, 0]
        if abs(det) < 1e-12 * scale:
            raise SingularMatrixError(f"1x1 matrix with entry {det} is singular")
        return np.array([[1.0 / det]])
    if n == 2:
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        if abs(det) < 1e-12 * scale:
            raise SingularMatrixError(f"2x2 matrix is singular (det={det})")
        return np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]]) / det
    # 3x3 via adjugate / cofactor expansion
    c00 = a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]
    c01 = a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2]
    c02 = a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]
    det = a[0, 0] * c00 + a[0, 1] * c01 + a[0, 2] * c02
    if abs(det) < 1e-12 * scale:
        raise SingularMatrixError(f"3x3 matrix is singular (det={det})")
    c10 = a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2]
    c11 = a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]
    c12 = a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1]
    c20 = a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1]
    c21 = a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2]
    c22 = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    adj = np.array([[c00, c10, c20], [c01, c11, c21], [c02, c12, c22]])
    return adj / det


def cholesky_small(a: np.ndarray, psd_tol: float = 1e-9) -> np.ndarray:
    """Lower-triangular Cholesky factor for matrices up to 3x3.

    Tolerates positive *semi*-definite input: pivots within ``psd_tol`` of
    zero (relative to the trace) produce a zero row/column, so a zero
    covariance factors to the zero matrix.  Genuinely negative pivots raise.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n > 3:
        raise ValueError("cholesky_small only implemented up to 3x3")
    floor = psd_tol * max(1.0, float(np.trace(a)))
    lower = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - np.dot(lower[j, :j], lower[j, :j])
        if pivot < -floor:
            raise SingularMatrixError(f"matrix is not PSD (pivot {pivot} at {j})")
        if pivot <= floor:
            continue  # semi-definite direction: leave the column at zero
        lower[j, j] = math.sqrt(pivot)
        for i in range(j + 1, n):
            lower[i, j] = (a[i, j] - np.dot(lower[i, :j], lower[j, :j])) / lower[j, j]
    return lower


@dataclass
class GaussianNd:
    """Multivariate Gaussian with dense mean/covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.cov = np.asarray(self.cov, dtype=float)
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise ValueError(f"covariance shape {self.cov.shape} does not match dim {d}")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def validate(self, tol: float = 1e-9) -> "GaussianNd":
        scale = max(1.0, float(np.abs(self.cov).max()))
        if not np.allclose(self.cov, self.cov.T, atol=tol * scale, rtol=0.0):
            raise ValueError("covariance is not symmetric")
        eigvals = np.linalg.eigvalsh(symmetrize(self.cov))
        if eigvals.min() < -tol * max(1.0, float(np.trace(self.cov))):
            raise ValueError(f"covariance is not PSD (min eigenvalue {eigvals.min()})")
        return self


@dataclass
class GaussianMixture:
    """Finite Gaussian mixture; weights live on the probability simplex."""

    weights: np.ndarray
    components: list[GaussianNd]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(self.components) == 0:
            raise ValueError("mixture needs at least one component")
        if self.weights.shape[0] != len(self.components):
            raise ValueError("weight / component count mismatch")

    def validate(self, tol: float = 1e-9) -> "GaussianMixture":
        if self.weights.min() < -tol:
            raise ValueError("mixture weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > tol:
            raise ValueError(f"mixture weights sum to {self.weights.sum()}, not 1")
        return self

    @property
    def dim(self) -> int:
        return self.components[0].dim


def gaussian_log_pdf(x: np.ndarray, g: GaussianNd) -> float:
    """ln N(x | mean, cov) via the Cholesky factor of the covariance."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != g.dim:
        raise ValueError(f"point dim {x.shape[0]} does not match Gaussian dim {g.dim}")
    lower = cholesky_small(g.cov)
    diag = np.diag(lower)
    if np.any(diag <= 0.0):
        raise SingularMatrixError("covariance is not positive definite")
    # solve L y = (x - mean) by forward substitution
    diff = x - g.mean
    y = np.zeros_like(diff)
    for i in range(diff.shape[0]):
        y[i] = (diff[i] - np.dot(lower[i, :i], y[:i])) / lower[i, i]
    log_det = 2.0 * float(np.sum(np.log(diag)))
    return -0.5 * (g.dim * math.log(TWO_PI) + log_det + float(np.dot(y, y)))


def mixture_log_pdf(x: np.ndarray, m: GaussianMixture) -> float:
    """ln sum_l w_l N(x | mu_l, cov_l), stabilized with log-sum-exp."""
    terms = []
    for w, comp in zip(m.weights, m.components):
        if w <= 0.0:
            continue
        terms.append(math.log(w) + gaussian_log_pdf(x, comp))
    if not terms:
        return -math.inf
    peak = max(terms)
    return peak + math.log(sum(math.exp(t - peak) for t in terms))


def moment_match(m: GaussianMixture) -> GaussianNd:
    """Collapse a mixture to a single Gaussian with matching mean/covariance."""
    mean = np.zeros(m.dim)
    for w, comp in zip(m.weights, m.components):
        mean = mean + w * comp.mean
    cov = np.zeros((m.dim, m.dim))
    for w, comp in zip(m.weights, m.components):
        diff = comp.mean - mean
        cov = cov + w * (comp.cov + np.outer(diff, diff))
    return GaussianNd(mean, cov)


@dataclass
class Rng:
    """Deterministic counter-based generator (SplitMix64 core).

    The n-th 64-bit output is ``mix64(seed + n * GAMMA)`` where ``mix64`` is
    the SplitMix64 finalizer and GAMMA the golden-ratio increment, so the
    stream is a pure function of (seed, draw count) and trivially portable.
    Normal variates use the basic Box-Muller transform, consuming exactly two
    uniforms per draw (the sine branch is discarded).
    """

    seed: int
    counter: int = field(default=0)

    @staticmethod
    def _mix64(z: int) -> int:
        z &= _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def next_u64(self) -> int:
        self.counter += 1
        return self._mix64((self.seed + self.counter * _GAMMA) & _MASK64)

    def uniform(self) -> float:
        """Uniform draw in [0, 1) with 53 random mantissa bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def normal(self) -> float:
        """Standard normal via Box-Muller (cosine branch)."""
        u1 = 1.0 - self.uniform()  # (0, 1], keeps the log finite
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(TWO_PI * u2)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)])

    def uniform_int(self, low: int, high: int) -> int:
        """Uniform integer in [low, high] inclusive (rejection-free modulo of
        a 53-bit uniform; bias is negligible for the tiny ranges used here)."""
        span = high - low + 1
        if span <= 0:
            raise ValueError(f"empty integer range [{low}, {high}]")
        return low + int(self.uniform() * span)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle driven by this stream."""
        for i in range(len(items) - 1, 0, -1):
            j = self.uniform_int(0, i)
            items[i], items[j] = items[j], items[i]

    def derive(self, key: int) -> "Rng":
        """Independent child stream for substream ``key`` (per-trajectory use)."""
        return Rng(self._mix64((self.seed ^ self._mix64((key + 1) * _GAMMA)) & _MASK64))


def sample_gaussian(rng: Rng, g: GaussianNd) -> np.ndarray:
    """Draw from a (possibly semi-definite) Gaussian via its Cholesky factor."""
    lower = cholesky_small(g.cov)
    z = rng.normals(g.dim)
    return g.mean + lower @ z
