"""
Radial kernels of positive type, collocation (Gram) matrices and the algebra
of finite kernel expansions f = sum_j alpha_j K(c_j, .).

Every kernel here is normalised so that K(x, x) = 1.  Distances are always
formed as ||x - y|| from explicit differences (never through the
||x||^2 + ||y||^2 - 2<x, y> shortcut) so that K(x, y) == K(y, x) bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .bessel import kve

__all__ = [
    "Kernel",
    "RestrictedKernel",
    "GramMatrix",
    "FiniteSpanFunction",
    "matern_closed_form",
    "matern_bessel",
    "pairwise_distances",
    "gram",
    "eval_kernel",
    "eval_span",
    "native_norm",
    "JITTER",
]

JITTER = 1e-10
FAMILIES = ("matern", "gaussian", "radial")


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if not np.all(np.isfinite(x)):
        raise ValueError("kernel inputs must be finite")
    return x


def pairwise_distances(X, Y) -> np.ndarray:
    """Euclidean distance matrix between the rows of ``X`` (N, d) and ``Y`` (M, d)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    diff = X[:, None, :] - Y[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def matern_closed_form(nu: float, s) -> np.ndarray:
    """
    Normalised Matern profile for half-integer ``nu = p + 1/2``.

    K(s) = exp(-s) p!/(2p)! sum_{i=0}^{p} (p+i)!/(i!(p-i)!) (2s)^(p-i),
    which gives exp(-s), (1+s)exp(-s) and (1+s+s^2/3)exp(-s) for p = 0, 1, 2.
    """
    p = nu - 0.5
    if p < 0 or abs(p - round(p)) > 1e-12:
        raise ValueError(f"closed form needs half-integer nu, got {nu}")
    p = int(round(p))
    s = np.asarray(s, dtype=float)
    poly = np.zeros_like(s)
    for i in range(p + 1):
        coef = math.factorial(p + i) / (math.factorial(i) * math.factorial(p - i))
        poly = poly * (2.0 * s) + coef  # Horner, highest power of 2s first
    return math.factorial(p) / math.factorial(2 * p) * poly * np.exp(-s)


def matern_bessel(nu: float, s) -> np.ndarray:
    """
    Normalised Matern profile ``2^(1-nu)/Gamma(nu) s^nu K_nu(s)`` from the
    Bessel function, with the removable singularity at s = 0 set to 1.
    """
    if not nu > 0:
        raise ValueError("Matern smoothness nu must be positive")
    s = np.asarray(s, dtype=float)
    out = np.ones_like(s)
    pos = s > 0
    if pos.any():
        sp = s[pos]
        logpref = (1.0 - nu) * math.log(2.0) - math.lgamma(nu) + nu * np.log(sp) - sp
        out[pos] = np.exp(logpref) * kve(nu, sp)
    return out


def _is_half_integer(nu: float) -> bool:
    return abs(nu - 0.5 - round(nu - 0.5)) < 1e-12 and nu <= 20.5


@dataclass(frozen=True)
class Kernel:
    """
    Normalised radial kernel K(x, y) = k(||x - y|| / length_scale).

    Parameters
    ----------
    family : {"matern", "gaussian", "radial"}
    nu : float
        Matern smoothness (nu = r - d/2 for a Sobolev space of order r).
    length_scale : float
    profile : callable, optional
        Vectorised radial profile phi(xi) for ``family="radial"``; values are
        divided by phi(0) so the kernel stays normalised.
    """

    family: str = "matern"
    nu: float = 1.5
    length_scale: float = 0.5
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not (math.isfinite(self.length_scale) and self.length_scale > 0):
            raise ValueError("length_scale must be positive")
        if self.family == "matern" and not (math.isfinite(self.nu) and self.nu > 0):
            raise ValueError("Matern smoothness nu must be positive")
        if self.family == "radial" and self.profile is None:
            raise ValueError("radial family needs a profile callable")

    def radial(self, xi) -> np.ndarray:
        """Kernel value as a function of the distance ``xi >= 0``."""
        xi = np.asarray(xi, dtype=float)
        if not np.all(np.isfinite(xi)):
            raise ValueError("kernel inputs must be finite")
        s = xi / self.length_scale
        if self.family == "matern":
            if _is_half_integer(self.nu):
                return matern_closed_form(self.nu, s)
            return matern_bessel(self.nu, s)
        if self.family == "gaussian":
            return np.exp(-0.5 * s * s)
        phi0 = float(np.asarray(self.profile(np.zeros(1)))[0])
        return np.asarray(self.profile(xi), dtype=float) / phi0

    def __call__(self, x, y) -> np.ndarray:
        x = _as_points(x)
        y = _as_points(y)
        diff = x - y
        return self.radial(np.sqrt(np.sum(diff * diff, axis=-1)))

    def matrix(self, X, Y) -> np.ndarray:
        """Cross matrix ``[K(x_i, y_j)]`` between point sets."""
        X = _as_points(X)
        Y = _as_points(Y)
        return self.radial(pairwise_distances(X, Y))

    def floor(self, eps: float) -> float:
        """min over 0 <= xi <= eps of K(xi)^2; equals K(eps)^2 for monotone profiles."""
        xi = np.linspace(0.0, eps, 257)
        return float(np.min(self.radial(xi) ** 2))


@dataclass(frozen=True)
class RestrictedKernel:
    """
    A kernel on R^d restricted to a subset ``domain`` (e.g. an observed limit
    set).  Values are exactly those of ``base``; only the admissible centers
    change.
    """

    base: Kernel
    domain: str = "M"

    def __call__(self, x, y):
        return self.base(x, y)

    def matrix(self, X, Y):
        return self.base.matrix(X, Y)

    def radial(self, xi):
        return self.base.radial(xi)

    def floor(self, eps):
        return self.base.floor(eps)

    @property
    def length_scale(self):
        return self.base.length_scale


@dataclass(frozen=True)
class GramMatrix:
    centers: np.ndarray
    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def jittered(self) -> np.ndarray:
        K = self.entries
        return K + JITTER * np.trace(K) / self.n * np.eye(self.n)

    def cholesky(self) -> np.ndarray:
        """
        Lower Cholesky factor.  The plain matrix is tried first; the jittered
        one only when that factorisation breaks down.
        """
        try:
            return np.linalg.cholesky(self.entries)
        except np.linalg.LinAlgError:
            pass
        try:
            return np.linalg.cholesky(self.jittered())
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                "Gram matrix is not positive definite after jitter; centers too close"
            ) from exc

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def solve(self, rhs) -> np.ndarray:
        L = self.cholesky()
        y = solve_triangular(L, rhs, lower=True)
        return solve_triangular(L.T, y, lower=False)


def eval_kernel(k: Kernel, x, y) -> float:
    return float(k(x, y))


def gram(k, centers) -> GramMatrix:
    """Assemble the collocation matrix of ``k`` over ``centers`` (n, d)."""
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    if C.shape[0] == 0:
        raise ValueError("need at least one center")
    if not np.all(np.isfinite(C)):
        raise ValueError("centers must be finite")
    D = pairwise_distances(C, C)
    if C.shape[0] > 1:
        off = D[~np.eye(C.shape[0], dtype=bool)]
        if np.min(off) == 0.0:
            warnings.warn("duplicate centers: Gram matrix is singular", RuntimeWarning, stacklevel=2)
    K = k.radial(D)
    K = 0.5 * (K + K.T)
    return GramMatrix(centers=C, entries=K)


@dataclass(frozen=True)
class FiniteSpanFunction:
    """f = sum_j coefficients[j] * K(centers[j], .)"""

    kernel: Kernel
    centers: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.centers, dtype=float))
        a = np.asarray(self.coefficients, dtype=float).ravel()
        if C.shape[0] != a.shape[0]:
            raise ValueError(
                f"{C.shape[0]} centers but {a.shape[0]} coefficients"
            )
        object.__setattr__(self, "centers", C)
        object.__setattr__(self, "coefficients", a)

    def __call__(self, x) -> np.ndarray:
        x = _as_points(x)
        single = x.ndim == 1
        Phi = self.kernel.matrix(np.atleast_2d(x), self.centers)
        out = Phi @ self.coefficients
        return out[0] if single else out


def eval_span(f: FiniteSpanFunction, x):
    return f(x)


def native_norm(f: FiniteSpanFunction, K: GramMatrix) -> float:
    """RKHS norm sqrt(alpha^T K alpha) of a finite expansion."""
    a = f.coefficients
    if K.n != a.shape[0]:
        raise ValueError(f"Gram is {K.n}x{K.n} but f has {a.shape[0]} coefficients")
    q = float(a @ K.entries @ a)
    return math.sqrt(max(q, 0.0))
