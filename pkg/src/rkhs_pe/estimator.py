"""
Finite-dimensional RKHS-embedding estimator.

Plant (known A, B, known part g0; unknown scalar f):

    x'     = A x + g0(x) + B f(x)
    xhat'  = A xhat + g0(x) + B Phi(x)^T alphahat
    alpha' = Gamma^{-1} Phi(x) B^T P (x - xhat)

with Phi(x)_j = K(c_j, x) and P the solution of P A + A^T P = -Q.  With
xtilde = x - xhat and alphatilde = alpha* - alphahat the function
V = xtilde^T P xtilde + alphatilde^T Gamma alphatilde satisfies
V' = -xtilde^T Q xtilde whenever f = Phi^T alpha*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .dynamics import BLOWUP, DivergenceError, Trajectory, VectorField, _n_steps
from .io import write_csv
from .persistence import IndexingSet, trapezoid_weights, window_indices

try:  # the coupled loop is ~50x faster compiled; plain numpy is the fallback
    from numba import njit as _njit
except ImportError:  # pragma: no cover
    _njit = None

__all__ = [
    "LyapunovError",
    "PlantSpec",
    "EstimatorConfig",
    "EstimatorRun",
    "GridSpec",
    "ErrorField",
    "lyapunov_solve",
    "regressor",
    "run_estimator",
    "function_error_field",
    "classical_pe_matrix",
    "projection_coefficients",
]


class LyapunovError(np.linalg.LinAlgError):
    pass


def _is_hurwitz(A) -> bool:
    return bool(np.all(np.linalg.eigvals(A).real < 0))


def _require_spd(M, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(M)[0] <= 0:
        raise ValueError(f"{name} must be positive definite")
    return M


def lyapunov_solve(A, Q) -> np.ndarray:
    """
    Solve P A + A^T P = -Q for Hurwitz ``A`` and SPD ``Q``.

    Bartels-Stewart (scipy) followed by one step of residual correction.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = _require_spd(Q, "Q")
    if A.shape != Q.shape:
        raise ValueError(f"A is {A.shape}, Q is {Q.shape}")
    if not _is_hurwitz(A):
        raise LyapunovError("A is not Hurwitz; Lyapunov equation has no SPD solution")
    P = solve_continuous_lyapunov(A.T, -Q)
    P = 0.5 * (P + P.T)
    R = P @ A + A.T @ P + Q
    if np.linalg.norm(R) > 1e-14 * np.linalg.norm(Q):
        dP = solve_continuous_lyapunov(A.T, -R)
        P = P + 0.5 * (dP + dP.T)
    if not np.all(np.isfinite(P)) or np.linalg.eigvalsh(P)[0] <= 0:
        raise LyapunovError("Lyapunov solve broke down")
    return P


def regressor(centers, kernel, x) -> np.ndarray:
    """Phi(x) = (K(c_1, x), ..., K(c_n, x))."""
    C = centers.centers if isinstance(centers, IndexingSet) else np.atleast_2d(centers)
    if C.shape[0] == 0:
        raise ValueError("need at least one center")
    x = np.asarray(x, dtype=float)
    out = kernel.matrix(np.atleast_2d(x), C)
    return out[0] if x.ndim == 1 else out


def _zero_known(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class PlantSpec:
    """
    x' = A x + known(x) + B f(x) with A Hurwitz.

    ``f`` and ``known`` must be vectorised over a leading batch axis.
    """

    A: np.ndarray
    B: np.ndarray
    f: Callable
    known: Callable = _zero_known

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(-1)
        if A.shape != (B.size, B.size):
            raise ValueError(f"A is {A.shape} but B has {B.size} rows")
        if not _is_hurwitz(A):
            raise ValueError("A must be Hurwitz")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def dim(self) -> int:
        return self.B.size

    def rhs(self, x):
        x = np.asarray(x, dtype=float)
        fx = np.asarray(self.f(x), dtype=float)
        return x @ self.A.T + self.known(x) + fx[..., None] * self.B

    @classmethod
    def from_field(cls, vf: VectorField, A=None, f=None) -> "PlantSpec":
        """
        Recast ``x' = g0(x) + B f(x)`` with a chosen Hurwitz ``A`` (default -I);
        the known part becomes g0(x) - A x.  ``f`` replaces the field's own
        unknown function when given.
        """
        if vf.known is None or vf.unknown_scalar is None or vf.unknown_direction is None:
            raise ValueError(f"field {vf.name} has no known/unknown decomposition")
        A = -np.eye(vf.dim) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
        g0 = vf.known

        def known(x):
            x = np.asarray(x, dtype=float)
            return g0(x) - x @ A.T

        return cls(A=A, B=np.asarray(vf.unknown_direction, dtype=float), f=vf.unknown_scalar if f is None else f, known=known)


@dataclass(frozen=True)
class EstimatorConfig:
    Q: np.ndarray
    Gamma: np.ndarray
    centers: IndexingSet

    def __post_init__(self):
        object.__setattr__(self, "Q", _require_spd(self.Q, "Q"))
        G = _require_spd(self.Gamma, "Gamma")
        if G.shape[0] != len(self.centers):
            raise ValueError(f"Gamma is {G.shape}, but there are {len(self.centers)} centers")
        object.__setattr__(self, "Gamma", G)

    @classmethod
    def default(cls, centers: IndexingSet, gamma: float = 1.0, q: float = 1.0) -> "EstimatorConfig":
        d = centers.dim
        return cls(Q=q * np.eye(d), Gamma=gamma * np.eye(len(centers)), centers=centers)

    @property
    def kernel(self):
        return self.centers.kernel


@dataclass
class EstimatorRun:
    times: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    alphahat: np.ndarray
    plant: PlantSpec
    config: EstimatorConfig
    P: np.ndarray
    step: float

    @property
    def xtilde(self) -> np.ndarray:
        return self.x - self.xhat

    @property
    def state_error_norm(self) -> np.ndarray:
        return np.linalg.norm(self.xtilde, axis=1)

    def trajectory(self) -> Trajectory:
        return Trajectory(self.times, self.x, self.step)

    def fhat(self, points, index: int = -1) -> np.ndarray:
        """Estimate f_hat(t_index, .) evaluated at ``points`` (m, d)."""
        Phi = regressor(self.config.centers, self.config.kernel, np.atleast_2d(points))
        return Phi @ self.alphahat[index]

    def lyapunov_values(self, alpha_star) -> np.ndarray:
        """V(t) = xtilde^T P xtilde + alphatilde^T Gamma alphatilde along the run."""
        xt = self.xtilde
        at = np.asarray(alpha_star, dtype=float)[None, :] - self.alphahat
        return np.einsum("ti,ij,tj->t", xt, self.P, xt) + np.einsum("ti,ij,tj->t", at, self.config.Gamma, at)

    def to_csv(self, path, stride: int = 1) -> int:
        d = self.x.shape[1]
        n = self.alphahat.shape[1]
        sl = slice(None, None, max(1, int(stride)))
        idx = np.arange(self.times.size)[sl]
        if idx[-1] != self.times.size - 1:
            idx = np.append(idx, self.times.size - 1)
        header = (
            ["t"]
            + [f"x{i + 1}" for i in range(d)]
            + [f"xhat{i + 1}" for i in range(d)]
            + [f"alphahat{j + 1}" for j in range(n)]
        )
        cols = [self.times[idx], *self.x[idx].T, *self.xhat[idx].T, *self.alphahat[idx].T]
        return write_csv(path, header, cols)


def projection_coefficients(truth: Callable, centers: IndexingSet) -> np.ndarray:
    """alpha* solving K alpha* = (f(c_j))_j, the interpolant of f in H_Omega."""
    return centers.gram.solve(np.asarray(truth(centers.centers), dtype=float))


def _rk4_with_stages(rhs, x0, n, h, blowup=BLOWUP):
    d = x0.size
    X = np.empty((n + 1, d))
    S = np.empty((n, 4, d))
    x = x0.copy()
    X[0] = x
    for k in range(n):
        k1 = rhs(x)
        s2 = x + 0.5 * h * k1
        k2 = rhs(s2)
        s3 = x + 0.5 * h * k2
        k3 = rhs(s3)
        s4 = x + h * k3
        k4 = rhs(s4)
        S[k, 0] = x
        S[k, 1] = s2
        S[k, 2] = s3
        S[k, 3] = s4
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.max(np.abs(x)) <= blowup:
            raise DivergenceError(f"plant diverged at t={(k + 1) * h:.6g}")
        X[k + 1] = x
    return X, S


def _estimator_chunk(A, B, w, xh, a, Sx, Sk, Sphi, SMphi, h, XH, AL):
    # one RK4 step per row of the stage arrays; plant stage states are given
    half = 0.5 * h
    for k in range(Sx.shape[0]):
        e = w @ (Sx[k, 0] - xh)
        dx1 = A @ xh + Sk[k, 0] + B * (Sphi[k, 0] @ a)
        da1 = SMphi[k, 0] * e
        y = xh + half * dx1
        b = a + half * da1
        e = w @ (Sx[k, 1] - y)
        dx2 = A @ y + Sk[k, 1] + B * (Sphi[k, 1] @ b)
        da2 = SMphi[k, 1] * e
        y = xh + half * dx2
        b = a + half * da2
        e = w @ (Sx[k, 2] - y)
        dx3 = A @ y + Sk[k, 2] + B * (Sphi[k, 2] @ b)
        da3 = SMphi[k, 2] * e
        y = xh + h * dx3
        b = a + h * da3
        e = w @ (Sx[k, 3] - y)
        dx4 = A @ y + Sk[k, 3] + B * (Sphi[k, 3] @ b)
        da4 = SMphi[k, 3] * e
        xh = xh + (h / 6.0) * (dx1 + 2.0 * dx2 + 2.0 * dx3 + dx4)
        a = a + (h / 6.0) * (da1 + 2.0 * da2 + 2.0 * da3 + da4)
        XH[k] = xh
        AL[k] = a
    return xh, a


if _njit is not None:
    _estimator_chunk_fast = _njit(cache=True)(_estimator_chunk)
else:  # pragma: no cover
    _estimator_chunk_fast = _estimator_chunk


def run_estimator(
    plant: PlantSpec,
    cfg: EstimatorConfig,
    x0,
    xhat0=None,
    alpha0=None,
    T: float = 200.0,
    h: float = 1e-3,
    chunk: int = 4096,
    jit: bool = True,
) -> EstimatorRun:
    """
    Integrate plant, state estimate and coefficient estimate with one RK4
    step size.  The plant does not depend on the estimator, so its RK4 stage
    states are computed first and the learning law sees x at exactly those
    stage points; the result is identical to integrating the coupled system.
    """
    d = plant.dim
    x0 = np.array(x0, dtype=float).ravel()
    if x0.size != d:
        raise ValueError(f"x0 has {x0.size} entries, plant has dimension {d}")
    xh = x0.copy() if xhat0 is None else np.array(xhat0, dtype=float).ravel()
    nc = len(cfg.centers)
    a = np.zeros(nc) if alpha0 is None else np.array(alpha0, dtype=float).ravel()
    if xh.size != d or a.size != nc:
        raise ValueError("initial estimate dimensions do not match the plant/centers")
    if cfg.centers.dim != d:
        raise ValueError(f"centers live in R^{cfg.centers.dim}, plant in R^{d}")

    P = lyapunov_solve(plant.A, cfg.Q)
    w = plant.B @ P  # B^T P as a row
    Ginv = np.linalg.inv(cfg.Gamma)
    n = _n_steps(T, h)

    X, S = _rk4_with_stages(plant.rhs, x0, n, h)

    XH = np.empty((n + 1, d))
    AL = np.empty((n + 1, nc))
    XH[0] = xh
    AL[0] = a
    step_fn = _estimator_chunk_fast if jit else _estimator_chunk
    A = np.ascontiguousarray(plant.A)
    B = np.ascontiguousarray(plant.B)
    for k0 in range(0, n, chunk):
        k1 = min(n, k0 + chunk)
        Sx = np.ascontiguousarray(S[k0:k1])
        flat = Sx.reshape(-1, d)
        Sk = np.ascontiguousarray(np.asarray(plant.known(flat), dtype=float).reshape(Sx.shape))
        Phi = cfg.kernel.matrix(flat, cfg.centers.centers)
        Sphi = np.ascontiguousarray(Phi.reshape(k1 - k0, 4, nc))
        SMphi = np.ascontiguousarray((Phi @ Ginv.T).reshape(k1 - k0, 4, nc))
        xh, a = step_fn(A, B, w, xh, a, Sx, Sk, Sphi, SMphi, h, XH[k0 + 1 : k1 + 1], AL[k0 + 1 : k1 + 1])
        if not (np.all(np.isfinite(xh)) and np.all(np.isfinite(a))) or np.max(np.abs(xh)) > BLOWUP:
            raise DivergenceError(f"estimator diverged before t={k1 * h:.6g}")

    return EstimatorRun(
        times=h * np.arange(n + 1), x=X, xhat=XH, alphahat=AL, plant=plant, config=cfg, P=P, step=h
    )


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid on [xmin, xmax] x [ymin, ymax]; points are row-major with x fastest."""

    xmin: float = -1.5
    xmax: float = 1.5
    ymin: float = -1.5
    ymax: float = 1.5
    nx: int = 200
    ny: int = 200

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one point per axis")
        if not (self.xmax >= self.xmin and self.ymax >= self.ymin):
            raise ValueError("grid bounds are inverted")

    def points(self) -> np.ndarray:
        gx = np.linspace(self.xmin, self.xmax, self.nx)
        gy = np.linspace(self.ymin, self.ymax, self.ny)
        PX, PY = np.meshgrid(gx, gy)  # rows follow y, columns x
        return np.column_stack([PX.ravel(), PY.ravel()])


@dataclass
class ErrorField:
    points: np.ndarray
    err: np.ndarray

    def to_csv(self, path) -> int:
        return write_csv(path, ["px", "py", "err"], [self.points[:, 0], self.points[:, 1], self.err])

    def sup_over(self, mask) -> float:
        return float(np.max(self.err[mask]))


def function_error_field(run: EstimatorRun, truth: Callable, grid: GridSpec, index: int = -1) -> ErrorField:
    """|f(p) - f_hat(t_index, p)| on the grid points."""
    pts = grid.points()
    if run.x.shape[1] != 2:
        raise ValueError("error fields are defined for planar systems")
    err = np.abs(np.asarray(truth(pts), dtype=float) - run.fhat(pts, index))
    return ErrorField(points=pts, err=err)


def classical_pe_matrix(traj: Trajectory, centers, kernel, t: float, delta: float, B=None) -> np.ndarray:
    """
    int_t^{t+delta} Phi(x) B^T B Phi(x)^T dtau for the regressor matrix
    B Phi(x)^T (B = 1 gives the scalar-regressor case), trapezoid rule,
    accumulated sample by sample.
    """
    C = centers.centers if isinstance(centers, IndexingSet) else np.atleast_2d(centers)
    scale = 1.0 if B is None else float(np.dot(np.ravel(B), np.ravel(B)))
    i0, i1 = window_indices(traj, t, delta)
    w = trapezoid_weights(traj.times[i0 : i1 + 1])
    n = C.shape[0]
    out = np.zeros((n, n))
    for wk, xk in zip(w, traj.states[i0 : i1 + 1]):
        phi = kernel(C, xk)
        out += wk * np.outer(phi, phi)
    return scale * out
