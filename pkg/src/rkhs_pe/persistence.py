"""
Numerical persistence-of-excitation analysis for an indexing set Omega.

For f = sum_j alpha_j K(c_j, .) in H_Omega the excitation over a window is

    int_t^{t+Delta} |f(x(tau))|^2 dtau = alpha^T G alpha,
    G_ij = int_t^{t+Delta} K(c_i, x(tau)) K(c_j, x(tau)) dtau,

and ||f||^2 = alpha^T K_Omega alpha, so the sharpest PE constants over a
window are the extreme eigenvalues of the pencil (G, K_Omega).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial import cKDTree

from .dynamics import Trajectory, estimate_period
from .io import write_csv
from .kernels import GramMatrix, gram, pairwise_distances

__all__ = [
    "IndexingSet",
    "PEReport",
    "VisitationReport",
    "window_indices",
    "trapezoid_weights",
    "window_schedule",
    "pe_window_integral",
    "pe_bounds",
    "pe_scan",
    "visitation_scan",
    "density_check",
    "limit_set_membership",
]

PE_THRESHOLD = 1e-8


@dataclass(frozen=True)
class IndexingSet:
    """Finite set of pairwise distinct centers and the kernel defining H_Omega."""

    centers: np.ndarray
    kernel: object
    gram: GramMatrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if C.shape[0] == 0:
            raise ValueError("indexing set is empty")
        if C.shape[0] > 1:
            D = pairwise_distances(C, C)
            if np.min(D[~np.eye(C.shape[0], dtype=bool)]) <= 0.0:
                raise ValueError("indexing set centers must be pairwise distinct")
        object.__setattr__(self, "centers", C)
        object.__setattr__(self, "gram", gram(self.kernel, C))

    def __len__(self):
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def regressors(self, X) -> np.ndarray:
        """Rows K(c_j, x_i) for each state x_i."""
        return self.kernel.matrix(np.atleast_2d(X), self.centers)

    def union(self, extra) -> "IndexingSet":
        return IndexingSet(np.vstack([self.centers, np.atleast_2d(extra)]), self.kernel)


def window_indices(traj: Trajectory, t: float, delta: float) -> tuple[int, int]:
    """Grid indices closest to ``t`` and ``t + delta``; the window must lie in the record."""
    times = traj.times
    tol = 1e-9 * max(traj.step, 1e-300) + 1e-12 * max(abs(times[0]), abs(times[-1]))
    if delta <= 0:
        raise ValueError("window length must be positive")
    if t < times[0] - tol or t + delta > times[-1] + traj.step * 0.5 + tol:
        raise ValueError(
            f"window [{t:g}, {t + delta:g}] outside trajectory span [{times[0]:g}, {times[-1]:g}]"
        )
    i0 = int(np.clip(np.searchsorted(times, t - 0.5 * traj.step), 0, times.size - 1))
    if i0 + 1 < times.size and abs(times[i0 + 1] - t) < abs(times[i0] - t):
        i0 += 1
    i1 = int(np.clip(np.searchsorted(times, t + delta - 0.5 * traj.step), 0, times.size - 1))
    if i1 + 1 < times.size and abs(times[i1 + 1] - t - delta) < abs(times[i1] - t - delta):
        i1 += 1
    return i0, i1


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    w = np.zeros_like(times)
    if times.size > 1:
        dt = np.diff(times)
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt
    return w


def window_schedule(traj: Trajectory, T: float, delta: float, stride: float) -> np.ndarray:
    if stride <= 0 or delta <= 0:
        raise ValueError("window length and stride must be positive")
    last = traj.t_final - delta + 1e-9 * traj.step
    if T > last:
        raise ValueError(
            f"empty window schedule: T={T:g} + Delta={delta:g} exceeds final time {traj.t_final:g}"
        )
    count = int(math.floor((last - T) / stride + 1e-9)) + 1
    return T + stride * np.arange(count)


def _gram_integral(Phi: np.ndarray, w: np.ndarray) -> np.ndarray:
    G = Phi.T @ (w[:, None] * Phi)
    return 0.5 * (G + G.T)


def pe_window_integral(traj: Trajectory, omega: IndexingSet, t: float, delta: float) -> np.ndarray:
    """G_ij = int_t^{t+delta} K(c_i, x) K(c_j, x) dtau by the trapezoid rule on the grid."""
    i0, i1 = window_indices(traj, t, delta)
    Phi = omega.regressors(traj.states[i0 : i1 + 1])
    return _gram_integral(Phi, trapezoid_weights(traj.times[i0 : i1 + 1]))


def pe_bounds(G, K) -> tuple[float, float]:
    """
    Extreme generalized eigenvalues of the pencil (G, K).

    K is Cholesky-factored (jitter is added only if the plain factorisation
    fails) and the symmetric matrix L^{-1} G L^{-T} is diagonalised.
    """
    G = np.asarray(G, dtype=float)
    if isinstance(K, GramMatrix):
        L = K.cholesky()
    else:
        K = np.asarray(K, dtype=float)
        L = GramMatrix(centers=np.empty((K.shape[0], 0)), entries=K).cholesky()
    if G.shape != (L.shape[0], L.shape[0]):
        raise ValueError(f"G has shape {G.shape}, Gram is {L.shape}")
    Y = solve_triangular(L, G, lower=True)
    M = solve_triangular(L, Y.T, lower=True)
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))
    return float(lam[0]), float(lam[-1])


@dataclass
class PEReport:
    T: float
    delta: float
    stride: float
    starts: np.ndarray
    lam_min: np.ndarray
    lam_max: np.ndarray
    threshold: float = PE_THRESHOLD
    mu: Optional[np.ndarray] = None
    notes: list = field(default_factory=list)

    @property
    def gamma1(self) -> float:
        return float(np.min(self.lam_min))

    @property
    def gamma2(self) -> float:
        return float(np.max(self.lam_max))

    @property
    def verdict(self) -> bool:
        """PE holds numerically when gamma1 exceeds ``threshold * gamma2``."""
        return self.gamma2 > 0 and self.gamma1 > self.threshold * self.gamma2

    def to_csv(self, path) -> int:
        mu = self.mu if self.mu is not None else np.full_like(self.starts, np.nan)
        return write_csv(
            path,
            ["t_start", "lambda_min", "lambda_max", "mu_visitation"],
            [self.starts, self.lam_min, self.lam_max, mu],
        )

    def summary(self) -> str:
        lines = [
            "[pe-report]",
            f"verdict = {'PE' if self.verdict else 'NOT-PE'}",
            f"gamma1 = {self.gamma1:.17g}",
            f"gamma2 = {self.gamma2:.17g}",
            f"T = {self.T:.17g}",
            f"Delta = {self.delta:.17g}",
            f"stride = {self.stride:.17g}",
            f"windows = {self.starts.size}",
            f"threshold = {self.threshold:.3g} (relative to gamma2)",
        ]
        lines.extend(f"note = {n}" for n in self.notes)
        return "\n".join(lines)


def pe_scan(
    traj: Trajectory,
    omega: IndexingSet,
    T: float,
    delta: Optional[float] = None,
    stride: Optional[float] = None,
    threshold: float = PE_THRESHOLD,
) -> PEReport:
    """
    Slide windows [t, t + delta] for t = T, T + stride, ... and record the
    pencil extremes of each.  ``delta`` defaults to one recurrence period of
    the tail after ``T``; ``stride`` defaults to ``delta / 2``.
    """
    notes = []
    if delta is None:
        delta = estimate_period(traj, T)
        if delta is None:
            raise ValueError("no recurrence found after T; pass delta explicitly")
        notes.append(f"Delta set to one estimated period ({delta:.6g})")
    if stride is None:
        stride = 0.5 * delta
    starts = window_schedule(traj, T, delta, stride)
    i_first = window_indices(traj, starts[0], delta)[0]
    i_last = window_indices(traj, starts[-1], delta)[1]
    Phi = omega.regressors(traj.states[i_first : i_last + 1])
    L = omega.gram.cholesky()
    lo = np.empty(starts.size)
    hi = np.empty(starts.size)
    for k, t in enumerate(starts):
        i0, i1 = window_indices(traj, t, delta)
        G = _gram_integral(Phi[i0 - i_first : i1 - i_first + 1], trapezoid_weights(traj.times[i0 : i1 + 1]))
        Y = solve_triangular(L, G, lower=True)
        M = solve_triangular(L, Y.T, lower=True)
        lam = np.linalg.eigvalsh(0.5 * (M + M.T))
        lo[k], hi[k] = lam[0], lam[-1]
    return PEReport(T=T, delta=delta, stride=stride, starts=starts, lam_min=lo, lam_max=hi, threshold=threshold, notes=notes)


@dataclass
class VisitationReport:
    eps: float
    delta: float
    starts: np.ndarray
    mu: np.ndarray
    kernel_floor: float

    @property
    def gamma_eps(self) -> float:
        return float(np.min(self.mu))

    @property
    def lower_bound(self) -> float:
        """gamma_eps * min_{xi <= eps} K(xi)^2, the singleton PE lower bound."""
        return self.gamma_eps * self.kernel_floor


def visitation_scan(traj: Trajectory, x_inf, eps: float, T: float, delta: float, stride: float, kernel) -> VisitationReport:
    """Time spent by the orbit inside the open ball B(x_inf, eps), per window."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    starts = window_schedule(traj, T, delta, stride)
    inside = (np.linalg.norm(traj.states - np.atleast_1d(np.asarray(x_inf, dtype=float)), axis=1) < eps).astype(float)
    mu = np.empty(starts.size)
    for k, t in enumerate(starts):
        i0, i1 = window_indices(traj, t, delta)
        mu[k] = trapezoid_weights(traj.times[i0 : i1 + 1]) @ inside[i0 : i1 + 1]
    return VisitationReport(eps=eps, delta=delta, starts=starts, mu=mu, kernel_floor=kernel.floor(eps))


def _nearest_distance(samples: np.ndarray, centers: np.ndarray) -> np.ndarray:
    if samples.shape[0] == 0:
        raise ValueError("no trajectory samples to compare against")
    d, _ = cKDTree(samples).query(np.atleast_2d(centers))
    return d


def density_check(traj: Trajectory, omega, eps: float) -> np.ndarray:
    """For each center, whether some orbit sample lies within ``eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    C = omega.centers if isinstance(omega, IndexingSet) else np.atleast_2d(omega)
    return _nearest_distance(traj.states, C) <= eps


def limit_set_membership(traj: Trajectory, omega, eps: float, t_cut: float) -> np.ndarray:
    """For each center, whether a tail sample (t >= t_cut) lies within ``eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not t_cut < traj.t_final:
        raise ValueError("t_cut must precede the final time")
    C = omega.centers if isinstance(omega, IndexingSet) else np.atleast_2d(omega)
    return _nearest_distance(traj.states[traj.times >= t_cut], C) <= eps
