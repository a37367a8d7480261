"""
Semiflows of ODEs: the Hopf and homoclinic ("fish") example systems,
a fixed-step RK4 integrator, and sampling of positive limit sets from
trajectory tails.

Right-hand sides act on the last axis, so ``rhs(x)`` accepts a single state
of shape (d,) or a batch of shape (m, d).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .io import read_csv, write_csv

__all__ = [
    "DivergenceError",
    "VectorField",
    "Trajectory",
    "LimitSetEstimate",
    "hopf_rhs",
    "fish_rhs",
    "fish_energy",
    "hopf_field",
    "fish_field",
    "oscillator_field",
    "relaxation_field",
    "integrate",
    "integrate_many",
    "extract_limit_set",
    "estimate_period",
]

BLOWUP = 1e6


class DivergenceError(ArithmeticError):
    """State left the ball of radius ``BLOWUP`` or became non-finite."""


def _pack(a, b):
    # np.stack costs microseconds on 0-d inputs; single states take the fast path
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        return np.array((a, b), dtype=float)
    a, b = np.broadcast_arrays(a, b)
    return np.stack([a, b], axis=-1)


def hopf_rhs(x):
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    r = 1.0 - x1 * x1 - x2 * x2
    return _pack(x2 + x1 * r, -x1 + x2 * r)


def _hopf_known(x):
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return _pack(x2 + x1 * (1.0 - x1 * x1 - x2 * x2), 0.0 * x1)


def hopf_unknown_scalar(x):
    """Second component of the Hopf field, the part treated as unknown."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return -x1 + x2 * (1.0 - x1 * x1 - x2 * x2)


def fish_rhs(x, lam: float = 0.0):
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return _pack(2.0 * x2, 2.0 * x1 - 3.0 * x1 * x1 + lam * x2 * (x1**3 - x1 * x1 + x2 * x2))


def fish_unknown_scalar(x, lam: float = 0.0):
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return 2.0 * x1 - 3.0 * x1 * x1 + lam * x2 * (x1**3 - x1 * x1 + x2 * x2)


def fish_energy(x):
    """H(x) = x1^3 - x1^2 + x2^2, a first integral of the fish system at lambda = 0."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return x1**3 - x1 * x1 + x2 * x2


def _e2(v):
    return _pack(0.0 * v, v)


@dataclass(frozen=True)
class VectorField:
    """
    x' = rhs(x), optionally split as rhs = known + unknown.

    ``unknown_scalar`` is set when the unknown part has the matched form
    B * f(x) with ``B`` given by ``unknown_direction``.
    """

    name: str
    dim: int
    rhs: Callable
    known: Optional[Callable] = None
    unknown: Optional[Callable] = None
    unknown_scalar: Optional[Callable] = None
    unknown_direction: Optional[tuple] = None

    def __call__(self, x):
        return self.rhs(x)


def hopf_field() -> VectorField:
    return VectorField(
        name="hopf",
        dim=2,
        rhs=hopf_rhs,
        known=_hopf_known,
        unknown=lambda x: _e2(hopf_unknown_scalar(x)),
        unknown_scalar=hopf_unknown_scalar,
        unknown_direction=(0.0, 1.0),
    )


def fish_field(lam: float = 0.0) -> VectorField:
    def known(x):
        x = np.asarray(x, dtype=float)
        return _pack(2.0 * x[..., 1], 0.0 * x[..., 0])

    def f(x):
        return fish_unknown_scalar(x, lam)

    return VectorField(
        name="fish",
        dim=2,
        rhs=lambda x: fish_rhs(x, lam),
        known=known,
        unknown=lambda x: _e2(f(x)),
        unknown_scalar=f,
        unknown_direction=(0.0, 1.0),
    )


def oscillator_field() -> VectorField:
    def rhs(x):
        x = np.asarray(x, dtype=float)
        return _pack(x[..., 1], -x[..., 0])

    return VectorField(name="oscillator", dim=2, rhs=rhs)


def relaxation_field(target) -> VectorField:
    """x' = -(x - target): every orbit converges to ``target``."""
    target = np.atleast_1d(np.asarray(target, dtype=float))
    return VectorField(name="relaxation", dim=target.size, rhs=lambda x: -(np.asarray(x) - target))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    step: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        X = np.asarray(self.states, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if t.ndim != 1 or t.shape[0] != X.shape[0]:
            raise ValueError("times and states must have equal length")
        if t.shape[0] > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(X)):
            raise ValueError("states must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", X)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    def __len__(self):
        return self.times.shape[0]

    def window(self, t0: float, t1: float) -> "Trajectory":
        m = (self.times >= t0 - 1e-9 * self.step) & (self.times <= t1 + 1e-9 * self.step)
        return Trajectory(self.times[m], self.states[m], self.step)

    def to_csv(self, path) -> int:
        header = ["t"] + [f"x{i + 1}" for i in range(self.dim)]
        return write_csv(path, header, [self.times, *self.states.T])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        header, data = read_csv(path)
        if header[0] != "t":
            raise ValueError(f"{path}: first column must be t")
        times = data[:, 0]
        step = float(times[1] - times[0]) if times.size > 1 else 0.0
        return cls(times, data[:, 1:], step)


def _check(x, blowup):
    # NaN fails the comparison, so this also rejects non-finite states
    return bool(np.max(np.abs(x)) <= blowup)


def rk4_step(rhs, x, h):
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * h * k1)
    k3 = rhs(x + 0.5 * h * k2)
    k4 = rhs(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _n_steps(T: float, h: float) -> int:
    if not (T > 0 and h > 0 and h <= T):
        raise ValueError(f"need T > 0 and 0 < h <= T, got T={T}, h={h}")
    return max(1, int(round(T / h)))


def integrate(vf, x0, T: float, h: float = 1e-3, t0: float = 0.0, blowup: float = BLOWUP) -> Trajectory:
    """
    Classical RK4 on the uniform grid t0 + k h, k = 0..round(T/h).

    Raises
    ------
    DivergenceError
        if any state component exceeds ``blowup`` in magnitude.
    """
    rhs = vf.rhs if isinstance(vf, VectorField) else vf
    x = np.array(x0, dtype=float).ravel()
    if isinstance(vf, VectorField) and x.size != vf.dim:
        raise ValueError(f"x0 has {x.size} entries, field {vf.name} has dimension {vf.dim}")
    n = _n_steps(T, h)
    X = np.empty((n + 1, x.size))
    X[0] = x
    for k in range(n):
        x = rk4_step(rhs, x, h)
        if not _check(x, blowup):
            raise DivergenceError(f"state diverged at t={t0 + (k + 1) * h:.6g}")
        X[k + 1] = x
    return Trajectory(t0 + h * np.arange(n + 1), X, h)


def integrate_many(vf, X0, T: float, h: float = 1e-3, blowup: float = BLOWUP) -> list[Trajectory]:
    """Integrate several initial states at once (vectorised over the batch)."""
    rhs = vf.rhs if isinstance(vf, VectorField) else vf
    x = np.atleast_2d(np.array(X0, dtype=float))
    n = _n_steps(T, h)
    X = np.empty((n + 1,) + x.shape)
    X[0] = x
    for k in range(n):
        x = rk4_step(rhs, x, h)
        if not _check(x, blowup):
            raise DivergenceError(f"state diverged at t={(k + 1) * h:.6g}")
        X[k + 1] = x
    t = h * np.arange(n + 1)
    return [Trajectory(t, X[:, j, :], h) for j in range(x.shape[0])]


@dataclass(frozen=True)
class LimitSetEstimate:
    points: np.ndarray
    t_cut: float
    spacing: float

    @property
    def min_separation(self) -> float:
        if self.points.shape[0] < 2:
            return np.inf
        D = np.linalg.norm(self.points[:, None] - self.points[None], axis=-1)
        return float(np.min(D[~np.eye(len(D), dtype=bool)]))


def extract_limit_set(traj: Trajectory, t_cut: float, spacing: float) -> LimitSetEstimate:
    """
    Greedy thinning of the tail {x(t) : t >= t_cut}.

    A tail sample is kept when it lies at least ``spacing`` from every sample
    kept so far, scanning in time order.  Repeated passes around a cycle
    therefore add nothing once the cycle is covered.
    """
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    if not t_cut < traj.t_final:
        raise ValueError("t_cut must precede the final time")
    tail = traj.states[traj.times >= t_cut]
    if tail.shape[0] == 0:
        raise ValueError("empty tail")
    # dmin[j] = distance from sample j to the nearest kept point; the next
    # kept point is the first later sample with dmin >= spacing
    kept = [0]
    dmin = np.linalg.norm(tail - tail[0], axis=1)
    i = 0
    while True:
        later = np.nonzero(dmin[i + 1 :] >= spacing)[0]
        if later.size == 0:
            break
        i = i + 1 + int(later[0])
        kept.append(i)
        np.minimum(dmin, np.linalg.norm(tail - tail[i], axis=1), out=dmin)
    return LimitSetEstimate(points=tail[kept].copy(), t_cut=float(t_cut), spacing=float(spacing))


def estimate_period(traj: Trajectory, t_cut: float) -> Optional[float]:
    """
    Recurrence time of the tail: first return of x(t) close to x(t_cut).

    Returns ``None`` when the tail does not recur (e.g. it sits at an
    equilibrium or never leaves a small ball).
    """
    m = traj.times >= t_cut
    t = traj.times[m]
    X = traj.states[m]
    if X.shape[0] < 3:
        return None
    d = np.linalg.norm(X - X[0], axis=1)
    dmax = float(d.max())
    if dmax < 1e-9:
        return None
    away = np.nonzero(d > 0.5 * dmax)[0]
    if away.size == 0:
        return None
    for j in range(away[0] + 1, d.size - 1):
        if d[j] <= d[j - 1] and d[j] <= d[j + 1] and d[j] < 0.25 * dmax:
            # parabola through the squared distances for sub-step accuracy
            y0, y1, y2 = d[j - 1] ** 2, d[j] ** 2, d[j + 1] ** 2
            den = y0 - 2.0 * y1 + y2
            shift = 0.5 * (y0 - y2) / den if den > 0 else 0.0
            return float(t[j] + shift * traj.step - t[0])
    return None
