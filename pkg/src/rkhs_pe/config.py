"""
Experiment configuration: a flat JSON object, validated field by field.

Every key of :class:`ExperimentConfig` may appear at the top level of the
config file or be set with ``--override key=value`` (values are parsed as
JSON, falling back to a plain string).  Unset optional values resolve to
documented defaults in :meth:`ExperimentConfig.resolved`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .dynamics import VectorField, fish_field, hopf_field

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "apply_overrides", "build_field"]

SYSTEMS = ("hopf", "fish", "custom")
CENTER_STRATEGIES = ("limit_set", "circle", "explicit")
TRUTHS = ("system", "span")
ALPHA_INITS = ("zero", "exact")
DEFAULT_X0 = {"hopf": [0.1, 0.0], "fish": [0.5, 0.0]}


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


@dataclass
class ExperimentConfig:
    # system and integration
    system: str = "hopf"
    lam: float = 0.0
    x0: Optional[list] = None
    T: float = 200.0
    h: float = 1e-3
    t_cut: Optional[float] = None
    custom_A: Optional[list] = None
    custom_B: Optional[list] = None
    custom_f_terms: list = field(default_factory=list)
    # kernel and centers
    kernel_family: str = "matern"
    nu: float = 1.5
    length_scale: float = 0.5
    centers: str = "limit_set"
    n_centers: int = 32
    circle_radius: float = 1.0
    centers_list: Optional[list] = None
    # estimator
    hurwitz_a: float = 1.0
    q: float = 1.0
    gamma: float = 1.0
    truth: str = "system"
    alpha_init: str = "zero"
    # persistence of excitation
    pe_T: Optional[float] = None
    pe_delta: Optional[float] = None
    pe_stride: Optional[float] = None
    pe_threshold: float = 1e-8
    membership_eps: float = 1e-2
    visit_point: Optional[list] = None
    visit_eps: float = 0.1
    # error fields and output
    neighborhood_eps: float = 0.05
    grid_xmin: float = -1.5
    grid_xmax: float = 1.5
    grid_ymin: float = -1.5
    grid_ymax: float = 1.5
    grid_nx: int = 200
    grid_ny: int = 200
    history_stride: int = 10
    output_dir: str = "out"
    seed: int = 0

    # -- serialisation -------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    # -- derived values ------------------------------------------------

    @property
    def dim(self) -> int:
        if self.system == "custom":
            return len(self.custom_B) if self.custom_B is not None else 0
        return 2

    def resolved(self) -> "ExperimentConfig":
        """Copy with system-dependent defaults filled in."""
        x0 = self.x0 if self.x0 is not None else DEFAULT_X0.get(self.system)
        if x0 is None:
            raise ConfigError("x0", "required for custom systems")
        t_cut = self.t_cut if self.t_cut is not None else 0.5 * self.T
        pe_T = self.pe_T if self.pe_T is not None else t_cut
        out = replace(self, x0=[float(v) for v in x0], t_cut=float(t_cut), pe_T=float(pe_T))
        out.validate()
        return out

    # -- validation ----------------------------------------------------

    def validate(self) -> None:
        _choice("system", self.system, SYSTEMS)
        _choice("centers", self.centers, CENTER_STRATEGIES)
        _choice("kernel_family", self.kernel_family, ("matern", "gaussian"))
        _choice("truth", self.truth, TRUTHS)
        _choice("alpha_init", self.alpha_init, ALPHA_INITS)
        for name in ("T", "h", "nu", "length_scale", "circle_radius", "hurwitz_a", "q", "gamma",
                     "pe_threshold", "membership_eps", "visit_eps", "neighborhood_eps"):
            _positive(name, getattr(self, name))
        _real("lam", self.lam)
        if self.h > self.T:
            raise ConfigError("h", f"step {self.h} exceeds horizon T={self.T}")
        for name in ("t_cut", "pe_T"):
            v = getattr(self, name)
            if v is not None:
                _real(name, v)
                if not 0 <= v < self.T:
                    raise ConfigError(name, f"must lie in [0, T={self.T})")
        for name in ("pe_delta", "pe_stride"):
            if getattr(self, name) is not None:
                _positive(name, getattr(self, name))
        for name in ("n_centers", "grid_nx", "grid_ny", "history_stride"):
            _count(name, getattr(self, name))
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        for lo, hi in (("grid_xmin", "grid_xmax"), ("grid_ymin", "grid_ymax")):
            _real(lo, getattr(self, lo))
            _real(hi, getattr(self, hi))
            if getattr(self, hi) < getattr(self, lo):
                raise ConfigError(hi, f"must be >= {lo}")
        if not isinstance(self.output_dir, str) or not self.output_dir:
            raise ConfigError("output_dir", "must be a non-empty string")

        if self.system == "custom":
            self._validate_custom()
        d = self.dim
        if self.x0 is not None:
            _vector("x0", self.x0, d)
        if self.visit_point is not None:
            _vector("visit_point", self.visit_point, d)
        if self.centers == "explicit":
            if self.centers_list is None:
                raise ConfigError("centers_list", "required when centers = 'explicit'")
            if not isinstance(self.centers_list, list) or not self.centers_list:
                raise ConfigError("centers_list", "must be a non-empty list of points")
            for i, c in enumerate(self.centers_list):
                _vector(f"centers_list[{i}]", c, d)
        if self.centers == "circle" and d != 2:
            raise ConfigError("centers", "circle placement needs a planar system")

    def _validate_custom(self) -> None:
        if self.custom_B is None:
            raise ConfigError("custom_B", "required for custom systems")
        if not isinstance(self.custom_B, list) or not self.custom_B:
            raise ConfigError("custom_B", "must be a non-empty list")
        d = len(self.custom_B)
        _vector("custom_B", self.custom_B, d)
        if self.custom_A is None:
            raise ConfigError("custom_A", "required for custom systems")
        if not isinstance(self.custom_A, list) or len(self.custom_A) != d:
            raise ConfigError("custom_A", f"must be a {d}x{d} nested list")
        for i, row in enumerate(self.custom_A):
            _vector(f"custom_A[{i}]", row, d)
        if not np.all(np.linalg.eigvals(np.array(self.custom_A, dtype=float)).real < 0):
            raise ConfigError("custom_A", "must be Hurwitz (all eigenvalues with negative real part)")
        if not isinstance(self.custom_f_terms, list):
            raise ConfigError("custom_f_terms", "must be a list of [coefficient, [exponents]] pairs")
        for i, term in enumerate(self.custom_f_terms):
            p = f"custom_f_terms[{i}]"
            if not (isinstance(term, list) and len(term) == 2):
                raise ConfigError(p, "must be [coefficient, [exponents]]")
            _real(f"{p}[0]", term[0])
            ex = term[1]
            if not isinstance(ex, list) or len(ex) != d:
                raise ConfigError(f"{p}[1]", f"needs {d} exponents")
            for j, e in enumerate(ex):
                if not isinstance(e, int) or isinstance(e, bool) or e < 0:
                    raise ConfigError(f"{p}[1][{j}]", "exponents must be non-negative integers")


def _is_real(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _real(path, v):
    if not _is_real(v):
        raise ConfigError(path, f"must be a finite number, got {v!r}")


def _positive(path, v):
    _real(path, v)
    if not v > 0:
        raise ConfigError(path, f"must be positive, got {v!r}")


def _count(path, v):
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise ConfigError(path, f"must be a positive integer, got {v!r}")


def _choice(path, v, options):
    if v not in options:
        raise ConfigError(path, f"must be one of {', '.join(options)}; got {v!r}")


def _vector(path, v, d):
    if not isinstance(v, list):
        raise ConfigError(path, "must be a list of numbers")
    if len(v) != d:
        raise ConfigError(path, f"has length {len(v)}, system dimension is {d}")
    for i, x in enumerate(v):
        _real(f"{path}[{i}]", x)


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    out = dict(data)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(item, "override must have the form key=value")
        key, _, text = item.partition("=")
        key = key.strip()
        if key not in {f.name for f in fields(ExperimentConfig)}:
            raise ConfigError(key, "unknown field")
        out[key] = _parse_value(text)
    return out


def load_config(path=None, overrides=None) -> ExperimentConfig:
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(str(path), "config file not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
    try:
        return ExperimentConfig.from_dict(apply_overrides(data, overrides))
    except TypeError as exc:  # pragma: no cover - guarded by the unknown-field check
        raise ConfigError("<root>", str(exc)) from None


def _monomial_poly(terms, d):
    coef = np.array([float(t[0]) for t in terms])
    ex = np.array([t[1] for t in terms], dtype=int).reshape(len(terms), d)

    def f(x):
        x = np.asarray(x, dtype=float)
        if not terms:
            return np.zeros(x.shape[:-1])
        mon = np.prod(x[..., None, :] ** ex, axis=-1)
        return mon @ coef

    return f


def build_field(cfg: ExperimentConfig) -> VectorField:
    """Vector field with its known/unknown split for the configured system."""
    if cfg.system == "hopf":
        return hopf_field()
    if cfg.system == "fish":
        return fish_field(cfg.lam)
    d = cfg.dim
    A = np.array(cfg.custom_A, dtype=float)
    B = np.array(cfg.custom_B, dtype=float)
    f = _monomial_poly(cfg.custom_f_terms, d)

    def known(x):
        return np.asarray(x, dtype=float) @ A.T

    def unknown(x):
        return np.asarray(f(x))[..., None] * B

    return VectorField(
        name="custom",
        dim=d,
        rhs=lambda x: known(x) + unknown(x),
        known=known,
        unknown=unknown,
        unknown_scalar=f,
        unknown_direction=tuple(B.tolist()),
    )


def plant_matrix(cfg: ExperimentConfig) -> np.ndarray:
    """Hurwitz A of the matched form x' = A x + known(x) + B f(x)."""
    if cfg.system == "custom":
        return np.array(cfg.custom_A, dtype=float)
    return -cfg.hurwitz_a * np.eye(cfg.dim)
