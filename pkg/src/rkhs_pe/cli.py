"""
Command-line harness: ``simulate``, ``estimate``, ``pe-check`` and ``contour``.

Exit status: 0 success (or PE verdict true), 1 usage/config/input error,
2 PE verdict false, 3 numerical failure (divergence, failed factorisation).
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy
from scipy.spatial import cKDTree

from .centers import circle_centers, explicit_centers, thin_to_count
from .config import ConfigError, ExperimentConfig, apply_overrides, build_field, load_config, plant_matrix
from .dynamics import DivergenceError, fish_energy, integrate
from .estimator import (
    EstimatorConfig,
    GridSpec,
    PlantSpec,
    function_error_field,
    projection_coefficients,
    regressor,
    run_estimator,
)
from .io import read_csv, write_csv, write_json
from .kernels import Kernel
from .persistence import IndexingSet, density_check, limit_set_membership, pe_scan, visitation_scan

log = logging.getLogger("rkhs_pe")

EXIT_OK, EXIT_CONFIG, EXIT_NOT_PE, EXIT_NUMERIC = 0, 1, 2, 3


class StageError(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage
        self.cause = exc


@contextmanager
def stage(name):
    log.info("stage %s", name)
    try:
        yield
    except (ConfigError, StageError):
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _versions() -> dict:
    out = {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}
    try:
        from importlib.metadata import version

        out["artifact"] = version("artifact")
    except Exception:  # pragma: no cover - running from a source tree
        out["artifact"] = "unknown"
    try:
        import numba

        out["numba"] = numba.__version__
    except ImportError:  # pragma: no cover
        pass
    return out


class Outputs:
    """Collects emitted files and writes the run manifest last."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.files = []

    def csv(self, name, header, columns) -> Path:
        rows = write_csv(self.root / name, header, columns)
        self.files.append({"name": name, "rows": rows})
        return self.root / name

    def add(self, name, rows):
        self.files.append({"name": name, "rows": rows})

    def manifest(self, command, cfg: ExperimentConfig, results: dict, name="manifest.json") -> Path:
        body = {
            "command": command,
            "config": cfg.to_dict(),
            "versions": _versions(),
            "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "files": self.files,
            "results": results,
        }
        return write_json(self.root / name, body)


# -- pipeline pieces -----------------------------------------------------


def make_kernel(cfg: ExperimentConfig) -> Kernel:
    return Kernel(family=cfg.kernel_family, nu=float(cfg.nu), length_scale=float(cfg.length_scale))


def simulate(cfg: ExperimentConfig):
    vf = build_field(cfg)
    traj = integrate(vf, cfg.x0, float(cfg.T), float(cfg.h))
    return vf, traj


def place_centers(cfg: ExperimentConfig, traj, kernel) -> IndexingSet:
    if cfg.centers == "limit_set":
        C = thin_to_count(traj, cfg.n_centers, cfg.t_cut).points
    elif cfg.centers == "circle":
        C = circle_centers(cfg.n_centers, cfg.circle_radius)
    else:
        C = explicit_centers(cfg.centers_list, traj.dim)
    return IndexingSet(C, kernel)


def _truth(cfg, vf, omega):
    """Ground-truth f and the projection coefficients alpha* of the system f."""
    alpha_star = projection_coefficients(vf.unknown_scalar, omega)
    if cfg.truth == "span":
        def f(x):
            return regressor(omega, omega.kernel, np.atleast_2d(x)) @ alpha_star
    else:
        f = vf.unknown_scalar
    return f, alpha_star


def _grid(cfg) -> GridSpec:
    return GridSpec(cfg.grid_xmin, cfg.grid_xmax, cfg.grid_ymin, cfg.grid_ymax, cfg.grid_nx, cfg.grid_ny)


def _center_columns(omega):
    return [f"c{i + 1}" for i in range(omega.dim)], list(omega.centers.T)


# -- commands ------------------------------------------------------------


def cmd_simulate(cfg: ExperimentConfig, out: Outputs) -> int:
    with stage("simulate"):
        vf, traj = simulate(cfg)
    out.add("trajectory.csv", traj.to_csv(out.root / "trajectory.csv"))
    results = {"final_state": traj.states[-1].tolist(), "steps": len(traj) - 1}
    if cfg.system == "fish" and cfg.lam == 0:
        H = fish_energy(traj.states)
        results["energy_drift"] = float(np.max(np.abs(H - H[0])))
    out.manifest("simulate", cfg, results)
    print(f"simulate: {len(traj)} samples written to {out.root / 'trajectory.csv'}")
    return EXIT_OK


def cmd_estimate(cfg: ExperimentConfig, out: Outputs) -> int:
    kernel = make_kernel(cfg)
    with stage("simulate"):
        vf, traj = simulate(cfg)
    with stage("centers"):
        omega = place_centers(cfg, traj, kernel)
    with stage("truth"):
        f, alpha_star = _truth(cfg, vf, omega)
    with stage("estimator"):
        plant = PlantSpec.from_field(vf, A=plant_matrix(cfg), f=f)
        ecfg = EstimatorConfig.default(omega, gamma=float(cfg.gamma), q=float(cfg.q))
        alpha0 = alpha_star if cfg.alpha_init == "exact" else None
        run = run_estimator(plant, ecfg, cfg.x0, alpha0=alpha0, T=float(cfg.T), h=float(cfg.h))
    with stage("error field"):
        grid = _grid(cfg)
        field = function_error_field(run, f, grid) if traj.dim == 2 else None

    hdr, cols = _center_columns(omega)
    out.csv("centers.csv", hdr, cols)
    out.add("run.csv", run.to_csv(out.root / "run.csv", stride=cfg.history_stride))
    results = {
        "n_centers": len(omega),
        "xtilde_final": float(run.state_error_norm[-1]),
        "alpha_star": alpha_star.tolist(),
    }
    if field is not None:
        out.add("error_field.csv", field.to_csv(out.root / "error_field.csv"))
        tail = run.x[run.times >= cfg.t_cut]
        d, _ = cKDTree(tail).query(field.points)
        near = d <= cfg.neighborhood_eps
        fvals = np.abs(np.asarray(f(field.points), dtype=float))
        if near.any():
            sup = field.sup_over(near)
            base = float(np.max(fvals[near]))
            results.update(
                neighborhood_points=int(near.sum()),
                sup_error_neighborhood=sup,
                sup_baseline_neighborhood=base,
                reduction_neighborhood=base / sup if sup > 0 else None,
            )
    out.manifest("estimate", cfg, results)
    print(f"estimate: |xtilde(T)| = {results['xtilde_final']:.6g}")
    if "sup_error_neighborhood" in results:
        print(
            f"estimate: sup error near the limit set = {results['sup_error_neighborhood']:.6g} "
            f"(baseline {results['sup_baseline_neighborhood']:.6g})"
        )
    return EXIT_OK


def cmd_pe_check(cfg: ExperimentConfig, out: Outputs) -> int:
    kernel = make_kernel(cfg)
    with stage("simulate"):
        vf, traj = simulate(cfg)
    with stage("centers"):
        omega = place_centers(cfg, traj, kernel)
    with stage("pe scan"):
        rep = pe_scan(traj, omega, cfg.pe_T, cfg.pe_delta, cfg.pe_stride, cfg.pe_threshold)
    visit = cfg.visit_point if cfg.visit_point is not None else (omega.centers[0] if len(omega) == 1 else None)
    vis = None
    if visit is not None:
        with stage("visitation"):
            vis = visitation_scan(traj, visit, cfg.visit_eps, rep.T, rep.delta, rep.stride, kernel)
            rep.mu = vis.mu
    with stage("membership"):
        member = limit_set_membership(traj, omega, cfg.membership_eps, cfg.t_cut)
        dense = density_check(traj, omega, cfg.membership_eps)

    out.add("pe_report.csv", rep.to_csv(out.root / "pe_report.csv"))
    hdr, cols = _center_columns(omega)
    out.csv("membership.csv", hdr + ["in_limit_set", "orbit_dense"], cols + [member, dense])
    results = {
        "verdict": bool(rep.verdict),
        "gamma1": rep.gamma1,
        "gamma2": rep.gamma2,
        "T": rep.T,
        "Delta": rep.delta,
        "stride": rep.stride,
        "windows": int(rep.starts.size),
        "limit_set_membership": member.tolist(),
        "density": dense.tolist(),
    }
    text = [rep.summary(), f"in_limit_set = {int(member.sum())}/{member.size}"]
    if vis is not None:
        results.update(gamma_eps=vis.gamma_eps, kernel_floor=vis.kernel_floor, visitation_bound=vis.lower_bound)
        text.append(f"gamma_eps = {vis.gamma_eps:.17g}")
        text.append(f"visitation_bound = {vis.lower_bound:.17g}")
    out.manifest("pe-check", cfg, results)
    print("\n".join(text))
    return EXIT_OK if rep.verdict else EXIT_NOT_PE


def _read_run_dir(run_dir: Path):
    try:
        manifest = json.loads((run_dir / "manifest.json").read_text())
        cfg = ExperimentConfig.from_dict(manifest["config"])
        _, C = read_csv(run_dir / "centers.csv")
        header, R = read_csv(run_dir / "run.csv")
    except FileNotFoundError as exc:
        raise ConfigError(str(run_dir), f"missing run file {Path(exc.filename).name}") from None
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(run_dir), f"corrupt run files ({exc})") from None
    acols = [i for i, h in enumerate(header) if h.startswith("alphahat")]
    if R.shape[0] == 0 or len(acols) != C.shape[0]:
        raise ConfigError(str(run_dir / "run.csv"), "coefficient columns do not match centers.csv")
    return cfg, C, R[-1, acols]


def cmd_contour(run_dir: Path, truth: str, out_dir, overrides) -> int:
    cfg, C, alpha = _read_run_dir(run_dir)
    if overrides:
        cfg = ExperimentConfig.from_dict(apply_overrides(cfg.to_dict(), overrides))
    cfg = cfg.resolved()
    kernel = make_kernel(cfg)
    omega = IndexingSet(C, kernel)
    if omega.dim != 2:
        raise ConfigError("system", "contours are defined for planar systems")
    pts = _grid(cfg).points()
    with stage("contour"):
        fhat = regressor(omega, kernel, pts) @ alpha
        if truth == "zero":
            fv = np.zeros(pts.shape[0])
        else:
            vf = build_field(cfg)
            fv = np.asarray(vf.unknown_scalar(pts), dtype=float)
            if truth == "span":
                fv = regressor(omega, kernel, pts) @ projection_coefficients(vf.unknown_scalar, omega)
        err = np.abs(fv - fhat)
    out = Outputs(Path(out_dir) if out_dir is not None else run_dir)
    out.csv("contour.csv", ["px", "py", "err"], [pts[:, 0], pts[:, 1], err])
    out.manifest("contour", cfg, {"run_dir": str(run_dir), "truth": truth, "sup_error": float(err.max())},
                 name="contour_manifest.json")
    print(f"contour: {pts.shape[0]} grid points, max error {err.max():.6g}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rkhs-pe", description="RKHS-embedding estimation and persistence-of-excitation checks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log pipeline stages to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", type=Path, help="JSON config file (flat schema)")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, help="seed recorded in the manifest")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="set a config field; VALUE is parsed as JSON (repeatable)")

    for name, help_ in (
        ("simulate", "integrate the configured system and write its trajectory"),
        ("estimate", "run the full estimation pipeline and write histories and the error field"),
        ("pe-check", "scan persistence-of-excitation windows; exit 2 when PE fails"),
    ):
        common(sub.add_parser(name, help=help_))
    sp = sub.add_parser("contour", help="recompute the error grid from a finished estimate run")
    common(sp)
    sp.add_argument("--run", type=Path, required=True, help="directory written by 'estimate'")
    sp.add_argument("--truth", choices=("system", "span", "zero"), default="system")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output_dir={json.dumps(args.out)}")
    try:
        if args.command == "contour":
            return cmd_contour(args.run, args.truth, args.out, [o for o in overrides if not o.startswith("output_dir=")])
        cfg = load_config(args.config, overrides).resolved()
        out = Outputs(Path(cfg.output_dir))
        cmd = {"simulate": cmd_simulate, "estimate": cmd_estimate, "pe-check": cmd_pe_check}[args.command]
        return cmd(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        numeric = (DivergenceError, np.linalg.LinAlgError, FloatingPointError, OverflowError)
        return EXIT_NUMERIC if isinstance(exc.cause, numeric) else EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
