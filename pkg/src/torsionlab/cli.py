"""Experiment runner: every module behind one deterministic command line.

Configs are INI-style text with a section per block; unknown sections or
keys are fatal (exit 2) so that typos in tolerance names cannot silently
change an experiment.  Artifacts are named ``<subcommand>-<confighash>``
and are byte-identical across runs of the same config.

Exit codes: 0 success, 1 acceptance failure (``verify``), 2 config error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import fem, ntd, shape_calc, twosigma
from .analytic import AnnulusCandidate, annulus_flux_mismatch
from .geometry import GeometryError, StarBoundary, TwoPhaseConfig, area
from .meshgen import MeshingError, generate_mesh
from .plane_sweep import SweepError, dumbbell_fixture, tentacle_scan

__all__ = ["main", "run", "ConfigError"]

SUBCOMMANDS = ("solve", "rigidity", "derivative", "classify", "optimize",
               "ntd", "theorem1", "sweep", "twosigma", "verify")

NUMERICAL_ERRORS = (fem.FemError, MeshingError, shape_calc.NotCriticalError,
                    SweepError, ntd.NtdAssemblyError,
                    twosigma.ReductionInvalidError, np.linalg.LinAlgError,
                    FloatingPointError, GeometryError)

_BOUNDARY_KEYS = {"center", "r0", "cos", "sin"}
_EXPERIMENT_KEYS = {
    "solve": set(),
    "rigidity": set(),
    "derivative": {"mode_kind", "mode_k"},
    "classify": {"k_max", "tol"},
    "optimize": {"steps", "step_size", "grad_tol"},
    "ntd": {"k_max"},
    "theorem1": {"k_min", "k_max"},
    "sweep": {"n_directions", "tol_angle", "fixture"},
    "twosigma": {"alpha", "beta"},
    "verify": set(),
}


class ConfigError(ValueError):
    pass


# --- config parsing ---------------------------------------------------------

def _load_config(path: str | None, overrides) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str            # keys are case-sensitive
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            cp.read_string(p.read_text())
        except configparser.Error as exc:
            raise ConfigError(f"config parse error: {exc}") from exc
    for item in overrides or ():
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"--set needs section.key=value, got {item!r}")
        section, dot, name = key.strip().rpartition(".")
        if not dot:
            raise ConfigError(f"--set key must be section.key, got {key!r}")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, name, value.strip())
    return cp


def _validate_keys(cp: configparser.ConfigParser, subcommand: str):
    for section in cp.sections():
        keys = set(cp[section])
        if section == "geometry":
            allowed = {"sigma_c", "gap_min_factor"}
        elif section == "geometry.outer" or (
                section.startswith("geometry.core")
                and section[len("geometry.core"):].isdigit()):
            allowed = _BOUNDARY_KEYS
        elif section == "mesh":
            allowed = {"target_h", "order"}
        elif section == "experiment":
            allowed = _EXPERIMENT_KEYS[subcommand]
        elif section == "output":
            allowed = {"directory"}
        else:
            raise ConfigError(f"unknown config section [{section}]")
        unknown = keys - allowed
        if unknown:
            raise ConfigError(
                f"unknown key {sorted(unknown)[0]!r} in section [{section}]")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _boundary(cp, section) -> StarBoundary:
    sec = cp[section]
    center = _floats(sec.get("center", "0 0"))
    if len(center) != 2:
        raise ConfigError(f"[{section}] center needs two floats")
    return StarBoundary(center=center, r0=sec.getfloat("r0", 1.0),
                        cos_coeffs=_floats(sec.get("cos", "")),
                        sin_coeffs=_floats(sec.get("sin", "")))


def _build_config(cp) -> TwoPhaseConfig:
    outer = (_boundary(cp, "geometry.outer")
             if cp.has_section("geometry.outer") else StarBoundary())
    cores = []
    i = 1
    while cp.has_section(f"geometry.core{i}"):
        cores.append(_boundary(cp, f"geometry.core{i}"))
        i += 1
    if not cores:
        cores = [StarBoundary(r0=0.5)]
    geo = cp["geometry"] if cp.has_section("geometry") else {}
    kwargs = {}
    if "gap_min_factor" in geo:
        kwargs["gap_min_factor"] = float(geo["gap_min_factor"])
    return TwoPhaseConfig(outer=outer, cores=tuple(cores),
                          sigma_c=float(geo.get("sigma_c", 2.0)), **kwargs)


def _mesh_params(cp):
    sec = cp["mesh"] if cp.has_section("mesh") else {}
    return float(sec.get("target_h", 0.05)), int(sec.get("order", 2))


def _config_hash(cp, subcommand: str) -> str:
    parts = [subcommand]
    for section in sorted(cp.sections()):
        for key in sorted(cp[section]):
            parts.append(f"{section}.{key}={cp[section][key]}")
    return hashlib.sha256("\n".join(parts).encode()).hexdigest()[:12]


# --- artifact emission ------------------------------------------------------

def _emit(outdir: Path, stem: str, csv_text: str, json_obj, quiet: bool,
          summary: str):
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / f"{stem}.csv").write_text(csv_text)
    (outdir / f"{stem}.json").write_text(
        json.dumps(json_obj, sort_keys=True, indent=2) + "\n")
    if not quiet:
        print(summary)


def _row(*vals) -> str:
    return ",".join(repr(float(v)) for v in vals)


# --- subcommand implementations ---------------------------------------------

def _cmd_solve(config, cp, args):
    h, order = _mesh_params(cp)
    mesh = generate_mesh(config, h, order=order)
    u = fem.solve_torsion(mesh, config.sigma_c)
    g = fem.boundary_flux(u)
    c = g.weighted_mean()
    rig = fem.torsional_rigidity(u)
    summary = (f"solve: c={c:.6g} flux_dev={np.abs(g.values - c).max():.3g} "
               f"T={rig.value:.8g} nodes={mesh.n_nodes}")
    return fem.field_to_csv(u), {
        "c_mean": c, "flux_dev_max": float(np.abs(g.values - c).max()),
        "T": rig.value, "energy": rig.energy, "n_nodes": mesh.n_nodes,
        "n_triangles": len(mesh.triangles), "min_angle_deg": mesh.min_angle(),
    }, summary


def _cmd_rigidity(config, cp, args):
    h, order = _mesh_params(cp)
    mesh = generate_mesh(config, h, order=order)
    rig = fem.torsional_rigidity(fem.solve_torsion(mesh, config.sigma_c))
    csv_text = "value,energy\n" + _row(rig.value, rig.energy) + "\n"
    return csv_text, {"value": rig.value, "energy": rig.energy}, (
        f"rigidity: T={rig.value:.8g} energy={rig.energy:.8g}")


def _cmd_derivative(config, cp, args):
    h, order = _mesh_params(cp)
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    kind = exp.get("mode_kind", "cos")
    k = int(exp.get("mode_k", 2))
    if kind not in ("cos", "sin") or k < 1:
        raise ConfigError("mode_kind must be cos|sin with mode_k >= 1")
    mesh = generate_mesh(config, h, order=order)
    u = fem.solve_torsion(mesh, config.sigma_c)
    f = np.cos if kind == "cos" else np.sin
    hn = shape_calc.project_zero_average(
        fem.make_boundary_field(mesh, f(k * mesh.boundary_theta)))
    T0 = fem.torsional_rigidity(u).value
    dT = shape_calc.first_shape_derivative(u, hn)
    g = fem.boundary_flux(u)
    c_hat = g.weighted_mean()
    up = shape_calc.solve_shape_derivative(mesh, config.sigma_c, hn, c_hat)
    d2T = shape_calc.second_shape_derivative(u, up, hn, c_hat)
    csv_text = ("T0,dT,d2T\n" + _row(T0, dT, d2T) + "\n")
    return csv_text, {"T0": T0, "dT": dT, "d2T": d2T, "mode": f"{kind}{k}"}, (
        f"derivative {kind}{k}: T0={T0:.8g} dT={dT:.3g} d2T={d2T:.6g}")


def _cmd_classify(config, cp, args):
    h, order = _mesh_params(cp)
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    k_max = int(exp.get("k_max", 8))
    tol = float(exp.get("tol", 1e-4))
    out = shape_calc.classify_critical_shape(
        config, range(1, k_max + 1), tol=tol, target_h=h, order=order)
    lines = ["mode,d2T"]
    for mode in sorted(out["d2T"]):
        lines.append(f"{mode},{out['d2T'][mode]!r}")
    return "\n".join(lines) + "\n", out, (
        f"classify: {out['verdict']} over k<={k_max}")


def _cmd_optimize(config, cp, args):
    h, order = _mesh_params(cp)
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    traj = shape_calc.optimize_rigidity(
        config, steps=int(exp.get("steps", 40)),
        step_size=float(exp.get("step_size", 0.05)),
        grad_tol=float(exp.get("grad_tol", 3e-4)), target_h=h, order=order)
    lines = ["step,T,area,flux_dev,c_hat,grad_norm,step_size"]
    for i, s in enumerate(traj):
        lines.append(f"{i}," + _row(s.T, s.area, s.flux_dev, s.c_hat,
                                    s.grad_norm, s.step_size))
    final = traj[-1]
    obj = {
        "steps": len(traj) - 1, "T_final": final.T,
        "flux_dev_initial": traj[0].flux_dev, "flux_dev_final": final.flux_dev,
        "area": final.area,
        "outer_r0": final.config.outer.r0,
        "outer_cos": list(final.config.outer.cos_coeffs),
        "outer_sin": list(final.config.outer.sin_coeffs),
    }
    return "\n".join(lines) + "\n", obj, (
        f"optimize: {len(traj) - 1} steps, flux_dev "
        f"{traj[0].flux_dev:.3g} -> {final.flux_dev:.3g}, T={final.T:.8g}")


def _cmd_ntd(config, cp, args):
    h, order = _mesh_params(cp)
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    k_max = int(exp.get("k_max", 12))
    mesh = generate_mesh(config, h, order=order)
    op = ntd.assemble_ntd(mesh, config.sigma_c)
    spec = ntd.ntd_spectrum(op, k_max)
    lines = ["k,lambda"]
    for i, lam in enumerate(spec.eigenvalues, start=1):
        lines.append(f"{i},{float(lam)!r}")
    obj = {"eigenvalues": [float(v) for v in spec.eigenvalues],
           "asymmetry": op.asymmetry, "sigma_c": config.sigma_c}
    return "\n".join(lines) + "\n", obj, (
        f"ntd: {len(spec.eigenvalues)} eigenvalues, "
        f"lambda_1={spec.eigenvalues[0]:.6g}")


def _cmd_theorem1(config, cp, args):
    h, order = _mesh_params(cp)
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    k_min = int(exp.get("k_min", 1))
    k_max = int(exp.get("k_max", 12))
    out = ntd.theorem1_experiment(config, range(k_min, k_max + 1),
                                  target_h=h, order=order)
    lines = ["k,lambda,d2T,bound"]
    for r in out["rows"]:
        lines.append(f"{r.k}," + _row(r.lam, r.d2T, r.bound))
    obj = {"k_neg": out["k_neg"], "c_hat": out["c_hat"],
           "d2nn_min": out["d2nn_min"],
           "rows": [{"k": r.k, "lambda": r.lam, "d2T": r.d2T,
                     "bound": r.bound} for r in out["rows"]]}
    return "\n".join(lines) + "\n", obj, (
        f"theorem1: k_neg={out['k_neg']} c={out['c_hat']:.6g}")


def _cmd_sweep(config, cp, args):
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    if exp.get("fixture", "") == "dumbbell":
        config = dumbbell_fixture(config.sigma_c)
    n = int(exp.get("n_directions", 64))
    kwargs = {}
    if "tol_angle" in exp:
        kwargs["tol_angle"] = float(exp["tol_angle"])
    verdict = tentacle_scan(config, n, **kwargs)
    lines = ["index,ex,ey,terminal_case,first_contact_lambda,terminal_lambda"]
    records = []
    for i, rep in enumerate(verdict.reports):
        lines.append(f"{i},{rep.direction[0]!r},{rep.direction[1]!r},"
                     f"{rep.terminal_case},{rep.first_contact_lambda!r},"
                     f"{rep.terminal_lambda!r}")
        records.append({
            "direction": list(rep.direction),
            "first_contact_lambda": rep.first_contact_lambda,
            "terminal_lambda": rep.terminal_lambda,
            "terminal_case": rep.terminal_case,
            "witness_point": list(rep.witness_point) if rep.witness_point else None,
            "margins": rep.margins, "tie": rep.tie,
        })
    obj = {"has_tentacle": verdict.has_tentacle,
           "offending_directions": [list(d) for d in
                                    verdict.offending_directions],
           "reports": records}
    return "\n".join(lines) + "\n", obj, (
        f"sweep: has_tentacle={verdict.has_tentacle} over {n} directions")


def _cmd_twosigma(config, cp, args):
    h, order = _mesh_params(cp)
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    alpha = float(exp.get("alpha", 2.0))
    beta = float(exp.get("beta", 3.0))
    mesh = generate_mesh(config, h, order=order)
    pair = twosigma.dual_solve(mesh, alpha, beta)
    lock = twosigma.locking_field(pair)
    score = twosigma.two_sigma_deviation(config, alpha, beta, mesh=mesh)
    obj = {
        "alpha": alpha, "beta": beta,
        "flux_dev_alpha": score.flux_dev_alpha,
        "flux_dev_beta": score.flux_dev_beta,
        "core_energy": score.core_energy, "total": score.total,
        "core_means": lock.core_means, "core_stds": lock.core_stds,
        "trace_deviation": lock.trace_deviation,
    }
    try:
        red = twosigma.serrin_reduction(pair)
        obj["reduction"] = {"equation_residual": red.equation_residual,
                            "flux_mean": red.flux_mean,
                            "flux_deviation": red.flux_deviation}
    except twosigma.ReductionInvalidError as exc:
        obj["reduction"] = None
        obj["reduction_refused"] = str(exc)
    csv_text = ("flux_dev_alpha,flux_dev_beta,E_core,total\n"
                + _row(score.flux_dev_alpha, score.flux_dev_beta,
                       score.core_energy, score.total) + "\n")
    return csv_text, obj, f"twosigma: score={score.total:.6g}"


_RUNNERS = {
    "solve": _cmd_solve, "rigidity": _cmd_rigidity,
    "derivative": _cmd_derivative, "classify": _cmd_classify,
    "optimize": _cmd_optimize, "ntd": _cmd_ntd, "theorem1": _cmd_theorem1,
    "sweep": _cmd_sweep, "twosigma": _cmd_twosigma,
}


def _cmd_verify(args) -> int:
    import pytest

    target = Path("tests") / "test_acceptance.py"
    if not target.is_file():
        print(f"acceptance suite not found at {target}", file=sys.stderr)
        return 2
    rc = pytest.main([str(target), "-q"] + (["-s"] if not args.quiet else []))
    return 0 if rc == 0 else 1


# --- entry point ------------------------------------------------------------

def run(argv) -> int:
    parser = argparse.ArgumentParser(
        prog="torsionlab",
        description="two-phase torsion shape-calculus experiments")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", default=None, help="INI config path")
    parser.add_argument("--set", dest="overrides", action="append",
                        metavar="SECTION.KEY=VALUE", default=[],
                        help="override a config value (repeatable)")
    parser.add_argument("--out", default=".", help="artifact directory")
    parser.add_argument("--threads", type=int, default=0,
                        help="worker threads (0 = serial; reserved)")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    if args.subcommand == "verify":
        return _cmd_verify(args)

    try:
        cp = _load_config(args.config, args.overrides)
        _validate_keys(cp, args.subcommand)
        if args.threads < 0:
            raise ConfigError("--threads must be >= 0")
        config = _build_config(cp)
    except (ConfigError, GeometryError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    stem = f"{args.subcommand}-{_config_hash(cp, args.subcommand)}"
    try:
        csv_text, json_obj, summary = _RUNNERS[args.subcommand](
            config, cp, args)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    _emit(Path(args.out), stem, csv_text, json_obj, args.quiet, summary)
    return 0


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
