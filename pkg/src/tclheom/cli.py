"""Command line front-end.

Exit codes: 0 on success, 1 on numerical failure, 2 on configuration errors.
"""
from __future__ import annotations

import functools
import sys
from pathlib import Path

import click
import numpy as np

from . import io, tcl
from .config import ConfigError, build_model, initial_state_index, load_json, resolve, sample_path, validate
from .heom import HeomSolver, HierarchyTooLarge, IntegratorConfig, NumericalError

EXIT_NUMERICAL = 1
EXIT_CONFIG = 2


def common_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="JSON run config."),
        click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".",
                     show_default=True, help="Output directory."),
        click.option("--depth", type=int, default=None, help="Hierarchy depth L."),
        click.option("--matsubara", type=int, default=None,
                     help="Matsubara modes K per bath (overrides the model)."),
        click.option("--dt", type=float, default=None, help="Time step."),
        click.option("--tmax", type=float, default=None, help="Propagation horizon."),
        click.option("--threads", type=int, default=None, help="Worker threads."),
        click.option("--terminator/--no-terminator", default=None,
                     help="White-noise correction for the dropped Matsubara modes."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
        except (NumericalError, tcl.SingularGeneratorError, HierarchyTooLarge,
                np.linalg.LinAlgError, FloatingPointError) as exc:
            _fail(EXIT_NUMERICAL, str(exc))
    return wrapper


def _load(config_path, default_path=None, **flags) -> tuple[dict, Path | None]:
    path = config_path or default_path
    raw, base = {}, None
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        raw = load_json(path)
        base = Path(path).parent
    overrides = {
        "hierarchy.depth": flags.get("depth"),
        "hierarchy.matsubara": flags.get("matsubara"),
        "hierarchy.terminator": flags.get("terminator"),
        "integrator.dt": flags.get("dt"),
        "integrator.t_max": flags.get("tmax"),
        "threads": flags.get("threads"),
    }
    return resolve(raw, overrides, base), base


def _out(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _integrator(cfg) -> IntegratorConfig:
    i = cfg["integrator"]
    return IntegratorConfig(float(i["dt"]), float(i["t_max"]), int(i["record_stride"]))


def _solver(cfg, model) -> HeomSolver:
    h = cfg["hierarchy"]
    return HeomSolver(model, int(h["depth"]), terminator=bool(h["terminator"]))


def _generator_outputs(cfg, model, out: Path, prefix: str = "") -> dict:
    """Assemble U_S, invert, detect singularities, round-trip check; write files."""
    solver = _solver(cfg, model)
    icfg = _integrator(cfg)
    if icfg.record_stride != 1:
        raise ConfigError("generator workflows need integrator.record_stride = 1")
    series = tcl.assemble_propagators(model, solver.depth, icfg, cfg["generator"]["udot"],
                                      solver=solver, threads=cfg["threads"])
    gen = tcl.exact_generator(series, cfg["generator"]["cond_threshold"],
                              cfg["generator"]["det_threshold"])
    sing = tcl.detect_singularities(gen)
    deviation = 0.0
    for k in range(model.dim):
        p0 = np.zeros(model.dim)
        p0[k] = 1.0
        tt, pp = tcl.propagate_tcl(gen, p0, stop_at_singularity=True)
        deviation = max(deviation, float(np.abs(pp - series.u[: 2 * len(tt) - 1: 2, :, k]).max()))
    io.write_generator(out / f"{prefix}generator.csv", gen, cfg)
    report = {
        "config_sha256": io.config_digest(cfg),
        "dim": model.dim,
        "n_samples": int(len(gen.times)),
        "t_end": float(gen.times[-1]),
        "n_flagged_samples": int(gen.singular_mask.sum()),
        "intervals": [
            {"t_enter": s.t_enter, "t_exit": s.t_exit, "det_sign_change": s.det_sign_change,
             "t_zero": s.t_zero} for s in sing],
        "round_trip_max_deviation": deviation,
        "round_trip_window_end": _first_singular_time(gen),
    }
    io.write_json(out / f"{prefix}singularities.json", report)
    return {"series": series, "generator": gen, "singularities": sing, "report": report}


def _first_singular_time(gen) -> float:
    idx = tcl.first_singular_index(gen)
    return float(gen.times[-1] if idx is None else gen.times[idx])


@click.group()
def main():
    """Exact TCL generators from hierarchical equations of motion."""


@main.command()
@common_options
@guarded
def propagate(config_path, out_dir, **flags):
    """HEOM population and coherence trajectory."""
    cfg, _ = _load(config_path, **flags)
    model = build_model(cfg)
    j = initial_state_index(cfg, model.dim)
    out = _out(out_dir)
    solver = _solver(cfg, model)
    if cfg["initial"]["equilibrated"]:
        init = solver.equilibrate(j)
    else:
        rho0 = np.zeros((model.dim, model.dim), dtype=complex)
        rho0[j, j] = 1.0
        init = solver.factorized(rho0)
    traj = solver.propagate(init, _integrator(cfg))
    io.write_trajectory(out / "trajectory.csv", traj.times, traj.rdos, cfg)


@main.command()
@common_options
@guarded
def generator(config_path, out_dir, **flags):
    """Exact TCL generator, singularity report and round-trip check."""
    cfg, _ = _load(config_path, **flags)
    model = build_model(cfg)
    _generator_outputs(cfg, model, _out(out_dir))


@main.command()
@common_options
@click.option("--orders", type=int, default=None, help="Highest (even) generator order.")
@guarded
def expand(config_path, out_dir, orders, **flags):
    """Order-by-order generator expansion."""
    cfg, _ = _load(config_path, **flags)
    if orders is not None:
        cfg["expand"]["n_max"] = orders
        validate(cfg)
    model = build_model(cfg)
    out = _out(out_dir)
    solver = _solver(cfg, model)
    exp, _, _ = tcl.generator_expansion(model, solver.depth, cfg["expand"]["n_max"],
                                        _integrator(cfg), solver=solver)
    io.write_expansion(out / "expansion.csv", exp, cfg)
    io.write_json(out / "expansion_summary.json", {
        "config_sha256": io.config_digest(cfg),
        "orders": exp.orders,
        "max_amplitude": [exp.max_amplitudes()[n] for n in exp.orders],
        "max_amplitude_11": [exp.max_amplitudes((0, 0))[n] for n in exp.orders],
    })


@main.command("sweep-deltac")
@common_options
@click.option("--eta", "etas", type=float, multiple=True, help="Coupling strengths (repeatable).")
@guarded
def sweep_deltac(config_path, out_dir, etas, **flags):
    """Critical interstate coupling versus system-bath coupling."""
    cfg, _ = _load(config_path, **flags)
    if etas:
        cfg["sweep"]["eta_grid"] = list(etas)
        validate(cfg)
    sw = cfg["sweep"]
    crit = tcl.ConvergenceCriterion(float(sw["t_star"]), sw["reference_order"], sw["min_order"],
                                    sw["max_order"], float(sw["threshold"]))
    k = cfg["hierarchy"]["matsubara"]
    rows = []
    for r in tcl.critical_delta_sweep(
            sw["eta_grid"], float(sw["beta"]), float(sw["omega_c"]), float(sw["epsilon"]),
            depth=cfg["hierarchy"]["depth"], n_matsubara=2 if k is None else k,
            dt=float(cfg["integrator"]["dt"]), criterion=crit,
            resolution=float(sw["resolution"]), terminator=bool(cfg["hierarchy"]["terminator"])):
        rows.append([r.eta, r.delta_c, r.status, r.bracket[0], r.bracket[1]])
    io.write_csv(_out(out_dir) / "deltac.csv", ["eta", "delta_c", "status", "bracket_lo", "bracket_hi"],
                 rows, cfg)


@main.command()
@common_options
@guarded
def fmo(config_path, out_dir, **flags):
    """FMO trajectory from the site-1 equilibrated state plus its exact generator."""
    cfg, _ = _load(config_path, default_path=sample_path(), **flags)
    model = build_model(cfg)
    j = initial_state_index(cfg, model.dim)
    out = _out(out_dir)
    res = _generator_outputs(cfg, model, out)
    series = res["series"]
    io.write_trajectory(out / "trajectory.csv", series.times, series.rdos[:, j], cfg)


if __name__ == "__main__":
    main()
