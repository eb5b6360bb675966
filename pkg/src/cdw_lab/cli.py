"""``cdw-lab`` command line: one subcommand per experiment, CSV outputs plus meta.txt."""

from __future__ import annotations

import argparse
import csv
import os
import platform
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, kernels
from .config import KINDS, RunConfig, build_config, coords_label, dump_config, load_config
from .core import RNG_NAME, DriveField, generate_impurities
from .errors import CdwLabError, ConfigError, DivergenceError, InvalidParameterError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INVALID = 3
EXIT_DIVERGED = 4
EXIT_NUMERICS = 5


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, DivergenceError):
        return EXIT_DIVERGED
    if isinstance(exc, InvalidParameterError):
        return EXIT_INVALID
    if isinstance(exc, CdwLabError):
        return EXIT_NUMERICS
    return EXIT_FAILURE


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    """Header row, one record per line, floats in shortest round-trip form."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


# ------------------------------------------------------------ experiments

def run_classical(p: dict, seed: int, out: str) -> dict:
    from .classical import conductivity, dielectric, run_transport, stable_dt, threshold_scan

    lattice = generate_impurities(p["n_sites"], p["concentration"], p["grid_length"], seed,
                                  None if p["min_gap"] < 0 else p["min_gap"])
    dt = p["dt"] if p["dt"] > 0 else 0.5 * stable_dt(lattice)
    probes = [float(w) for w in p["probe_frequencies"]] or [p["omega"]]
    drive = DriveField(p["e_dc"], p["e_ac"], p["omega"])
    res = run_transport(lattice, drive, p["v_strength"], dt, p["n_steps"], probes, g1=p["g1"],
                        stride=p["stride"], method=p["method"])
    write_csv(os.path.join(out, "trace.csv"), ["t", "mean_phase", "mean_phase_dot"],
              zip(res.t, res.mean_phase, res.mean_phase_dot))
    rows = []
    for w in probes:
        s = conductivity(res.accumulator, w)
        e = dielectric(s, w)
        rows.append((w, s.real, s.imag, e.real, e.imag))
    write_csv(os.path.join(out, "response.csv"), ["omega", "re_sigma", "im_sigma", "re_eps", "im_eps"], rows)
    info = {"dt": dt, "backend": res.meta["backend"], "late_rate": res.late_rate()}
    if p["threshold_fields"]:
        scan = threshold_scan(lattice, sorted(float(f) for f in p["threshold_fields"]), dt,
                              p["threshold_steps"], p["v_strength"], n_bisect=p["threshold_bisections"],
                              method=p["method"])
        pts = list(zip(scan.fields, scan.classes)) + [(m, c) for m, c, _ in scan.refinements]
        write_csv(os.path.join(out, "threshold.csv"), ["e_dc", "class"], sorted(pts))
        info["e_th"] = scan.e_th
    return info


def run_quantum(p: dict, seed: int, out: str) -> dict:
    from .errors import BlowUpError
    from .quantum import SchwingerParams, evolve_chain, gaussian_packet, ground_state_width, make_grid

    params = SchwingerParams(p["d_coeff"], p["mu_e_sq"], p["omega_p_sq"], p["omega_d"], p["hbar"])
    if p["periodic"]:
        x0, dx = p["x_min"], (p["x_max"] - p["x_min"]) / p["n_points"]
    else:
        x0, dx = make_grid(p["x_min"], p["x_max"], p["n_points"])
    width = p["width"] if p["width"] > 0 else ground_state_width(params)
    wf = gaussian_packet(x0, dx, p["n_points"], p["center"], width, p["k0"], p["periodic"])
    err = None
    try:
        tr = evolve_chain(wf, params, p["scheme"], p["dt"], p["n_steps"], cn_variant=p["cn_variant"],
                          df_form=p["df_form"], df_neighbors=p["df_neighbors"])
    except BlowUpError as exc:
        tr, err = exc.trace, exc
    keep = [i for i in range(tr.t.size) if i % p["stride"] == 0 or i == tr.t.size - 1]
    write_csv(os.path.join(out, "qtrace.csv"), ["t", "mean_x", "norm", "flag"],
              ((tr.t[i], tr.mean_x[i], tr.norm[i], tr.flags[i]) for i in keep))
    if err is not None:
        raise err
    return {"width": width, "max_beyond_pi": float(tr.beyond.max()),
            "max_norm_drift": float(np.abs(tr.norm_drift).max())}


def run_soliton(p: dict, seed: int, out: str) -> dict:
    from .sine_gordon import (PendulumChainParams, SolitonSpec, default_dt, kink_chain,
                              kink_speed, run_pendulum_chain, sample_soliton, sg_residual,
                              soliton_profile)

    spec = SolitonSpec(p["beta"], p["sign"])
    z = np.linspace(-p["z_half"], p["z_half"], p["profile_points"])
    write_csv(os.path.join(out, "profile.csv"), ["z", "phi"], zip(z, soliton_profile(z, 0.0, spec)))
    chain = PendulumChainParams(p["omega0_sq"], p["omega1_sq"], p["d"], p["n"])
    dt = p["dt"] if p["dt"] > 0 else default_dt(chain)
    n_steps = p["n_steps"]
    if n_steps <= 0:
        # ten lattice spacings at the expected kink speed
        n_steps = int(np.ceil(10.0 * chain.d / (chain.v * max(abs(spec.beta), 1e-3)) / dt))
    phi, vel = kink_chain(chain, spec, p["center_index"])
    run = run_pendulum_chain(phi, vel, chain, dt, n_steps, p["stride"], p["clamped"])
    write_csv(os.path.join(out, "chain.csv"), ["t", "center", "energy"],
              zip(run.t, run.centers(), run.energy))
    rows = [(h, sg_residual(sample_soliton(spec, h), h, h)[0]) for h in p["residual_h"]]
    write_csv(os.path.join(out, "residual.csv"), ["h", "max_resid"], rows)
    return {"dt": dt, "n_steps": n_steps, "kink_speed": kink_speed(run),
            "expected_speed": chain.v * abs(spec.beta), "energy_drift": run.energy_drift}


def run_variational(p: dict, seed: int, out: str) -> dict:
    from .variational import ChainHamiltonianParams, QuadratureGrid, band_structure, phase_staircase

    params = ChainHamiltonianParams(p["d1"], p["e1"], p["e2"], p["delta_p"], 0.0, p["n_chains"], p["hbar"])
    grid = QuadratureGrid(p["eta"], p["points_per_axis"], p["rule"])
    thetas = np.pi * np.linspace(p["theta_start_pi"], p["theta_stop_pi"], p["theta_points"])
    band = band_structure(params, thetas, grid, p["m_max"], p["n_restarts"], p["max_evals"], seed)
    stair = phase_staircase(params, thetas, grid, band=band)
    write_csv(os.path.join(out, "band.csv"), ["theta", "e_min", "dominant_m", "alpha"],
              ((b.theta, b.e_min, b.dominant_m, b.alpha) for b in band))
    write_csv(os.path.join(out, "staircase.csv"), ["theta", "mean_phi", "mean_phi_tracked"],
              (r[:3] for r in stair))
    rows = []
    for b in band:
        if b.state is None:
            continue
        for n, coeffs in enumerate(b.state.coefficients):
            for m, c in zip(b.state.m_values, coeffs):
                rows.append((b.theta, n, m, c))
    write_csv(os.path.join(out, "state.csv"), ["theta", "chain", "m", "b"], rows)
    failed = [b for b in band if b.error]
    if failed:
        raise CdwLabError(f"{len(failed)} sweep point(s) failed; first at theta={failed[0].theta!r}: "
                          f"{failed[0].error}")
    return {"converged": all(b.converged for b in band), "omega_d": p["omega_d"]}


def read_iv_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidParameterError(f"{path} is empty")
    header = [h.strip().lower() for h in rows[0]]
    try:
        ie, ii = header.index("e"), header.index("i")
    except ValueError:
        raise InvalidParameterError(f"{path} needs columns 'e' and 'i'") from None
    try:
        return np.array([[float(r[ie]), float(r[ii])] for r in rows[1:] if r])
    except (ValueError, IndexError) as exc:
        raise InvalidParameterError(f"{path}: bad row ({exc})") from None


def run_fit(p: dict, seed: int, out: str) -> dict:
    from .current_laws import CurrentLawParams, fit_current_law

    if not p["data"]:
        raise ConfigError("fit needs a data file (--data or fit.data)", key="data")
    data = read_iv_csv(p["data"])
    init = CurrentLawParams(p["e_t"], p["c_v"], p["c_tilde"], p["g_p"])
    res = fit_current_law(data, p["law"], init, p["free"] or None, p["loss"])
    rows = [(k, getattr(res.params, k)) for k in ("e_t", "c_v", "c_tilde", "g_p")]
    rows += [("residual", res.residual), ("converged", int(res.converged))]
    write_csv(os.path.join(out, "fit.csv"), ["param", "value"], rows)
    e = data[:, 0]
    grid = np.geomspace(e.min(), e.max(), p["curve_points"])
    write_csv(os.path.join(out, "fitcurve.csv"), ["e", "i_model"], zip(grid, res.predict(grid)))
    return {"residual": res.residual, "converged": res.converged, "free": ",".join(res.free)}


RUNNERS = {"classical": run_classical, "quantum": run_quantum, "soliton": run_soliton,
           "variational": run_variational, "fit": run_fit}


# ------------------------------------------------------------- orchestration

def _versions() -> dict:
    import scipy

    return {"cdw_lab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "kernel_backend": kernels.BACKEND, "rng": RNG_NAME}


def _run_child(kind, params, seed, out):
    """Run one experiment into ``out``; returns (exit code, error text)."""
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    meta = dict(_versions())
    code, err = EXIT_OK, ""
    try:
        info = RUNNERS[kind](params, seed, out)
        meta.update({f"result_{k}": v for k, v in info.items() if isinstance(v, (int, float, str, bool))})
    except Exception as exc:  # recorded per child so sibling runs continue
        code = exit_code_for(exc)
        step = getattr(exc, "step", None)
        err = f"{type(exc).__name__}: {exc}" + (f" [step {step}]" if step is not None else "")
        with open(os.path.join(out, "error.txt"), "w") as fh:
            fh.write(err + "\n\n" + traceback.format_exc())
        meta["error"] = err
    meta["exit_code"] = code
    meta["wall_time_s"] = round(time.perf_counter() - t0, 6)
    with open(os.path.join(out, "meta.txt"), "w") as fh:
        fh.write(dump_config(kind, seed, params, meta=meta))
    return code, err


def run(config: RunConfig, jobs: int | None = None) -> tuple:
    """Execute a configuration; returns (exit status, output directory).

    Sweep children are written to ``<out>/<coords>/`` and may run in parallel;
    a failing child leaves ``error.txt`` and the rest still run. The exit
    status is that of the first failing child in sweep order.
    """
    out = config.out
    os.makedirs(out, exist_ok=True)
    children = config.children()
    if not config.sweep:
        code, err = _run_child(config.kind, children[0][1], children[0][2], out)
        if err:
            print(err, file=sys.stderr)
        return code, out
    jobs = jobs or os.cpu_count() or 1
    tasks = [(config.kind, p, s, os.path.join(out, coords_label(c))) for c, p, s in children]
    t0 = time.perf_counter()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_run_child, *zip(*tasks)))
    else:
        results = [_run_child(*t) for t in tasks]
    keys = list(config.sweep)
    write_csv(os.path.join(out, "sweep.csv"), ["child"] + keys + ["seed", "exit_code"],
              ([coords_label(c)] + [v for _, v in c] + [s, code]
               for (c, _, s), (code, _) in zip(children, results)))
    codes = [code for code, _ in results]
    first = next((i for i, c in enumerate(codes) if c != EXIT_OK), None)
    meta = dict(_versions())
    meta.update({"children": len(tasks), "failed": sum(c != EXIT_OK for c in codes),
                 "wall_time_s": round(time.perf_counter() - t0, 6), "jobs": jobs})
    with open(os.path.join(out, "meta.txt"), "w") as fh:
        fh.write(dump_config(config.kind, config.seed, config.params, config.sweep, meta))
    if first is not None:
        print(f"{tasks[first][3]}: {results[first][1]}", file=sys.stderr)
        return codes[first], out
    return EXIT_OK, out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdw-lab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"cdw-lab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run file")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="master seed (overrides config and CDW_LAB_SEED)")
    common.add_argument("--jobs", type=int, help="parallel sweep children (default: all cores)")
    sub = parser.add_subparsers(dest="kind", required=True)
    sub.add_parser("classical", parents=[common], help="random-pinning transport and response")
    q = sub.add_parser("quantum", parents=[common], help="single-chain wavefunction evolution")
    q.add_argument("--scheme", choices=["cn", "df"])
    s = sub.add_parser("soliton", parents=[common], help="kink profile, residual and pendulum chain")
    s.add_argument("--beta", type=float)
    sub.add_parser("variational", parents=[common], help="multi-chain band structure and staircase")
    f = sub.add_parser("fit", parents=[common], help="fit a current-field law to (e, i) data")
    f.add_argument("--law", choices=["ss", "zener"])
    f.add_argument("--data")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in ("scheme", "beta", "law", "data")
                 if getattr(args, k, None) is not None}
    try:
        if args.config:
            cfg = load_config(args.config, args.kind, seed=args.seed, out=args.out)
        else:
            cfg = build_config(args.kind, {}, seed=args.seed, out=args.out)
        if args.out is None and os.environ.get("CDW_LAB_OUT"):
            cfg.out = os.environ["CDW_LAB_OUT"]
        cfg.params.update(overrides)
        if args.kind == "fit" and "data" in overrides:
            cfg.params["data"] = os.path.abspath(overrides["data"])
        jobs = args.jobs if args.jobs is not None else int(os.environ.get("CDW_LAB_JOBS", "0")) or None
    except ConfigError as exc:
        where = "".join(f" {k}={v}" for k, v in (("key", exc.key), ("line", exc.line)) if v is not None)
        print(f"cdw-lab: config error:{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, _ = run(cfg, jobs)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())


__all__ = ["KINDS", "main", "run", "write_csv", "exit_code_for"]
