"""Config-driven experiment runner.

Subcommands: validate, bounds, simulate, scatter, wave-inverse, fit,
report.  Flags: --config PATH, --out DIR, --threads N, --seed N,
--strict.  Exit codes: 0 all configured assertions pass, 2 assertion
failure, 1 execution error.

Outputs per run directory: ``summary.json`` (verbatim config, code
version, certificates, norms, residuals, assertion verdicts),
``timeseries.csv`` and ``iteration.log`` for trajectory experiments, and
field dumps with JSON manifests.  Outputs are byte-identical across
repeated runs with the same config and seed, independent of the thread
count (collision kernels write each element from a fixed summation
order; reductions go through single-threaded numpy).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, _accel
from .bounds import admissible_mass, bounds_report, nu_of_M
from .grids import (
    DistributionField,
    PhaseGrid,
    load_field,
    reference_field,
    save_field,
)
from .kernels import kernel_from_json
from .maxwellian import (
    moment_labels,
    params_from_json,
    params_to_json,
    validate_params,
)
from .scattering import (
    check_H_decrease,
    check_scatter_conservation,
    extract_asymptote,
    fit_global_maxwellian,
    scatter,
    wave_inverse,
)
from .solver import SolverConfig, run_diagnostics, solve_cauchy

EXPERIMENTS = ("validate", "bounds", "simulate", "scatter", "wave-inverse",
               "fit", "report")


class ConfigError(ValueError):
    """Semantic error in a run configuration (names the offending field)."""


class RunConfig:
    """Validated run configuration; see ``load_config``."""

    def __init__(self, raw: dict):
        self.raw = raw
        self.experiment = raw.get("experiment")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"experiment must be one of {EXPERIMENTS}, "
                f"got {self.experiment!r}")
        self.seed = int(raw.get("seed", 0))
        self.params = None
        self.kernel = None
        self.grid = None
        if "maxwellian" in raw:
            try:
                self.params = params_from_json(json.dumps(raw["maxwellian"]),
                                               validate=False)
            except (ValueError, KeyError) as e:
                raise ConfigError(f"maxwellian: {e}")
        if "kernel" in raw:
            kobj = dict(raw["kernel"])
            kobj.setdefault("D", self.params.D if self.params else None)
            try:
                self.kernel = kernel_from_json(json.dumps(kobj))
            except ValueError as e:
                raise ConfigError(f"kernel: {e}")
        if "grid" in raw:
            g = raw["grid"]
            try:
                self.grid = PhaseGrid(
                    D=self.params.D if self.params else int(g["D"]),
                    Nv=int(g["Nv"]), Vmax=float(g["Vmax"]),
                    Nx=int(g["Nx"]), Xmax=float(g["Xmax"]))
            except (KeyError, ValueError) as e:
                raise ConfigError(f"grid: {e}")
        self.tail_tol = float(raw.get("grid", {}).get("tail_tol", 1e-6))
        sv = raw.get("solver", {})
        tv = raw.get("time", {})
        self.solver = SolverConfig(
            picard_tol=float(sv.get("picard_tol", 1e-6)),
            max_iters=int(sv.get("max_iters", 40)),
            Nt=int(tv.get("Nt", 17)),
            T=(None if tv.get("T") in (None, "auto") else float(tv["T"])),
            n_omega=int(sv.get("n_omega", 16)),
            positivity_check=bool(sv.get("positivity_check", True)),
        )
        self.assertions = dict(raw.get("assertions", {}))

    def field_spec(self, key: str) -> dict:
        spec = self.raw.get(key)
        if spec is None:
            raise ConfigError(f"{key}: missing (required for "
                              f"{self.experiment})")
        return spec


def load_config(path: str) -> RunConfig:
    """Parse and validate a JSON run configuration.

    Rejects dimension mismatches, out-of-range kernel exponents for the
    chosen experiment, and solver-type runs whose certified contraction
    bound fails nu < 1/4.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config parse error at line {e.lineno}: {e.msg}")
    cfg = RunConfig(raw)

    needs_solver = cfg.experiment in ("simulate", "scatter", "wave-inverse")
    if cfg.experiment in ("bounds", "simulate", "scatter", "wave-inverse"):
        if cfg.params is None:
            raise ConfigError("maxwellian: required for this experiment")
        if cfg.kernel is None:
            raise ConfigError("kernel: required for this experiment")
        if cfg.kernel.D != cfg.params.D:
            raise ConfigError("kernel.D inconsistent with maxwellian D")
        rep = validate_params(cfg.params)
        if not rep.ok:
            raise ConfigError(f"maxwellian: {', '.join(rep.failures)}")
    if needs_solver:
        if cfg.grid is None:
            raise ConfigError("grid: required for this experiment")
        if not cfg.kernel.beta <= 1.0:
            raise ConfigError(
                f"kernel.beta: solver runs require beta <= 1, "
                f"got {cfg.kernel.beta}")
        nb, _ = nu_of_M(cfg.params, cfg.kernel, n_sample=2)
        cfg.solver.nu_bar = nb
        if not nb < 0.25:
            m_adm = admissible_mass(cfg.params, cfg.kernel, margin=0.9)
            raise ConfigError(
                f"maxwellian.m: certified nu bound {nb:.4f} violates the "
                f"required nu(M) < 1/4; reduce the mass below "
                f"{m_adm:.6g} (margin 0.9)")
    return cfg


def _build_field(cfg: RunConfig, spec: dict, rng: np.random.Generator):
    kind = spec.get("kind", "reference")
    grid = cfg.grid
    if kind == "file":
        f = load_field(spec["path"])
        if cfg.grid is not None and f.grid != cfg.grid:
            raise ConfigError("field file grid mismatch")
        return f
    base = reference_field(grid, cfg.params)
    eps = float(spec.get("epsilon", 0.0))
    if kind == "reference":
        return base
    if kind == "scaled":
        return DistributionField(grid=grid, t=0.0, frame="comoving",
                                 h=base.h * (1.0 + eps), ref=cfg.params)
    if kind == "bump":
        v = grid.v_nodes()
        x = grid.x_nodes()
        c_v = np.asarray(spec.get("center_v", np.zeros(grid.D)), dtype=float)
        c_x = np.asarray(spec.get("center_x", np.zeros(grid.D)), dtype=float)
        width = float(spec.get("width", 1.5))
        gv = np.exp(-np.sum((v - c_v) ** 2, axis=1) / (2 * width**2))
        gx = np.exp(-np.sum((x - c_x) ** 2, axis=1) / (2 * width**2))
        h = 1.0 + eps * gv[:, None] * gx[None, :]
        return DistributionField(grid=grid, t=0.0, frame="comoving",
                                 h=h, ref=cfg.params)
    if kind == "random":
        h = 1.0 + eps * _smooth_random(grid, rng)
        return DistributionField(grid=grid, t=0.0, frame="comoving",
                                 h=h, ref=cfg.params)
    raise ConfigError(f"initial data kind {kind!r} not recognized")


def _smooth_random(grid: PhaseGrid, rng: np.random.Generator) -> np.ndarray:
    """Band-limited random perturbation with sup norm 1."""
    v = grid.v_nodes() / grid.Vmax
    x = grid.x_nodes() / grid.Xmax
    out = np.zeros((grid.n_vnodes, grid.n_xnodes))
    for _ in range(4):
        kv = rng.normal(size=grid.D)
        kx = rng.normal(size=grid.D)
        ph = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.3, 1.0)
        out += amp * np.cos(np.pi * (v @ kv))[:, None] \
            * np.cos(np.pi * (x @ kx) + ph)[None, :]
    return out / np.max(np.abs(out))


def _check(assertions: dict, name: str, value: float, threshold: float,
           ok: bool = None) -> None:
    if ok is None:
        ok = bool(value <= threshold)
    assertions[name] = {"value": float(value), "threshold": float(threshold),
                        "ok": bool(ok)}


def _write_timeseries(path: str, diag: dict, D: int) -> None:
    labels = moment_labels(D)
    cols = ["t"] + labels + ["H", "entropy_production", "sup_dev"]
    lines = [",".join(cols)]
    for j, t in enumerate(diag["times"]):
        row = [repr(float(t))]
        row += [repr(float(v)) for v in diag["moments"][j]]
        row += [repr(float(diag["H"][j])),
                repr(float(diag["entropy_production"][j])),
                repr(float(diag["sup_dev"][j]))]
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_iteration_log(path: str, record: dict) -> None:
    lines = ["k,delta,ratio"]
    deltas = record.get("deltas", [])
    ratios = [""] + [repr(float(r)) for r in record.get("ratios", [])]
    for kk, d in enumerate(deltas):
        r = ratios[kk] if kk < len(ratios) else ""
        lines.append(f"{kk},{d!r},{r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def run(cfg: RunConfig, out_dir: str, threads: int = 0, seed: int = None,
        strict: bool = False) -> int:
    """Execute one experiment; writes the run directory, returns exit code."""
    os.makedirs(out_dir, exist_ok=True)
    if threads:
        _accel.set_threads(threads)
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    summary = {
        "version": __version__,
        "experiment": cfg.experiment,
        "config": cfg.raw,
        "seed": seed,
        "assertions": {},
        "warnings": [],
    }
    checks = summary["assertions"]
    try:
        if cfg.experiment == "validate":
            rep = validate_params(cfg.params)
            summary["verdict"] = {
                "accepted": rep.ok,
                "failures": list(rep.failures),
                "q_min_eig": rep.q_min_eig,
                "ac_minus_b2": rep.ac_minus_b2,
            }
            _check(checks, "params_accepted", 0.0 if rep.ok else 1.0, 0.5,
                   ok=rep.ok)

        elif cfg.experiment == "bounds":
            rep = bounds_report(cfg.params, cfg.kernel, seed=seed)
            summary["bounds"] = rep.to_json_obj()

        elif cfg.experiment == "simulate":
            f_in = _build_field(cfg, cfg.raw.get(
                "initial_data", {"kind": "reference"}), rng)
            tail = cfg.grid.check_tail(cfg.params, tol=cfg.tail_tol)
            if tail > 1e-8:
                summary["warnings"].append(
                    f"reference tail fraction {tail:.2e}")
            traj = solve_cauchy(f_in, cfg.kernel, cfg.solver)
            diag = run_diagnostics(traj, cfg.kernel, cfg.solver.n_omega)
            summary["solver"] = {
                "iterations": cfg.solver.record["iterations"],
                "deltas": cfg.solver.record["deltas"],
                "ratios": cfg.solver.record["ratios"],
                "nu_bar": cfg.solver.record["nu_bar"],
                "eps": cfg.solver.record["eps"],
                "T": cfg.solver.record["T"],
            }
            summary["diagnostics"] = {
                "moment_drift_rel": float(np.max(diag["moment_drift_rel"])),
                "H_monotone_defect": diag["H_monotone_defect"],
                "max_entropy_production": float(
                    np.max(diag["entropy_production"])),
                "final_sup_dev": float(diag["sup_dev"][-1]),
            }
            a = cfg.assertions
            _check(checks, "moment_drift_rel",
                   summary["diagnostics"]["moment_drift_rel"],
                   float(a.get("moment_drift_rel", 1e-3)))
            _check(checks, "H_monotone_defect",
                   diag["H_monotone_defect"],
                   float(a.get("H_monotone_slack", 1e-6)))
            _write_timeseries(os.path.join(out_dir, "timeseries.csv"),
                              diag, cfg.grid.D)
            _write_iteration_log(os.path.join(out_dir, "iteration.log"),
                                 cfg.solver.record)
            for j in cfg.raw.get("dump_nodes",
                                 [0, traj.n_nodes // 2, traj.n_nodes - 1]):
                save_field(traj.fields[int(j)],
                           os.path.join(out_dir, f"field_{int(j):03d}"))

        elif cfg.experiment == "scatter":
            f_minus = _build_field(cfg, cfg.field_spec("target"), rng)
            f_plus, traj, bar = scatter(f_minus, cfg.kernel, cfg.solver)
            cons = check_scatter_conservation(f_minus, f_plus)
            hrep = check_H_decrease(f_minus, f_plus,
                                    float(cfg.assertions.get(
                                        "H_slack", 1e-6)))
            summary["scatter"] = {
                "tail_bound": bar,
                "conservation_max_rel": cons["max_rel"],
                "H_minus": hrep["H_minus"],
                "H_plus": hrep["H_plus"],
                "iterations": cfg.solver.record.get("iterations"),
            }
            _check(checks, "scatter_conservation", cons["max_rel"],
                   float(cfg.assertions.get("conservation_rel", 1e-3)))
            _check(checks, "H_decrease", 0.0 if hrep["ok"] else 1.0, 0.5,
                   ok=hrep["ok"])
            save_field(f_minus, os.path.join(out_dir, "f_minus_inf"))
            save_field(f_plus, os.path.join(out_dir, "f_plus_inf"))
            _write_iteration_log(os.path.join(out_dir, "iteration.log"),
                                 cfg.solver.record)

        elif cfg.experiment == "wave-inverse":
            direction = {"+": +1, "-": -1}.get(
                str(cfg.raw.get("direction", "+")))
            if direction is None:
                raise ConfigError("direction: must be '+' or '-'")
            f_inf = _build_field(cfg, cfg.field_spec("target"), rng)
            f_in, traj, info = wave_inverse(f_inf, direction, cfg.kernel,
                                            cfg.solver)
            rt, bar = extract_asymptote(traj, direction, cfg.kernel)
            resid = float(np.max(np.abs(rt.h - f_inf.h)))
            summary["wave_inverse"] = {
                "direction": direction,
                "iterations": info["iterations"],
                "roundtrip_resid": resid,
                "tail_bound": bar,
            }
            _check(checks, "wave_roundtrip", resid,
                   float(cfg.assertions.get("roundtrip_tol", 1e-4)))
            save_field(f_in, os.path.join(out_dir, "f_in"))
            save_field(f_inf, os.path.join(out_dir, "f_inf"))
            _write_iteration_log(os.path.join(out_dir, "iteration.log"),
                                 info)

        elif cfg.experiment == "fit":
            if "moments" in cfg.raw:
                target = np.asarray(cfg.raw["moments"], dtype=float)
                D = cfg.params.D if cfg.params else int(cfg.raw["D"])
            else:
                f = _build_field(cfg, cfg.field_spec("target"), rng)
                from .grids import moments as field_moments
                target = field_moments(f)
                D = f.grid.D
            out = fit_global_maxwellian(target, D)
            summary["fit"] = {
                "params": json.loads(params_to_json(out["params"])),
                "residual_norm": out["residual_norm"],
                "iterations": out["iterations"],
            }
            _check(checks, "fit_residual", out["residual_norm"], 1e-9)

        elif cfg.experiment == "report":
            return _report(cfg.raw.get("run_dir", out_dir))

    except (ConfigError,) as e:
        raise
    except Exception as e:  # execution error: record and signal exit 1
        summary["error"] = f"{type(e).__name__}: {e}"
        summary["status"] = "error"
        _write_summary(out_dir, summary)
        return 1

    if strict and summary["warnings"]:
        for w in summary["warnings"]:
            _check(checks, f"warning:{w[:40]}", 1.0, 0.5, ok=False)
    all_ok = all(v["ok"] for v in checks.values())
    summary["status"] = "pass" if all_ok else "fail"
    _write_summary(out_dir, summary)
    return 0 if all_ok else 2


def _write_summary(out_dir: str, summary: dict) -> None:
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _report(run_dir: str) -> int:
    """Re-read a run directory, verify dump checksums, print the verdict."""
    path = os.path.join(run_dir, "summary.json")
    with open(path) as fh:
        summary = json.load(fh)
    ok = summary.get("status") == "pass"
    for name in sorted(os.listdir(run_dir)):
        if name.endswith(".f64"):
            try:
                load_field(os.path.join(run_dir, name[:-4]))
            except ValueError as e:
                print(f"checksum failure for {name}: {e}")
                ok = False
    print(json.dumps({"run": run_dir, "status": summary.get("status"),
                      "assertions": summary.get("assertions", {})},
                     indent=1, sort_keys=True))
    return 0 if ok else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nearmaxwell",
        description="Boltzmann dynamics near global Maxwellians: "
                    "validation, bounds, simulation, scattering.")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="JSON run config")
    parser.add_argument("--out", default="run", help="output directory")
    parser.add_argument("--threads", type=int, default=0,
                        help="collision kernel threads (0: library default)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--strict", action="store_true",
                        help="treat warnings as failures")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigError(
                f"experiment: config says {cfg.experiment!r}, "
                f"command line says {args.experiment!r}")
        return run(cfg, args.out, threads=args.threads, seed=args.seed,
                   strict=args.strict)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
