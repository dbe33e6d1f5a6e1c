"""Command line entry point: ``vlasovkit derive|simulate|solve|converge|selftest``.

Exit codes: 0 success, 2 configuration or model error, 3 numerical fault
(solver fault, particle cap reached, broken conservation), 4 failed check.
Artifacts carry no timestamps, so reruns of a config are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dsl import DSLError, analyze_scaling, canonical_formula, derive_vlasov
from .experiment import ConfigError, ExperimentConfig, load_config
from .kinetic import (
    REFERENCE_MODELS,
    SolverFault,
    integrate,
    reference_solution,
    write_field_csv,
    write_field_json,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4

# models whose closed-form reference is picked without asking
AUTO_REFERENCE = {"surgailis": "surgailis", "contact": "contact", "free_kawasaki": "free_kawasaki",
                  "bdlp": "bdlp_homogeneous"}


class NumericalFault(RuntimeError):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False, default=_jsonable) + "\n"


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _preset_key(cfg: ExperimentConfig) -> str | None:
    from .catalog import preset_name

    if cfg.model_text is not None or cfg.model is None:
        return None
    try:
        return preset_name(cfg.model)
    except KeyError:
        return None


def _spec_info(spec) -> dict:
    return {"box": {"d": spec.box.d, "L": spec.box.L},
            "consts": {k: c.value for k, c in sorted(spec.consts.items())},
            "kernels": {k: spec.kernels[k].to_json() for k in sorted(spec.kernels)}}


# -- derive --------------------------------------------------------------------------

def cmd_derive(args) -> int:
    from .catalog import CATALOG, PRESETS, load_preset

    if args.catalog and args.config is None:
        bad = 0
        for name in PRESETS:
            got = canonical_formula(load_preset(name))
            ok = got == CATALOG[name]
            bad += not ok
            print(f"{'match   ' if ok else 'MISMATCH'} {name}: {got}")
            if not ok:
                print(f"         catalog: {CATALOG[name]}")
        print(f"{len(PRESETS) - bad}/{len(PRESETS)} equations match the catalog")
        return EXIT_CHECK if bad else EXIT_OK
    if args.config is None:
        raise ConfigError("derive needs --config (or --catalog alone to check every preset)")
    cfg = load_config(args.config)
    spec = cfg.spec()
    report = analyze_scaling(spec)
    expr = derive_vlasov(spec)
    formula = str(expr)
    print(formula)
    print(json.dumps(expr.to_json(), sort_keys=True))
    result = {"model": cfg.model_name(), "formula": formula, "ast": expr.to_json(),
              "scaling": report.rules}
    status = EXIT_OK
    if args.catalog:
        key = _preset_key(cfg)
        if key is None:
            print("catalog: no entry for this model")
        else:
            ok = formula == CATALOG[key]
            result["catalog"] = {"entry": CATALOG[key], "match": ok}
            print(f"catalog: {'match' if ok else 'MISMATCH, expected ' + CATALOG[key]}")
            status = EXIT_OK if ok else EXIT_CHECK
    if args.out is not None:
        (_out_dir(args) / "derive.json").write_text(_dump(result), encoding="utf-8")
    return status


# -- simulate ------------------------------------------------------------------------

def _plan(cfg: ExperimentConfig, spec, eps: float):
    from .sim import SimPlan

    try:
        return SimPlan(spec, eps, spec.box, cfg.rho0_profile(spec.box), cfg.t_end, cfg.snapshot_times(),
                       cfg.replicas, base_seed=cfg.seed, max_particles=cfg.max_particles)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_simulate(args) -> int:
    from .sim import UnsupportedRate, compile_model, run_ensemble
    from .sim.io import write_binary, write_jsonl
    from .dsl import scale

    cfg = load_config(args.config)
    spec = cfg.spec()
    analyze_scaling(spec)
    out = _out_dir(args)
    fmt = cfg.format
    runs, faults = [], []
    for eps in cfg.eps:
        try:
            compile_model(scale(spec, eps), eps)
        except UnsupportedRate as exc:
            raise ConfigError(f"cannot simulate this model: {exc}") from None
        plan = _plan(cfg, spec, eps)
        res = run_ensemble(plan, threads=args.threads)
        stem = f"snapshots_eps{eps:g}"
        records = list(res.records())
        files = []
        if fmt in ("jsonl", "both"):
            files.append(f"{stem}.jsonl")
            write_jsonl(out / files[-1], records)
        if fmt in ("binary", "both"):
            files.append(f"{stem}.bin")
            write_binary(out / files[-1], records, spec.box.d, spec.box.L)
        counts = {str(r.replica): [len(c) for c in r.configs] for r in res.replicas}
        entry = {
            "eps": eps,
            "files": files,
            "times": list(plan.snapshot_times),
            "counts": counts,
            "events": sum(r.events for r in res.replicas),
            "rejected": sum(r.rejected for r in res.replicas),
            "truncated": [{"replica": r, "t": t} for r, t in res.truncated],
            "explosion": bool(res.truncated),
        }
        if "hop" in spec.parts and not set(spec.parts) - {"hop"}:
            entry["conserved"] = all(len(set(c)) <= 1 for c in counts.values())
            if not entry["conserved"]:
                faults.append(f"particle number changed under pure hopping at eps={eps:g}")
        if res.truncated:
            faults.append(f"{len(res.truncated)} replica(s) exceeded max_particles={cfg.max_particles} "
                          f"at eps={eps:g}")
        runs.append(entry)
        print(f"eps={eps:g}: {len(res.replicas)} replicas, {entry['events']} events, "
              f"{len(res.truncated)} truncated")
    manifest = {"command": "simulate", "version": __version__, "config": cfg.resolved(),
                "model": cfg.model_name(), "formula": canonical_formula(spec), "spec": _spec_info(spec),
                "rng": "numpy default_rng(seed + replica)"}
    (out / "manifest.json").write_text(_dump(manifest), encoding="utf-8")
    (out / "summary.json").write_text(_dump({"runs": runs, "faults": faults}), encoding="utf-8")
    if faults:
        for f in faults:
            print(f"fault: {f}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# -- solve ---------------------------------------------------------------------------

def _reference_name(cfg: ExperimentConfig, rho0) -> str | None:
    if cfg.reference is not None:
        if cfg.reference == "none":
            return None
        if cfg.reference not in REFERENCE_MODELS:
            raise ConfigError(f"unknown reference {cfg.reference!r}; choose from {', '.join(REFERENCE_MODELS)}")
        return cfg.reference
    name = AUTO_REFERENCE.get(_preset_key(cfg) or "")
    if name == "bdlp_homogeneous" and np.ptp(rho0.values) > 0:
        return None
    return name


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    spec = cfg.spec()
    analyze_scaling(spec)
    expr = derive_vlasov(spec)
    grid = cfg.grid(spec.box)
    rho0 = cfg.rho0_field(grid)
    ref_name = _reference_name(cfg, rho0)
    try:
        report = integrate(expr, rho0, cfg.t_end, cfg.snapshot_times(), dt=cfg.dt)
    except SolverFault as exc:
        raise NumericalFault(str(exc)) from None
    out = _out_dir(args)
    params = _spec_info(spec)
    rows = []
    for t, field in zip(report.times, report.fields):
        row = {"t": t, "mass": math.fsum(field.values.ravel()) * grid.cell_volume, "sup": field.sup()}
        if ref_name is not None:
            try:
                ref = reference_solution(ref_name, rho0, t, spec=spec)
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"reference {ref_name!r} does not apply: {exc}") from None
            row["max_error"] = float(np.max(np.abs(field.values - ref.values)))
        rows.append(row)
    final = report.fields[-1]
    write_field_csv(out / "field.csv", final)
    write_field_json(out / "field.json", final, cfg.model_name(), params, report.times[-1])
    lines = ["t,mass,sup,max_error"]
    for r in rows:
        err = format(r["max_error"], ".17g") if "max_error" in r else ""
        lines.append(f"{r['t']:.17g},{r['mass']:.17g},{r['sup']:.17g},{err}")
    (out / "solve.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    summary = {"command": "solve", "version": __version__, "config": cfg.resolved(),
               "formula": str(expr), "reference": ref_name, "steps": report.steps, "dt": report.dt,
               "mass_drift": report.mass_drift(), "snapshots": rows}
    (out / "solve.json").write_text(_dump(summary), encoding="utf-8")
    print(f"{cfg.model_name()}: {str(expr)}")
    print(f"t={report.times[-1]:g}, {report.steps} steps, relative mass drift {report.mass_drift():.3g}")
    if ref_name is not None:
        print(f"max error vs {ref_name}: {max(r['max_error'] for r in rows):.3g}")
    return EXIT_OK


# -- converge ------------------------------------------------------------------------

def cmd_converge(args) -> int:
    from .estimator import convergence_sweep

    cfg = load_config(args.config)
    spec = cfg.spec()
    analyze_scaling(spec)
    eps_list = sorted(set(cfg.eps), reverse=True)
    grid = cfg.grid(spec.box)
    try:
        solution = integrate(derive_vlasov(spec), cfg.rho0_field(grid), cfg.t_end, dt=cfg.dt).fields[-1]
    except SolverFault as exc:
        raise NumericalFault(str(exc)) from None
    plan = _plan(cfg, spec, eps_list[0])
    report = convergence_sweep(cfg.model_name(), eps_list, plan, solution, bins=cfg.bins, threads=args.threads)
    report.meta["config"] = cfg.resolved()
    report.meta["version"] = __version__
    report.meta["l2_decreasing_beyond_1sigma"] = report.decreasing_beyond_1sigma("l2_k1", "l2_err")
    if np.all(np.isfinite(report.column("sup_g2m1"))):
        report.meta["g2_decreasing_beyond_1sigma"] = report.decreasing_beyond_1sigma("sup_g2m1", "g2_err")
    report.write(_out_dir(args))
    sys.stdout.write(report.to_csv())
    truncated = sum(r.truncated for r in report.rows)
    if truncated:
        raise NumericalFault(f"{truncated} replica(s) exceeded max_particles")
    return EXIT_OK


# -- selftest ------------------------------------------------------------------------

def cmd_selftest(args) -> int:
    from .selftest import run_all

    results = run_all(include_limits=not args.quick)
    for r in results:
        print(r.line())
    if args.out is not None:
        rows = [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results]
        (_out_dir(args) / "selftest.json").write_text(_dump(rows), encoding="utf-8")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_CHECK if failed else EXIT_OK


# -- wiring --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vlasovkit", description="Vlasov-scaled particle systems and their kinetic limits.")
    p.add_argument("--version", action="version", version=f"vlasovkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True, out_default="out"):
        sp.add_argument("--config", required=config_required, help="experiment config (key = value lines)")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker processes (wall time only)")

    d = sub.add_parser("derive", help="print the kinetic equation of a model")
    common(d, config_required=False, out_default=None)
    d.add_argument("--catalog", action="store_true", help="compare against the built-in equation catalog")
    d.set_defaults(func=cmd_derive)
    s = sub.add_parser("simulate", help="run the scaled particle system")
    common(s)
    s.set_defaults(func=cmd_simulate)
    v = sub.add_parser("solve", help="integrate the kinetic equation")
    common(v)
    v.set_defaults(func=cmd_solve)
    c = sub.add_parser("converge", help="compare ensembles with the kinetic solution across eps")
    common(c)
    c.set_defaults(func=cmd_converge)
    t = sub.add_parser("selftest", help="identity and limit checks")
    common(t, config_required=False, out_default=None)
    t.add_argument("--quick", action="store_true", help="skip the limit-coefficient block")
    t.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, DSLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFault as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
