"""Command-line entry point.

    degparlog <eigen|evolve|obstacle|vi-evolve|psweep|longtime|coincidence|diagram>
              --config FILE [--out DIR] [--threads N]

Every run writes report.json (full effective configuration, metrics, and
pass/fail per configured assertion) under the output directory, so a run
is replayable from its manifest alone. Exit codes: 0 all assertions pass,
1 assertion failure, 2 usage or configuration error, 3 solver error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, parse_config
from .errors import ConfigurationError, SolverError
from .evolution import EvolveParams, evolve
from .experiments import (
    ProblemSetup,
    coincidence_convergence,
    commuting_diagram,
    longtime_study,
    p_sweep,
)
from .fieldio import field_to_csv, load_field, save_field
from .mesh import Field
from .obstacle import (
    ObstacleSpec,
    coincidence_set,
    parabolic_vi_evolve,
    stationary_vi_solve,
)
from .spectral import principal_eigenpair

COMMANDS = ("eigen", "evolve", "obstacle", "vi-evolve", "psweep", "longtime",
            "coincidence", "diagram")


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value).strip("'")
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def _write_report(out_dir: Path, payload: dict) -> None:
    payload = _json_safe(payload)
    with open(out_dir / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, columns: dict) -> None:
    keys = list(columns)
    rows = zip(*(columns[k] for k in keys)) if keys else ()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def _series_columns(ts, with_active: bool) -> dict:
    cols = {
        "t": ts.times,
        "sup": ts.sup,
        "l2": ts.l2,
        "h1": ts.h1,
        "dtu_l2": ts.dtu_l2,
        "cum_bupp1": ts.cum_bupp1,
    }
    if with_active:
        cols["active_measure"] = ts.active_measure
    return cols


def _problem(cfg: RunConfig, spec) -> ProblemSetup:
    ev = cfg.evolve
    u0_kind, u0_field = ev["u0"], None
    if u0_kind == "phi1-scaled":
        u0_kind = "phi1"
    if u0_kind == "file":
        u0_kind, u0_field = "field", load_field(ev["u0_file"], spec.grid)
    return ProblemSetup(
        spec=spec, a=ev["a"], dt=ev["dt"], t_end=ev["t_end"],
        snapshot_every=ev["snapshot_every"], u0_kind=u0_kind,
        u0_scale=ev["u0_scale"], u0_field=u0_field, cg_tol=ev["cg_tol"],
        vi_dt=cfg.vi["dt"], vi_tol=cfg.vi["tol"], vi_omega=cfg.vi["omega"],
        steady_tol=cfg.vi["steady_tol"], eps=cfg.vi["eps"],
        t_max=cfg.vi["t_max"])


def _build_u0(cfg: RunConfig, spec) -> Field:
    return _problem(cfg, spec).build_u0(principal_eigenpair(spec))


def _active_set_csv(path: Path, mask) -> None:
    pts = mask.grid.coords()
    cols = {"x": pts[:, 0]}
    if mask.grid.dim == 2:
        cols["y"] = pts[:, 1]
    cols["active"] = mask.flags.astype(float)
    _write_csv(path, cols)


def _cmd_eigen(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    spec = cfg.build_domain(cfg.build_grid())
    results = {}
    outputs = []
    for region in ("omega", "omega0"):
        eig = principal_eigenpair(spec, region)
        results[region] = {
            "lambda1": eig.lambda1,
            "residual": eig.residual,
            "iterations": eig.iterations,
        }
        if math.isfinite(eig.lambda1):
            name = f"phi1_{region}.rdvi"
            save_field(out / name, eig.phi1)
            field_to_csv(out / f"phi1_{region}.csv", eig.phi1)
            outputs += [name, f"phi1_{region}.csv"]
    print(json.dumps(_json_safe(results), indent=2))
    return 0, {"metrics": results, "outputs": outputs, "checks": []}


def _cmd_evolve(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    spec = cfg.build_domain(cfg.build_grid())
    ev = cfg.evolve
    params = EvolveParams(a=ev["a"], p=ev["p"], dt=ev["dt"], t_end=ev["t_end"],
                          snapshot_every=ev["snapshot_every"],
                          cg_tol=ev["cg_tol"])
    ts = evolve(_build_u0(cfg, spec), spec, params)
    _write_csv(out / "observables.csv", _series_columns(ts, with_active=False))
    save_field(out / "final.rdvi", ts.final)
    field_to_csv(out / "final.csv", ts.final)
    metrics = {"final_sup": float(ts.sup[-1]), "final_l2": float(ts.l2[-1]),
               "final_time": float(ts.times[-1]), "stop_reason": ts.stop_reason}
    return 0, {"metrics": metrics, "checks": [],
               "outputs": ["observables.csv", "final.rdvi", "final.csv"]}


def _cmd_obstacle(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    spec = cfg.build_domain(cfg.build_grid())
    obs = ObstacleSpec.from_domain(spec)
    res = stationary_vi_solve(obs, cfg.evolve["a"], _build_u0(cfg, spec),
                              cfg.vi_dt(), cfg.vi["steady_tol"],
                              tol=cfg.vi["tol"], omega=cfg.vi["omega"],
                              t_max=cfg.vi["t_max"])
    save_field(out / "final.rdvi", res.u)
    field_to_csv(out / "final.csv", res.u)
    _active_set_csv(out / "active_set.csv", res.active_set)
    metrics = {
        "sup": float(np.max(np.abs(res.u.values))),
        "active_measure": res.active_set.measure,
        "comp_residual": res.comp_residual,
        "psor_sweeps_last_step": res.iterations,
    }
    return 0, {"metrics": metrics, "checks": [],
               "outputs": ["final.rdvi", "final.csv", "active_set.csv"]}


def _cmd_vi_evolve(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    spec = cfg.build_domain(cfg.build_grid())
    obs = ObstacleSpec.from_domain(spec)
    ts = parabolic_vi_evolve(_build_u0(cfg, spec), obs, cfg.evolve["a"],
                             cfg.vi_dt(), cfg.evolve["t_end"],
                             tol=cfg.vi["tol"], omega=cfg.vi["omega"],
                             snapshot_every=cfg.evolve["snapshot_every"])
    _write_csv(out / "observables.csv", _series_columns(ts, with_active=True))
    save_field(out / "final.rdvi", ts.final)
    field_to_csv(out / "final.csv", ts.final)
    _active_set_csv(out / "active_set.csv",
                    coincidence_set(ts.final, obs, cfg.vi["eps"]))
    metrics = {"final_sup": float(ts.sup[-1]),
               "final_active_measure": float(ts.active_measure[-1]),
               "final_time": float(ts.times[-1])}
    return 0, {"metrics": metrics, "checks": [],
               "outputs": ["observables.csv", "final.rdvi", "final.csv",
                           "active_set.csv"]}


def _report_from_sweep(rep, out: Path, csv_name: str) -> tuple[int, dict]:
    if rep.table:
        _write_csv(out / csv_name, rep.table)
    payload = rep.to_dict()
    payload["outputs"] = [csv_name] if rep.table else []
    return (0 if rep.passed else 1), payload


def _cmd_psweep(cfg: RunConfig, out: Path, threads: int) -> tuple[int, dict]:
    spec = cfg.build_domain(cfg.build_grid())
    sw = cfg.sweep
    rep = p_sweep(_problem(cfg, spec), sw["p_list"],
                  monotone_from=sw["monotone_from"],
                  ratio_check=(sw["ratio_p_hi"], sw["ratio_p_lo"], sw["ratio"]),
                  sup_excess_cap=sw["sup_excess_cap"], threads=threads)
    return _report_from_sweep(rep, out, "psweep.csv")


def _cmd_longtime(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    spec = cfg.build_domain(cfg.build_grid())
    sw = cfg.sweep
    rep = longtime_study(_problem(cfg, spec), sw["regime"],
                         growth_threshold=sw["growth_threshold"],
                         rate_rtol=sw["rate_rtol"], h1_cap=sw["h1_cap"],
                         sup_tol=sw["sup_tol"])
    return _report_from_sweep(rep, out, "longtime.csv")


def _cmd_coincidence(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    spec = cfg.build_domain(cfg.build_grid())
    rep = coincidence_convergence(_problem(cfg, spec),
                                  terminal_cells=cfg.sweep["terminal_cells"])
    return _report_from_sweep(rep, out, "coincidence.csv")


def _cmd_diagram(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    spec = cfg.build_domain(cfg.build_grid())
    sw = cfg.sweep
    rep = commuting_diagram(_problem(cfg, spec), sw["p_max"],
                            t_max_transient=sw["t_max_transient"],
                            discrepancy_cap=sw["discrepancy_cap"])
    return _report_from_sweep(rep, out, "diagram.csv")


def build_parser() -> argparse.ArgumentParser:
    from . import config as config_module

    parser = argparse.ArgumentParser(
        prog="degparlog",
        description=__doc__ + "\n" + (config_module.__doc__ or ""),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="run configuration file")
        cmd.add_argument("--out", default=None, help="output directory "
                         "(default: [sweep] out_dir from the config)")
        cmd.add_argument("--threads", type=int, default=1,
                         help="worker threads for sweep entries")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # the obstacle level is structural (fixed at 1); recorded so that
    # post-processing reads it from the manifest instead of assuming it
    payload = {"command": args.command, "error": None, "passed": False,
               "obstacle_level": 1.0}
    out = None
    try:
        cfg = parse_config(args.config)
        payload["config"] = cfg.to_dict()
        payload["config"]["vi"]["dt"] = cfg.vi_dt()
        out_arg = args.out if args.out is not None else cfg.sweep["out_dir"]
        if out_arg is None:
            raise ConfigurationError(
                "no output directory: pass --out or set [sweep] out_dir")
        out = Path(out_arg)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "psweep":
            code, result = _cmd_psweep(cfg, out, args.threads)
        else:
            runner = {
                "eigen": _cmd_eigen,
                "evolve": _cmd_evolve,
                "obstacle": _cmd_obstacle,
                "vi-evolve": _cmd_vi_evolve,
                "longtime": _cmd_longtime,
                "coincidence": _cmd_coincidence,
                "diagram": _cmd_diagram,
            }[args.command]
            code, result = runner(cfg, out)
        payload.update(result)
        payload["passed"] = code == 0
        _write_report(out, payload)
        for check in payload.get("checks", []):
            status = "pass" if check["passed"] else "FAIL"
            print(f"[{status}] {check['name']}: {check['detail']}")
        return code
    except ConfigurationError as exc:
        payload["error"] = {"type": "configuration", "message": str(exc)}
        print(f"configuration error: {exc}", file=sys.stderr)
        if out is not None:
            _write_report(out, payload)
        return 2
    except SolverError as exc:
        payload["error"] = {"type": type(exc).__name__, "message": str(exc)}
        print(f"solver error: {exc}", file=sys.stderr)
        if out is not None:
            _write_report(out, payload)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
