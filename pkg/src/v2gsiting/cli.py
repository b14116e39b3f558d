"""Command-line front end: ``v2gsiting <subcommand> ...``.

Exit codes: 0 success, 1 solver stopped at a limit (or an external solution
failed verification), 2 bad input.  Every output file ``F`` gets a run
manifest ``F.manifest.json`` (sweeps write ``manifest.json`` into their
directory).  ``V2GSITING_OUT_DIR`` sets the directory for outputs whose path
is not given explicitly.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import metadata
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .core import Instance, InstanceFormatError, dump_instance, load_instance, validate_instance
from .experiments import (ExperimentPlan, SweepResult, SweepRow,
                          compute_metrics, ge_cases, plan_from_dict, plan_to_dict,
                          read_sweep_csv, run_penetration_sweep, solve_siting, v2g_cases,
                          SolverLimits)
from .formulation import ModelConfig, build_extensive_form, check_solution_feasibility
from .instances import InstanceKnobs, generate_miami_like_instance, generate_rts_like_instance
from .scenarios import (SamplingOptions, ScenarioSet, assign_renewables, dump_scenario_set,
                        load_scenario_set, sample_scenario_set)
from .solver.mps import column_name, export_mps, names_table
from .toys import TOY_NAMES, toy_instance

log = logging.getLogger("v2gsiting")

OUT_DIR_ENV = "V2GSITING_OUT_DIR"
EXIT_OK, EXIT_LIMIT, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad user input; reported and mapped to exit code 2."""


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from . import __version__
        return __version__


# --------------------------------------------------------------------------
# files and manifests
# --------------------------------------------------------------------------

def atomic_write(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config: dict[str, Any]
    seeds: dict[str, Any]
    artifacts: dict[str, str] = field(default_factory=dict)  # path -> sha256
    wall_clock_s: float = 0.0
    tool_version: str = field(default_factory=tool_version)

    def write(self, path: Path) -> None:
        atomic_write(path, json.dumps(asdict(self), indent=1, sort_keys=True) + "\n")


def _resolve_out(value: str | None, default_name: str) -> Path:
    if value:
        return Path(value)
    return Path(os.environ.get(OUT_DIR_ENV, ".")) / default_name


def _read_text(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {what} {path!r}: {exc.strerror}") from None


def _load_instance(path: str) -> Instance:
    try:
        inst = load_instance(_read_text(path, "instance"))
    except InstanceFormatError as exc:
        raise InputError(f"{path}: {exc}") from None
    problems = validate_instance(inst)
    if problems:
        listed = "; ".join(str(p) for p in problems[:5])
        raise InputError(f"{path}: invalid instance ({len(problems)} problems): {listed}")
    return inst


def _load_scenarios(path: str, instance: Instance) -> ScenarioSet:
    try:
        ss = load_scenario_set(_read_text(path, "scenario set"))
    except InstanceFormatError as exc:
        raise InputError(f"{path}: {exc}") from None
    sizes = {"route_demands": len(instance.routes), "bus_loads": len(instance.buses),
             "gen_capacities": len(instance.generators), "gen_costs": len(instance.generators)}
    for sc in ss:
        for name, n in sizes.items():
            if len(getattr(sc, name)) != n:
                raise InputError(f"{path}: scenario {sc.id} has {len(getattr(sc, name))} "
                                 f"{name} for {n} in the instance")
    if len(ss.assignment.renewable_flags) != len(instance.generators):
        raise InputError(f"{path}: renewable flags do not match the generator count")
    if not ss.scenarios:
        raise InputError(f"{path}: the scenario set is empty")
    return ss


def _finite(v: float) -> float | None:
    return float(v) if math.isfinite(v) else None


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

_KNOB_HELP = {
    "battery_power": "MW delivered per battery",
    "fixed_cost": "opening cost per station",
    "per_battery_cost": "cost per stocked battery",
    "unmet_penalty": "penalty per unmet battery request",
    "detour_unit_cost": "cost per unit of detour distance",
    "shed_penalty_factor": "shed penalty as a multiple of the dearest generator cost",
    "min_batteries": "minimum stock of an open station",
    "max_stock_fraction": "station capacity as a share of total expected demand",
    "line_capacity_scale": "multiplier on line ratings",
    "vehicle_ratio": "vehicles per resident",
    "phev_ratio": "plug-in hybrids per vehicle",
    "exchange_fraction": "share of plug-in hybrids requesting an exchange",
}


def _add_knob_args(p: argparse.ArgumentParser) -> None:
    defaults = InstanceKnobs()
    g = p.add_argument_group("instance knobs (rts/miami)")
    for f in fields(InstanceKnobs):
        if f.type in ("bool", bool):
            continue
        g.add_argument("--" + f.name.replace("_", "-"), type=float, default=getattr(defaults, f.name),
                       help=f"{_KNOB_HELP[f.name]} (default: %(default)s)")
    g.add_argument("--no-exchange-fraction", action="store_true",
                   help="drop the exchange share from the battery-demand formula")


def cmd_gen_instance(args) -> int:
    knobs = InstanceKnobs(**{f.name: getattr(args, f.name) for f in fields(InstanceKnobs)
                             if f.type not in ("bool", bool)},
                          include_exchange_fraction=not args.no_exchange_fraction)
    if args.kind == "rts":
        inst = generate_rts_like_instance(args.seed, knobs)
    elif args.kind == "miami":
        inst = generate_miami_like_instance(args.seed, knobs)
    else:
        inst = toy_instance(args.toy)
    out = _resolve_out(args.out, "instance.json")
    atomic_write(out, dump_instance(inst))
    _manifest(args, out, {"knobs": asdict(knobs)}, {"seed": args.seed}, [out])
    print(f"wrote {out} ({len(inst.buses)} buses, {len(inst.lines)} lines, "
          f"{len(inst.stations)} candidates, {len(inst.routes)} routes)")
    return EXIT_OK


def cmd_gen_scenarios(args) -> int:
    inst = _load_instance(args.instance)
    try:
        options = SamplingOptions(capacity_factor_probs=tuple(args.capacity_factor_probs),
                                  cost_jitter=args.cost_jitter)
        assignment = assign_renewables(inst.generators, args.penetration, args.seed)
        ss = sample_scenario_set(inst, assignment, args.n, args.seed, options)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = _resolve_out(args.out, "scenarios.json")
    atomic_write(out, dump_scenario_set(ss))
    _manifest(args, out, {"penetration": args.penetration, "n": args.n,
                          "options": asdict(options)}, {"seed": args.seed}, [out])
    print(f"wrote {out} ({args.n} scenarios, {assignment.n_renewable} renewable generators)")
    return EXIT_OK


def _model_config(args, instance: Instance) -> ModelConfig:
    fixed = None
    if args.fixed_siting:
        try:
            doc = json.loads(_read_text(args.fixed_siting, "siting"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.fixed_siting}: line {exc.lineno} col {exc.colno}: {exc.msg}")
        vec = doc.get("x") if isinstance(doc, dict) else doc
        if not isinstance(vec, list) or len(vec) != len(instance.stations):
            raise InputError(f"{args.fixed_siting}: expected a list of {len(instance.stations)} "
                             "0/1 values (or an object with key 'x')")
        if any(v not in (0, 1) for v in vec):
            raise InputError(f"{args.fixed_siting}: siting values must be 0 or 1")
        fixed = tuple(float(v) for v in vec)
    if args.budget is not None and args.budget < 0:
        raise InputError("--budget must be non-negative")
    if args.reference_bus is not None and not 0 <= args.reference_bus < len(instance.buses):
        raise InputError(f"--reference-bus {args.reference_bus} is not a bus id")
    return ModelConfig(ge_mode=args.ge, station_budget=args.budget, fixed_siting=fixed,
                       reference_bus=args.reference_bus, integer_stock=args.integer_stock)


def _solution_doc(outcome, instance: Instance, ss: ScenarioSet, with_recourse: bool) -> dict:
    doc: dict[str, Any] = {
        "status": outcome.status.value,
        "objective": _finite(outcome.objective),
        "bound": _finite(outcome.bound),
        "gap": _finite(outcome.gap),
        "nodes": outcome.nodes,
        "lp_iterations": outcome.lp_iterations,
    }
    sol = outcome.solution
    if sol is not None:
        m = compute_metrics(sol, ss)
        doc.update({
            "x": [int(round(v)) for v in sol.x],
            "w": [float(v) for v in sol.w],
            "opened": sol.opened,
            "metrics": {"load_shed_fraction": m.load_shed_fraction,
                        "unmet_battery_fraction": m.unmet_battery_fraction},
        })
        if with_recourse:
            doc["recourse"] = [{k: np.asarray(getattr(rv, k)).tolist() for k in
                                ("t", "s", "q", "y", "alpha", "theta", "delta", "beta")}
                               for rv in sol.recourse]
    return doc


def _verify_external(args, instance: Instance, ss: ScenarioSet, config: ModelConfig) -> int:
    if not args.solution_file:
        raise InputError("--solver external needs --solution-file")
    model = build_extensive_form(instance, ss, config)
    by_name = {column_name(j): j for j in range(model.n_columns)}
    by_name.update({model.registry.label(j): j for j in range(model.n_columns)})
    v = np.zeros(model.n_columns)
    for lineno, line in enumerate(_read_text(args.solution_file, "solution").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2 or parts[0] not in by_name:
            raise InputError(f"{args.solution_file}: line {lineno}: expected "
                             "'column_name value' with a known column")
        try:
            v[by_name[parts[0]]] = float(parts[1])
        except ValueError:
            raise InputError(f"{args.solution_file}: line {lineno}: bad number {parts[1]!r}")
    sol = model.unpack(v)
    violations = check_solution_feasibility(instance, ss, sol, tol=args.tol, config=config)
    doc = {"solver": "external", "objective": sol.objective, "feasible": not violations,
           "violations": [str(x) for x in violations[:100]], "n_violations": len(violations)}
    out = _resolve_out(args.out, "solution.json")
    atomic_write(out, json.dumps(doc, indent=1) + "\n")
    _manifest(args, out, {"config": asdict(config)}, {"scenario_seed": ss.seed}, [out])
    print(f"external solution: objective {sol.objective:.6g}, {len(violations)} violations")
    return EXIT_OK if not violations else EXIT_LIMIT


def cmd_solve(args) -> int:
    inst = _load_instance(args.instance)
    ss = _load_scenarios(args.scenarios, inst)
    config = _model_config(args, inst)
    if args.solver == "external":
        return _verify_external(args, inst, ss, config)
    limits = SolverLimits(gap=args.gap, node_limit=args.node_limit,
                          iteration_limit=args.iteration_limit)
    try:
        outcome = solve_siting(inst, ss, config, limits)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    doc = _solution_doc(outcome, inst, ss, args.with_recourse)
    out = _resolve_out(args.out, "solution.json")
    atomic_write(out, json.dumps(doc, indent=1) + "\n")
    _manifest(args, out, {"config": asdict(config), "limits": asdict(limits)},
              {"scenario_seed": ss.seed, "assignment_seed": ss.assignment.seed}, [out])
    gap = "n/a" if not math.isfinite(outcome.gap) else f"{outcome.gap:.4%}"
    print(f"{outcome.status.value}: objective {outcome.objective:.6g}, gap {gap}, "
          f"{outcome.nodes} nodes -> {out}")
    return EXIT_OK if outcome.gap_reached else EXIT_LIMIT


PRESETS = {
    "ge": lambda: ExperimentPlan(cases=ge_cases()),
    "ge1": lambda: ExperimentPlan(cases=ge_cases()[:1]),
    "v2g": lambda: ExperimentPlan(cases=v2g_cases()),
    "v2g-scaled": lambda: ExperimentPlan(cases=v2g_cases(budget_scales=(1.0, 1.1, 1.2, 1.5))),
}


def _sweep_chunk(payload: tuple[str, dict, list[tuple[str, float, int]]]) -> list[SweepRow]:
    inst_text, plan_doc, cells = payload
    inst = load_instance(inst_text)
    plan = plan_from_dict(plan_doc)
    by_name = {c.name: c for c in plan.cases}
    return run_penetration_sweep(inst, plan, [(by_name[c], lv, s) for c, lv, s in cells]).rows


def cmd_sweep(args) -> int:
    inst = _load_instance(args.instance)
    if args.plan:
        try:
            plan = plan_from_dict(json.loads(_read_text(args.plan, "plan")))
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.plan}: line {exc.lineno} col {exc.colno}: {exc.msg}")
        except ValueError as exc:
            raise InputError(f"{args.plan}: {exc}") from None
    else:
        plan = PRESETS[args.preset]()
    overrides = {}
    if args.levels is not None:
        overrides["levels"] = tuple(args.levels)
    if args.seeds is not None:
        overrides["seeds"] = tuple(args.seeds)
    if args.n is not None:
        overrides["n_scenarios"] = args.n
    if overrides:
        try:
            plan = plan_from_dict({**plan_to_dict(plan), **{k: list(v) if isinstance(v, tuple)
                                                            else v for k, v in overrides.items()}})
        except ValueError as exc:
            raise InputError(str(exc)) from None
    for case in plan.cases:
        if case.budget is not None and case.budget > len(inst.stations):
            log.warning("case %s budget %d exceeds the %d candidates", case.name, case.budget,
                        len(inst.stations))

    out_dir = _resolve_out(args.out_dir, "sweep")
    # one chunk per (seed, case) keeps the transport-siting cache useful in workers
    chunks: dict[tuple[int, str], list] = {}
    for case, lv, seed in plan.cells():
        chunks.setdefault((seed, case.name), []).append((case.name, lv, seed))
    inst_text = dump_instance(inst)
    plan_doc = plan_to_dict(plan)
    payloads = [(inst_text, plan_doc, cells) for cells in chunks.values()]
    rows: list[SweepRow] = []
    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for part in pool.map(_sweep_chunk, payloads):
                rows.extend(part)
    else:
        for p in payloads:
            rows.extend(_sweep_chunk(p))
    result = SweepResult(rows).sorted(plan)

    csv_path = out_dir / "sweep.csv"
    cells_path = out_dir / "cells.json"
    plan_path = out_dir / "plan.json"
    atomic_write(csv_path, result.to_csv())
    atomic_write(cells_path, json.dumps([{**asdict(r), "level": round(r.level, 10)}
                                         for r in result.rows], indent=1, default=_json_num) + "\n")
    atomic_write(plan_path, json.dumps(plan_doc, indent=1) + "\n")
    _manifest(args, out_dir / "manifest.json", {"plan": plan_doc},
              {"seeds": list(plan.seeds)}, [csv_path, cells_path, plan_path])
    failed = [r for r in result.rows if r.error or r.status not in ("Optimal", "GapReached")]
    print(f"wrote {csv_path} ({len(result.rows)} rows, {len(failed)} not at target gap)")
    return EXIT_OK if not failed else EXIT_LIMIT


def _json_num(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    raise TypeError(type(v))


def cmd_export_mps(args) -> int:
    inst = _load_instance(args.instance)
    ss = _load_scenarios(args.scenarios, inst)
    config = _model_config(args, inst)
    try:
        model = build_extensive_form(inst, ss, config)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = _resolve_out(args.out, "model.mps")
    names = out.with_name(out.name + ".names")
    atomic_write(out, export_mps(model))
    atomic_write(names, names_table(model))
    _manifest(args, out, {"config": asdict(config)}, {"scenario_seed": ss.seed}, [out, names])
    print(f"wrote {out} ({model.n_rows} rows, {model.n_columns} columns) and {names}")
    return EXIT_OK


REPORT_METRICS = ("load_shed_frac", "unmet_frac", "opened")


def build_report(rows: Sequence[dict[str, str]]) -> tuple[str, dict[str, str]]:
    """Seed-averaged table plus one level-by-case table per metric.

    Failed cells (empty objective) are excluded from the means.
    """
    groups: dict[tuple[str, str], list[dict[str, str]]] = {}
    case_order: list[str] = []
    for r in rows:
        if r["case"] not in case_order:
            case_order.append(r["case"])
        if r["objective"] == "":
            continue
        groups.setdefault((r["case"], r["level"]), []).append(r)
    levels = sorted({lv for _, lv in groups}, key=float)
    lines = ["case,level,n_seeds,load_shed_frac,unmet_frac,opened,objective"]
    means: dict[tuple[str, str], dict[str, float]] = {}
    for case in case_order:
        for lv in levels:
            rs = groups.get((case, lv))
            if not rs:
                continue
            m = {k: float(np.mean([float(r[k]) for r in rs]))
                 for k in REPORT_METRICS + ("objective",)}
            means[(case, lv)] = m
            lines.append(f"{case},{lv},{len(rs)},{m['load_shed_frac']!r},{m['unmet_frac']!r},"
                         f"{m['opened']!r},{m['objective']!r}")
    figures = {}
    for metric in REPORT_METRICS:
        fig = ["level," + ",".join(case_order)]
        for lv in levels:
            vals = [repr(means[(c, lv)][metric]) if (c, lv) in means else "" for c in case_order]
            fig.append(f"{lv}," + ",".join(vals))
        figures[metric] = "\n".join(fig) + "\n"
    return "\n".join(lines) + "\n", figures


def cmd_report(args) -> int:
    sweep = Path(args.sweep)
    csv_file = sweep / "sweep.csv" if sweep.is_dir() else sweep
    try:
        rows = read_sweep_csv(_read_text(str(csv_file), "sweep CSV"))
    except (ValueError, KeyError) as exc:
        raise InputError(f"{csv_file}: {exc}") from None
    table, figures = build_report(rows)
    out = _resolve_out(args.out, "report.csv")
    written = [out]
    atomic_write(out, table)
    for metric, text in figures.items():
        path = out.with_name(f"{out.stem}_{metric}.csv")
        atomic_write(path, text)
        written.append(path)
    _manifest(args, out, {"sweep": str(csv_file)}, {}, written)
    print(f"wrote {out} and {len(figures)} per-figure tables")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser and entry point
# --------------------------------------------------------------------------

_STARTED = [0.0]


def _manifest(args, path: Path, config: dict, seeds: dict, artifacts: Sequence[Path]) -> None:
    if path.name != "manifest.json":
        path = path.with_name(path.name + ".manifest.json")
    snapshot = {k: v for k, v in vars(args).items() if k not in ("func", "argv", "command")}
    RunManifest(command=args.command, argv=list(args.argv), config={**snapshot, **config},
                seeds=seeds, artifacts={str(p): _sha256(p) for p in artifacts},
                wall_clock_s=round(time.perf_counter() - _STARTED[0], 3)).write(path)


def _add_model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model variant")
    x = g.add_mutually_exclusive_group()
    x.add_argument("--budget", type=int, help="maximum number of opened stations")
    x.add_argument("--fixed-siting", metavar="F",
                   help="JSON file with a 0/1 list (or {'x': [...]}) fixing which stations open")
    g.add_argument("--ge", action="store_true",
                   help="generation-expansion mode: unmet battery demand is free")
    g.add_argument("--reference-bus", type=int, default=None,
                   help="bus whose angle is fixed to 0; if omitted, the lowest id with a generator "
                        "per grid island")
    g.add_argument("--integer-stock", action="store_true",
                   help="make station battery stock integer (small instances only)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="v2gsiting", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-instance", help="generate an instance JSON", formatter_class=fmt)
    p.add_argument("kind", choices=("rts", "miami", "toy"))
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--toy", choices=TOY_NAMES, default="triangle", help="which toy (kind=toy)")
    p.add_argument("--out", help=f"output file; if omitted, ${OUT_DIR_ENV}/instance.json")
    _add_knob_args(p)
    p.set_defaults(func=cmd_gen_instance)

    p = sub.add_parser("gen-scenarios", help="sample a scenario set", formatter_class=fmt)
    p.add_argument("--instance", required=True)
    p.add_argument("--penetration", type=float, required=True,
                   help="renewable penetration, one of 0.0, 0.1, ..., 1.0")
    p.add_argument("--n", type=int, default=100, help="number of scenarios")
    p.add_argument("--seed", type=int, required=True, help="assignment and sampling seed")
    p.add_argument("--capacity-factor-probs", type=float, nargs=3, default=(1 / 3, 1 / 3, 1 / 3),
                   metavar=("P0", "P50", "P100"),
                   help="probabilities of renewable capacity factors 0, 0.5, 1")
    p.add_argument("--cost-jitter", action="store_true",
                   help="multiply generation costs by a uniform [0.9, 1.1] factor per scenario")
    p.add_argument("--out", help=f"output file; if omitted, ${OUT_DIR_ENV}/scenarios.json")
    p.set_defaults(func=cmd_gen_scenarios)

    p = sub.add_parser("solve", help="solve the extensive form", formatter_class=fmt)
    p.add_argument("--instance", required=True)
    p.add_argument("--scenarios", required=True)
    _add_model_args(p)
    p.add_argument("--gap", type=float, default=0.01, help="relative optimality gap target")
    p.add_argument("--node-limit", type=int, default=100_000)
    p.add_argument("--iteration-limit", type=int, default=1_000_000,
                   help="total simplex iterations")
    p.add_argument("--solver", choices=("builtin", "external"), default="builtin",
                   help="'external' verifies --solution-file instead of solving")
    p.add_argument("--solution-file", help="lines of 'column_name value' (external solver)")
    p.add_argument("--tol", type=float, default=1e-6, help="feasibility tolerance (external)")
    p.add_argument("--with-recourse", action="store_true",
                   help="include per-scenario recourse values in the solution JSON")
    p.add_argument("--deterministic", action="store_true",
                   help="accepted for clarity; the search is always sequential and reproducible")
    p.add_argument("--out", help=f"output file; if omitted, ${OUT_DIR_ENV}/solution.json")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run a penetration sweep", formatter_class=fmt)
    p.add_argument("--instance", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--plan", help="plan JSON (cases, levels, n_scenarios, seeds, limits)")
    src.add_argument("--preset", choices=sorted(PRESETS), help="built-in plan")
    p.add_argument("--levels", type=float, nargs="+", help="override the plan's levels")
    p.add_argument("--seeds", type=int, nargs="+", help="override the plan's seeds")
    p.add_argument("--n", type=int, help="override the plan's scenario count")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out-dir", help=f"output directory; if omitted, ${OUT_DIR_ENV}/sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-mps", help="write the extensive form as MPS", formatter_class=fmt)
    p.add_argument("--instance", required=True)
    p.add_argument("--scenarios", required=True)
    _add_model_args(p)
    p.add_argument("--out", help=f"output file; if omitted, ${OUT_DIR_ENV}/model.mps")
    p.set_defaults(func=cmd_export_mps)

    p = sub.add_parser("report", help="aggregate a sweep into plot-ready CSVs",
                       formatter_class=fmt)
    p.add_argument("--sweep", required=True, help="sweep directory or its sweep.csv")
    p.add_argument("--out", help=f"output CSV; if omitted, ${OUT_DIR_ENV}/report.csv")
    p.set_defaults(func=cmd_report)
    return parser


def run_command(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INPUT
    args.argv = argv
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    _STARTED[0] = time.perf_counter()
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
