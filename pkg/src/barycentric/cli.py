"""Command-line front end: ``plan``, ``simulate``, ``oracle``, ``verify`` and ``adjudicate``.

Exit codes: 0 success, 1 infeasible scenario (or failed invariants on
``verify``), 2 solver failure, 3 I/O or schema error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .core import AgentState, BarycentricSpec, DomainError, ReferenceTrajectory
from .junctions import InfeasibleStart, JunctionError, SolverSettings

EXIT_OK, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3

CSV_COLUMNS = ["t", "agent_id", "px", "py", "vx", "vy", "ux", "uy", "g_value", "mode"]

_TOP_KEYS = {"agents", "reference", "D", "kappa", "R", "horizon", "solver", "output", "in_disk_policy"}
_REQUIRED = {"agents", "reference", "D", "kappa", "R", "horizon"}
_SOLVER_KEYS = {"tol", "max_iter", "mu_dot_formula", "chirality"}
_CHIRALITY = {"+1": "+1", "1": "+1", "-1": "-1", "auto": "auto"}


class SchemaError(ValueError):
    pass


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------


def _keys(obj, allowed, where, required=()):
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    extra = set(obj) - set(allowed)
    if extra:
        raise SchemaError(f"{where}: unknown keys {sorted(extra)}")
    missing = set(required) - set(obj)
    if missing:
        raise SchemaError(f"{where}: missing keys {sorted(missing)}")


def _num(x, where) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise SchemaError(f"{where}: expected a finite number, got {x!r}")
    return float(x)


def _pair(x, where):
    if not isinstance(x, list) or len(x) != 2:
        raise SchemaError(f"{where}: expected [x, y]")
    return [_num(x[0], where), _num(x[1], where)]


def scenario_from_dict(doc: dict, seed: int = 0):
    """Validate a scenario document and build a :class:`~barycentric.sim.Scenario`."""
    from .sim import Scenario

    _keys(doc, _TOP_KEYS, "scenario", _REQUIRED)
    if not isinstance(doc["agents"], list) or not doc["agents"]:
        raise SchemaError("agents: expected a non-empty list")
    agents = []
    for i, a in enumerate(doc["agents"]):
        _keys(a, {"p", "v"}, f"agents[{i}]", {"p", "v"})
        agents.append(AgentState(_pair(a["p"], f"agents[{i}].p"), _pair(a["v"], f"agents[{i}].v")))
    ref = doc["reference"]
    _keys(ref, {"c0", "c1", "c2", "c3"}, "reference", {"c0"})
    coeffs = np.zeros((4, 2))
    for k in range(4):
        if f"c{k}" in ref:
            coeffs[k] = _pair(ref[f"c{k}"], f"reference.c{k}")
    hz = doc["horizon"]
    _keys(hz, {"t0", "tf"}, "horizon", {"t0", "tf"})
    solver = doc.get("solver", {})
    _keys(solver, _SOLVER_KEYS, "solver")
    kw = {"seed": int(seed)}
    if "tol" in solver:
        kw["tol"] = _num(solver["tol"], "solver.tol")
    if "max_iter" in solver:
        if not isinstance(solver["max_iter"], int) or solver["max_iter"] < 1:
            raise SchemaError("solver.max_iter: expected a positive integer")
        kw["max_iter"] = solver["max_iter"]
    if "mu_dot_formula" in solver:
        if solver["mu_dot_formula"] not in ("paper", "derived"):
            raise SchemaError("solver.mu_dot_formula: expected 'paper' or 'derived'")
        kw["mu_dot_formula"] = solver["mu_dot_formula"]
    if "chirality" in solver:
        c = str(solver["chirality"])
        if c not in _CHIRALITY:
            raise SchemaError("solver.chirality: expected '+1', '-1' or 'auto'")
        kw["chirality"] = _CHIRALITY[c]
    output = doc.get("output", {})
    _keys(output, {"sample_rate"}, "output")
    rate = _num(output.get("sample_rate", 100.0), "output.sample_rate")
    policy = doc.get("in_disk_policy", "brake")
    try:
        spec = BarycentricSpec(_num(doc["D"], "D"), _num(doc["kappa"], "kappa"))
        return Scenario(tuple(agents), ReferenceTrajectory(coeffs), spec, _num(doc["R"], "R"),
                        _num(hz["t0"], "horizon.t0"), _num(hz["tf"], "horizon.tf"),
                        SolverSettings(**kw), policy, rate)
    except DomainError as exc:
        raise SchemaError(str(exc)) from exc


def scenario_to_dict(sc) -> dict:
    st = sc.settings
    solver = {"tol": st.tol, "max_iter": st.max_iter, "mu_dot_formula": st.mu_dot_formula}
    if st.chirality in ("+1", "-1", "auto"):
        solver["chirality"] = st.chirality
    c = sc.reference.shifted(0.0).coeffs if sc.reference.epoch != 0.0 else sc.reference.coeffs
    return {
        "agents": [{"p": a.p.tolist(), "v": a.v.tolist()} for a in sc.agents],
        "reference": {f"c{k}": c[k].tolist() for k in range(4)},
        "D": sc.spec.D,
        "kappa": sc.spec.kappa,
        "R": sc.R,
        "horizon": {"t0": sc.t0, "tf": sc.tf},
        "solver": solver,
        "output": {"sample_rate": sc.sample_rate},
        "in_disk_policy": sc.in_disk_policy,
    }


def load_scenario(path, seed: int = 0):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    return scenario_from_dict(doc, seed)


# ---------------------------------------------------------------------------
# result files
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _clean(obj):
    """JSON-safe copy: non-finite floats become ``None``, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_csv(path: Path, series) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        n = len(series[0].t)
        for k in range(n):
            for i, s in enumerate(series):
                w.writerow([_fmt(s.t[k]), i, _fmt(s.p[k, 0]), _fmt(s.p[k, 1]), _fmt(s.v[k, 0]),
                            _fmt(s.v[k, 1]), _fmt(s.u[k, 0]), _fmt(s.u[k, 1]), _fmt(s.g[k]), s.mode[k]])


def read_csv(path: Path):
    from .sim import AgentSeries

    rows = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != CSV_COLUMNS:
            raise SchemaError(f"{path}: unexpected CSV header {header}")
        for row in r:
            if len(row) != len(CSV_COLUMNS):
                raise SchemaError(f"{path}: malformed row {row}")
            rows.setdefault(int(row[1]), []).append(row)
    series = []
    for i in sorted(rows):
        data = rows[i]
        num = np.array([[float(x) for x in (d[0], *d[2:9])] for d in data])
        series.append(AgentSeries(num[:, 0], num[:, 1:3], num[:, 3:5], num[:, 5:7], num[:, 7],
                                  [d[9] for d in data]))
    return series


def _summary(result, command: str, csv_name: str) -> dict:
    return _clean({
        "command": command,
        "scenario": scenario_to_dict(result.scenario),
        "seed": result.scenario.settings.seed,
        "csv": csv_name,
        "junctions": result.junctions,
        "energies": result.energies,
        "monitors": result.monitors,
    })


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _run_scenario_job(args):
    command, path, seed, out = args
    from .sim import run

    sc = load_scenario(path, seed)
    result = run(sc)
    stem = Path(path).stem
    csv_name = f"{stem}.{command}.csv"
    write_csv(out / csv_name, result.series)
    summary = _summary(result, command, csv_name)
    if command == "plan":
        summary.pop("monitors")
        summary["max_gap"] = max((j["gap"] for j in result.junctions), default=0.0)
    _write_json(out / f"{stem}.{command}.json", summary)
    ok = result.monitors["all_ok"]
    return f"{path}: {len(result.junctions)} junction(s), energies {result.energies}, monitors {'ok' if ok else 'FAILED'}"


def _run_oracle_job(args):
    path, seed, out, M, pin = args
    from .oracle import OracleError, solve_oracle, transcribe
    from .sim import run

    sc = load_scenario(path, seed)
    terminal = None
    planner_energy = None
    if pin:
        res = run(sc)
        tr0 = res.trajectories[0]
        terminal = tr0.state(sc.tf)
        planner_energy = res.energies[0]
    tr = transcribe(sc, M, 0, terminal)
    if tr.infeasible:
        raise InfeasibleStart(f"{path}: initial state infeasible at node 0 (g={tr.g0:.6g})", tr.g0)
    U, E, viol = solve_oracle(tr)
    stem = Path(path).stem
    _write_json(out / f"{stem}.oracle.json", _clean({
        "scenario": scenario_to_dict(sc), "M": M, "energy": E, "max_violation": viol,
        "planner_energy": planner_energy, "terminal_pinned": bool(pin),
        "t_nodes": tr.t_nodes.tolist(), "controls": U.tolist()}))
    return f"{path}: oracle energy {E:.12g} (max violation {viol:.3e}) at M={M}"


def _map(fn, jobs, n_jobs):
    if n_jobs <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(fn, jobs))


def cmd_verify(args) -> int:
    from .sim import compute_monitors

    path = Path(args.summary)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        sc = scenario_from_dict(doc["scenario"], doc.get("seed", 0))
        series = read_csv(path.parent / doc["csv"])
        junctions = doc["junctions"]
    except (OSError, KeyError, ValueError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    monitors = _clean(compute_monitors(sc, series, junctions))
    stored = doc.get("monitors")
    if stored is not None and stored != monitors:
        print(f"{path}: recomputed monitor verdicts differ from the stored ones", file=sys.stderr)
        return EXIT_INFEASIBLE
    for name, v in monitors.items():
        if name != "all_ok":
            print(f"{name}: {'ok' if v['ok'] else 'FAILED'}")
    if not monitors["all_ok"]:
        print(f"{path}: invariant check failed", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"{path}: all invariants hold")
    return EXIT_OK


def cmd_adjudicate(args, out: Path) -> int:
    from .fixtures import random_barycentric_fixtures
    from .junctions import BarycentricEntryProblem
    from .oracle import adjudicate_mudot

    if args.scenarios:
        family = []
        for p in args.scenarios:
            sc = load_scenario(p, args.seed)
            family.append(BarycentricEntryProblem(sc.agents[0], sc.t0, sc.reference, sc.spec, 1, "paper", sc.tf))
        settings = replace(sc.settings, seed=args.seed)
    else:
        family = random_barycentric_fixtures(args.count, seed=args.seed)
        settings = SolverSettings(seed=args.seed)
    rows = adjudicate_mudot(family, settings, M=args.mesh)
    print(f"{'#':>2} {'kappa':>6} {'E_paper':>12} {'E_derived':>12} {'E_oracle':>12} {'ode2(paper)':>12} "
          f"{'ode2(deriv)':>12}  closer")
    for r in rows:
        print(f"{r.index:>2} {r.kappa:>6.3f} {r.E_paper:>12.6f} {r.E_derived:>12.6f} {r.E_oracle:>12.6f} "
              f"{r.residuals_paper[1]:>12.3e} {r.residuals_derived[1]:>12.3e}  {r.closer}")
    _write_json(out / "adjudicate.json", _clean({"seed": args.seed, "M": args.mesh,
                                                 "rows": [r.as_dict() for r in rows]}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for multi-start perturbations")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers over independent scenarios")
    common.add_argument("--out", default=".", help="output directory")
    p = argparse.ArgumentParser(prog="barycentric", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("plan", "solve junctions and write the planned trajectory"),
                        ("simulate", "run the event-driven simulation with monitors")):
        s = sub.add_parser(name, help=help_, parents=[common])
        s.add_argument("scenarios", nargs="+")
    s = sub.add_parser("oracle", help="direct-transcription energy at a given mesh", parents=[common])
    s.add_argument("scenarios", nargs="+")
    s.add_argument("--mesh", type=int, default=200)
    s.add_argument("--pin-terminal", action="store_true",
                   help="pin the final state to the planner's state at tf")
    s = sub.add_parser("verify", help="re-check invariants of a stored simulate result", parents=[common])
    s.add_argument("summary")
    s = sub.add_parser("adjudicate", help="compare the two mudot(t1+) formulas", parents=[common])
    s.add_argument("scenarios", nargs="*")
    s.add_argument("--count", type=int, default=5)
    s.add_argument("--mesh", type=int, default=200)
    return p


def main(argv=None) -> int:
    from .oracle import OracleError
    from .sim import ScenarioError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_IO if exc.code not in (0, None) else EXIT_OK
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command in ("plan", "simulate"):
            jobs = [(args.command, s, args.seed, out) for s in args.scenarios]
            for line in _map(_run_scenario_job, jobs, args.jobs):
                print(line)
            return EXIT_OK
        if args.command == "oracle":
            if args.mesh < 10:
                raise SchemaError("--mesh must be at least 10")
            jobs = [(s, args.seed, out, args.mesh, args.pin_terminal) for s in args.scenarios]
            for line in _map(_run_oracle_job, jobs, args.jobs):
                print(line)
            return EXIT_OK
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_adjudicate(args, out)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InfeasibleStart, ScenarioError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (JunctionError, OracleError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except DomainError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
