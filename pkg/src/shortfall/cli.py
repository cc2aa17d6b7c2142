"""Command-line front end.

::

    shortfall solve-known   SCENARIO... [--oracle] [--out DIR] [--format json|csv]
    shortfall solve-unknown SCENARIO... [--oracle]
    shortfall simulate      SCENARIO... [--seed N] [--horizon T] [--trace]
    shortfall verify        SCENARIO... [--seed N]

Exit status is 0 on success, 1 when a verification check fails or a policy is
infeasible, and 2 for input errors.  Several scenarios are processed on
``SHORTFALL_WORKERS`` threads (default 1); results are emitted in argument
order.
"""
from __future__ import annotations

import argparse
import csv
import functools
import io
import json
import math
import os
import subprocess
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .domain import (
    FEAS_TOL,
    FeasibilityError,
    InvalidInstanceError,
    PreconditionError,
    SizeError,
)
from .expected_cost import ExpectedCost, check_curvature, eval_K, monte_carlo_K0
from .global_oracle import (
    DEFAULT_CORNER_LIMIT,
    DEFAULT_GRID_LIMIT,
    solve_concave_exact,
    solve_expected_grid,
)
from .known_solver import corner_structure_violations, solve_linprog
from .scenario import Scenario, ScenarioError, parse_scenario
from .simulator import DeterministicConsumption, run
from .unknown_solver import sym_alloc

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
WORKERS_ENV = "SHORTFALL_WORKERS"
SIG_DIGITS = 12
DEFAULT_VERIFY_HORIZON = 100_000
MC_SAMPLES = 200_000
GRID_STEP = 0.005
GRID_MAX_POINTS = 400
CRITICAL_SIGMAS = 4.0

CSV_COLUMNS = {
    "solve-known": ["user", "mean_rate", "rate", "shortfall", "cost", "oracle_rate", "build"],
    "solve-unknown": ["user", "rate", "expected_cost", "oracle_rate", "build"],
    "simulate": ["user", "policy_rate", "mean_consumption", "mean_service", "mean_shortfall",
                 "predicted_shortfall", "shortfall_stderr", "final_queue", "max_queue",
                 "zero_queue_slots", "dissatisfaction", "build"],
    "verify": ["check", "status", "value", "bound", "detail", "build"],
}


class UsageError(ValueError):
    pass


@functools.lru_cache(maxsize=1)
def build_id() -> str:
    """``git describe`` of the source tree, or the package version outside a checkout."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"shortfall-{__version__}"


def _num(x):
    """Round to 12 significant digits; non-finite values become strings."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
        return float(f"{x:.{SIG_DIGITS}g}")
    if isinstance(x, np.ndarray):
        return [_num(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {k: _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    return x


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.{SIG_DIGITS}g}"
    return str(x)


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class Outcome:
    code: int
    payload: dict | None = None
    rows: list = field(default_factory=list)
    messages: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _oracle_known(inst, report):
    if inst.m > DEFAULT_CORNER_LIMIT:
        return None, {"skipped": f"m = {inst.m} exceeds the corner limit {DEFAULT_CORNER_LIMIT}"}
    res = solve_concave_exact(inst)
    gap = report.true_objective - res.objective
    bound = 2.0 / inst.m * float(np.max(inst.bank(inst.mean_rates)))
    return res, {
        "rates": res.allocation.rates, "objective": res.objective,
        "corners_evaluated": res.corners_evaluated, "gap": gap, "gap_bound": bound,
    }


def cmd_solve_known(sc: Scenario, args) -> Outcome:
    inst = sc.instance
    if not sc.known:
        raise UsageError("solve-known needs a known-consumption scenario")
    rep = solve_linprog(inst)
    s, f = rep.allocation.rates, inst.mean_rates
    short = np.maximum(f - s, 0.0)
    payload = {
        "m": inst.m, "budget": inst.budget, "rates": s,
        "fractional_user": rep.fractional_user,
        "lp_objective": rep.lp_objective, "true_objective": rep.true_objective,
    }
    oracle_rates = None
    if args.oracle:
        res, payload["oracle"] = _oracle_known(inst, rep)
        oracle_rates = None if res is None else res.allocation.rates
    costs = inst.bank(short)
    rows = [[i, f[i], s[i], short[i], costs[i], None if oracle_rates is None else oracle_rates[i]]
            for i in range(inst.m)]
    return Outcome(EXIT_OK, payload, rows)


def _require_symmetric(sc: Scenario, what: str):
    if sc.known:
        raise UsageError(f"{what} needs an unknown-consumption scenario")
    if not sc.instance.symmetric:
        raise UsageError(f"{what} needs symmetric: true (identical costs and priors)")


def _grid_step(inst) -> float:
    b = max(p.hi for p in inst.priors)
    return max(GRID_STEP, b / GRID_MAX_POINTS)


def cmd_solve_unknown(sc: Scenario, args) -> Outcome:
    _require_symmetric(sc, "solve-unknown")
    inst = sc.instance
    rep = sym_alloc(inst)
    ec = ExpectedCost(inst.costs[0], inst.priors[0])
    s = rep.allocation.rates
    payload = {
        "m": inst.m, "budget": inst.budget, "rates": s,
        "n_star": rep.n_star, "beta_star": rep.beta_star, "all_equal": rep.all_equal,
        "v_star": rep.v_star, "normalized_objective": rep.normalized_objective,
        "per_n": [{"n": r.n, "feasible": r.feasible, "value": r.value, "beta": r.beta}
                  for r in rep.per_n_table],
    }
    oracle_rates = None
    if args.oracle:
        if inst.m > DEFAULT_GRID_LIMIT:
            payload["oracle"] = {"skipped": f"m = {inst.m} exceeds the grid limit {DEFAULT_GRID_LIMIT}"}
        else:
            step = _grid_step(inst)
            res = solve_expected_grid(inst, step)
            oracle_rates = res.allocation.rates
            payload["oracle"] = {
                "rates": oracle_rates, "objective": res.objective, "grid_step": step,
                "lipschitz_bound": res.lipschitz_bound,
                "difference": rep.normalized_objective - res.objective,
            }
    ks = eval_K(ec, np.minimum(s, ec.b))
    rows = [[i, s[i], ks[i], None if oracle_rates is None else oracle_rates[i]]
            for i in range(inst.m)]
    return Outcome(EXIT_OK, payload, rows)


def _policy(sc: Scenario):
    if sc.known:
        return solve_linprog(sc.instance).allocation
    _require_symmetric(sc, "simulating an unknown-consumption scenario")
    return sym_alloc(sc.instance).allocation


def _simulation(sc: Scenario, args, default_horizon=None):
    sim = sc.simulation
    T = args.horizon
    if T is None:
        T = sim.horizon if sim is not None else default_horizon
    if T is None:
        raise UsageError("scenario has no simulation section; pass --horizon")
    if T < 1:
        raise UsageError(f"horizon must be a positive integer, got {T}")
    seed = args.seed if args.seed is not None else (sim.seed if sim is not None else 0)
    if sim is not None:
        return T, seed, sim.buffer_cap, sim.availability, sim.consumption
    if not sc.known:
        raise UsageError("unknown-consumption scenarios need a simulation section")
    from .simulator import ConstantAvailability
    users = tuple(DeterministicConsumption(float(f)) for f in sc.instance.mean_rates)
    return T, seed, None, ConstantAvailability(sc.instance.budget), users


def cmd_simulate(sc: Scenario, args, out_dir: Path | None = None) -> Outcome:
    T, seed, cap, avail, users = _simulation(sc, args)
    policy = _policy(sc)
    trace = None
    if args.trace:
        trace = (out_dir or Path.cwd()) / f"{sc.name}.trace.csv"
        trace.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{trace.name}.", dir=trace.parent)
        os.close(fd)
    try:
        res = run(users, avail, policy, T, B=cap, seed=seed, costs=sc.instance.costs,
                  trace_path=tmp if trace else None)
        if trace:
            os.chmod(tmp, 0o644)
            os.replace(tmp, trace)
    finally:
        if trace and os.path.exists(tmp):
            os.unlink(tmp)
    f = np.array([u.mean for u in users])
    s = policy.rates
    pred = np.maximum(f - s, 0.0)
    per_user = []
    rows = []
    for i in range(len(users)):
        rec = {
            "policy_rate": s[i], "mean_consumption": res.mean_consumption[i],
            "mean_service": res.mean_service[i], "mean_shortfall": res.mean_shortfall[i],
            "predicted_shortfall": pred[i], "shortfall_stderr": res.shortfall_stderr[i],
            "final_queue": res.final_queue[i], "max_queue": res.max_queue[i],
            "zero_queue_slots": res.zero_queue_slots[i], "dissatisfaction": res.dissatisfaction[i],
        }
        per_user.append(rec)
        rows.append([i, *rec.values()])
    payload = {
        "horizon": T, "seed": seed, "buffer_cap": cap, "policy_rates": s,
        "users": per_user, "realized_availability": res.realized_availability,
        "max_overallocation": res.max_overallocation,
        "normalized_dissatisfaction": res.normalized_dissatisfaction,
    }
    if trace:
        payload["trace"] = str(trace)
    return Outcome(EXIT_OK, payload, rows)


def _check(name, passed, value=None, bound=None, detail=""):
    return {"check": name, "status": "skip" if passed is None else ("pass" if passed else "fail"),
            "value": value, "bound": bound, "detail": detail}


def _law_checks(sc: Scenario, args, policy) -> list[dict]:
    T, seed, cap, avail, users = _simulation(sc, args, DEFAULT_VERIFY_HORIZON)
    res = run(users, avail, policy, T, B=cap, seed=seed)
    f = np.array([u.mean for u in users])
    pred = np.maximum(f - policy.rates, 0.0)
    se3 = 3.0 * res.shortfall_stderr
    checks = [_check("per-slot feasibility", bool(res.max_overallocation <= 0.0),
                     res.max_overallocation, 0.0, "sum of services never exceeds c(t)")]
    if cap is None:
        below = policy.rates < f
        if np.any(below):
            excess = (np.abs(res.mean_shortfall - pred) - se3)[below]
            checks.append(_check("shortfall law", bool(np.max(excess) <= FEAS_TOL), float(np.max(excess)),
                                 FEAS_TOL, f"|mean shortfall - (f - s)| - 3 SE over users with s < f, "
                                           f"T = {T}, seed = {seed}"))
        if not np.all(below):
            # at s >= f the queue is a driftless or upward walk; its reflection
            # term is of order sd(F - S) sqrt(T), so the bias is O(1/sqrt(T))
            slack = se3 + CRITICAL_SIGMAS * res.increment_std / math.sqrt(T)
            excess = (res.mean_shortfall - slack)[~below]
            checks.append(_check("shortfall at full service", bool(np.max(excess) <= FEAS_TOL),
                                 float(np.max(excess)), FEAS_TOL,
                                 f"mean shortfall - 3 SE - {CRITICAL_SIGMAS} sd(F - S)/sqrt(T) "
                                 f"over users with s >= f"))
    else:
        excess = pred - se3 - res.mean_shortfall
        checks.append(_check("finite-buffer shortfall bound", bool(np.max(excess) <= FEAS_TOL),
                             float(np.max(excess)), FEAS_TOL,
                             f"(f - s)^+ - 3 SE - mean shortfall, B = {cap}, T = {T}, seed = {seed}"))
    return checks


def _verify_known(sc, args) -> list[dict]:
    inst = sc.instance
    rep = solve_linprog(inst)
    s = rep.allocation.rates
    f = inst.mean_rates
    checks = []
    v = corner_structure_violations(s, f)
    checks.append(_check("linprog corner structure", v == 0, v, 0,
                         "at most one user strictly inside (0, f_i)"))
    target = min(inst.budget, math.fsum(f.tolist()))
    used = math.fsum(s.tolist())
    tol = FEAS_TOL * max(1.0, inst.budget)
    checks.append(_check("linprog budget use", abs(used - target) <= tol, abs(used - target), tol,
                         "sum of rates equals min(budget, sum of mean rates)"))
    res, info = _oracle_known(inst, rep)
    if res is None:
        checks.append(_check("linprog vs corner oracle gap", None, detail=info["skipped"]))
    else:
        checks.append(_check("linprog vs corner oracle gap", info["gap"] <= info["gap_bound"] + FEAS_TOL,
                             info["gap"], info["gap_bound"] + FEAS_TOL,
                             "true objective gap below (2/m) max V_i(f_i)"))
        v = corner_structure_violations(res.allocation.rates, f)
        checks.append(_check("oracle corner structure", v == 0, v, 0,
                             "at most one user strictly inside (0, f_i)"))
    checks += _law_checks(sc, args, rep.allocation)
    return checks


def _symalloc_structure(s: np.ndarray, a: float) -> int:
    """Violations of: one rate in [0, a), the others zero or a common value in [a, b]."""
    inner = s[(s > 0) & (s < a - FEAS_TOL)]
    high = s[s >= a - FEAS_TOL]
    bad = max(inner.size - 1, 0)
    if high.size and np.ptp(high) > FEAS_TOL * max(1.0, float(high.max())):
        bad += 1
    return bad


def _verify_unknown(sc, args) -> list[dict]:
    inst = sc.instance
    seed = args.seed if args.seed is not None else (sc.simulation.seed if sc.simulation else 0)
    checks = []
    seen = {}
    for i, (c, p) in enumerate(zip(inst.costs, inst.priors)):
        if (c, p) in seen:
            continue
        seen[(c, p)] = i
        ec = ExpectedCost(c, p)
        cur = check_curvature(ec)
        checks.append(_check(f"K curvature (user {i})", cur.ok,
                             max(cur.concave_max_second_diff, -cur.convex_min_second_diff),
                             1e-6 * cur.scale,
                             "; ".join(cur.notes) or "concave on (0, a), convex on (a, b)"))
        rng = np.random.Generator(np.random.Philox(key=[seed, i]))
        mc, se = monte_carlo_K0(ec, MC_SAMPLES, rng)
        k0 = float(eval_K(ec, 0.0))
        checks.append(_check(f"K(0) monte carlo (user {i})", abs(mc - k0) <= 3 * se,
                             abs(mc - k0), 3 * se, f"{MC_SAMPLES} samples"))
    if not inst.symmetric:
        checks.append(_check("symalloc", None, detail="instance is not symmetric"))
        return checks
    rep = sym_alloc(inst)
    s = rep.allocation.rates
    v = _symalloc_structure(s, inst.priors[0].lo)
    checks.append(_check("symalloc structure", v == 0, v, 0,
                         "one rate below a, the rest zero or one common rate"))
    used = math.fsum(s.tolist())
    checks.append(_check("symalloc budget", used <= inst.budget + FEAS_TOL, used, inst.budget + FEAS_TOL))
    if inst.m > DEFAULT_GRID_LIMIT:
        checks.append(_check("symalloc vs grid oracle", None,
                             detail=f"m = {inst.m} exceeds the grid limit {DEFAULT_GRID_LIMIT}"))
    else:
        step = _grid_step(inst)
        res = solve_expected_grid(inst, step)
        diff = abs(rep.normalized_objective - res.objective)
        bound = step * res.lipschitz_bound + 1e-6
        checks.append(_check("symalloc vs grid oracle", diff <= bound, diff, bound, f"grid step {step}"))
    if sc.simulation is not None:
        checks += _law_checks(sc, args, rep.allocation)
    return checks


def cmd_verify(sc: Scenario, args) -> Outcome:
    checks = _verify_known(sc, args) if sc.known else _verify_unknown(sc, args)
    failed = any(c["status"] == "fail" for c in checks)
    payload = {"passed": not failed, "checks": checks}
    rows = [[c["check"], c["status"], c["value"], c["bound"], c["detail"]] for c in checks]
    table = _table(sc.name, checks)
    return Outcome(EXIT_FAIL if failed else EXIT_OK, payload, rows, [table])


def _table(name: str, checks: list[dict]) -> str:
    width = max(len(c["check"]) for c in checks)
    lines = [f"verify {name}"]
    for c in checks:
        val = "" if c["value"] is None else f"{_cell(_num(c['value']))}"
        bnd = "" if c["bound"] is None else f" (bound {_cell(_num(c['bound']))})"
        lines.append(f"  {c['status'].upper():4}  {c['check']:<{width}}  {val}{bnd}")
    return "\n".join(lines)


COMMANDS = {
    "solve-known": cmd_solve_known,
    "solve-unknown": cmd_solve_unknown,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def render(command: str, name: str, outcome: Outcome, fmt: str) -> str:
    if fmt == "json":
        doc = {"build": build_id(), "command": command, "scenario": name, **outcome.payload}
        return json.dumps(_num(doc), indent=2, allow_nan=False) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS[command])
    bid = build_id()
    for row in outcome.rows:
        w.writerow([_cell(_num(x)) for x in row] + [bid])
    return buf.getvalue()


def process(path: str, args) -> tuple[Outcome, str | None]:
    """Run one scenario file; returns the outcome and the rendered document."""
    try:
        text = Path(path).read_text(encoding="utf-8")
        sc = parse_scenario(text, name=Path(path).stem)
    except OSError as exc:
        return Outcome(EXIT_INPUT, messages=[f"{path}: {exc.strerror or exc}"]), None
    except ScenarioError as exc:
        return Outcome(EXIT_INPUT, messages=[f"{path}: {e}" for e in exc.errors]), None
    fmt = args.format or sc.output.format
    out = args.out or sc.output.path
    out_dir = Path(out) if out else None
    try:
        if args.command == "simulate":
            outcome = cmd_simulate(sc, args, out_dir)
        else:
            outcome = COMMANDS[args.command](sc, args)
    except FeasibilityError as exc:
        return Outcome(EXIT_FAIL, messages=[f"{path}: infeasible: {exc}"]), None
    except (UsageError, PreconditionError, SizeError, InvalidInstanceError) as exc:
        return Outcome(EXIT_INPUT, messages=[f"{path}: {exc}"]), None
    doc = render(args.command, sc.name, outcome, fmt)
    if out_dir is not None:
        target = out_dir / f"{sc.name}.{args.command}.{fmt}"
        write_atomic(target, doc)
        outcome.messages.append(f"wrote {target}")
        doc = None
    return outcome, doc


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenarios", nargs="+", metavar="SCENARIO", help="scenario YAML file(s)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--out", default=None, help="output directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=None,
                        help="output format (default: scenario setting, else json)")
    common.add_argument("--oracle", action="store_true", help="also run the brute-force oracle")
    common.add_argument("--trace", action="store_true", help="write a per-slot trace CSV (simulate)")
    common.add_argument("--horizon", type=int, default=None, help="override the simulation horizon")
    parser = argparse.ArgumentParser(prog="shortfall", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if args.horizon is not None and args.horizon < 1:
        print(f"shortfall: horizon must be a positive integer, got {args.horizon}", file=sys.stderr)
        return EXIT_INPUT
    try:
        workers = _workers()
    except UsageError as exc:
        print(f"shortfall: {exc}", file=sys.stderr)
        return EXIT_INPUT
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda p: process(p, args), args.scenarios))
    code = EXIT_OK
    for outcome, doc in results:
        for msg in outcome.messages:
            print(msg, file=sys.stderr)
        if doc is not None:
            sys.stdout.write(doc)
        code = max(code, outcome.code)
    return code


if __name__ == "__main__":
    sys.exit(main())
