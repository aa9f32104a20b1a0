"""Command-line surface: solve, synth, lqg, and rd pipelines.

Every flag has an environment-variable mirror prefixed RATECOST_ (flags
win).  Outputs are written atomically (temp file then rename).  Exit
codes: 0 success, 2 spec error, 3 infeasible budget, 4 solver
non-convergence, 5 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

from .lqg import CurveDomainError, RiccatiError, ScalarLqgSpec, rate_cost_curve, \
    riccati_solve
from .scheme import SchemeOptions, run_trials, synthesize, verify_sandwich
from .timeshare import InfeasibleBarycenterError
from .solver import (
    InfeasibleCostError,
    RateCostCurve,
    SolverOptions,
    solve_rate_cost,
    sweep_curve,
)
from .specio import SpecFileError, load_spec
from .system import BudgetExceededError, DimensionMismatchError, NormalizationError

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_INFEASIBLE = 3
EXIT_NO_CONVERGENCE = 4
EXIT_VERIFY = 5


def _env(name: str, default=None):
    return os.environ.get("RATECOST_" + name, default)


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ratecost-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as err:
        raise SpecFileError(f"grid '{text}' is not a comma-separated float list") \
            from err


def _solver_options(args) -> SolverOptions:
    return SolverOptions(seed=args.seed, restarts=args.restarts)


def _curve_rows(curve: RateCostCurve) -> list[str]:
    rows = ["D,rate_bits,mu"]
    for p in curve.points:
        rows.append(f"{p.cost!r},{p.rate!r},{p.multiplier!r}")
    return rows


def cmd_solve(args, require_source: bool) -> int:
    spec = load_spec(args.spec)
    if require_source and not spec.source_mode:
        raise SpecFileError(
            "the rd command needs a source-mode spec (kernel ignoring actions)"
        )
    prefix = "rd" if require_source else "solve"
    opts = _solver_options(args)
    curve, raw = sweep_curve(spec, opts)
    requested = []
    grid = _parse_grid(args.d_grid) if args.d_grid else []
    if args.budget is not None:
        grid.append(args.budget)
    for d in grid:
        point = solve_rate_cost(spec, d, opts, sweep=raw)
        requested.append({
            "D": d,
            "rate_bits": point.rate,
            "achieved_cost": point.cost,
            "mu": point.multiplier,
            "converged": point.converged,
        })
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    _write_atomic(os.path.join(out_dir, f"{prefix}_curve.csv"),
                  "\n".join(_curve_rows(curve)) + "\n")
    payload = {
        "schema_version": 1,
        "spec_path": os.path.abspath(args.spec),
        "seed": args.seed,
        "curve": [
            {"D": p.cost, "rate_bits": p.rate, "mu": p.multiplier,
             "converged": p.converged}
            for p in curve.points
        ],
        "requested": requested,
    }
    _write_atomic(os.path.join(out_dir, f"{prefix}.json"), _json_text(payload))
    bad = [p for p in requested if not p["converged"]]
    if bad or any(not p.converged for p in curve.points):
        print("warning: solver failed to converge on some points", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = load_spec(args.spec)
    if args.budget is None:
        raise SpecFileError("synth requires --D (or RATECOST_D)")
    options = SchemeOptions(
        epsilon=args.eps, gamma=args.gamma, seed=args.seed,
        cloud_size=args.cloud_size, num_proposals=args.proposals,
        solver=_solver_options(args),
    )
    bundle = synthesize(spec, args.budget, options)
    report = run_trials(bundle, args.trials, seed=args.seed,
                        keep_per_trial=args.trials_csv)
    ledger = verify_sandwich(report)
    payload = {
        "schema_version": 1,
        "spec_path": os.path.abspath(args.spec),
        "budget_cost": args.budget,
        "epsilon": bundle.epsilon,
        "gamma": bundle.gamma,
        "eps_condition_ok": bundle.eps_ok,
        "seeds": report.seeds,
        "solver_point": {
            "rate_bits": bundle.solution.rate,
            "cost": bundle.solution.cost,
            "mu": bundle.solution.multiplier,
            "converged": bundle.solution.converged,
        },
        "selector": {
            "realization0": bundle.selector.index0,
            "realization1": bundle.selector.index1,
            "weight": bundle.selector.weight,
            "mix_rate": bundle.selector.mix_rate,
            "mix_cost": bundle.selector.mix_cost,
            "case": bundle.selector.case,
        },
        "entropies": {
            "conditional_bits": bundle.cond_entropy_bits,
            "unconditional_bits": bundle.uncond_entropy_bits,
        },
        "exact": {"rate_bits": bundle.exact_rate, "cost": bundle.exact_cost},
        "bounds": {
            "info_rate_bits": bundle.info_rate,
            "rate_budget_bits": bundle.rate_budget_value,
        },
        "simulation": report.as_dict(),
        "sandwich": ledger.as_dict(),
    }
    os.makedirs(args.out, exist_ok=True)
    _write_atomic(os.path.join(args.out, "result_bundle.json"),
                  _json_text(payload))
    if args.trials_csv:
        rows = ["trial,bits_per_stage,cost_per_stage"]
        for i, (b, c) in enumerate(zip(report.per_trial_bits,
                                       report.per_trial_costs)):
            rows.append(f"{i},{b!r},{c!r}")
        _write_atomic(os.path.join(args.out, "trials.csv"), "\n".join(rows) + "\n")
    for line, ok in (("converse", ledger.converse_ok),
                     ("achievability", ledger.achievability_ok),
                     ("cost", ledger.cost_ok)):
        print(f"{line}: {'pass' if ok else 'FAIL'}")
    if not bundle.solution.converged:
        return EXIT_NO_CONVERGENCE
    return EXIT_OK if ledger.passed else EXIT_VERIFY


def cmd_lqg(args) -> int:
    spec = ScalarLqgSpec(a=args.a, b=args.b, noise_var=args.sigma2,
                         state_weight=args.q, input_weight=args.r)
    derived = riccati_solve(spec)
    grid = _parse_grid(args.d_grid)
    points = rate_cost_curve(spec, derived, grid)
    rows = [
        f"# s={derived.s!r}, m={derived.sensitivity!r}, "
        f"D_min={derived.cost_floor!r}",
        "D,rate_bits",
    ]
    rows += [f"{d!r},{rate!r}" for d, rate in points]
    os.makedirs(args.out, exist_ok=True)
    _write_atomic(os.path.join(args.out, "lqg_curve.csv"), "\n".join(rows) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ratecost",
        description="rate-cost bounds and constructive schemes for "
                    "finite-alphabet rate-limited control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_spec=True):
        if need_spec:
            p.add_argument("--spec", default=_env("SPEC"), required=_env("SPEC") is None,
                           help="path to a JSON system spec")
        p.add_argument("--D", dest="budget", type=float,
                       default=(float(_env("D")) if _env("D") else None),
                       help="average cost budget")
        p.add_argument("--seed", type=int, default=int(_env("SEED", "0")))
        p.add_argument("--out", default=_env("OUT", "."),
                       help="output directory")
        p.add_argument("--restarts", type=int,
                       default=int(_env("RESTARTS", "8")))

    for name, help_text in (("solve", "trace the rate-cost curve"),
                            ("rd", "sequential source-coding mode")):
        p = sub.add_parser(name, help=help_text)
        common(p)
        p.add_argument("--d-grid", default=_env("D_GRID"),
                       help="comma-separated cost budgets")

    p = sub.add_parser("synth", help="synthesize and simulate a full scheme")
    common(p)
    p.add_argument("--eps", type=float, default=float(_env("EPS", "0.1")))
    p.add_argument("--gamma", type=float, default=float(_env("GAMMA", "0.25")))
    p.add_argument("--trials", type=int, default=int(_env("TRIALS", "10000")))
    p.add_argument("--cloud-size", type=int,
                   default=int(_env("CLOUD_SIZE", "200")))
    p.add_argument("--proposals", type=int,
                   default=int(_env("PROPOSALS", "1024")))
    p.add_argument("--trials-csv", action="store_true",
                   help="also write per-trial bits and costs")

    p = sub.add_parser("lqg", help="scalar LQG closed-form curve")
    p.add_argument("--a", type=float, default=(float(_env("A")) if _env("A") else None),
                   required=_env("A") is None)
    p.add_argument("--b", type=float, default=(float(_env("B")) if _env("B") else None),
                   required=_env("B") is None)
    p.add_argument("--q", type=float, default=float(_env("Q", "1.0")))
    p.add_argument("--r", type=float, default=float(_env("R", "0.0")))
    p.add_argument("--sigma2", type=float, default=float(_env("SIGMA2", "1.0")))
    p.add_argument("--d-grid", default=_env("D_GRID"), required=_env("D_GRID") is None,
                   help="comma-separated cost levels, all above D_min")
    p.add_argument("--out", default=_env("OUT", "."))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_solve(args, require_source=False)
        if args.command == "rd":
            return cmd_solve(args, require_source=True)
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "lqg":
            return cmd_lqg(args)
        parser.error(f"unknown command {args.command}")
    except (InfeasibleCostError, InfeasibleBarycenterError) as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SpecFileError, DimensionMismatchError, NormalizationError,
            BudgetExceededError, CurveDomainError, RiccatiError,
            ValueError) as err:
        print(f"spec error: {err}", file=sys.stderr)
        return EXIT_SPEC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
