"""End-to-end synthesis and simulation of the encoding-and-control loop.

Synthesis: solve for a near-optimal causal policy at the cost budget,
realize it stage by stage with per-context proposal tables, sample a cloud
of full realizations with exact (rate, cost) coordinates, reduce the cloud
to a binary time-sharing selector, and match conditional Shannon codebooks
to the resulting mixture action law.  Every reported quantity of the final
scheme (cost, codeword-length rate, entropies) is recomputed exactly from
the realized deterministic policies, so the guarantees do not rest on the
Monte-Carlo step.

Simulation: draw the selector bit once per trial, then run the plant
forward, look the action up in the realized stage maps, encode it, decode
it, check the round trip, and apply it.  Randomness comes from three named
streams (dynamics, tables, selector) so trials are reproducible and
independent of scheduling.  The selector bit is never transmitted; rate
counts codeword bits only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coder import ContextCodebook, build_codebooks, expected_stage_lengths
from .sfrl import (
    STREAM_DYNAMICS,
    STREAM_SELECTOR,
    SfrlStage,
    build_stage,
    stage_maps,
)
from .solver import RateCostPoint, SolverOptions, solve_rate_cost
from .system import (
    CausalPolicy,
    SystemSpec,
    average_cost,
    entropy_bits,
    evaluate_joint,
)
from .timeshare import (
    InfeasibleBarycenterError,
    RealizationPoint,
    TimeShareSelector,
    caratheodory_reduce,
    mixture_entropy,
)


class DecodeMismatchError(RuntimeError):
    """The controller decoded a different action than the encoder selected."""


def log_gap_budget(info_rate: float, horizon: int, gamma: float) -> float:
    """The achievable-rate budget: info rate plus the logarithmic gap."""
    return info_rate + math.log2(info_rate + 3.4) + 2.0 + 1.0 / horizon + gamma


def eps_condition(info_rate: float, epsilon: float, gamma: float) -> bool:
    """Whether the epsilon slack fits inside gamma for this info rate."""
    lhs = 2.0 * epsilon + math.log2(info_rate + epsilon + 3.4) \
        - math.log2(info_rate + 3.4)
    return lhs <= gamma


def per_coordinate_overhead(per_coord_info_rate: float, k: int, horizon: int
                            ) -> float:
    """Additive rate overhead per coordinate for k i.i.d. coordinates."""
    return (math.log2(k * per_coord_info_rate + 3.4) / k + 2.0 / k
            + 1.0 / (k * horizon))


@dataclass
class SchemeOptions:
    epsilon: float = 0.1
    gamma: float = 0.25
    cloud_size: int = 200
    num_proposals: int = 1024
    seed: int = 0
    max_attempts: int = 4
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass(frozen=True, eq=False)
class Realization:
    """One full draw of the per-stage tables and everything it induces."""

    realization_id: int
    stages: tuple[SfrlStage, ...]
    maps: tuple[dict[int, np.ndarray], ...]
    policy: CausalPolicy
    action_law: np.ndarray
    point: RealizationPoint


@dataclass(eq=False)
class SchemeBundle:
    spec: SystemSpec
    solution: RateCostPoint
    realization0: Realization
    realization1: Realization
    selector: TimeShareSelector
    codebooks: ContextCodebook
    mixture_action_law: np.ndarray
    exact_rate: float
    exact_cost: float
    info_rate: float
    rate_budget_value: float
    budget_cost: float
    epsilon: float
    gamma: float
    eps_ok: bool
    cond_entropy_bits: float
    uncond_entropy_bits: float
    cloud_size: int
    num_proposals: int
    seeds: dict


def _onehot_policy(spec: SystemSpec, maps) -> CausalPolicy:
    """Deterministic policy defined by realized stage maps; contexts the
    realization can never reach keep uniform placeholder rows (mass zero)."""
    X, U = spec.num_states, spec.num_actions
    tabs = []
    for t in range(1, spec.horizon + 1):
        H = (X * U) ** (t - 1)
        tab = np.full((H, X, U), 1.0 / U)
        xkeys = np.arange(X ** t)
        for ctx, selected in maps[t - 1].items():
            h = np.zeros_like(xkeys)
            for s in range(t - 1):
                xs = (xkeys // X ** (t - 1 - s)) % X
                us = (ctx // U ** (t - 2 - s)) % U
                h = (h * X + xs) * U + us
            rows = np.zeros((xkeys.size, U))
            rows[np.arange(xkeys.size), selected] = 1.0
            tab[h, xkeys % X, :] = rows
        tabs.append(tab)
    return CausalPolicy(tuple(tabs))


def realize(spec: SystemSpec, policy: CausalPolicy, law,
            realization_id: int, seed: int, num_proposals: int) -> Realization:
    """Draw one full realization and compute its exact coordinates."""
    stages = tuple(
        build_stage(t, law, policy, num_proposals, seed, realization_id)
        for t in range(1, spec.horizon + 1)
    )
    maps = tuple(stage_maps(st) for st in stages)
    onehot = _onehot_policy(spec, maps)
    induced = evaluate_joint(spec, onehot)
    action_law = induced.action_marginal()
    point = RealizationPoint(
        realization_id=realization_id,
        rate=entropy_bits(action_law) / spec.horizon,
        cost=average_cost(induced, spec),
    )
    return Realization(realization_id=realization_id, stages=stages, maps=maps,
                       policy=onehot, action_law=action_law, point=point)


def synthesize(spec: SystemSpec, budget_cost: float,
               options: SchemeOptions | None = None) -> SchemeBundle:
    """Build the full encoding-and-control scheme for one cost budget.

    Deterministic given the option seeds.  If the sampled cloud's average
    cost lands above the budget (the solved policy typically sits exactly
    on the constraint), the solver is re-targeted two standard errors
    tighter and the cloud redrawn, up to ``max_attempts`` times; the final
    scheme's cost is certified exactly regardless.
    """
    opt = options or SchemeOptions()
    n = spec.horizon
    target = budget_cost
    attempt = 0
    solution = None
    realizations: list[Realization] = []
    while True:
        solution = solve_rate_cost(spec, target, opt.solver)
        law = evaluate_joint(spec, solution.policy)
        base = attempt * opt.cloud_size
        realizations = [
            realize(spec, solution.policy, law, base + i, opt.seed,
                    opt.num_proposals)
            for i in range(opt.cloud_size)
        ]
        costs = np.array([r.point.cost for r in realizations])
        if float(costs.mean()) <= budget_cost or opt.cloud_size == 1:
            break
        attempt += 1
        if attempt >= opt.max_attempts:
            raise InfeasibleBarycenterError(
                float(costs.mean()), budget_cost,
                f"cloud average still above budget after {attempt} attempts",
            )
        spread = float(costs.std(ddof=1)) if opt.cloud_size > 1 else 0.0
        margin = max(2.0 * spread / math.sqrt(opt.cloud_size),
                     float(costs.mean()) - budget_cost, 1e-9)
        target = max(target - margin, 0.0)

    points = [r.point for r in realizations]
    selector = caratheodory_reduce(
        points, np.full(len(points), 1.0 / len(points)),
        budget_cost, opt.epsilon,
    )
    by_id = {r.realization_id: r for r in realizations}
    re0, re1 = by_id[selector.index0], by_id[selector.index1]
    lam = selector.weight
    mixture_law = lam * re0.action_law + (1.0 - lam) * re1.action_law
    codebooks = build_codebooks(mixture_law)
    exact_rate = sum(expected_stage_lengths(codebooks, mixture_law)) / n
    exact_cost = selector.mix_cost
    if exact_cost > budget_cost:
        raise AssertionError("certified mixture cost exceeds the budget")
    cond_bits, uncond_bits = mixture_entropy(
        selector, re0.action_law, re1.action_law
    )
    info_rate = solution.rate
    return SchemeBundle(
        spec=spec, solution=solution, realization0=re0, realization1=re1,
        selector=selector, codebooks=codebooks,
        mixture_action_law=mixture_law, exact_rate=exact_rate,
        exact_cost=exact_cost, info_rate=info_rate,
        rate_budget_value=log_gap_budget(info_rate, n, opt.gamma),
        budget_cost=budget_cost, epsilon=opt.epsilon, gamma=opt.gamma,
        eps_ok=eps_condition(info_rate, opt.epsilon, opt.gamma),
        cond_entropy_bits=cond_bits, uncond_entropy_bits=uncond_bits,
        cloud_size=opt.cloud_size, num_proposals=opt.num_proposals,
        seeds={"tables": opt.seed, "solver": opt.solver.seed,
               "attempts": attempt + 1},
    )


@dataclass
class SimulationReport:
    trials: int
    empirical_rate: float
    empirical_rate_se: float
    empirical_cost: float
    empirical_cost_se: float
    exact_rate: float
    exact_cost: float
    info_rate: float
    rate_budget_value: float
    budget_cost: float
    epsilon: float
    gamma: float
    eps_ok: bool
    seeds: dict
    mc_rate_consistent: bool
    mc_cost_consistent: bool
    per_trial_bits: np.ndarray | None = None
    per_trial_costs: np.ndarray | None = None

    def as_dict(self) -> dict:
        return {
            "trials": self.trials,
            "empirical_rate": self.empirical_rate,
            "empirical_rate_se": self.empirical_rate_se,
            "empirical_cost": self.empirical_cost,
            "empirical_cost_se": self.empirical_cost_se,
            "exact_rate": self.exact_rate,
            "exact_cost": self.exact_cost,
            "info_rate": self.info_rate,
            "rate_budget_value": self.rate_budget_value,
            "budget_cost": self.budget_cost,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "eps_ok": self.eps_ok,
            "seeds": self.seeds,
            "mc_rate_consistent": self.mc_rate_consistent,
            "mc_cost_consistent": self.mc_cost_consistent,
        }


def run_trials(bundle: SchemeBundle, num_trials: int, seed: int = 0,
               keep_per_trial: bool = False) -> SimulationReport:
    """Simulate the closed loop; decode mismatches are fatal by design."""
    spec = bundle.spec
    n, X, U = spec.horizon, spec.num_states, spec.num_actions
    cum_kernels = [np.cumsum(spec.stage_kernel(t), axis=1)
                   for t in range(1, n + 1)]
    bits = np.zeros(num_trials)
    costs = np.zeros(num_trials)
    lam = bundle.selector.weight
    for trial in range(num_trials):
        rng_q = np.random.default_rng(
            np.random.SeedSequence((seed, STREAM_SELECTOR, trial)))
        rng_dyn = np.random.default_rng(
            np.random.SeedSequence((seed, STREAM_DYNAMICS, trial)))
        re = bundle.realization0 if rng_q.random() < lam else bundle.realization1
        hidx = 0
        xkey = 0
        uctx = 0
        u_hist: tuple[int, ...] = ()
        b_total = 0
        c_total = 0.0
        for t in range(1, n + 1):
            row = cum_kernels[t - 1][hidx]
            x = int(np.searchsorted(row, rng_dyn.random() * row[-1], side="right"))
            x = min(x, X - 1)
            xkey = xkey * X + x
            u = int(re.maps[t - 1][uctx][xkey])
            word = bundle.codebooks.encode(t, u_hist, u)
            decoded, consumed = bundle.codebooks.decode(t, u_hist, word)
            if decoded != u or consumed != len(word):
                raise DecodeMismatchError(
                    f"trial {trial} stage {t}: encoded {u}, decoded {decoded}"
                )
            b_total += len(word)
            c_total += float(spec.cost[x, u])
            u_hist += (u,)
            uctx = uctx * U + u
            hidx = (hidx * X + x) * U + u
        bits[trial] = b_total / n
        costs[trial] = c_total / n
    emp_rate = float(bits.mean())
    emp_cost = float(costs.mean())
    rate_se = float(bits.std(ddof=1) / math.sqrt(num_trials)) if num_trials > 1 else 0.0
    cost_se = float(costs.std(ddof=1) / math.sqrt(num_trials)) if num_trials > 1 else 0.0
    return SimulationReport(
        trials=num_trials,
        empirical_rate=emp_rate, empirical_rate_se=rate_se,
        empirical_cost=emp_cost, empirical_cost_se=cost_se,
        exact_rate=bundle.exact_rate, exact_cost=bundle.exact_cost,
        info_rate=bundle.info_rate,
        rate_budget_value=bundle.rate_budget_value,
        budget_cost=bundle.budget_cost, epsilon=bundle.epsilon,
        gamma=bundle.gamma, eps_ok=bundle.eps_ok,
        seeds={**bundle.seeds, "trials": seed},
        mc_rate_consistent=bool(abs(bundle.exact_rate - emp_rate) <= 3.0 * rate_se
                                or num_trials == 1 or rate_se == 0.0),
        mc_cost_consistent=bool(abs(bundle.exact_cost - emp_cost) <= 3.0 * cost_se
                                or num_trials == 1 or cost_se == 0.0),
        per_trial_bits=bits if keep_per_trial else None,
        per_trial_costs=costs if keep_per_trial else None,
    )


@dataclass
class SandwichLedger:
    converse_ok: bool
    converse_margin: float
    achievability_ok: bool
    achievability_margin: float
    cost_ok: bool
    cost_margin: float
    mc_rate_consistent: bool
    mc_cost_consistent: bool

    @property
    def passed(self) -> bool:
        return self.converse_ok and self.achievability_ok and self.cost_ok

    def as_dict(self) -> dict:
        return {
            "converse_ok": self.converse_ok,
            "converse_margin": self.converse_margin,
            "achievability_ok": self.achievability_ok,
            "achievability_margin": self.achievability_margin,
            "cost_ok": self.cost_ok,
            "cost_margin": self.cost_margin,
            "mc_rate_consistent": self.mc_rate_consistent,
            "mc_cost_consistent": self.mc_cost_consistent,
            "passed": self.passed,
        }


def verify_sandwich(report: SimulationReport,
                    converse_tol: float = 1e-3,
                    cost_tol: float = 1e-9) -> SandwichLedger:
    """Check both rate inequalities and the cost constraint on exact values."""
    converse_margin = float(report.exact_rate - report.info_rate)
    achievability_margin = float(report.rate_budget_value - report.exact_rate)
    cost_margin = float(report.budget_cost - report.exact_cost)
    return SandwichLedger(
        converse_ok=bool(converse_margin >= -converse_tol),
        converse_margin=converse_margin,
        achievability_ok=bool(achievability_margin >= 0.0),
        achievability_margin=achievability_margin,
        cost_ok=bool(cost_margin >= -cost_tol),
        cost_margin=cost_margin,
        mc_rate_consistent=report.mc_rate_consistent,
        mc_cost_consistent=report.mc_cost_consistent,
    )
