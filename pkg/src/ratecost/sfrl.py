"""Per-stage strong functional representation via marked Poisson proposals.

For stage t the target is the policy conditional p(u | x_{1..t}, u_{1..t-1})
with context marginal q(u | u_{1..t-1}).  Each action-history context gets
an independent proposal table: symbols drawn i.i.d. from q and strictly
increasing unit-rate Poisson arrival times.  Selection picks the proposal
minimizing  time_i * q(sym_i) / p(sym_i | history), ties to the smallest
index, zero-probability conditionals weighted +inf.  The table collection
plays the role of the stage's auxiliary randomness: it is drawn from
dedicated seed streams that never touch state randomness, so independence
from (states, past actions) holds by construction.

Tables are truncated to a finite number of proposals.  A per-selection
certificate (winner weight <= last arrival time * smallest possible ratio)
verifies that no untruncated proposal could have won; the fraction of
uncertified selections is reported as the truncation-failure bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .system import CausalPolicy, JointLaw, entropy_bits

STREAM_TABLES = 1
STREAM_DYNAMICS = 2
STREAM_SELECTOR = 3


class TruncationFailureError(RuntimeError):
    """Every truncated proposal has an infinite weight for this history."""


class ContextUnavailableError(KeyError):
    """The requested action history has zero mass and no proposal table."""


@dataclass(frozen=True, eq=False)
class ProposalTable:
    """Proposals for one context: i.i.d. symbols from the context marginal
    and strictly increasing arrival times."""

    symbols: np.ndarray
    times: np.ndarray
    marginal: np.ndarray

    def __post_init__(self):
        if self.symbols.shape != self.times.shape or self.symbols.ndim != 1:
            raise ValueError("symbols and times must be equal-length vectors")
        if np.any(np.diff(self.times) <= 0) or self.times[0] <= 0:
            raise ValueError("arrival times must be strictly increasing and positive")


@dataclass(frozen=True, eq=False)
class SfrlStage:
    """One stage's realization: a proposal table per reachable context."""

    t: int
    tables: dict[int, ProposalTable]
    conditional: np.ndarray        # policy table for this stage, (H, X, U)
    context_mass: np.ndarray       # (U**(t-1),)
    num_states: int
    num_actions: int
    num_proposals: int
    seed: int


def _context_rng(seed: int, sample_index: int, t: int, ctx: int):
    return np.random.default_rng(
        np.random.SeedSequence((seed, STREAM_TABLES, sample_index, t, ctx))
    )


def _draw_tables(rng, marginal: np.ndarray, count: int, num_proposals: int):
    """(symbols, times) arrays of shape (count, num_proposals); uniforms are
    drawn before exponentials so the layout is part of the seed contract."""
    cum = np.cumsum(marginal)
    cum[-1] = 1.0
    uniforms = rng.random((count, num_proposals))
    symbols = np.searchsorted(cum, uniforms, side="right").astype(np.int64)
    np.clip(symbols, 0, marginal.size - 1, out=symbols)
    times = np.cumsum(rng.exponential(1.0, (count, num_proposals)), axis=1)
    return symbols, times


def build_stage(t: int, law: JointLaw, policy: CausalPolicy,
                num_proposals: int = 1024, seed: int = 0,
                sample_index: int = 0) -> SfrlStage:
    """Draw one stage realization matched to the law's context marginals.

    Contexts with zero probability are skipped; selection is never queried
    there.  Deterministic given (seed, sample_index).
    """
    U = policy.num_actions
    if num_proposals < U:
        raise ValueError("need at least one proposal slot per action symbol")
    act = law.action_marginal(t)                 # (U,)*t
    ctx_mass = act.sum(axis=-1).reshape(-1) if t > 1 else np.array([1.0])
    flat = act.reshape(-1, U)
    tables: dict[int, ProposalTable] = {}
    for ctx in range(U ** (t - 1)):
        if ctx_mass[ctx] <= 0.0:
            continue
        q = flat[ctx] / ctx_mass[ctx]
        rng = _context_rng(seed, sample_index, t, ctx)
        symbols, times = _draw_tables(rng, q, 1, num_proposals)
        tables[ctx] = ProposalTable(symbols=symbols[0], times=times[0],
                                    marginal=q)
    return SfrlStage(t=t, tables=tables, conditional=policy.tables[t - 1],
                     context_mass=ctx_mass, num_states=policy.num_states,
                     num_actions=U, num_proposals=num_proposals, seed=seed)


def _history_row(stage: SfrlStage, x_hist, u_hist) -> np.ndarray:
    X, U = stage.num_states, stage.num_actions
    if len(x_hist) != stage.t or len(u_hist) != stage.t - 1:
        raise ValueError("history lengths must be (t, t-1)")
    h = 0
    for x, u in zip(x_hist[:-1], u_hist):
        h = (h * X + int(x)) * U + int(u)
    return stage.conditional[h, int(x_hist[-1])]


def _context_index(stage: SfrlStage, u_hist) -> int:
    idx = 0
    for u in u_hist:
        idx = idx * stage.num_actions + int(u)
    return idx


def select_detailed(stage: SfrlStage, x_hist, u_hist):
    """(symbol, proposal index, certified) for one history."""
    ctx = _context_index(stage, u_hist)
    if ctx not in stage.tables:
        raise ContextUnavailableError(ctx)
    table = stage.tables[ctx]
    cond = _history_row(stage, x_hist, u_hist)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(cond > 0.0, table.marginal / cond, np.inf)
    weights = table.times * ratio[table.symbols]
    k = int(np.argmin(weights))
    if not np.isfinite(weights[k]):
        raise TruncationFailureError(
            f"stage {stage.t} context {ctx}: conditional support is disjoint "
            f"from all {stage.num_proposals} proposals"
        )
    support = table.marginal > 0.0
    rmin = float(np.min(ratio[support])) if np.any(support) else np.inf
    certified = bool(weights[k] <= table.times[-1] * rmin)
    return int(table.symbols[k]), k, certified


def select(stage: SfrlStage, x_hist, u_hist) -> int:
    """The stage map applied to one history: the winning proposal's symbol."""
    return select_detailed(stage, x_hist, u_hist)[0]


def _context_rows(stage: SfrlStage, ctx: int) -> np.ndarray:
    """Conditional rows for every state history of one context, (X**t, U)."""
    X, U, t = stage.num_states, stage.num_actions, stage.t
    xkeys = np.arange(X ** t)
    h = np.zeros_like(xkeys)
    for s in range(t - 1):
        xs = (xkeys // X ** (t - 1 - s)) % X
        us = (ctx // U ** (t - 2 - s)) % U
        h = (h * X + xs) * U + us
    return stage.conditional[h, xkeys % X]


def _select_batch(tables_syms, tables_times, rows, marginal):
    """Vectorized selection: symbols (nT, Xt) and certificates (nT, Xt)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rows > 0.0, marginal[None, :] / rows, np.inf)  # (Xt, U)
    # ratio gathered at each proposal symbol: (nT, Xt, M)
    weights = tables_times[:, None, :] * np.take(ratio, tables_syms, axis=1).transpose(1, 0, 2)
    k = np.argmin(weights, axis=2)
    wmin = np.take_along_axis(weights, k[:, :, None], axis=2)[:, :, 0]
    if not np.all(np.isfinite(wmin)):
        raise TruncationFailureError("a history's conditional support is "
                                     "disjoint from all proposals")
    selected = np.take_along_axis(
        np.broadcast_to(tables_syms[:, None, :], weights.shape),
        k[:, :, None], axis=2,
    )[:, :, 0]
    support = marginal > 0.0
    rmin = np.where(
        np.any(np.isfinite(ratio[:, support]), axis=1),
        np.min(np.where(np.isfinite(ratio[:, support]), ratio[:, support], np.inf),
               axis=1),
        np.inf,
    )
    certified = wmin <= tables_times[:, None, -1] * rmin[None, :]
    return selected, certified


def stage_maps(stage: SfrlStage) -> dict[int, np.ndarray]:
    """The stage map as arrays: context -> selected symbol per state history."""
    out = {}
    for ctx, table in stage.tables.items():
        rows = _context_rows(stage, ctx)
        selected, _ = _select_batch(table.symbols[None], table.times[None],
                                    rows, table.marginal)
        out[ctx] = selected[0]
    return out


def _state_history_weights(law: JointLaw, t: int, ctx: int) -> np.ndarray:
    """P(x_{1..t} | u_{1..t-1}=ctx), flattened big-endian over states."""
    X, U = law.num_states, law.num_actions
    pre = law.prefix_marginal(t).sum(axis=2 * t - 1)  # drop u_t
    indexer: list = []
    c = []
    for s in range(t - 1):
        c.append((ctx // U ** (t - 2 - s)) % U)
    for s in range(t - 1):
        indexer.extend([slice(None), c[s]])
    indexer.append(slice(None))
    block = pre[tuple(indexer)].reshape(-1)
    mass = block.sum()
    return block / mass if mass > 0 else block


def stage_entropy_given_tables(stage: SfrlStage, law: JointLaw) -> float:
    """Exact H(U_t | U_{1..t-1}, auxiliary = these tables) in bits.

    For fixed tables the action is a deterministic function of the state
    history, so per context the entropy is that of the pushforward of the
    exact history law through the stage map.
    """
    maps = stage_maps(stage)
    total = 0.0
    for ctx, selected in maps.items():
        mass = float(stage.context_mass[ctx])
        if mass <= 0.0:
            continue
        w = _state_history_weights(law, stage.t, ctx)
        pushed = np.bincount(selected, weights=w, minlength=stage.num_actions)
        total += mass * entropy_bits(pushed)
    return total


def estimate_stage_entropy(t: int, law: JointLaw, policy: CausalPolicy,
                           num_proposals: int = 1024, num_tables: int = 1000,
                           seed: int = 0, chunk: int = 512):
    """Monte-Carlo estimate of H(U_t | U_{1..t-1}, Z_t) over seeded tables.

    Returns (mean, standard error, per-table values).  Tables for all
    contexts of one draw come from a single per-(seed, t, ctx) stream, so
    the result is reproducible bit for bit for fixed arguments.
    """
    U = policy.num_actions
    act = law.action_marginal(t)
    ctx_mass = act.sum(axis=-1).reshape(-1) if t > 1 else np.array([1.0])
    flat = act.reshape(-1, U)
    values = np.zeros(num_tables)
    stage_proxy = SfrlStage(t=t, tables={}, conditional=policy.tables[t - 1],
                            context_mass=ctx_mass, num_states=policy.num_states,
                            num_actions=U, num_proposals=num_proposals, seed=seed)
    for ctx in range(U ** (t - 1)):
        mass = float(ctx_mass[ctx])
        if mass <= 0.0:
            continue
        q = flat[ctx] / mass
        rows = _context_rows(stage_proxy, ctx)
        w = _state_history_weights(law, t, ctx)
        rng = _context_rng(seed, 0, t, ctx)
        done = 0
        while done < num_tables:
            take = min(chunk, num_tables - done)
            syms, times = _draw_tables(rng, q, take, num_proposals)
            selected, _ = _select_batch(syms, times, rows, q)
            keys = (np.arange(take)[:, None] * U + selected).ravel()
            counts = np.bincount(
                keys, weights=np.broadcast_to(w, selected.shape).ravel(),
                minlength=take * U,
            ).reshape(take, U)
            with np.errstate(divide="ignore", invalid="ignore"):
                logs = np.where(counts > 0, np.log2(np.where(counts > 0, counts, 1.0)), 0.0)
            values[done:done + take] += mass * (-(counts * logs).sum(axis=1))
            done += take
    mean = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(num_tables)) if num_tables > 1 else 0.0
    return mean, se, values


@dataclass(frozen=True)
class FidelityReport:
    max_tv: float
    mean_tv: float
    truncation_failure_rate: float
    num_tables: int
    num_proposals: int


def conditional_fidelity(t: int, law: JointLaw, policy: CausalPolicy,
                         num_proposals: int = 1024, num_tables: int = 10_000,
                         seed: int = 0, chunk: int = 2000) -> FidelityReport:
    """Total-variation distance between the table-averaged stage map output
    and the exact conditional, per reachable (context, state history); the
    reported figure is the worst pair.  Also reports the fraction of
    selections whose truncation certificate failed.
    """
    U = policy.num_actions
    act = law.action_marginal(t)
    ctx_mass = act.sum(axis=-1).reshape(-1) if t > 1 else np.array([1.0])
    flat = act.reshape(-1, U)
    stage_proxy = SfrlStage(t=t, tables={}, conditional=policy.tables[t - 1],
                            context_mass=ctx_mass, num_states=policy.num_states,
                            num_actions=U, num_proposals=num_proposals, seed=seed)
    tvs = []
    uncertified = 0
    total_selections = 0
    for ctx in range(U ** (t - 1)):
        mass = float(ctx_mass[ctx])
        if mass <= 0.0:
            continue
        q = flat[ctx] / mass
        rows = _context_rows(stage_proxy, ctx)
        w = _state_history_weights(law, t, ctx)
        reachable = np.flatnonzero(w > 0)
        counts = np.zeros((rows.shape[0], U))
        rng = _context_rng(seed, 0, t, ctx)
        done = 0
        while done < num_tables:
            take = min(chunk, num_tables - done)
            syms, times = _draw_tables(rng, q, take, num_proposals)
            selected, certified = _select_batch(syms, times, rows, q)
            for xk in reachable:
                counts[xk] += np.bincount(selected[:, xk], minlength=U)
            uncertified += int((~certified[:, reachable]).sum())
            total_selections += certified[:, reachable].size
            done += take
        emp = counts / num_tables
        for xk in reachable:
            tvs.append(0.5 * float(np.abs(emp[xk] - rows[xk]).sum()))
    return FidelityReport(
        max_tv=max(tvs) if tvs else 0.0,
        mean_tv=float(np.mean(tvs)) if tvs else 0.0,
        truncation_failure_rate=uncertified / max(total_selections, 1),
        num_tables=num_tables,
        num_proposals=num_proposals,
    )
