"""Finite-alphabet stochastic control systems and exact information accounting.

A system is a horizon-n sequence of state kernels over a finite state
alphabet plus a nonnegative per-stage cost table.  A causal policy assigns
one conditional pmf over actions to every observable history
(x_1..x_t, u_1..u_{t-1}).  Together they induce a joint law over
trajectories, from which average costs, conditional action entropies, and
the causally conditioned information flow from states to actions are
computed exactly by dense enumeration.

Trajectory indexing is stage-major big-endian: the flat index of
(x_1,u_1,...,x_n,u_n) is built by repeated ``idx = (idx*X + x_t)*U + u_t``,
so the length-t prefix of a trajectory is ``idx // (X*U)**(n-t)``.

All probabilities are 64-bit floats, all logarithms are base 2, and
entropy terms use the convention 0*log(0) = 0.  Everything here is a pure
function of immutable inputs and is safe to call concurrently.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

KERNEL_ROW_TOL = 1e-12
MASS_TOL = 1e-10
DEFAULT_BUDGET = 10_000_000


class BudgetExceededError(ValueError):
    """Trajectory enumeration would exceed the configured entry budget."""


class DimensionMismatchError(ValueError):
    """Policy and system disagree on horizon or alphabet sizes."""


class NormalizationError(ValueError):
    """A probability row or table does not sum to one within tolerance."""


def entropy_bits(p) -> float:
    """Shannon entropy of a pmf (any shape) in bits, with 0*log(0) = 0."""
    p = np.asarray(p, dtype=float).ravel()
    nz = p[p > 0.0]
    if nz.size == 0:
        return 0.0
    return float(-(nz * np.log2(nz)).sum())


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def _check_rows(rows: np.ndarray, what: str) -> None:
    if np.any(rows < -1e-15) or not np.all(np.isfinite(rows)):
        raise NormalizationError(f"{what} has negative or non-finite entries")
    sums = rows.reshape(-1, rows.shape[-1]).sum(axis=1)
    worst = float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0
    if worst > KERNEL_ROW_TOL:
        raise NormalizationError(
            f"{what} rows deviate from 1 by {worst:.3e} (tolerance {KERNEL_ROW_TOL})"
        )


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """A finite-alphabet controlled system over a fixed horizon.

    ``kernels[t-1]`` is the stage-t state kernel laid out over flat history
    indices: shape ((X*U)**(t-1), X).  Stage 1 has a single (empty) history
    row, the initial state distribution.  ``markov`` carries the compact
    (initial, transition) pair when the spec was built in Markov mode; it
    is redundant with ``kernels`` and used only for serialization.
    """

    horizon: int
    num_states: int
    num_actions: int
    cost: np.ndarray
    kernels: tuple[np.ndarray, ...]
    budget: int = DEFAULT_BUDGET
    markov: tuple[np.ndarray, np.ndarray] | None = None
    source_mode: bool = False

    def __post_init__(self):
        n, X, U = self.horizon, self.num_states, self.num_actions
        if n < 1 or X < 1 or U < 1:
            raise ValueError("horizon and alphabet sizes must be positive")
        if (X * U) ** n > self.budget:
            raise BudgetExceededError(
                f"(|X|*|U|)**n = {(X * U) ** n} exceeds budget {self.budget}; "
                "raise the budget explicitly for larger desk-scale instances"
            )
        cost = _frozen(self.cost)
        if cost.shape != (X, U):
            raise DimensionMismatchError(f"cost table must be shape {(X, U)}")
        if np.any(cost < 0) or not np.all(np.isfinite(cost)):
            raise ValueError("cost entries must be nonnegative and finite")
        object.__setattr__(self, "cost", cost)
        if len(self.kernels) != n:
            raise DimensionMismatchError("need one state kernel per stage")
        frozen = []
        for t, k in enumerate(self.kernels, start=1):
            k = _frozen(k)
            want = ((X * U) ** (t - 1), X)
            if k.shape != want:
                raise DimensionMismatchError(
                    f"stage-{t} kernel must be shape {want}, got {k.shape}"
                )
            _check_rows(k, f"stage-{t} kernel")
            frozen.append(k)
        object.__setattr__(self, "kernels", tuple(frozen))

    @classmethod
    def from_markov(cls, initial, transition, cost, horizon,
                    budget=DEFAULT_BUDGET, source_mode=False) -> "SystemSpec":
        """Build a spec whose stage-t kernel depends only on (x_{t-1}, u_{t-1})."""
        initial = np.asarray(initial, dtype=float)
        transition = np.asarray(transition, dtype=float)
        X = initial.shape[0]
        if transition.shape[:1] != (X,) or transition.shape[2:] != (X,):
            raise DimensionMismatchError("transition must be shape (X, U, X)")
        U = transition.shape[1]
        kernels = [initial[None, :]]
        for t in range(2, horizon + 1):
            h = np.arange((X * U) ** (t - 1))
            x_prev = (h // U) % X
            u_prev = h % U
            kernels.append(transition[x_prev, u_prev, :])
        return cls(horizon=horizon, num_states=X, num_actions=U,
                   cost=np.asarray(cost, dtype=float), kernels=tuple(kernels),
                   budget=budget, markov=(_frozen(initial), _frozen(transition)),
                   source_mode=source_mode)

    @classmethod
    def from_source(cls, initial, transition_states, cost, horizon, num_actions,
                    budget=DEFAULT_BUDGET) -> "SystemSpec":
        """Uncontrolled source: the state kernel ignores past actions."""
        tx = np.asarray(transition_states, dtype=float)
        X = np.asarray(initial).shape[0]
        if tx.shape != (X, X):
            raise DimensionMismatchError("source transition must be shape (X, X)")
        transition = np.repeat(tx[:, None, :], num_actions, axis=1)
        return cls.from_markov(initial, transition, cost, horizon,
                               budget=budget, source_mode=True)

    def stage_kernel(self, t: int) -> np.ndarray:
        """State kernel at stage t (1-indexed), rows over flat histories."""
        return self.kernels[t - 1]


@dataclass(frozen=True, eq=False)
class CausalPolicy:
    """Per-stage conditional action pmfs over observable histories.

    ``tables[t-1]`` has shape ((X*U)**(t-1), X, U): the flat index of the
    (x,u)-history through stage t-1, the current state, and the action.
    """

    tables: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.tables:
            raise ValueError("policy needs at least one stage")
        X, U = self.tables[0].shape[1], self.tables[0].shape[2]
        frozen = []
        for t, tab in enumerate(self.tables, start=1):
            tab = _frozen(tab)
            want = ((X * U) ** (t - 1), X, U)
            if tab.shape != want:
                raise DimensionMismatchError(
                    f"stage-{t} policy table must be shape {want}, got {tab.shape}"
                )
            _check_rows(tab, f"stage-{t} policy")
            frozen.append(tab)
        object.__setattr__(self, "tables", tuple(frozen))

    @property
    def horizon(self) -> int:
        return len(self.tables)

    @property
    def num_states(self) -> int:
        return self.tables[0].shape[1]

    @property
    def num_actions(self) -> int:
        return self.tables[0].shape[2]

    @classmethod
    def uniform(cls, spec: SystemSpec) -> "CausalPolicy":
        X, U = spec.num_states, spec.num_actions
        tabs = [np.full(((X * U) ** (t - 1), X, U), 1.0 / U)
                for t in range(1, spec.horizon + 1)]
        return cls(tuple(tabs))

    @classmethod
    def constant_action(cls, spec: SystemSpec, action) -> "CausalPolicy":
        """Deterministic open-loop policy; ``action`` is an int or one per stage."""
        X, U = spec.num_states, spec.num_actions
        seq = [action] * spec.horizon if np.isscalar(action) else list(action)
        tabs = []
        for t in range(1, spec.horizon + 1):
            tab = np.zeros(((X * U) ** (t - 1), X, U))
            tab[:, :, int(seq[t - 1])] = 1.0
            tabs.append(tab)
        return cls(tuple(tabs))

    @classmethod
    def state_ignoring(cls, spec: SystemSpec, stage_rows) -> "CausalPolicy":
        """Policy that may look at past actions but never at states.

        ``stage_rows[t-1]`` has shape (U**(t-1), U), indexed by the
        big-endian action history.
        """
        X, U = spec.num_states, spec.num_actions
        tabs = []
        for t in range(1, spec.horizon + 1):
            rows = np.asarray(stage_rows[t - 1], dtype=float)
            h = np.arange((X * U) ** (t - 1))
            ukey = np.zeros_like(h)
            for s in range(t - 1):
                pair = (h // (X * U) ** (t - 2 - s)) % (X * U)
                ukey = ukey * U + pair % U
            tab = np.repeat(rows[ukey][:, None, :], X, axis=1)
            tabs.append(tab)
        return cls(tuple(tabs))

    @classmethod
    def from_choices(cls, spec: SystemSpec, choose) -> "CausalPolicy":
        """Deterministic policy from ``choose(t, x_hist, u_hist) -> action``.

        Enumerates every history explicitly; meant for tests and tiny specs.
        """
        X, U = spec.num_states, spec.num_actions
        tabs = []
        for t in range(1, spec.horizon + 1):
            tab = np.zeros(((X * U) ** (t - 1), X, U))
            for h, pairs in enumerate(itertools.product(range(X * U), repeat=t - 1)):
                x_hist = tuple(p // U for p in pairs)
                u_hist = tuple(p % U for p in pairs)
                for x in range(X):
                    u = int(choose(t, x_hist + (x,), u_hist))
                    tab[h, x, u] = 1.0
            tabs.append(tab)
        return cls(tuple(tabs))


@dataclass(frozen=True, eq=False)
class JointLaw:
    """Exact trajectory law over (x_1,u_1,...,x_n,u_n), stage-major flat."""

    horizon: int
    num_states: int
    num_actions: int
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float, copy=True)
        T = (self.num_states * self.num_actions) ** self.horizon
        if p.shape != (T,):
            raise DimensionMismatchError(f"probs must be flat of length {T}")
        if np.any(p < -1e-14):
            raise NormalizationError("trajectory probabilities must be nonnegative")
        np.clip(p, 0.0, None, out=p)
        mass = float(p.sum())
        if abs(mass - 1.0) > MASS_TOL:
            raise NormalizationError(f"trajectory mass {mass!r} is not 1 within {MASS_TOL}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def mass(self) -> float:
        return float(self.probs.sum())

    def table(self) -> np.ndarray:
        """The law reshaped to interleaved axes (X,U,X,U,...)."""
        X, U = self.num_states, self.num_actions
        return self.probs.reshape((X, U) * self.horizon)

    def prefix_marginal(self, t: int) -> np.ndarray:
        """Marginal of (x_1,u_1,...,x_t,u_t), axes interleaved (X,U)*t."""
        X, U = self.num_states, self.num_actions
        flat = self.probs.reshape((X * U) ** t, -1).sum(axis=1)
        return flat.reshape((X, U) * t)

    def action_marginal(self, t: int | None = None) -> np.ndarray:
        """Marginal of (u_1,...,u_t), axes (U,)*t.  Defaults to the full horizon."""
        t = self.horizon if t is None else t
        pre = self.prefix_marginal(t)
        return pre.sum(axis=tuple(range(0, 2 * t, 2)))

    def state_marginal(self, t: int | None = None) -> np.ndarray:
        """Marginal of (x_1,...,x_t), axes (X,)*t."""
        t = self.horizon if t is None else t
        pre = self.prefix_marginal(t)
        return pre.sum(axis=tuple(range(1, 2 * t, 2)))

    def stage_pair_marginal(self, t: int) -> np.ndarray:
        """Marginal of (x_t, u_t), shape (X, U)."""
        pre = self.prefix_marginal(t)
        keep = (2 * t - 2, 2 * t - 1)
        axes = tuple(a for a in range(2 * t) if a not in keep)
        return pre.sum(axis=axes)

    def trajectories(self):
        """Yield ((x_1..x_n), (u_1..u_n), prob) for trajectories with mass."""
        X, U = self.num_states, self.num_actions
        n = self.horizon
        for idx in np.flatnonzero(self.probs):
            rem = int(idx)
            xs, us = [], []
            for _ in range(n):
                us.append(rem % U)
                rem //= U
                xs.append(rem % X)
                rem //= X
            yield tuple(reversed(xs)), tuple(reversed(us)), float(self.probs[idx])


def evaluate_joint(spec: SystemSpec, policy: CausalPolicy) -> JointLaw:
    """Forward product of state kernels and policy rows over all trajectories."""
    if (policy.horizon != spec.horizon or policy.num_states != spec.num_states
            or policy.num_actions != spec.num_actions):
        raise DimensionMismatchError("policy does not match system dimensions")
    X, U = spec.num_states, spec.num_actions
    p = np.ones(1)
    for t in range(1, spec.horizon + 1):
        k = spec.stage_kernel(t)          # (H, X)
        pi = policy.tables[t - 1]         # (H, X, U)
        p = (p[:, None, None] * k[:, :, None] * pi).reshape(-1)
    return JointLaw(spec.horizon, X, U, p)


def average_cost(law: JointLaw, spec: SystemSpec) -> float:
    """(1/n) sum_t E[c(X_t, U_t)] under the law, exactly."""
    if (law.horizon, law.num_states, law.num_actions) != \
            (spec.horizon, spec.num_states, spec.num_actions):
        raise DimensionMismatchError("law does not match system dimensions")
    total = 0.0
    for t in range(1, law.horizon + 1):
        total += float((law.stage_pair_marginal(t) * spec.cost).sum())
    return total / law.horizon


def stage_information_terms(law: JointLaw) -> list[float]:
    """Per-stage terms I(X_{1..t}; U_t | U_{1..t-1}) in bits, each >= 0."""
    terms = []
    for t in range(1, law.horizon + 1):
        m1 = law.prefix_marginal(t)                       # (X,U)^t
        m0 = m1.sum(axis=2 * t - 1, keepdims=True)        # drop u_t
        x_axes = tuple(range(0, 2 * t, 2))
        a1 = m1.sum(axis=x_axes, keepdims=True)           # actions only
        a0 = a1.sum(axis=2 * t - 1, keepdims=True)
        mask = m1 > 0.0
        num = np.where(mask, m1 * np.broadcast_to(a0, m1.shape), 1.0)
        den = np.where(mask, np.broadcast_to(m0 * a1, m1.shape), 1.0)
        term = float((m1 * np.log2(num / den))[mask].sum())
        if term < -1e-9:
            raise AssertionError(f"stage information term {term} below -1e-9")
        terms.append(max(term, 0.0))
    return terms


def directed_information(law: JointLaw) -> float:
    """Causally conditioned information from states to actions, in bits."""
    return float(sum(stage_information_terms(law)))


def conditional_action_entropies(law: JointLaw) -> list[float]:
    """H(U_t | U_{1..t-1}) in bits for each stage t."""
    out = []
    prev = 0.0
    for t in range(1, law.horizon + 1):
        cur = entropy_bits(law.action_marginal(t))
        h = cur - prev
        cap = np.log2(law.num_actions)
        if h < -1e-9 or h > cap + 1e-9:
            raise AssertionError(f"conditional action entropy {h} out of [0, {cap}]")
        out.append(min(max(h, 0.0), cap))
        prev = cur
    return out
