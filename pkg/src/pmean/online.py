"""The threshold allocator ALG(phi), its threshold table, and two baselines.

Every good is split as follows: half goes uniformly to all agents, and the
other half is cut into ``K = ceil(log2(2n))`` level shares, one per level
``alpha = 2**-k``. Each level share is halved again: one quarter-share to the
active agent valuing the good most, one spread over the level's vulnerable
agents. An agent leaves a level's active set once the value it collected from
that level reaches ``alpha / phi``; an active agent is vulnerable once less
than ``alpha / 4`` of its total value is still to come.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Protocol

import numpy as np

from pmean.errors import DomainError, PreconditionError
from pmean.model import VALUE_TOL, Allocation, Instance, agent_values, as_good, check_cap
from pmean.welfare import PLike, as_exponent, p_mean

ThresholdMode = Literal["table", "universal"]


def num_levels(n: int) -> int:
    """``K = ceil(log2(2n))``."""
    return max(1, math.ceil(math.log2(2 * n)))


def threshold_for(p: PLike, n: int, mode: ThresholdMode = "table") -> float:
    """Threshold ``phi`` for exponent ``p`` with ``n`` agents.

    ``mode="table"`` picks the range-specific value, ``mode="universal"``
    returns ``8 sqrt(n) log2(2n)`` for every ``p``. Range boundaries are
    half-open as ``(lo, hi]``, so ``p = -1/log2(2n)`` uses the
    ``8 (2n)^(2|p|) log^3`` row.
    """
    p = as_exponent(p).value
    if n < 2:
        raise DomainError(f"thresholds are defined for n >= 2, got n={n}")
    lg = math.log2(2 * n)
    universal = 8 * math.sqrt(n) * lg
    if mode == "universal":
        return universal
    if mode != "table":
        raise ValueError(f"unknown threshold mode {mode!r}")
    q = abs(p)
    if p <= -1:  # includes -inf
        return universal
    if p <= -0.25:
        return 8 * n ** (q / (q + 1)) * lg**2
    if p <= -1 / lg:
        return 8 * (2 * n) ** (2 * q) * lg**3
    if p < 0:
        return 32 * lg**3
    if p == 0:
        return 8 * lg**3
    return 16 * lg**3


class OnlineAllocator(Protocol):
    """Anything that splits each arriving good irrevocably among ``n`` agents."""

    n: int
    name: str

    def allocate(self, values: np.ndarray) -> np.ndarray:
        """Fractions for the good with per-agent ``values``; sum at most 1."""


@dataclass
class AlgState:
    """Mutable state of ALG(phi) between rounds.

    Arrays indexed ``[k, i]`` refer to level ``alpha = 2**-(k+1)`` and agent ``i``.
    ``redirect_withheld`` hands level shares that would go unassigned (no
    active or no vulnerable agent) to the good's top-valued agent instead;
    redirected fractions never count toward level values.
    """

    n: int
    phi: float
    redirect_withheld: bool = False
    check_cap: bool = True
    name: str = "alg"
    K: int = field(init=False)
    alphas: np.ndarray = field(init=False, repr=False)
    active: np.ndarray = field(init=False, repr=False)
    vulnerable: np.ndarray = field(init=False, repr=False)
    level_value: np.ndarray = field(init=False, repr=False)
    received: np.ndarray = field(init=False, repr=False)
    round: int = field(init=False, default=0)
    last_leftover: float = field(init=False, default=0.0)

    def __post_init__(self):
        if not self.phi > 0:
            raise DomainError(f"threshold phi must be positive, got {self.phi}")
        if self.n < 1:
            raise DomainError("need at least one agent")
        self.K = num_levels(self.n)
        self.alphas = 0.5 ** np.arange(1, self.K + 1)
        self.active = np.ones((self.K, self.n), dtype=bool)
        self.vulnerable = np.zeros((self.K, self.n), dtype=bool)
        self.level_value = np.zeros((self.K, self.n))
        self.received = np.zeros(self.n)
        self._exit_at = (self.alphas / self.phi)[:, None]
        self._vuln_at = (1.0 - self.alphas / 4)[:, None]
        self._share = 1.0 / (4 * self.K)
        self._rows = np.arange(self.K)

    @property
    def remaining_value(self) -> np.ndarray:
        return 1.0 - self.received

    def step(self, values) -> np.ndarray:
        """Allocate one good and advance the state; returns the agents' fractions.

        The part of the good left unassigned is stored in ``last_leftover``.
        """
        v = as_good(values, self.n)
        if self.check_cap and v.max() > 1.0 / self.n**2 + VALUE_TOL:
            raise PreconditionError(
                f"round {self.round}: value {v.max():.6g} exceeds the cap 1/n^2 = {1 / self.n**2:.6g}"
            )
        return self._advance(v)

    def _advance(self, v: np.ndarray) -> np.ndarray:
        share = self._share
        active, vulnerable = self.active, self.vulnerable
        level = np.zeros((self.K, self.n))

        has_active = active.any(axis=1)
        # argmax returns the first maximum, so ties go to the lowest index
        top = np.where(active, v, -np.inf).argmax(axis=1)
        level[self._rows, top] = share * has_active

        counts = vulnerable.sum(axis=1)
        n_empty = self.K - int(np.count_nonzero(counts))
        if n_empty < self.K:
            level += vulnerable * (share / np.maximum(counts, 1))[:, None]

        withheld = self.K - int(np.count_nonzero(has_active)) + n_empty
        x = level.sum(axis=0)
        x += 0.5 / self.n
        if self.redirect_withheld and withheld:
            x[int(v.argmax())] += withheld * share
            withheld = 0

        level *= v
        self.level_value += level
        self.received += v
        active &= self.level_value < self._exit_at
        self.vulnerable = active & (self.received > self._vuln_at)
        self.round += 1
        self.last_leftover = withheld * share
        return x

    allocate = step


def step(state: AlgState, good) -> tuple[AlgState, np.ndarray]:
    """Functional-style wrapper around :meth:`AlgState.step`."""
    fractions = state.step(good)
    return state, fractions


@dataclass
class GreedyAllocator:
    """Gives every good wholly to the agent valuing it most (lowest index on ties)."""

    n: int
    name: str = "greedy"

    def allocate(self, values) -> np.ndarray:
        v = as_good(values, self.n)
        x = np.zeros(self.n)
        x[int(v.argmax())] = 1.0
        return x


@dataclass
class UniformAllocator:
    """Gives every agent ``1/n`` of every good."""

    n: int
    name: str = "uniform"

    def allocate(self, values) -> np.ndarray:
        as_good(values, self.n)
        return np.full(self.n, 1.0 / self.n)


@dataclass
class History:
    """Per-round snapshots of the level sets as they were used in each round.

    ``vulnerable[t, k, i]`` / ``active[t, k, i]`` describe ``B_t`` and ``A_t``
    for the round that allocated good ``t``; ``final_*`` are the sets after
    the last good.
    """

    vulnerable: np.ndarray
    active: np.ndarray
    alphas: np.ndarray
    final_vulnerable: np.ndarray
    final_active: np.ndarray
    level_value: np.ndarray
    max_level_value: np.ndarray


@dataclass
class RunReport:
    allocation: Allocation
    agent_values: np.ndarray
    config: dict
    online_welfare: Optional[float] = None
    oracle_welfare: Optional[float] = None
    ratio: Optional[float] = None
    diagnostics: list = field(default_factory=list)
    history: Optional[History] = field(default=None, repr=False)

    def to_dict(self, include_allocation: bool = False) -> dict:
        out = {
            "config": self.config,
            "online_welfare": self.online_welfare,
            "oracle_welfare": self.oracle_welfare,
            "ratio": self.ratio,
            "agent_values": self.agent_values.tolist(),
            "min_agent_value": float(self.agent_values.min()),
            "leftover_total": float(self.allocation.leftover.sum()),
            "diagnostics": [d.to_dict() for d in self.diagnostics],
        }
        if include_allocation:
            out["allocation"] = {
                "fractions": self.allocation.fractions.tolist(),
                "leftover": self.allocation.leftover.tolist(),
            }
        return out


def run_allocator(instance: Instance, allocator) -> Allocation:
    """Feed the goods of ``instance`` to ``allocator`` in order."""
    T = instance.T
    x = np.empty((instance.n, T))
    leftover = np.empty(T)
    good_values = instance.values
    for t in range(T):
        x[:, t] = allocator.allocate(good_values[:, t])
        if isinstance(allocator, AlgState):
            leftover[t] = allocator.last_leftover
        else:
            leftover[t] = max(0.0, 1.0 - x[:, t].sum())
    return Allocation(x, leftover)


def run_online(
    instance: Instance,
    phi: float,
    p: PLike | None = None,
    *,
    redirect_withheld: bool = False,
    record: bool = False,
) -> RunReport:
    """Run ALG(phi) over the goods of a preprocessed instance.

    Deterministic: identical inputs give bit-identical allocations. With
    ``record=True`` the per-round level sets are kept for
    :func:`pmean.diagnostics.lemma_diagnostics`.
    """
    state = AlgState(instance.n, phi, redirect_withheld=redirect_withheld)
    n, T = instance.n, instance.T
    if not check_cap(instance):
        raise PreconditionError(
            "instance exceeds the value cap 1/n^2; preprocess it with split_to_cap first"
        )
    x = np.empty((n, T))
    leftover = np.empty(T)
    if record:
        vuln_hist = np.empty((T, state.K, n), dtype=bool)
        act_hist = np.empty((T, state.K, n), dtype=bool)
        max_level = np.zeros((state.K, n))
    vals = instance.values
    for t in range(T):
        if record:
            vuln_hist[t] = state.vulnerable
            act_hist[t] = state.active
        x[:, t] = state._advance(vals[:, t])
        leftover[t] = state.last_leftover
        if record:
            np.maximum(max_level, state.level_value, out=max_level)
    allocation = Allocation(x, leftover)
    av = agent_values(instance, allocation)
    report = RunReport(
        allocation=allocation,
        agent_values=av,
        config={"algorithm": "alg", "n": n, "T": T, "phi": phi, "redirect_withheld": redirect_withheld},
    )
    if p is not None:
        report.online_welfare = p_mean(av, p)
        report.config["p"] = str(as_exponent(p))
    if record:
        report.history = History(
            vulnerable=vuln_hist,
            active=act_hist,
            alphas=state.alphas.copy(),
            final_vulnerable=state.vulnerable.copy(),
            final_active=state.active.copy(),
            level_value=state.level_value.copy(),
            max_level_value=max_level,
        )
    return report


def run_baseline(instance: Instance, kind: str, p: PLike | None = None) -> RunReport:
    """Run the ``greedy`` or ``uniform`` baseline."""
    allocators = {"greedy": GreedyAllocator, "uniform": UniformAllocator}
    if kind not in allocators:
        raise ValueError(f"unknown baseline {kind!r}")
    allocation = run_allocator(instance, allocators[kind](instance.n))
    av = agent_values(instance, allocation)
    report = RunReport(allocation, av, {"algorithm": kind, "n": instance.n, "T": instance.T})
    if p is not None:
        report.online_welfare = p_mean(av, p)
        report.config["p"] = str(as_exponent(p))
    return report
