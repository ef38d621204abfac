"""Instance generators, including adaptive adversaries that force welfare loss.

An adversary emits one conceptual round (good) at a time and may look at the
fractions the online algorithm gave out in earlier rounds. Every round of the
two lower-bound constructions gives value 1/2 to a set of agents; through
:func:`emit_capped` each round reaches the algorithm as identical sub-goods
obeying the ``1/n**2`` value cap, and the adversary sees the mean fraction
per round.
"""
from __future__ import annotations

import json
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Generator, Optional, Sequence

import numpy as np

from pmean.errors import ConfigurationError, InvariantViolation, PreconditionError
from pmean.model import VALUE_TOL, Allocation, Instance, agent_values
from pmean.welfare import PLike, as_exponent

log = logging.getLogger(__name__)

HALF = 0.5


def random_dirichlet(n: int, T: int, seed: int, concentration: float = 1.0) -> Instance:
    """Each agent's row is an independent symmetric Dirichlet draw over the ``T`` goods."""
    if n < 1 or T < 1:
        raise ConfigurationError(f"need n >= 1 and T >= 1, got n={n}, T={T}")
    rng = np.random.default_rng(seed)
    values = rng.dirichlet(np.full(T, concentration), size=n)
    values /= values.sum(axis=1, keepdims=True)
    meta = json.dumps({"kind": "random_dirichlet", "n": n, "T": T, "seed": seed,
                       "concentration": concentration}, sort_keys=True)
    return Instance(values, meta)


def random_sparse(n: int, T: int, seed: int, density: float = 0.3) -> Instance:
    """Each good is valued by a random subset of agents; rows are renormalized to 1."""
    if n < 1 or T < 1:
        raise ConfigurationError(f"need n >= 1 and T >= 1, got n={n}, T={T}")
    if not 0 < density <= 1:
        raise ConfigurationError(f"density must lie in (0, 1], got {density}")
    rng = np.random.default_rng(seed)
    mask = rng.random((n, T)) < density
    # every agent values at least one good
    empty = ~mask.any(axis=1)
    mask[np.flatnonzero(empty), rng.integers(0, T, size=int(empty.sum()))] = True
    values = np.where(mask, rng.random((n, T)), 0.0)
    values[mask & (values == 0)] = 1.0
    values /= values.sum(axis=1, keepdims=True)
    meta = json.dumps({"kind": "random_sparse", "n": n, "T": T, "seed": seed,
                       "density": density}, sort_keys=True)
    return Instance(values, meta)


@dataclass(frozen=True)
class PredictedBounds:
    """Closed-form bounds of a construction: the offline optimum is at least
    ``oracle_lower``; any online algorithm gets at most ``online_upper``
    (strictly less when ``strict``); their ratio is at least ``ratio_lower``."""

    oracle_lower: float
    online_upper: float
    ratio_lower: float
    strict: bool


def predicted_bounds(kind: str, p: PLike, n: int) -> PredictedBounds:
    p = as_exponent(p).value
    if kind == "suboptimality_4agent":
        if p >= 1:
            raise ConfigurationError("the 4-agent construction needs p < 1")
        return PredictedBounds(5 / 8, 5 / 8, 1.0, strict=True)
    if kind == "negative_p_groups":
        if p >= 0:
            raise ConfigurationError("the group construction needs p < 0")
        if math.isinf(p):
            return PredictedBounds(0.5, 2 / math.sqrt(n), math.sqrt(n) / 4, strict=False)
        q = abs(p)
        c = 2 ** (1 + 1 / q)
        growth = n ** (q / (2 * q + 1))
        return PredictedBounds(1 / c, c / growth, growth / c**2, strict=False)
    raise ConfigurationError(f"no closed-form bounds for kind {kind!r}")


class AdaptiveAdversary(ABC):
    """Emits goods one conceptual round at a time, reacting to past fractions."""

    kind: str

    def __init__(self, n: int):
        self.n = n
        self.emitted: list[np.ndarray] = []
        self.history: list[np.ndarray] = []

    @property
    @abstractmethod
    def params(self) -> dict: ...

    @abstractmethod
    def _round(self, r: int, past: Sequence[np.ndarray]) -> Optional[np.ndarray]: ...

    def next_good(self, past: Sequence[np.ndarray]) -> Optional[np.ndarray]:
        """Values of the next round, or ``None`` once the interaction is over.

        ``past`` holds one fraction vector per round emitted so far.
        """
        if len(past) != len(self.emitted):
            raise PreconditionError(
                f"{len(past)} past allocations for {len(self.emitted)} emitted rounds"
            )
        self.history = [np.asarray(f, dtype=float) for f in past]
        v = self._round(len(self.emitted), self.history)
        if v is not None:
            self.emitted.append(v)
        return v

    def explicit_offline(self) -> Optional[np.ndarray]:
        """Offline fractions (``n x R``) for the rounds emitted, when the construction has one."""
        return None


class ObliviousAdversary(AdaptiveAdversary):
    """Replays a fixed instance; ignores the algorithm's choices."""

    def __init__(self, instance: Instance, kind: str = "fixed"):
        super().__init__(instance.n)
        self.instance = instance
        self.kind = kind

    @property
    def params(self) -> dict:
        try:
            return json.loads(self.instance.meta)
        except (json.JSONDecodeError, TypeError):
            return {"meta": self.instance.meta}

    def _round(self, r, past):
        return self.instance.values[:, r].copy() if r < self.instance.T else None


class SuboptimalityAdversary(AdaptiveAdversary):
    """Four-agent construction (repeated in blocks of four agents) under which
    no online algorithm reaches the optimal p-mean welfare for any p < 1.

    Per block of agents ``4b..4b+3``, five rounds: the first pair values round
    1, the second pair round 2; round 3 goes to whichever agent of each pair
    received less (``l1``, ``l2``); rounds 4 and 5 to the one that received
    more (``h1``, then ``h2``). Ties go to the lower index as ``h``.
    """

    kind = "suboptimality_4agent"

    def __init__(self, n: int = 4):
        if n < 4 or n % 4:
            raise ConfigurationError(f"{self.kind} needs n a positive multiple of 4, got {n}")
        super().__init__(n)
        self.roles: list[dict] = []

    @property
    def params(self) -> dict:
        return {"n": self.n}

    @property
    def num_rounds(self) -> int:
        return 5 * (self.n // 4)

    def _round(self, r, past):
        if r >= self.num_rounds:
            return None
        b, j = divmod(r, 5)
        base = 4 * b
        v = np.zeros(self.n)
        if j == 0:
            v[base:base + 2] = HALF
        elif j == 1:
            v[base + 2:base + 4] = HALF
        else:
            if j == 2:
                h1 = base + int(np.argmax(past[5 * b][base:base + 2]))
                h2 = base + 2 + int(np.argmax(past[5 * b + 1][base + 2:base + 4]))
                self.roles.append({"h1": h1, "l1": 2 * base + 1 - h1, "h2": h2, "l2": 2 * base + 5 - h2})
            roles = self.roles[b]
            if j == 2:
                v[[roles["l1"], roles["l2"]]] = HALF
            elif j == 3:
                v[roles["h1"]] = HALF
            else:
                v[roles["h2"]] = HALF
        return v

    def explicit_offline(self):
        if len(self.emitted) != self.num_rounds:
            return None
        x = np.zeros((self.n, self.num_rounds))
        for b, roles in enumerate(self.roles):
            r = 5 * b
            x[roles["l1"], r], x[roles["h1"], r] = 0.75, 0.25
            x[roles["l2"], r + 1], x[roles["h2"], r + 1] = 0.75, 0.25
            x[roles["l1"], r + 2] = x[roles["l2"], r + 2] = 0.5
            x[roles["h1"], r + 3] = 1.0
            x[roles["h2"], r + 4] = 1.0
        return x


def _integral(x: float) -> tuple[int, bool]:
    r = round(x)
    if r >= 1 and abs(x - r) <= 1e-9 * max(1.0, x):
        return r, True
    return max(1, math.floor(x)), False


class NegativeGroupsAdversary(AdaptiveAdversary):
    """Construction for p < 0 (including -inf) with ratio growing like n^(|p|/(2|p|+1)).

    Agents form ``n^(1-a)`` groups of ``n^a``, ``a = (|p|+1)/(2|p|+1)``. Round
    ``g`` gives 1/2 to group ``g``. Then, in each group, the ``n^(a/(|p|+1))``
    lowest-indexed agents that received at most ``2 n^-a`` of their group's
    good become special; one round gives 1/2 to all special agents, and each
    remaining agent then gets a round of its own (ascending index). When the
    powers of ``n`` are not integers they are floored; agents left outside
    every group get two rounds of their own so their values still sum to 1.
    """

    kind = "negative_p_groups"

    def __init__(self, n: int, p: PLike):
        exp = as_exponent(p)
        if exp.value >= 0:
            raise ConfigurationError(f"{self.kind} needs p < 0, got p={exp}")
        super().__init__(n)
        self.p = exp
        q = abs(exp.value)
        if math.isinf(q):
            a, special_exp, n_min = 0.5, 0.0, 4.0
        else:
            a = (q + 1) / (2 * q + 1)
            special_exp = a / (q + 1)
            n_min = 2 ** ((2 * q + 1) / q)
        if not n > n_min:
            raise ConfigurationError(f"{self.kind} with p={exp} needs n > {n_min:.6g}, got {n}")
        self.a = a
        self.group_size, e1 = _integral(n**a)
        self.num_groups, e2 = _integral(n ** (1 - a))
        self.special_per_group, e3 = _integral(n**special_exp)
        self.exact = e1 and e2 and e3 and self.group_size * self.num_groups == n
        if self.group_size * self.num_groups > n:
            self.num_groups = n // self.group_size
            self.exact = False
        if 2 * self.special_per_group > self.group_size:
            raise ConfigurationError(
                f"{self.kind}: {self.special_per_group} special agents per group of "
                f"{self.group_size} leaves no room for the pigeonhole argument"
            )
        if not self.exact:
            log.warning(
                "%s: n=%d is not of the form b^(2|p|+1); using groups=%d size=%d special=%d "
                "(exact values %.4g, %.4g, %.4g)",
                self.kind, n, self.num_groups, self.group_size, self.special_per_group,
                n ** (1 - a), n**a, n**special_exp,
            )
        self.special: list[int] = []
        self.schedule: list[int] = []

    @property
    def params(self) -> dict:
        return {
            "n": self.n, "p": str(self.p), "a": self.a,
            "group_size": self.group_size, "num_groups": self.num_groups,
            "special_per_group": self.special_per_group, "exact": self.exact,
        }

    def group(self, g: int) -> range:
        return range(g * self.group_size, (g + 1) * self.group_size)

    def _select_special(self, past) -> None:
        limit = 2.0 / self.group_size
        special = []
        for g in range(self.num_groups):
            members = np.asarray(self.group(g))
            got = past[g][members]
            candidates = members[got <= limit + 1e-12]
            if candidates.size < self.special_per_group:
                raise InvariantViolation(
                    f"group {g}: only {candidates.size} agents got at most {limit:.4g} "
                    f"of their good, need {self.special_per_group}"
                )
            special.extend(int(i) for i in candidates[: self.special_per_group])
        self.special = special
        grouped = self.num_groups * self.group_size
        chosen = set(special)
        for i in range(self.n):
            if i in chosen:
                continue
            self.schedule.append(i)
            if i >= grouped:
                self.schedule.append(i)

    @property
    def num_rounds(self) -> Optional[int]:
        if not self.special:
            return None
        return self.num_groups + 1 + len(self.schedule)

    def _round(self, r, past):
        v = np.zeros(self.n)
        if r < self.num_groups:
            v[list(self.group(r))] = HALF
            return v
        if r == self.num_groups:
            self._select_special(past)
            v[self.special] = HALF
            return v
        idx = r - self.num_groups - 1
        if idx >= len(self.schedule):
            return None
        v[self.schedule[idx]] = HALF
        return v

    def explicit_offline(self):
        R = self.num_rounds
        if R is None or len(self.emitted) != R:
            return None
        x = np.zeros((self.n, R))
        k = self.special_per_group
        for g in range(self.num_groups):
            x[self.special[g * k:(g + 1) * k], g] = 1.0 / k
        # the round valued by all special agents is shared evenly among them
        x[self.special, self.num_groups] = 1.0 / len(self.special)
        for idx, agent in enumerate(self.schedule):
            x[agent, self.num_groups + 1 + idx] = 1.0
        return x


def make_adversary(kind: str, n: int, p: PLike = 0, seed: int = 0, T: int = 64) -> AdaptiveAdversary:
    if kind == "suboptimality_4agent":
        return SuboptimalityAdversary(n)
    if kind == "negative_p_groups":
        return NegativeGroupsAdversary(n, p)
    if kind == "random_dirichlet":
        return ObliviousAdversary(random_dirichlet(n, T, seed), kind)
    if kind == "random_sparse":
        return ObliviousAdversary(random_sparse(n, T, seed), kind)
    raise ConfigurationError(f"unknown adversary kind {kind!r}")


def sub_good_count(values: np.ndarray, n: int) -> int:
    """Copies needed so each copy respects the ``1/n**2`` cap (``ceil(n^2/2)`` for value 1/2)."""
    return max(1, math.ceil(n * n * float(values.max()) - VALUE_TOL))


def emit_capped(
    adversary: AdaptiveAdversary, observed: Optional[list] = None
) -> Generator[np.ndarray, np.ndarray, None]:
    """Stream the adversary's goods as capped sub-goods.

    Drive it with ``send``: every yielded sub-good must be answered with the
    fractions the algorithm assigned to it. The adversary decides on the mean
    fraction of each round's sub-goods, which is also appended to ``observed``.
    """
    past = [] if observed is None else observed
    n = adversary.n
    while True:
        v = adversary.next_good(past)
        if v is None:
            return
        m = sub_good_count(v, n)
        sub = v / m
        acc = np.zeros(n)
        for _ in range(m):
            frac = yield sub
            acc += np.asarray(frac, dtype=float)
        past.append(acc / m)


@dataclass
class Transcript:
    """Record of one adversary-vs-algorithm interaction at conceptual-round level."""

    kind: str
    params: dict
    algorithm: str
    values: np.ndarray      # (n, R) conceptual round values
    fractions: np.ndarray   # (n, R) mean fraction per round
    sub_goods: np.ndarray   # (R,) copies each round was split into
    agent_values: np.ndarray
    offline: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def meta(self) -> str:
        return json.dumps({"kind": self.kind, "params": self.params, "algorithm": self.algorithm},
                          sort_keys=True)

    def instance(self) -> Instance:
        return Instance(self.values, self.meta)

    def capped_instance(self) -> Instance:
        return Instance(np.repeat(self.values / self.sub_goods, self.sub_goods, axis=1), self.meta)

    def allocation(self) -> Allocation:
        return Allocation.from_fractions(np.clip(self.fractions, 0.0, 1.0))

    def offline_allocation(self) -> Optional[Allocation]:
        return None if self.offline is None else Allocation.from_fractions(self.offline)

    def offline_values(self) -> Optional[np.ndarray]:
        alloc = self.offline_allocation()
        return None if alloc is None else agent_values(self.instance(), alloc)


def interact(adversary: AdaptiveAdversary, allocator) -> Transcript:
    """Play ``allocator`` against ``adversary`` through :func:`emit_capped`."""
    if allocator.n != adversary.n:
        raise ConfigurationError(f"allocator has n={allocator.n}, adversary n={adversary.n}")
    observed: list[np.ndarray] = []
    stream = emit_capped(adversary, observed)
    # AlgState validates every good; the stream is capped by construction
    allocate = getattr(allocator, "_advance", allocator.allocate)
    totals = np.zeros(adversary.n)
    try:
        sub = next(stream)
        while True:
            frac = allocate(sub)
            totals += frac * sub
            sub = stream.send(frac)
    except StopIteration:
        pass
    values = np.stack(adversary.emitted, axis=1)
    counts = np.array([sub_good_count(v, adversary.n) for v in adversary.emitted])
    fractions = np.stack(observed, axis=1)
    return Transcript(
        kind=adversary.kind,
        params=adversary.params,
        algorithm=getattr(allocator, "name", type(allocator).__name__),
        values=values,
        fractions=fractions,
        sub_goods=counts,
        agent_values=totals,
        offline=adversary.explicit_offline(),
    )
