"""Instances, allocations and the preprocessing that puts instances in normal form.

Agents and goods are 0-indexed throughout. Valuations are stored densely as an
``n x T`` array so that ``values[i, t]`` is agent ``i``'s value for good ``t``,
matching the layout of allocation fractions.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from pmean.errors import StructuralError

SCALE_TOL = 1e-9
VALUE_TOL = 1e-9
FEAS_TOL = 1e-9

SplitMode = Literal["minimal", "paper"]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def as_good(values: Sequence[float] | np.ndarray, n: int | None = None) -> np.ndarray:
    """Coerce one good's per-agent value vector and check it is well formed."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise StructuralError(f"a good must be a non-empty 1-D vector, got shape {v.shape}")
    if n is not None and v.size != n:
        raise StructuralError(f"good has {v.size} entries, expected {n}")
    if not np.all(np.isfinite(v)):
        raise StructuralError("good values must be finite")
    if np.any(v < 0):
        raise StructuralError("good values must be nonnegative")
    return v


@dataclass(frozen=True)
class Instance:
    """An ordered sequence of goods arriving to ``n`` agents.

    ``values`` has shape ``(n, T)``; column ``t`` is the value vector revealed
    when good ``t`` arrives.
    """

    values: np.ndarray
    meta: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise StructuralError(
                f"instance needs at least one agent and one good, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise StructuralError("instance values must be finite")
        if np.any(v < 0):
            raise StructuralError("instance values must be nonnegative")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_goods(cls, goods: Iterable[Sequence[float]], meta: str = "") -> "Instance":
        rows = [list(g) for g in goods]
        if not rows:
            raise StructuralError("instance has no goods")
        n = len(rows[0])
        if any(len(r) != n for r in rows):
            raise StructuralError("all goods must carry one value per agent")
        return cls(np.asarray(rows, dtype=float).T, meta)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def goods(self) -> list[np.ndarray]:
        return [self.values[:, t] for t in range(self.T)]

    @property
    def cap(self) -> float:
        """Per-good value cap ``1/n**2``."""
        return 1.0 / self.n**2


@dataclass(frozen=True)
class Allocation:
    """Fractional assignment of every good; ``fractions[i, t]`` is ``x_i^t``.

    ``leftover[t]`` is the part of good ``t`` not given to anyone.
    """

    fractions: np.ndarray
    leftover: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.fractions, dtype=float)
        left = np.asarray(self.leftover, dtype=float)
        if x.ndim != 2 or left.shape != (x.shape[1],):
            raise StructuralError(
                f"fractions {x.shape} and leftover {left.shape} are inconsistent"
            )
        if np.any(x < -FEAS_TOL) or np.any(x > 1 + FEAS_TOL):
            raise StructuralError("fractions must lie in [0, 1]")
        if np.any(left < -FEAS_TOL):
            raise StructuralError("leftover must be nonnegative")
        if np.any(np.abs(x.sum(axis=0) + left - 1.0) > FEAS_TOL):
            raise StructuralError("each good must be split into fractions plus leftover summing to 1")
        object.__setattr__(self, "fractions", _frozen(x))
        object.__setattr__(self, "leftover", _frozen(left))

    @classmethod
    def from_fractions(cls, fractions: np.ndarray) -> "Allocation":
        x = np.asarray(fractions, dtype=float)
        if x.ndim != 2:
            raise StructuralError(f"fractions must be 2-D, got shape {x.shape}")
        return cls(x, np.clip(1.0 - x.sum(axis=0), 0.0, None))

    @classmethod
    def uniform(cls, n: int, T: int) -> "Allocation":
        return cls.from_fractions(np.full((n, T), 1.0 / n))

    @classmethod
    def zeros(cls, n: int, T: int) -> "Allocation":
        return cls(np.zeros((n, T)), np.ones(T))

    @property
    def n(self) -> int:
        return self.fractions.shape[0]

    @property
    def T(self) -> int:
        return self.fractions.shape[1]


@dataclass(frozen=True)
class ScalingReport:
    """Outcome of :func:`validate_scaling`; ``agent`` is the worst offender."""

    ok: bool
    agent: int
    total: float
    deviation: float
    totals: np.ndarray = field(repr=False)

    def __bool__(self) -> bool:
        return self.ok


def validate_scaling(instance: Instance, tol: float = SCALE_TOL) -> ScalingReport:
    """Check that every agent's values sum to one."""
    totals = instance.values.sum(axis=1)
    dev = np.abs(totals - 1.0)
    worst = int(np.argmax(dev))
    return ScalingReport(
        ok=bool(dev[worst] <= tol),
        agent=worst,
        total=float(totals[worst]),
        deviation=float(dev[worst]),
        totals=totals,
    )


def split_counts(instance: Instance, mode: SplitMode = "minimal") -> np.ndarray:
    """Number of identical copies each good is replaced by under :func:`split_to_cap`."""
    n2 = instance.n**2
    if mode == "paper":
        return np.full(instance.T, n2, dtype=np.int64)
    if mode != "minimal":
        raise ValueError(f"unknown split mode {mode!r}")
    peak = instance.values.max(axis=0)
    counts = np.ones(instance.T, dtype=np.int64)
    over = peak > 1.0 / n2 + VALUE_TOL
    # the -VALUE_TOL keeps exact multiples like 4 * 0.5 from rounding up
    counts[over] = np.ceil(n2 * peak[over] - VALUE_TOL).astype(np.int64)
    return counts


def split_to_cap(instance: Instance, mode: SplitMode = "minimal") -> Instance:
    """Replace goods above the ``1/n**2`` cap by identical scaled-down copies.

    ``mode="minimal"`` uses ``ceil(n**2 * max_i v_i^t)`` copies and leaves goods
    under the cap alone; ``mode="paper"`` splits every good into ``n**2`` copies.
    """
    counts = split_counts(instance, mode)
    if mode == "minimal" and np.all(counts == 1):
        return instance
    return Instance(np.repeat(instance.values / counts, counts, axis=1), instance.meta)


def expand_allocation(allocation: Allocation, counts: np.ndarray) -> Allocation:
    """Map an allocation of the original goods onto their split copies.

    Each copy receives the fractions of the good it came from, so agent values
    are unchanged.
    """
    counts = np.asarray(counts)
    return Allocation(
        np.repeat(allocation.fractions, counts, axis=1),
        np.repeat(allocation.leftover, counts),
    )


def agent_values(instance: Instance, allocation: Allocation | np.ndarray) -> np.ndarray:
    """Per-agent value ``sum_t x_i^t v_i^t`` of an allocation."""
    x = allocation.fractions if isinstance(allocation, Allocation) else np.asarray(allocation)
    if x.shape != instance.values.shape:
        raise StructuralError(
            f"allocation shape {x.shape} does not match instance shape {instance.values.shape}"
        )
    return np.einsum("it,it->i", x, instance.values)


def check_cap(instance: Instance, tol: float = VALUE_TOL) -> bool:
    return bool(instance.values.max() <= instance.cap + tol)


# -- file formats -------------------------------------------------------------


def _checked_rows(rows: list[list[float]], source: str) -> list[list[float]]:
    for r, row in enumerate(rows):
        for v in row:
            if not math.isfinite(v):
                raise StructuralError(f"{source}: good {r} has a non-finite value")
            if v < 0:
                raise StructuralError(f"{source}: good {r} has a negative value")
    return rows


def instance_from_json(doc: dict, source: str = "<json>") -> Instance:
    try:
        n = int(doc["n"])
        goods = [[float(v) for v in g] for g in doc["goods"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise StructuralError(f"{source}: malformed instance document ({exc})") from exc
    if not goods:
        raise StructuralError(f"{source}: instance has no goods")
    if any(len(g) != n for g in goods):
        raise StructuralError(f"{source}: every good must list exactly n={n} values")
    _checked_rows(goods, source)
    return Instance.from_goods(goods, str(doc.get("meta", "")))


def instance_to_json(instance: Instance) -> dict:
    return {
        "n": instance.n,
        "goods": instance.values.T.tolist(),
        "meta": instance.meta,
    }


def load_instance(path: str | Path) -> Instance:
    """Read an instance from a ``.json`` or ``.csv`` file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise StructuralError(f"cannot read {path}: {exc}") from exc
    if path.suffix.lower() == ".csv":
        return _instance_from_csv(text, str(path))
    try:
        # json accepts NaN/Infinity literals; _checked_rows rejects them
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StructuralError(f"{path}: invalid JSON ({exc})") from exc
    return instance_from_json(doc, str(path))


def _instance_from_csv(text: str, source: str) -> Instance:
    reader = csv.reader(line for line in text.splitlines() if line.strip())
    try:
        header = next(reader)
    except StopIteration:
        raise StructuralError(f"{source}: empty CSV") from None
    expected = [f"agent_{i + 1}" for i in range(len(header))]
    if [h.strip() for h in header] != expected:
        raise StructuralError(f"{source}: header must be agent_1..agent_n")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise StructuralError(f"{source}:{lineno}: expected {len(header)} columns")
        try:
            rows.append([float(v) for v in row])
        except ValueError as exc:
            raise StructuralError(f"{source}:{lineno}: {exc}") from exc
    if not rows:
        raise StructuralError(f"{source}: instance has no goods")
    _checked_rows(rows, source)
    return Instance.from_goods(rows, Path(source).name)


def save_instance(instance: Instance, path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"agent_{i + 1}" for i in range(instance.n)])
            for good in instance.values.T:
                w.writerow([repr(float(v)) for v in good])
    else:
        path.write_text(json.dumps(instance_to_json(instance), indent=1) + "\n")
