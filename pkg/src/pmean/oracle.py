"""Offline benchmarks: conditional-gradient ascent, a grid brute force, and the half-shift.

The feasible set ``{x >= 0, sum_i x_i^t <= 1}`` is a product of simplices, so
the linear maximization step gives each good wholly to the agent with the
largest gradient coefficient. Agent values are linear in ``x``, so iterates
are tracked in value space and the allocation matrix is updated alongside.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.optimize import minimize_scalar

from pmean.errors import GridTooLarge, PreconditionError
from pmean.model import Allocation, Instance, agent_values
from pmean.welfare import PLike, as_exponent, p_mean, p_mean_rows

EGALITARIAN_PROXY = -50.0
GRAD_FLOOR = 1e-12
GAP_RTOL = 1e-6
GRID_MAX_COMBINATIONS = 20_000_000

Method = Literal["conditional_gradient", "grid_bruteforce", "explicit"]


@dataclass(frozen=True)
class OracleResult:
    allocation: Allocation
    welfare: float
    method: Method
    gap_estimate: float
    iterations: int
    trace: tuple = ()

    def to_dict(self) -> dict:
        return {
            "welfare": self.welfare,
            "method": self.method,
            "gap_estimate": self.gap_estimate,
            "iterations": self.iterations,
        }


def _gradient(vals: np.ndarray, p: float, m: float) -> np.ndarray:
    """d M_p / d v_i = (1/n) (v_i / M)^(p - 1), valid for every finite p <= 1 incl. 0."""
    v = np.maximum(vals, GRAD_FLOOR)
    with np.errstate(over="ignore"):
        return np.exp((p - 1.0) * (np.log(v) - math.log(max(m, GRAD_FLOOR)))) / vals.size


def _objective(vals: np.ndarray, p: float) -> float:
    # unchecked twin of p_mean for the inner loop; p is finite here
    if vals.min() <= 0:
        return 0.0 if p <= 0 else float(np.mean(np.maximum(vals, 0.0) ** p) ** (1 / p))
    if p == 0:
        return float(np.exp(np.log(vals).mean()))
    m = vals.max() if p > 0 else vals.min()
    return float(m * np.exp(np.log1p(np.expm1(p * np.log(vals / m)).mean()) / p))


def solve_concave(instance: Instance, p: PLike, budget: int = 2000) -> OracleResult:
    """Maximize the p-mean welfare by conditional-gradient ascent from the uniform point.

    Step ``2/(k+2)``; when that step would lower the objective an exact line
    search over ``[0, 1]`` is used instead, so welfare never decreases. Stops
    once the duality gap falls below ``1e-6 * welfare`` or after ``budget``
    iterations, or earlier if no step along the chosen vertex improves the
    objective in floating point (``gap_estimate`` is then the last gap). For
    ``p = -inf`` the smooth proxy ``p = -50`` is optimized and the reported
    welfare is the minimum agent value.
    """
    exp = as_exponent(p)
    p_eff = EGALITARIAN_PROXY if exp.is_egalitarian else exp.value
    V = instance.values
    n, T = V.shape
    goods = np.arange(T)
    x = np.full((n, T), 1.0 / n)
    vals = V.sum(axis=1) / n
    obj = _objective(vals, p_eff)
    gap = math.inf
    trace = [obj]
    it = 0
    for it in range(1, budget + 1):
        grad = _gradient(vals, p_eff, obj)
        best = (grad[:, None] * V).argmax(axis=0)
        s_vals = np.bincount(best, weights=V[best, goods], minlength=n)
        direction = s_vals - vals
        gap = float(grad @ direction)
        if gap <= GAP_RTOL * obj:
            it -= 1
            break
        gamma = 2.0 / (it + 1)  # 2/(k+2) with k = it - 1 counted from 0
        cand = _objective(vals + gamma * direction, p_eff)
        if cand < obj:
            res = minimize_scalar(
                lambda g: -_objective(vals + g * direction, p_eff),
                bounds=(0.0, 1.0),
                method="bounded",
                options={"xatol": 1e-12},
            )
            gamma, cand = float(res.x), -float(res.fun)
            if cand <= obj:
                # no representable ascent along this vertex; later iterations would repeat it
                break
        x *= 1.0 - gamma
        x[best, goods] += gamma
        vals = vals + gamma * direction
        obj = cand
        trace.append(obj)
    allocation = Allocation.from_fractions(np.clip(x, 0.0, 1.0))
    welfare = p_mean(agent_values(instance, allocation), exp)
    return OracleResult(allocation, welfare, "conditional_gradient", gap, it, tuple(trace))


def uniform_start(instance: Instance, p: PLike) -> OracleResult:
    alloc = Allocation.uniform(instance.n, instance.T)
    return OracleResult(alloc, p_mean(agent_values(instance, alloc), p), "conditional_gradient", math.inf, 0)


def _compositions(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``total``."""
    rows = []
    for cut in itertools.combinations(range(total + parts - 1), parts - 1):
        prev, row = -1, []
        for c in cut:
            row.append(c - prev - 1)
            prev = c
        row.append(total + parts - 2 - prev)
        rows.append(row)
    return np.asarray(rows, dtype=float)


def solve_grid(instance: Instance, p: PLike, step: float = 0.125) -> OracleResult:
    """Exhaustive search over allocations whose fractions are multiples of ``step``.

    Only allocations that hand out every good completely are enumerated;
    welfare is nondecreasing in every agent's value, so some complete
    allocation is optimal among all grid points. Intended for ``n <= 3``,
    ``T <= 5``. The documented (not asserted) optimality gap is ``n * T * step``.
    """
    n, T = instance.n, instance.T
    units = round(1 / step)
    if units < 1 or abs(units * step - 1) > 1e-12:
        raise PreconditionError(f"grid step must be 1/k for an integer k, got {step}")
    if n > 3 or T > 5:
        raise GridTooLarge(f"grid oracle handles n <= 3 and T <= 5, got n={n}, T={T}")
    comps = _compositions(units, n) / units  # (C, n) fractions for one good
    C = comps.shape[0]
    total = C**T
    if total > GRID_MAX_COMBINATIONS:
        raise GridTooLarge(
            f"{C} options per good over {T} goods is {total} allocations "
            f"(limit {GRID_MAX_COMBINATIONS})"
        )
    V = instance.values
    contrib = comps[None, :, :] * V.T[:, None, :]  # (T, C, n) value each option gives
    # enumerate goods 1..T-1 jointly, then sweep the options of good 0
    tail = np.zeros((1, n))
    for t in range(1, T):
        tail = (tail[:, None, :] + contrib[t][None, :, :]).reshape(-1, n)
    best_w, best_idx = -math.inf, (0, 0)
    for c0 in range(C):
        w = p_mean_rows(tail + contrib[0, c0], p)
        j = int(w.argmax())
        if w[j] > best_w:
            best_w, best_idx = float(w[j]), (c0, j)
    c0, j = best_idx
    choice = [c0] + list(np.unravel_index(j, (C,) * (T - 1))) if T > 1 else [c0]
    x = np.stack([comps[c] for c in choice], axis=1)
    allocation = Allocation.from_fractions(x)
    welfare = p_mean(agent_values(instance, allocation), p)
    return OracleResult(allocation, welfare, "grid_bruteforce", n * T * step, int(total))


def shift_allocation(hat: Allocation, n: int | None = None) -> Allocation:
    """``w_i^t = 1/(2n) + hat_i^t / 2``: every agent is guaranteed ``1/(2n)``."""
    n = hat.n if n is None else n
    if n != hat.n:
        raise PreconditionError(f"allocation has {hat.n} agents, n={n} given")
    return Allocation.from_fractions(0.5 / n + 0.5 * hat.fractions)


def explicit_result(instance: Instance, allocation: Allocation, p: PLike) -> OracleResult:
    """Wrap a hand-constructed offline allocation as an oracle result."""
    welfare = p_mean(agent_values(instance, allocation), p)
    return OracleResult(allocation, welfare, "explicit", math.inf, 0)
