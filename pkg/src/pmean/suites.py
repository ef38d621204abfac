"""Property suites run by ``pmean validate``.

Each suite returns a list of :class:`SuiteResult`; a result fails only when an
invariant that must hold is observed broken. Counting bounds whose hypotheses
are not met are reported with that status and do not fail.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from pmean.adversaries import NegativeGroupsAdversary, SuboptimalityAdversary, interact
from pmean.diagnostics import NOT_MET, VIOLATED, lemma_diagnostics, state_invariants
from pmean.model import FEAS_TOL, Allocation, Instance, agent_values, expand_allocation, split_counts, split_to_cap, validate_scaling
from pmean.online import AlgState, GreedyAllocator, UniformAllocator, run_online, threshold_for
from pmean.oracle import shift_allocation, solve_concave, solve_grid
from pmean.adversaries import random_dirichlet
from pmean.welfare import p_mean, p_mean_rows

log = logging.getLogger(__name__)

P_GRID = (float("-inf"), -4.0, -2.0, -1.0, -0.5, -0.1, 0.0, 0.3, 0.7, 1.0)


@dataclass
class SuiteResult:
    suite: str
    invariant: str
    passed: bool
    detail: str = ""
    status: str = "ok"

    def to_dict(self) -> dict:
        return asdict(self)


def _result(suite: str, invariant: str, failures: list[str]) -> SuiteResult:
    if failures:
        return SuiteResult(suite, invariant, False, "; ".join(failures[:3]), VIOLATED)
    return SuiteResult(suite, invariant, True)


def welfare_suite(seeds: Iterable[int]) -> list[SuiteResult]:
    sym, mono, order, cont = [], [], [], []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        V = rng.uniform(0.01, 1.0, size=(50, 6))
        means = np.stack([p_mean_rows(V, p) for p in P_GRID])  # (P, 50)
        perm = rng.permutation(6)
        for p, row in zip(P_GRID, means):
            if not np.allclose(p_mean_rows(V[:, perm], p), row, rtol=1e-12, atol=0):
                sym.append(f"seed {seed} p={p}")
            bumped = V.copy()
            bumped[:, 0] += 0.1
            if np.any(p_mean_rows(bumped, p) < row * (1 - 1e-12)):
                mono.append(f"seed {seed} p={p}")
        if np.any(np.diff(means, axis=0) < -1e-12 * means[1:]):
            order.append(f"seed {seed}")
        g = p_mean_rows(V, 0)
        for eps in (1e-7, -1e-7):
            if np.max(np.abs(p_mean_rows(V, eps) - g)) > 1e-6:
                cont.append(f"seed {seed} eps={eps}")
    return [
        _result("welfare", "symmetry", sym),
        _result("welfare", "monotonicity", mono),
        _result("welfare", "power_mean_order", order),
        _result("welfare", "continuity_at_zero", cont),
    ]


def online_suite(instances: list[Instance], phi: Optional[float] = None, budget: int = 300) -> list[SuiteResult]:
    """Feasibility, value floor, state invariants and counting bounds.

    ``phi=None`` runs the counting bounds at ``phi = n/4``, the largest value
    for which they are claimed.
    """
    feas, floor, inv, lemmas = [], [], [], []
    not_met = 0
    for inst in instances:
        n = inst.n
        capped = split_to_cap(inst)
        run_phi = n / 4 if phi is None else phi
        rep = run_online(capped, run_phi, record=True)
        x = rep.allocation
        err = float(np.abs(x.fractions.sum(axis=0) + x.leftover - 1).max())
        if err > FEAS_TOL:
            feas.append(f"n={n}: feasibility error {err:.3g}")
        if rep.agent_values.min() < 1 / (2 * n) - FEAS_TOL:
            floor.append(f"n={n}: min value {rep.agent_values.min():.6g}")
        for chk in state_invariants(rep):
            if chk.status == VIOLATED:
                inv.append(f"n={n}: {chk.check}")
        hat = solve_concave(inst, 0, budget)
        omega = expand_allocation(shift_allocation(hat.allocation), split_counts(inst))
        for chk in lemma_diagnostics(rep, omega, capped):
            if chk.status == VIOLATED:
                lemmas.append(f"n={n}: {chk.check} alpha={chk.alpha} observed {chk.observed} > {chk.bound:.4g}")
            elif chk.status == NOT_MET:
                not_met += 1
    out = [
        _result("online", "feasibility", feas),
        _result("online", "value_floor", floor),
        _result("online", "state_invariants", inv),
        _result("online", "lemma_bounds", lemmas),
    ]
    if not_met and not lemmas:
        out[-1].status = NOT_MET
        out[-1].detail = f"{not_met} checks skipped: hypothesis not met (phi > n/4)"
    return out


def oracle_suite(seeds: Iterable[int]) -> list[SuiteResult]:
    agree, shift = [], []
    step = 0.25
    for seed in seeds:
        inst = random_dirichlet(2, 3, seed)
        for p in (-2.0, 0.0, 1.0):
            grid = solve_grid(inst, p, step)
            fw = solve_concave(inst, p, 500)
            if fw.welfare < grid.welfare - 1e-6:
                agree.append(f"seed {seed} p={p}: concave {fw.welfare:.6g} < grid {grid.welfare:.6g}")
            w = shift_allocation(fw.allocation)
            vals = agent_values(inst, w)
            if vals.min() < 1 / (2 * inst.n) - FEAS_TOL or vals.max() >= 1:
                shift.append(f"seed {seed}: shifted values {vals}")
            if p_mean(vals, p) < 0.5 * fw.welfare - FEAS_TOL:
                shift.append(f"seed {seed} p={p}: shift loses more than half")
    return [_result("oracle", "grid_agreement", agree), _result("oracle", "shift_properties", shift)]


def adversary_suite(n_groups: int = 27) -> list[SuiteResult]:
    below, scaled, special = [], [], []
    for make in (lambda: AlgState(4, threshold_for(0, 4)), lambda: GreedyAllocator(4), lambda: UniformAllocator(4)):
        alloc = make()
        tr = interact(SuboptimalityAdversary(4), alloc)
        if not validate_scaling(tr.instance()).ok:
            scaled.append(f"4-agent vs {alloc.name}")
        for p in (float("-inf"), -1.0, 0.0, 0.5):
            if not p_mean(tr.agent_values, p) < 5 / 8:
                below.append(f"{alloc.name} p={p}")
    adv = NegativeGroupsAdversary(n_groups, -1)
    try:
        tr = interact(adv, UniformAllocator(n_groups))
    except AssertionError as exc:
        special.append(str(exc))
    else:
        if not validate_scaling(tr.instance()).ok:
            scaled.append(f"groups n={n_groups}")
        if adv.exact and len(adv.special) != adv.group_size:
            special.append(f"|E| = {len(adv.special)}, expected {adv.group_size}")
    return [
        _result("adversaries", "four_agent_below_5_8", below),
        _result("adversaries", "transcript_scaling", scaled),
        _result("adversaries", "special_agent_count", special),
    ]


def default_instances(seeds: Iterable[int], sizes: Iterable[int], T: int = 64) -> list[Instance]:
    return [random_dirichlet(n, T, s) for n in sizes for s in seeds]


def run_all(
    seeds: Iterable[int] = range(10),
    sizes: Iterable[int] = (4, 8, 16),
    instances: Optional[list[Instance]] = None,
    phi: Optional[float] = None,
) -> list[SuiteResult]:
    seeds = list(seeds)
    if instances is None:
        instances = default_instances(seeds, sizes)
    results = welfare_suite(seeds)
    results += online_suite(instances, phi)
    results += oracle_suite(seeds[:5])
    results += adversary_suite()
    return results
