import dataclasses

import numpy as np
import pytest

from pmean.adversaries import random_dirichlet
from pmean.diagnostics import NOT_MET, OK, VIOLATED, hypothesis_met, lemma_diagnostics, state_invariants
from pmean.errors import PreconditionError
from pmean.model import Allocation, expand_allocation, split_counts, split_to_cap
from pmean.online import num_levels, run_online
from pmean.oracle import shift_allocation, solve_concave


def _run(n, T, seed, phi):
    inst = random_dirichlet(n, T, seed)
    capped = split_to_cap(inst)
    return inst, capped, run_online(capped, phi, record=True)


def test_bounds_at_quarter_n():
    n = 16
    inst, capped, rep = _run(n, 32, 0, n / 4)
    checks = lemma_diagnostics(rep, Allocation.uniform(n, capped.T), capped)
    K = num_levels(n)
    by = {c.check: c for c in checks}
    assert by["vulnerable_high"].bound == pytest.approx(32 * K)
    assert by["suboptimal"].bound == pytest.approx(32 * K**2)
    assert all(c.status == OK for c in checks)


def test_uniform_reference_makes_every_agent_high_at_small_alpha():
    n = 8
    inst, capped, rep = _run(n, 32, 1, 2.0)
    checks = lemma_diagnostics(rep, np.full(n, 1 / n))
    low = [c for c in checks if c.check == "low_valued"]
    # alpha <= 1/n: no agent is below alpha in the reference, so the bound is the slack
    K = num_levels(n)
    for c in low:
        if c.alpha <= 1 / n:
            assert c.bound == pytest.approx(8 * n * K / 2.0)


def test_random_n64_with_phi_16_holds_everywhere():
    inst, capped, rep = _run(64, 48, 5, 16.0)
    hat = solve_concave(inst, 0, budget=200)
    omega = expand_allocation(shift_allocation(hat.allocation), split_counts(inst))
    checks = lemma_diagnostics(rep, omega, capped, full=True)
    assert checks and all(c.status == OK for c in checks)


def test_hypothesis_not_met_is_reported_not_failed():
    n = 8
    inst, capped, rep = _run(n, 32, 2, n / 2)
    checks = lemma_diagnostics(rep, np.full(n, 1 / n))
    assert {c.status for c in checks} == {NOT_MET}
    assert all(c.holds for c in checks)
    ok, why = hypothesis_met(n, 1.0, np.array([0.01] * n))
    assert not ok and "1/(2n)" in why


def test_requires_recorded_history(dirichlet8):
    capped = split_to_cap(dirichlet8)
    rep = run_online(capped, 2.0)
    with pytest.raises(PreconditionError):
        lemma_diagnostics(rep, np.full(8, 1 / 8))
    rep = run_online(capped, 2.0, record=True)
    with pytest.raises(PreconditionError):
        lemma_diagnostics(rep, np.full(4, 1 / 8))
    with pytest.raises(PreconditionError):
        lemma_diagnostics(rep, Allocation.uniform(8, capped.T))


def test_state_invariants_detect_tampering():
    inst, capped, rep = _run(8, 32, 3, 1.0)
    assert all(c.status == OK for c in state_invariants(rep))
    hist = rep.history
    broken = hist.vulnerable.copy()
    broken[0] = ~hist.active[0]
    broken[0, 0, 0] = True
    tampered = dataclasses.replace(rep, history=dataclasses.replace(hist, vulnerable=broken, active=hist.active.copy()))
    tampered.history.active[0, 0, 0] = False
    status = {c.check: c.status for c in state_invariants(tampered)}
    assert status["vulnerable_subset_active"] == VIOLATED


def test_record_serializes():
    inst, capped, rep = _run(8, 16, 4, 2.0)
    d = lemma_diagnostics(rep, np.full(8, 1 / 8))[0].to_dict()
    assert set(d) == {"check", "bound", "observed", "status", "alpha", "round"}
