import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmean.adversaries import random_dirichlet, random_sparse
from pmean.errors import DomainError, PreconditionError
from pmean.model import FEAS_TOL, Instance, split_to_cap
from pmean.online import (
    AlgState,
    GreedyAllocator,
    UniformAllocator,
    num_levels,
    run_baseline,
    run_online,
    step,
    threshold_for,
)


@pytest.mark.parametrize(
    "p, expected",
    [(0, 512.0), (float("-inf"), 8 * math.sqrt(8) * 4), (-0.5, 256.0), (0.5, 1024.0), (1, 1024.0), (-1, 8 * math.sqrt(8) * 4)],
)
def test_threshold_table_n8(p, expected):
    assert threshold_for(p, 8) == pytest.approx(expected, rel=1e-12)


def test_threshold_boundaries():
    n = 8
    lg = 4.0
    # -1/4 belongs to the (-1, -1/4] row, -1/log(2n) to (-1/4, -1/log(2n)]
    assert threshold_for(-0.25, n) == pytest.approx(8 * n ** (0.25 / 1.25) * lg**2)
    assert threshold_for(-1 / lg, n) == pytest.approx(8 * n ** (0.25 / 1.25) * lg**2)  # -1/4 == -1/lg here
    n = 32
    lg = math.log2(64)
    assert threshold_for(-1 / lg, n) == pytest.approx(8 * (2 * n) ** (2 / lg) * lg**3)
    assert threshold_for(-0.99 / lg, n) == pytest.approx(32 * lg**3)


def test_threshold_universal_ignores_p():
    u = 8 * math.sqrt(16) * 5
    for p in (float("-inf"), -2, -0.3, 0, 0.7, 1):
        assert threshold_for(p, 16, "universal") == pytest.approx(u)


def test_threshold_errors():
    with pytest.raises(DomainError):
        threshold_for(1.5, 8)
    with pytest.raises(DomainError):
        threshold_for(0, 1)


def test_levels():
    assert [num_levels(n) for n in (1, 2, 3, 4, 5, 8, 9, 64)] == [1, 2, 3, 3, 4, 4, 5, 7]


def test_hand_traced_step():
    state = AlgState(2, phi=1000.0)
    x = state.step([0.01, 0.005])
    np.testing.assert_array_equal(x, [0.5, 0.25])
    assert state.last_leftover == 0.25


def test_zero_good_still_hands_out_argmax_shares():
    state = AlgState(2, phi=10.0)
    _, x = step(state, [0.0, 0.0])
    np.testing.assert_array_equal(x, [0.5, 0.25])
    assert state.last_leftover == 0.25
    assert np.all(state.level_value == 0)


def test_cap_violation_rejected():
    state = AlgState(2, phi=10.0)
    with pytest.raises(PreconditionError):
        state.step([0.3, 0.1])


def test_run_online_requires_capped_instance():
    with pytest.raises(PreconditionError):
        run_online(Instance.from_goods([[0.5, 0.5], [0.5, 0.5]]), 4.0)


def test_vulnerable_set_uses_strict_threshold():
    # n=2, K=2, alpha_1 = 1/2, so agent 0 is vulnerable once received > 1 - 1/8;
    # a tiny phi keeps everyone active (exit needs level value alpha/phi)
    state = AlgState(2, phi=1e-3)
    for _ in range(7):
        state.step([0.125, 0.0])
    assert state.received[0] == pytest.approx(0.875)
    assert not state.vulnerable[0, 0]  # received == 1 - 1/8 exactly, not strictly above
    state.step([0.0625, 0.0])
    assert state.vulnerable[0, 0]


def test_vulnerable_agents_share_quarter_level():
    state = AlgState(2, phi=1e-3)
    for _ in range(15):
        state.step([0.0625, 0.0])
    # agent 0 received 15/16 > 1 - alpha/4 at both levels (7/8 and 15/16 is not > 15/16)
    assert state.vulnerable[0].tolist() == [True, False]
    x = state.step([0.0, 0.0625])
    share = 1 / 8
    np.testing.assert_allclose(x, [0.25 + share, 0.25 + 2 * share])


def test_exit_when_level_value_reaches_threshold():
    phi = 4.0
    state = AlgState(2, phi)
    # level 1 (alpha=1/2) exits at 1/8; each good gives agent 0 1/8 * 0.25 at each level
    t = 0
    while state.active[0, 0]:
        state.step([0.25, 0.0])
        t += 1
    assert state.level_value[0, 0] >= 0.5 / phi
    assert state.level_value[0, 0] - 0.5 / phi < 0.25


def test_empty_active_set_share_is_withheld_or_redirected():
    inst = split_to_cap(Instance.from_goods([[1.0, 0.0], [0.0, 1.0]]))
    plain = run_online(inst, 0.01)
    redirected = run_online(inst, 0.01, redirect_withheld=True)
    assert plain.allocation.leftover.max() > 0
    assert redirected.allocation.leftover.max() == 0
    assert np.all(redirected.agent_values >= plain.agent_values - 1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(4, 40), st.integers(0, 10**6), st.sampled_from([0.5, 2.0, 50.0]))
def test_feasibility_and_value_floor(n, T, seed, phi_scale):
    inst = split_to_cap(random_sparse(n, T, seed))
    rep = run_online(inst, phi_scale * n)
    a = rep.allocation
    np.testing.assert_allclose(a.fractions.sum(axis=0) + a.leftover, 1.0, atol=FEAS_TOL)
    assert a.leftover.max() <= 0.5 + FEAS_TOL
    assert rep.agent_values.min() >= 1 / (2 * n) - FEAS_TOL


def test_deterministic(dirichlet8):
    inst = split_to_cap(dirichlet8)
    a = run_online(inst, 12.0, 0, record=True)
    b = run_online(inst, 12.0, 0, record=True)
    np.testing.assert_array_equal(a.allocation.fractions, b.allocation.fractions)
    assert a.online_welfare == b.online_welfare


def test_identical_goods_two_agents():
    T = 16
    inst = Instance(np.full((2, T), 1 / T))
    rep = run_online(inst, 4.0)
    assert rep.agent_values.min() >= 0.25


def test_record_history_shapes(dirichlet8):
    inst = split_to_cap(dirichlet8)
    rep = run_online(inst, 2.0, record=True)
    K = num_levels(8)
    assert rep.history.vulnerable.shape == (inst.T, K, 8)
    assert np.all(rep.history.vulnerable <= rep.history.active)


def test_baselines(dirichlet8):
    inst = split_to_cap(dirichlet8)
    uni = run_baseline(inst, "uniform", 0)
    np.testing.assert_allclose(uni.agent_values, 1 / 8)
    greedy = run_baseline(inst, "greedy", 1)
    assert greedy.online_welfare >= uni.online_welfare
    assert GreedyAllocator(3).allocate([0.2, 0.2, 0.1]).tolist() == [1.0, 0.0, 0.0]
    assert UniformAllocator(4).allocate([0, 0, 0, 0]).tolist() == [0.25] * 4
    with pytest.raises(ValueError):
        run_baseline(inst, "random")


def test_report_dict(dirichlet8):
    rep = run_online(split_to_cap(dirichlet8), 10.0, "nsw")
    d = rep.to_dict(include_allocation=True)
    assert d["config"]["p"] == "0.0"
    assert len(d["allocation"]["fractions"]) == 8
