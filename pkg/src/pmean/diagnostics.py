"""Counting checks on a recorded ALG(phi) run against a reference allocation.

Given reference agent values ``w`` (each in ``[1/(2n), 1)``) and ``phi <= n/4``:

* high agents of level alpha, ``{i : w_i >= alpha}``, that are vulnerable in
  any round number at most ``8 n log(2n) / phi``;
* agents with online value below ``alpha / (8 phi)`` number at most
  ``|{i : w_i < alpha}| + 8 n log(2n) / phi``;
* agents whose online value is below ``w_i / (2 phi)`` number at most
  ``8 n log^2(2n) / phi``.

``log(2n)`` is taken as the level count ``K = ceil(log2(2n))``, which equals
``log2(2n)`` when ``n`` is a power of two and otherwise matches the share
``1/(4K)`` the allocator actually hands out per level.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from pmean.errors import PreconditionError
from pmean.model import FEAS_TOL, Allocation, Instance, agent_values
from pmean.online import RunReport

OK = "ok"
VIOLATED = "violated"
NOT_MET = "hypothesis not met"


@dataclass(frozen=True)
class LemmaCheck:
    check: str
    bound: float
    observed: float
    status: str
    alpha: Optional[float] = None
    round: Optional[int] = None

    @property
    def holds(self) -> bool:
        return self.status != VIOLATED

    def to_dict(self) -> dict:
        return asdict(self)


def _status(observed: float, bound: float, hypothesis: bool) -> str:
    if not hypothesis:
        return NOT_MET
    return OK if observed <= bound else VIOLATED


def reference_values(omega, instance: Instance | None = None) -> np.ndarray:
    if isinstance(omega, Allocation):
        if instance is None:
            raise PreconditionError("an Allocation reference needs its instance")
        return agent_values(instance, omega)
    return np.asarray(omega, dtype=float)


def hypothesis_met(n: int, phi: float, omega_values: np.ndarray) -> tuple[bool, str]:
    if phi > n / 4:
        return False, f"phi={phi:.6g} exceeds n/4={n / 4:g}"
    lo = 1 / (2 * n)
    if np.any(omega_values < lo - FEAS_TOL) or np.any(omega_values >= 1):
        return False, "reference values must lie in [1/(2n), 1)"
    return True, ""


def lemma_diagnostics(
    report: RunReport,
    omega,
    instance: Instance | None = None,
    *,
    full: bool = False,
) -> list[LemmaCheck]:
    """Evaluate the three counting bounds on a run made with ``record=True``.

    ``omega`` is the reference allocation (with ``instance``) or directly its
    agent values. When the hypotheses do not hold the records are still filled
    in but carry status ``"hypothesis not met"``. ``full=True`` adds the
    state invariants of the allocator (subset, monotonicity, exit, level cap).
    """
    hist = report.history
    if hist is None:
        raise PreconditionError("lemma diagnostics need a run recorded with record=True")
    w = reference_values(omega, instance)
    x_vals = report.agent_values
    n = x_vals.size
    if w.shape != (n,):
        raise PreconditionError(f"reference has {w.size} agents, run has {n}")
    phi = float(report.config["phi"])
    ok, _ = hypothesis_met(n, phi, w)
    K = hist.alphas.size
    slack = 8 * n * K / phi

    out: list[LemmaCheck] = []
    for k, alpha in enumerate(hist.alphas):
        high = w >= alpha
        per_round = (hist.vulnerable[:, k, :] & high).sum(axis=1)
        final = int((hist.final_vulnerable[k] & high).sum())
        t = int(per_round.argmax()) if per_round.size else 0
        worst = max(int(per_round.max(initial=0)), final)
        if final > per_round.max(initial=0):
            t = per_round.size
        out.append(LemmaCheck("vulnerable_high", slack, worst, _status(worst, slack, ok), float(alpha), t))

    for alpha in hist.alphas:
        low_online = int((x_vals < alpha / (8 * phi)).sum())
        low_ref = int((w < alpha).sum())
        bound = low_ref + slack
        out.append(LemmaCheck("low_valued", bound, low_online, _status(low_online, bound, ok), float(alpha)))

    suboptimal = int((x_vals < w / (2 * phi)).sum())
    bound6 = 8 * n * K**2 / phi
    out.append(LemmaCheck("suboptimal", bound6, suboptimal, _status(suboptimal, bound6, ok)))

    if full:
        out.extend(state_invariants(report))
    return out


def state_invariants(report: RunReport) -> list[LemmaCheck]:
    """Allocator invariants that hold unconditionally on a capped instance."""
    hist = report.history
    phi = float(report.config["phi"])
    n = report.agent_values.size
    exit_at = (hist.alphas / phi)[:, None]
    out = []

    subset = int((hist.vulnerable & ~hist.active).sum() + (hist.final_vulnerable & ~hist.final_active).sum())
    out.append(LemmaCheck("vulnerable_subset_active", 0, subset, _status(subset, 0, True)))

    acts = np.concatenate([hist.active, hist.final_active[None]], axis=0)
    rejoin = int((acts[1:] & ~acts[:-1]).sum())
    out.append(LemmaCheck("active_monotone", 0, rejoin, _status(rejoin, 0, True)))

    exited = ~hist.final_active
    premature = int((exited & (hist.level_value < exit_at)).sum())
    out.append(LemmaCheck("exit_threshold", 0, premature, _status(premature, 0, True)))

    excess = float((hist.max_level_value - (exit_at + 1.0 / n**2)).max())
    out.append(LemmaCheck("level_value_cap", 0.0, max(excess, 0.0), _status(excess, FEAS_TOL, True)))
    return out
