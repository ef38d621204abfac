"""End-to-end experiment pipeline shared by the CLI and the test suites.

preprocess -> resolve phi -> run the online allocator -> offline oracle ->
ratio -> optional counting diagnostics. Everything is deterministic given the
configuration, so two runs with the same inputs produce identical reports.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Literal, Optional

import numpy as np

from pmean.adversaries import (
    AdaptiveAdversary,
    Transcript,
    interact,
    make_adversary,
    predicted_bounds,
    random_dirichlet,
    random_sparse,
)
from pmean.diagnostics import VIOLATED, lemma_diagnostics
from pmean.errors import ConfigurationError, ScalingError
from pmean.model import Instance, expand_allocation, split_counts, split_to_cap, validate_scaling
from pmean.online import AlgState, GreedyAllocator, RunReport, UniformAllocator, run_baseline, run_online, threshold_for
from pmean.oracle import OracleResult, explicit_result, shift_allocation, solve_concave
from pmean.welfare import Exponent, as_exponent, p_mean, welfare_ratio

log = logging.getLogger(__name__)

DiagnosticLevel = Literal["off", "lemmas", "full"]
BOUND_SLACK = 2.0
RANDOM_KINDS = ("random_dirichlet", "random_sparse")
ADAPTIVE_KINDS = ("suboptimality_4agent", "negative_p_groups")


@dataclass
class ExperimentConfig:
    p: str = "0"
    threshold: str = "table"  # table | universal | manual
    phi: Optional[float] = None
    split: str = "minimal"
    diagnostics: DiagnosticLevel = "off"
    algorithm: str = "alg"
    oracle: bool = True
    budget: int = 2000
    seed: Optional[int] = None
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.threshold not in ("table", "universal", "manual"):
            raise ConfigurationError(f"unknown threshold mode {self.threshold!r}")
        if self.threshold == "manual":
            if self.phi is None or not self.phi > 0:
                raise ConfigurationError("manual threshold needs --phi > 0")
        if self.algorithm not in ("alg", "greedy", "uniform"):
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        if self.diagnostics not in ("off", "lemmas", "full"):
            raise ConfigurationError(f"unknown diagnostic level {self.diagnostics!r}")

    def resolve_phi(self, p, n: int) -> float:
        if self.threshold == "manual":
            return float(self.phi)
        return threshold_for(p, n, self.threshold)


def generate(kind: str, n: int, T: int, seed: int) -> Instance:
    if kind == "random_dirichlet":
        return random_dirichlet(n, T, seed)
    if kind == "random_sparse":
        return random_sparse(n, T, seed)
    raise ConfigurationError(f"{kind!r} is not an oblivious generator (choose from {RANDOM_KINDS})")


def require_scaled(instance: Instance) -> None:
    report = validate_scaling(instance)
    if not report.ok:
        raise ScalingError(report)


def ratio_bound(p, n: int, threshold: str = "table") -> Optional[float]:
    """Proven upper bound on the competitive ratio for exponent ``p``, before slack.

    ``None`` when no bound applies (manual thresholds).
    """
    exp = as_exponent(p)
    q = abs(exp.value)
    lg = math.log2(2 * n)
    root = math.sqrt(n) * lg
    if threshold == "universal":
        if exp.is_egalitarian:
            return 128 * root
        if exp.value <= -1:
            return 320 * root
        if exp.is_nash:
            return 32 * root
        return 36 * root
    if threshold != "table":
        return None
    if exp.is_egalitarian:
        return 128 * root
    if exp.value <= -1:
        return 320 * root
    if exp.value <= -0.25:
        return 2 ** (1 + 1 / q) * threshold_for(exp, n)
    if exp.value <= -1 / lg:
        return 48 * (2 * n) ** (2 * q) * lg**3
    if exp.value < 0:
        return 192 * lg**3
    if exp.is_nash:
        return 32 * lg**3
    return 128 * lg**3


def run_pipeline(instance: Instance, config: ExperimentConfig) -> RunReport:
    """Run one experiment on a scaled (not necessarily capped) instance."""
    require_scaled(instance)
    exp = as_exponent(config.p)
    counts = split_counts(instance, config.split)
    capped = split_to_cap(instance, config.split)
    n = instance.n
    phi = config.resolve_phi(exp, n) if config.algorithm == "alg" else None
    want_hist = config.algorithm == "alg" and config.diagnostics != "off"
    log.info("n=%d T=%d -> %d capped goods, phi=%s", n, instance.T, capped.T, phi)

    if config.algorithm == "alg":
        report = run_online(capped, phi, exp, record=want_hist)
    else:
        report = run_baseline(capped, config.algorithm, exp)
    report.config = {
        "algorithm": config.algorithm,
        "n": n,
        "T": instance.T,
        "T_capped": capped.T,
        "p": str(exp),
        "phi": phi,
        "threshold": config.threshold,
        "split": config.split,
        "seed": config.seed,
        "oracle_budget": config.budget if config.oracle else None,
        "diagnostics": config.diagnostics,
        "source": config.source,
        "meta": instance.meta,
    }

    oracle: Optional[OracleResult] = None
    if config.oracle or want_hist:
        oracle = solve_concave(instance, exp, config.budget)
        report.oracle_welfare = oracle.welfare
        report.ratio = welfare_ratio(oracle.welfare, report.online_welfare)
        report.config["oracle_gap"] = oracle.gap_estimate
        report.config["oracle_iterations"] = oracle.iterations

    if want_hist:
        omega = expand_allocation(shift_allocation(oracle.allocation), counts)
        report.diagnostics = lemma_diagnostics(report, omega, capped, full=config.diagnostics == "full")
    elif config.diagnostics == "full" and config.algorithm != "alg":
        log.info("diagnostics only apply to the threshold allocator")
    return report


def report_json(report: RunReport, full: bool = False) -> str:
    return json.dumps(report.to_dict(include_allocation=full), sort_keys=True, indent=2, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def has_violation(report: RunReport) -> Optional[str]:
    for d in report.diagnostics:
        if d.status == VIOLATED:
            return d.check
    return None


# -- bench ---------------------------------------------------------------------


@dataclass
class BenchRow:
    p: str
    phi: Optional[float]
    online_welfare: float
    oracle_welfare: float
    ratio: float
    bound: Optional[float]
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def parse_p_grid(text: str) -> list[Exponent]:
    items = [s.strip() for s in text.split(",")] if text is not None else []
    return [Exponent.parse(s) for s in items if s]


def _bench_row(p: Exponent, phi, online: float, oracle: float, n: int, threshold: str) -> BenchRow:
    ratio = welfare_ratio(oracle, online)
    bound = ratio_bound(p, n, threshold)
    passed = bound is None or ratio <= BOUND_SLACK * bound
    return BenchRow(str(p), phi, online, oracle, ratio, bound, passed)


def bench_instance(instance: Instance, grid: list[Exponent], config: ExperimentConfig) -> list[BenchRow]:
    rows = []
    for p in sorted(grid, key=lambda e: e.value):
        cfg = ExperimentConfig(**{**asdict(config), "p": str(p), "diagnostics": "off", "oracle": True})
        rep = run_pipeline(instance, cfg)
        rows.append(_bench_row(p, rep.config["phi"], rep.online_welfare, rep.oracle_welfare, instance.n, config.threshold))
    return rows


def make_allocator(config: ExperimentConfig, p, n: int):
    if config.algorithm == "alg":
        return AlgState(n, config.resolve_phi(p, n))
    if config.algorithm == "greedy":
        return GreedyAllocator(n)
    return UniformAllocator(n)


def adversary_reference(adversary: AdaptiveAdversary, transcript, p, budget: int) -> float:
    """Best offline welfare known for a transcript: explicit construction or the oracle."""
    inst = transcript.instance()
    best = solve_concave(inst, p, budget).welfare if budget > 0 else 0.0
    if transcript.offline is not None:
        best = max(best, explicit_result(inst, transcript.offline_allocation(), p).welfare)
    return best


def bench_adversary(kind: str, n: int, grid: list[Exponent], config: ExperimentConfig) -> list[BenchRow]:
    rows = []
    for p in sorted(grid, key=lambda e: e.value):
        adversary = make_adversary(kind, n, p)
        allocator = make_allocator(config, p, n)
        tr = interact(adversary, allocator)
        online = p_mean(tr.agent_values, p)
        oracle = adversary_reference(adversary, tr, p, config.budget if config.oracle else 0)
        phi = getattr(allocator, "phi", None)
        rows.append(_bench_row(p, phi, online, oracle, n, config.threshold))
    return rows


def adversary_report(kind: str, n: int, config: ExperimentConfig, T: int = 64) -> tuple[dict, Transcript]:
    exp = as_exponent(config.p)
    adversary = make_adversary(kind, n, exp, seed=config.seed or 0, T=T)
    allocator = make_allocator(config, exp, n)
    tr = interact(adversary, allocator)
    online = p_mean(tr.agent_values, exp)
    oracle = adversary_reference(adversary, tr, exp, config.budget if config.oracle else 0)
    out = {
        "config": {
            "kind": kind,
            "n": n,
            "p": str(exp),
            "algorithm": tr.algorithm,
            "phi": getattr(allocator, "phi", None),
            "threshold": config.threshold,
            "seed": config.seed,
            "oracle_budget": config.budget if config.oracle else None,
            "params": tr.params,
        },
        "rounds": int(tr.values.shape[1]),
        "sub_goods": int(tr.sub_goods.sum()),
        "online_welfare": online,
        "oracle_welfare": oracle,
        "ratio": welfare_ratio(oracle, online),
        "agent_values": tr.agent_values.tolist(),
        "scaling_ok": bool(validate_scaling(tr.instance()).ok),
    }
    if kind in ADAPTIVE_KINDS:
        b = predicted_bounds(kind, exp, n)
        out["predicted"] = asdict(b)
    return out, tr
