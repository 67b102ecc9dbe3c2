"""Session orchestration: the adaptive tuner, baselines, traces, and reports.

Methods:
  water          slice loop: compress, tune the subset, verify top candidates
  original       plain BO over the full workload
  fixed-random   static random subset; subset improvements verified immediately
  fixed-coverage static token-coverage subset; same protocol as fixed-random

The simulated clock charges only executor-reported seconds. Traces record
(elapsed, running best full-workload latency, event, config id) per
evaluation; reruns with identical seeds produce byte-identical trace files.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import forest
from .compress import (
    CompressorParams,
    adapt_ratio,
    greedy_compress,
    initial_subset,
)
from .executor import (
    EvalRequest,
    ExternalExecutor,
    SimModel,
    SimulatedExecutor,
)
from .history import RunHistory
from .runtime import BudgetExhausted, Clock, EvalContext
from .space import ConfigSpace, encode, load_space, sample_lhs
from .tuning import (
    DEFAULT_LHS_FLOOR,
    DEFAULT_QUOTA,
    SliceState,
    propose_configuration,
    run_slice,
)
from .verify import (
    DEFAULT_ALPHA,
    EXPLORE_PRUNE_FACTOR,
    MODE_EXPLOIT,
    VerifierState,
    choose_mode,
    prune_candidates,
    score_and_select,
    verify_on_full_workload,
)
from .workload import Workload, load_workload, workload_cost

METHODS = ("water", "original", "fixed-random", "fixed-coverage")

TRACE_HEADER = "elapsed_s,best_full_latency_s,event,config_id"


@dataclass
class SessionConfig:
    space_path: str
    workload_path: str
    executor: str = "sim:0"
    method: str = "water"
    budget_s: float | None = None
    max_slices: int | None = None
    seed: int = 0
    out_dir: str | None = None
    eta0: float = 0.75
    eta_step: float = 0.1
    beta: float = 0.1
    alpha: float = DEFAULT_ALPHA
    quota: int = DEFAULT_QUOTA
    lhs_floor: int = DEFAULT_LHS_FLOOR
    explore_prune_factor: float = EXPLORE_PRUNE_FACTOR
    initial_strategy: str = "coverage"
    n_trees: int = 100

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.budget_s is None and self.max_slices is None:
            raise ValueError("one of budget_s or max_slices is required")
        if self.budget_s is not None and not self.budget_s > 0:
            raise ValueError("budget must be positive")


@dataclass
class TraceRecord:
    elapsed: float
    best_full_latency: float
    event: str
    config_id: int


@dataclass
class SessionResult:
    records: list[TraceRecord]
    report: dict


def _build_executor(cfg: SessionConfig, workload: Workload, space: ConfigSpace):
    kind, _, arg = cfg.executor.partition(":")
    if kind == "sim":
        model = SimModel(workload, space, seed=int(arg or 0))
        return SimulatedExecutor(model)
    if kind == "external":
        return ExternalExecutor(arg, workload, space)
    raise ValueError(f"unknown executor {cfg.executor!r}")


class _Session:
    def __init__(self, cfg: SessionConfig):
        self.cfg = cfg
        self.space = load_space(cfg.space_path)
        workload = load_workload(cfg.workload_path)
        if isinstance(workload, Workload):
            self.workload = workload
        else:
            raise ValueError(
                "workload file lacks default_cost entries; the simulator derives "
                "latencies from them, so they must be present (external sessions "
                "can fill them by a default-configuration run)"
            )
        self.executor = _build_executor(cfg, self.workload, self.space)
        full_cost = self.workload.total_cost()
        budget = cfg.budget_s if cfg.budget_s is not None else math.inf
        if budget < full_cost:
            raise ValueError("budget too small for the default measurement")
        self.clock = Clock(budget)
        self.records: list[TraceRecord] = []
        self.best_full = math.inf
        self.best_config = None
        self.h = RunHistory()
        self.ctx = EvalContext(self.executor, self.clock, on_event=self._on_event)
        self.forest_params = forest.ForestParams(n_trees=cfg.n_trees, seed=cfg.seed)
        self.vstate: VerifierState | None = None

    # -- trace ----------------------------------------------------------

    def _on_event(self, event: str, req: EvalRequest, outcome) -> None:
        self.records.append(
            TraceRecord(
                elapsed=self.clock.elapsed,
                best_full_latency=self.best_full,
                event=event,
                config_id=req.configuration.id,
            )
        )

    def _note_full_measurement(self, theta, full_latency: float) -> None:
        if full_latency < self.best_full:
            self.best_full = full_latency
            self.best_config = theta
        if self.records:
            self.records[-1].best_full_latency = self.best_full

    # -- shared steps ---------------------------------------------------

    def _measure_default(self):
        theta = self.space.default_configuration()
        outcome = self.ctx.evaluate(
            EvalRequest(configuration=theta, query_ids=self.workload.ids), event="default"
        )
        if not outcome.ok:
            raise RuntimeError("default configuration evaluation failed")
        self.h.register(theta)
        for qid, lat in outcome.per_query_latency.items():
            self.h.record(qid, theta.id, lat)
            self.h.default_perf[qid] = lat
        self._note_full_measurement(theta, outcome.total)
        self.vstate = VerifierState(
            default_full_perf=outcome.total,
            alpha=self.cfg.alpha,
            explore_prune_factor=self.cfg.explore_prune_factor,
            forest_params=self.forest_params,
        )
        return theta, outcome.total

    def _verify(self, theta, sub) -> float | None:
        before = len(self.records)
        try:
            full = verify_on_full_workload(
                theta, sub, self.workload, self.h, self.ctx, self.vstate, self.space
            )
        except BudgetExhausted:
            return None
        if len(self.records) == before:
            # fully covered: nothing executed, still a verification point
            self.records.append(
                TraceRecord(self.clock.elapsed, self.best_full, "verify", theta.id)
            )
        self._note_full_measurement(theta, full)
        return full

    # -- methods --------------------------------------------------------

    def run(self) -> SessionResult:
        self._measure_default()
        if self.cfg.method == "water":
            self._run_water()
        elif self.cfg.method == "original":
            self._run_original()
        else:
            strategy = "random" if self.cfg.method == "fixed-random" else "coverage"
            self._run_fixed(strategy)
        return self._finish()

    def _run_water(self) -> None:
        cfg = self.cfg
        params = CompressorParams(eta0=cfg.eta0, eta_step=cfg.eta_step, beta=cfg.beta)
        eta = cfg.eta0
        mode_rng = np.random.default_rng(cfg.seed * 1000 + 1)
        slice_idx = 0
        while not self.clock.exhausted:
            if cfg.max_slices is not None and slice_idx >= cfg.max_slices:
                break
            slice_idx += 1
            slice_seed = cfg.seed * 1_000_000 + slice_idx * 10_000
            if slice_idx == 1:
                sub = initial_subset(
                    self.workload, eta, seed=cfg.seed * 1000 + 2, strategy=cfg.initial_strategy
                )
            else:
                sub = greedy_compress(self.workload, self.h, eta, cfg.beta)
            state = SliceState(index=slice_idx, subset=sub)
            state = run_slice(
                state,
                self.ctx,
                self.h,
                self.space,
                seed=slice_seed,
                quota=cfg.quota,
                lhs_floor=cfg.lhs_floor,
                forest_params=self.forest_params,
            )
            if not state.completed:
                break
            mode = (
                choose_mode(eta, mode_rng) if self.vstate.labeled else MODE_EXPLOIT
            )
            default_subset_cost = workload_cost(self.workload, sub.member_ids)
            survivors = prune_candidates(
                state.proposals, mode, default_subset_cost, cfg.explore_prune_factor
            )
            selected = score_and_select(
                survivors,
                mode,
                self.vstate,
                len(sub.member_ids),
                len(self.workload),
                self.space,
                cfg.quota,
            )
            best_before = self.best_full
            for p in selected:
                if self._verify(p.configuration, sub) is None:
                    break
            eta = adapt_ratio(eta, self.best_full < best_before, params)
            if cfg.out_dir:
                # flushed per slice so a crashed session leaves a usable trace
                os.makedirs(cfg.out_dir, exist_ok=True)
                emit_trace(self.records, os.path.join(cfg.out_dir, "trace.csv"))

    def _run_original(self) -> None:
        cfg = self.cfg
        full_ids = self.workload.ids
        xs = [encode(self.best_config, self.space)]
        ys = [self.best_full]
        seen = {self.best_config.values}
        incumbent_cost = self.best_full
        incumbent_config = self.best_config
        max_evals = (
            None if cfg.max_slices is None else cfg.max_slices * cfg.quota
        )
        evals = 0

        def note(theta, outcome) -> None:
            nonlocal incumbent_cost, incumbent_config, evals
            self.h.register(theta)
            if outcome.ok:
                for qid, lat in outcome.per_query_latency.items():
                    self.h.record(qid, theta.id, lat)
                self._note_full_measurement(theta, outcome.total)
            xs.append(encode(theta, self.space))
            ys.append(outcome.total)
            seen.add(theta.values)
            if outcome.total < incumbent_cost:
                incumbent_cost = outcome.total
                incumbent_config = theta
            evals += 1

        try:
            for theta in sample_lhs(self.space, cfg.lhs_floor, seed=cfg.seed * 1000 + 3):
                if theta.values in seen:
                    continue
                outcome = self.ctx.evaluate(
                    EvalRequest(configuration=theta, query_ids=full_ids), event="lhs"
                )
                note(theta, outcome)
            attempt = 0
            while max_evals is None or evals < max_evals:
                model = forest.fit(xs, ys, self.forest_params)
                theta, _ = propose_configuration(
                    model,
                    self.space,
                    seed=cfg.seed * 1_000_000 + 5_000_000 + attempt,
                    incumbent=incumbent_cost,
                    incumbent_config=incumbent_config,
                )
                attempt += 1
                if theta.values in seen:
                    continue
                outcome = self.ctx.evaluate(
                    EvalRequest(configuration=theta, query_ids=full_ids), event="verify"
                )
                note(theta, outcome)
        except BudgetExhausted:
            pass

    def _run_fixed(self, strategy: str) -> None:
        cfg = self.cfg
        sub = initial_subset(
            self.workload, cfg.eta0, seed=cfg.seed * 1000 + 2, strategy=strategy
        )
        sub_ids = sub.member_ids
        default_subset_cost = workload_cost(self.workload, sub_ids)
        xs = [encode(self.best_config, self.space)]
        ys = [default_subset_cost]
        seen = {self.best_config.values}
        incumbent_cost = default_subset_cost
        incumbent_config = self.best_config
        max_evals = (
            None if cfg.max_slices is None else cfg.max_slices * cfg.quota
        )
        evals = 0

        def note(theta, outcome) -> None:
            nonlocal incumbent_cost, incumbent_config, evals
            self.h.register(theta)
            if outcome.ok:
                for qid, lat in outcome.per_query_latency.items():
                    self.h.record(qid, theta.id, lat)
            xs.append(encode(theta, self.space))
            ys.append(outcome.total)
            seen.add(theta.values)
            if outcome.total < incumbent_cost:
                incumbent_cost = outcome.total
                incumbent_config = theta
            evals += 1
            if outcome.ok and outcome.total < default_subset_cost:
                self._verify(theta, sub)

        try:
            for theta in sample_lhs(self.space, cfg.lhs_floor, seed=cfg.seed * 1000 + 3):
                if theta.values in seen:
                    continue
                outcome = self.ctx.evaluate(
                    EvalRequest(configuration=theta, query_ids=sub_ids), event="lhs"
                )
                note(theta, outcome)
            attempt = 0
            while max_evals is None or evals < max_evals:
                model = forest.fit(xs, ys, self.forest_params)
                theta, _ = propose_configuration(
                    model,
                    self.space,
                    seed=cfg.seed * 1_000_000 + 5_000_000 + attempt,
                    incumbent=incumbent_cost,
                    incumbent_config=incumbent_config,
                )
                attempt += 1
                if theta.values in seen:
                    continue
                outcome = self.ctx.evaluate(
                    EvalRequest(configuration=theta, query_ids=sub_ids), event="subset-eval"
                )
                note(theta, outcome)
        except BudgetExhausted:
            pass

    def _finish(self) -> SessionResult:
        cfg = self.cfg
        report = {
            "method": cfg.method,
            "seed": cfg.seed,
            "executor": cfg.executor,
            "budget_s": cfg.budget_s,
            "max_slices": cfg.max_slices,
            "elapsed_s": self.clock.elapsed,
            "evaluations": self.ctx.evaluations,
            "best_full_latency_s": self.best_full,
            "best_config_id": self.best_config.id if self.best_config else None,
            "best_config": self.best_config.as_dict(self.space) if self.best_config else None,
            "default_full_latency_s": self.vstate.default_full_perf if self.vstate else None,
            "constants": {
                "eta0": cfg.eta0,
                "eta_step": cfg.eta_step,
                "beta": cfg.beta,
                "alpha": cfg.alpha,
                "quota": cfg.quota,
                "lhs_floor": cfg.lhs_floor,
                "explore_prune_factor": cfg.explore_prune_factor,
                "initial_strategy": cfg.initial_strategy,
                "n_trees": cfg.n_trees,
            },
        }
        if cfg.out_dir:
            os.makedirs(cfg.out_dir, exist_ok=True)
            emit_trace(self.records, os.path.join(cfg.out_dir, "trace.csv"))
            with open(os.path.join(cfg.out_dir, "report.json"), "w") as fh:
                json.dump(report, fh, indent=2, sort_keys=True)
                fh.write("\n")
            self.h.save(
                os.path.join(cfg.out_dir, "history.jsonl"),
                os.path.join(cfg.out_dir, "configs.jsonl"),
                self.space,
            )
        return SessionResult(records=self.records, report=report)


def run_session(cfg: SessionConfig) -> SessionResult:
    return _Session(cfg).run()


def emit_trace(records: list[TraceRecord], path: str) -> None:
    with open(path, "w") as fh:
        fh.write(TRACE_HEADER + "\n")
        for r in records:
            fh.write(f"{r.elapsed!r},{r.best_full_latency!r},{r.event},{r.config_id}\n")


def load_trace(path: str) -> list[TraceRecord]:
    records = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header!r}")
        for line in fh:
            elapsed, best, event, cid = line.rstrip("\n").split(",")
            records.append(TraceRecord(float(elapsed), float(best), event, int(cid)))
    return records


NOT_REACHED = "not reached"


def compare_runs(trace_a: list[TraceRecord], trace_b: list[TraceRecord]) -> dict:
    """Final-improvement and time-to-optimal speedup of run ``a`` over run ``b``."""
    if not trace_a or not trace_b:
        raise ValueError("both traces must be non-empty")
    best_a = min(r.best_full_latency for r in trace_a)
    best_b = min(r.best_full_latency for r in trace_b)
    t_b = next(r.elapsed for r in trace_b if r.best_full_latency <= best_b)
    t_a = next((r.elapsed for r in trace_a if r.best_full_latency <= best_b), None)
    if t_a is None:
        speedup: float | str = NOT_REACHED
    else:
        speedup = t_b / t_a
    return {
        "final_improvement_pct": 100.0 * (best_b - best_a) / best_b,
        "time_to_optimal_speedup": speedup,
    }
