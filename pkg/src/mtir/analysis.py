"""Outer fixpoint engines composing the per-thread interpreter.

Two compositions are provided:

  * run_flow_insensitive: every load sees the join of all values that any
    other thread ever stores to its variable.  One interpreter run per
    thread per outer iteration.

  * run_flow_sensitive: each thread runs once per interference
    combination, which pins every load to a single source instead of a
    join.  Modes layer on top: "fs" explores all combinations, "fsc"
    drops the ones the constraint engine proves impossible, "fso" adds
    property slicing (off-slice statements become identity, their loads
    leave combination generation) and dependence clustering (independent
    load groups are explored zipped instead of multiplied).

Both iterate until the interference table and the node environments
stop changing, widening interference environments after a delay so the
outer loop terminates on programs with unbounded data flow.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .cfg import (
    ProgramModel, ThreadCfg, is_store, loads_of, reachable_sets,
)
from .domain import AbstractEnv, Interval, const, transfer
from .errors import AnalysisBudgetExceeded, CombinationBudgetExceeded
from .facts import FeasibilityEngine
from .interp import (
    JoinedInterference, MergedSource, PerLoad, SelfSource, StoreSource,
    analyze_thread,
)
from .pdg import ClusterPlan, apply_pruning, backward_slices, build_pdg, cluster

MODES = ("fi", "fs", "fsc", "fso")


@dataclass
class AnalysisConfig:
    mode: str = "fsc"
    widening_delay: int = 3
    narrowing_passes: int = 1
    outer_budget: int = 64
    combo_cap: int = 4096
    visit_budget: int = 200_000
    parallel: int = 1
    # oracle bounds, carried here so harnesses share one config object
    nondet_domain: tuple = (-1, 0, 1)
    oracle_schedule_cap: int = 500_000


@dataclass(frozen=True)
class Interference:
    """A store node together with the abstract post-state it publishes."""
    store: int
    env: AbstractEnv


@dataclass
class IterationStats:
    combos: dict = field(default_factory=dict)      # tid -> generated
    infeasible: dict = field(default_factory=dict)  # tid -> rejected
    runs: int = 0


@dataclass
class AnalysisStats:
    outer_iters: int = 0
    runs: int = 0
    combos: int = 0
    infeasible: int = 0
    pruned_loads: int = 0
    clusters: int = 0
    wall_ms: float = 0.0
    per_iteration: list = field(default_factory=list)


@dataclass
class AnalysisResult:
    model: ProgramModel
    te: dict  # node id -> AbstractEnv, accumulated over every run
    verdicts: dict  # assertion node id -> bool (verified)
    stats: AnalysisStats
    interference: dict  # tid -> {store node -> AbstractEnv}
    directives: object = None
    cluster_plan: ClusterPlan | None = None

    def verified_assertions(self) -> set:
        return {n for n, ok in self.verdicts.items() if ok}

    def all_verified(self) -> bool:
        return all(self.verdicts.values())

    def published(self, tid: int) -> tuple:
        """The interferences a thread exposes: one (store, post-state)
        pair per store node, in node order."""
        bucket = self.interference.get(tid, {})
        return tuple(Interference(store, bucket[store])
                     for store in sorted(bucket))

    def interference_env(self, tid: int) -> AbstractEnv:
        """Per-variable summary of what the thread publishes: each stored
        variable maps to the join of its stored values."""
        values: dict[str, Interval] = {}
        for store, env in self.interference.get(tid, {}).items():
            var = self.model.node(store).stmt.var
            got = env.get(var)
            values[var] = got if var not in values else values[var].join(got)
        return AbstractEnv(values)


# --- shared helpers -----------------------------------------------------------

def _initial_env(model: ProgramModel) -> AbstractEnv:
    return AbstractEnv({name: const(init)
                        for name, init in model.globals.items()})


def _entry_env(model: ProgramModel, cfg: ThreadCfg, te: dict) -> AbstractEnv:
    """Entry state of a thread: globals from the creating thread's state
    at the create site (the program initializers for the entry thread),
    parameters bound to their constant arguments."""
    if cfg.creation_site is None:
        env = _initial_env(model)
    else:
        parent_state = te.get(cfg.creation_site, AbstractEnv.bot())
        if parent_state.bottom:
            return AbstractEnv.bot()
        env = parent_state.project(set(model.globals))
    for param, value in cfg.params.items():
        env = env.set(param, const(value))
    return env


def _merge_te(te: dict, envs: dict):
    for node, env in envs.items():
        if node in te:
            te[node] = te[node].join(env)
        else:
            te[node] = env


def _publish(model, te, table, iteration, config, silent_stores=frozenset()):
    """Republish interference from the accumulated node states: the
    post-state of every store, joined per store node, widened across
    outer iterations once past the delay."""
    for cfg in model.threads:
        bucket = table.setdefault(cfg.tid, {})
        for n in cfg.node_order():
            node = cfg.nodes[n]
            if not is_store(node) or n in silent_stores:
                continue
            pre = te.get(n)
            if pre is None or pre.bottom:
                continue
            post = transfer(node.stmt, pre)
            old = bucket.get(n)
            if old is None:
                bucket[n] = post
            else:
                joined = old.join(post)
                if iteration > config.widening_delay:
                    joined = old.widen(joined)
                bucket[n] = joined


def _table_snapshot(table):
    return {tid: dict(bucket) for tid, bucket in table.items()}


# --- flow-insensitive composition ----------------------------------------------

def run_flow_insensitive(model: ProgramModel,
                         config: AnalysisConfig | None = None) -> AnalysisResult:
    config = config or AnalysisConfig(mode="fi")
    te: dict = {}
    table: dict = {cfg.tid: {} for cfg in model.threads}
    violable: set = set()
    stats = AnalysisStats()

    for iteration in itertools.count(1):
        if iteration > config.outer_budget:
            raise AnalysisBudgetExceeded(
                f"flow-insensitive loop exceeded {config.outer_budget} "
                "iterations")
        stats.outer_iters = iteration
        before_table = _table_snapshot(table)
        before_te = dict(te)
        iter_stats = IterationStats()

        for cfg in model.threads:
            summary: dict[str, Interval] = {}
            for other in model.threads:
                if other.tid == cfg.tid:
                    continue
                for store, env in table[other.tid].items():
                    var = model.node(store).stmt.var
                    got = env.get(var)
                    summary[var] = (got if var not in summary
                                    else summary[var].join(got))
            run = analyze_thread(
                cfg, _entry_env(model, cfg, te), JoinedInterference(summary),
                widening_delay=config.widening_delay,
                narrowing_passes=config.narrowing_passes,
                visit_budget=config.visit_budget)
            _merge_te(te, run.envs)
            violable |= run.violable
            stats.runs += 1
            iter_stats.runs += 1

        _publish(model, te, table, iteration, config)
        stats.per_iteration.append(iter_stats)
        if table == before_table and te == before_te:
            break

    verdicts = {n: n not in violable for n in model.assertions}
    return AnalysisResult(model, te, verdicts, stats, table)


# --- interference combinations ---------------------------------------------------

def _source_lists(cfg, table, model, facts, active_loads, self_reach):
    """Candidate sources per load, in the published-store order with the
    self source last; loads on a cycle collapse every store that is not
    forced after them into one merged environment."""
    ves = []
    for other in model.threads:
        if other.tid == cfg.tid:
            continue
        for store in sorted(table.get(other.tid, {})):
            ves.append((store, table[other.tid][store]))

    sources = {}
    for l in active_loads:
        var = cfg.nodes[l].stmt.var
        matching = [(s, env) for s, env in ves
                    if model.node(s).stmt.var == var]
        if l in self_reach:
            merged = AbstractEnv.bot()
            found = False
            for s, env in matching:
                if not facts.must_happen_before(l, s):
                    merged = merged.join(env)
                    found = True
            sources[l] = [MergedSource(merged)] if found else [SelfSource()]
        else:
            sources[l] = [StoreSource(s, env) for s, env in matching]
            sources[l].append(SelfSource())
    return sources


def _cartesian(loads, sources):
    """Cartesian product with the first load varying fastest, matching
    the order interference combinations are enumerated in."""
    rev = list(reversed(loads))
    out = []
    for tup in itertools.product(*[sources[l] for l in rev]):
        out.append(dict(zip(rev, tup)))
    return out


def _self_combination(active_loads):
    return {l: SelfSource() for l in active_loads}


def compute_combinations(cfg: ThreadCfg, table: dict, model: ProgramModel,
                         facts: FeasibilityEngine,
                         feasibility: bool = False,
                         plan: ClusterPlan | None = None,
                         pruned_loads: frozenset = frozenset(),
                         combo_cap: int = 4096):
    """Build the interference combinations for one thread.

    Returns (combinations, generated, rejected).  With a cluster plan the
    per-cluster combination lists are zipped: run k takes each cluster's
    k-th combination, shorter lists padded with the all-self combination,
    so the number of runs is the maximum cluster list length instead of
    the product.
    """
    reach = reachable_sets(cfg.succs)
    self_reach = {l for l in loads_of(cfg) if l in reach[l]}
    active = [l for l in loads_of(cfg) if l not in pruned_loads]
    sources = _source_lists(cfg, table, model, facts, active, self_reach)

    def guarded_product(loads):
        total = 1
        for l in loads:
            total *= len(sources[l])
            if total > combo_cap:
                raise CombinationBudgetExceeded(
                    f"{cfg.name}: {total}+ interference combinations "
                    f"(cap {combo_cap}); consider clustering")
        return _cartesian(loads, sources)

    if plan is None:
        combos = guarded_product(active)
        generated = len(combos)
        rejected = 0
        if feasibility:
            kept = []
            for combo in combos:
                if facts.is_feasible(combo):
                    kept.append(combo)
                else:
                    rejected += 1
            combos = kept
        return combos, generated, rejected

    clusters = [group for group in plan.by_thread.get(cfg.tid, [])
                if any(l in sources for l in group)]
    per_cluster = []
    generated = 0
    rejected = 0
    for group in clusters:
        group = [l for l in group if l in sources]
        combos = guarded_product(group)
        generated += len(combos)
        if feasibility:
            kept = []
            for combo in combos:
                if facts.is_feasible(combo):
                    kept.append(combo)
                else:
                    rejected += 1
            combos = kept or [_self_combination(group)]
        per_cluster.append((group, combos))

    clustered_loads = {l for group, _ in per_cluster for l in group}
    background = {l: SelfSource() for l in active if l not in clustered_loads}
    if not per_cluster:
        generated += 1  # the single background-only combination
    runs = max((len(combos) for _, combos in per_cluster), default=1)
    zipped = []
    for k in range(runs):
        combo = dict(background)
        for group, combos in per_cluster:
            part = combos[k] if k < len(combos) else _self_combination(group)
            combo.update(part)
        zipped.append(combo)
    if not zipped:
        zipped = [dict(background)]
    return zipped, generated, rejected


# --- flow-sensitive composition ---------------------------------------------------

def run_flow_sensitive(model: ProgramModel,
                       config: AnalysisConfig | None = None) -> AnalysisResult:
    config = config or AnalysisConfig(mode="fs")
    mode = config.mode
    use_feasibility = mode in ("fsc", "fso")
    facts = FeasibilityEngine(model)

    directives = None
    plan = None
    if mode == "fso":
        graph = build_pdg(model)
        slices = backward_slices(graph, model)
        directives = apply_pruning(slices, model)
        plan = cluster(graph, slices, model)

    identity_nodes = directives.identity_nodes if directives else frozenset()
    pruned_loads = directives.pruned_loads if directives else frozenset()
    silent_stores = directives.silent_stores if directives else frozenset()

    te: dict = {}
    table: dict = {cfg.tid: {} for cfg in model.threads}
    violable: set = set()
    stats = AnalysisStats()
    stats.pruned_loads = len(pruned_loads)
    stats.clusters = plan.total_clusters() if plan else 0
    pool = (ThreadPoolExecutor(max_workers=config.parallel)
            if config.parallel > 1 else None)

    try:
        for iteration in itertools.count(1):
            if iteration > config.outer_budget:
                raise AnalysisBudgetExceeded(
                    f"flow-sensitive loop exceeded {config.outer_budget} "
                    "iterations")
            stats.outer_iters = iteration
            before_table = _table_snapshot(table)
            before_te = dict(te)
            iter_stats = IterationStats()

            for cfg in model.threads:
                active = [l for l in loads_of(cfg) if l not in pruned_loads]
                # the first iteration has no interference published yet:
                # run the self-only combination unfiltered to bootstrap
                combos, generated, rejected = compute_combinations(
                    cfg, table, model, facts,
                    feasibility=use_feasibility and iteration > 1,
                    plan=plan, pruned_loads=pruned_loads,
                    combo_cap=config.combo_cap)
                if not combos:
                    # every combination was refuted; keep the thread's
                    # contribution sound with a self-only run
                    combos = [_self_combination(active)]
                iter_stats.combos[cfg.tid] = generated
                iter_stats.infeasible[cfg.tid] = rejected
                stats.combos += generated
                stats.infeasible += rejected

                init = _entry_env(model, cfg, te)

                def one_run(combo):
                    return analyze_thread(
                        cfg, init, PerLoad(combo),
                        widening_delay=config.widening_delay,
                        narrowing_passes=config.narrowing_passes,
                        visit_budget=config.visit_budget,
                        identity_nodes=identity_nodes)

                if pool is not None:
                    runs = list(pool.map(one_run, combos))
                else:
                    runs = [one_run(combo) for combo in combos]
                for run in runs:  # deterministic accumulation order
                    _merge_te(te, run.envs)
                    violable |= run.violable
                stats.runs += len(runs)
                iter_stats.runs += len(runs)

            _publish(model, te, table, iteration, config, silent_stores)
            stats.per_iteration.append(iter_stats)
            if table == before_table and te == before_te:
                break
    finally:
        if pool is not None:
            pool.shutdown()

    verdicts = {n: n not in violable for n in model.assertions}
    return AnalysisResult(model, te, verdicts, stats, table,
                          directives=directives, cluster_plan=plan)


def analyze(model: ProgramModel, config: AnalysisConfig) -> AnalysisResult:
    if config.mode == "fi":
        return run_flow_insensitive(model, config)
    if config.mode in ("fs", "fsc", "fso"):
        return run_flow_sensitive(model, config)
    raise ValueError(f"unknown mode {config.mode!r}")
