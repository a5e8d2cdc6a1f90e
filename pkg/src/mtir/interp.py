"""Worklist abstract interpreter for one thread CFG.

The interpreter is parameterized by a load policy that decides where a
shared-memory read takes its value from:

  * SelfOnly            - the thread-local binding (pure sequential run)
  * JoinedInterference  - local binding joined with a per-variable summary
                          of every other thread's published stores
  * PerLoad             - each load node is pinned to a single source: its
                          own environment, one remote store's post-state,
                          or (for loads in loops) a pre-joined merge of the
                          surviving remote stores
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .cfg import SAssert, SLoad, ThreadCfg, back_edge_targets
from .domain import AbstractEnv, Interval, assert_violable, filter_cond, transfer
from .errors import AnalysisBudgetExceeded


# --- load sources and policies ------------------------------------------------

@dataclass(frozen=True)
class SelfSource:
    """Read the thread-local environment."""

    def describe(self):
        return "self"


@dataclass(frozen=True)
class StoreSource:
    """Read one remote store's published post-state."""
    store: int
    env: AbstractEnv

    def describe(self):
        return "store:%d" % self.store


@dataclass(frozen=True)
class MergedSource:
    """Loop handling: local environment joined with the merge of every
    feasible remote store."""
    env: AbstractEnv

    def describe(self):
        return "merged"


Source = SelfSource | StoreSource | MergedSource


@dataclass(frozen=True)
class SelfOnly:
    pass


@dataclass(frozen=True)
class JoinedInterference:
    values: dict  # var -> Interval summary from all other threads

    def __hash__(self):
        return hash(frozenset(self.values.items()))


@dataclass(frozen=True)
class PerLoad:
    sources: dict  # load node id -> Source

    def __hash__(self):
        return hash(frozenset(self.sources.items()))


LoadPolicy = SelfOnly | JoinedInterference | PerLoad


def _apply_load(node_id, stmt, env, policy):
    local = env.get(stmt.var)
    if isinstance(policy, SelfOnly):
        value = local
    elif isinstance(policy, JoinedInterference):
        summary = policy.values.get(stmt.var)
        value = local if summary is None else local.join(summary)
    else:
        source = policy.sources.get(node_id)
        if source is None:
            raise KeyError(
                f"combination does not cover load node {node_id}")
        if isinstance(source, SelfSource):
            value = local
        elif isinstance(source, StoreSource):
            value = source.env.get(stmt.var)
        else:
            value = local.join(source.env.get(stmt.var))
    return env.set(stmt.target, value)


def transfer_with_policy(node, env: AbstractEnv, policy) -> AbstractEnv:
    if env.bottom:
        return env
    if isinstance(node.stmt, SLoad):
        return _apply_load(node.id, node.stmt, env, policy)
    return transfer(node.stmt, env)


# --- fixpoint engine ------------------------------------------------------------

@dataclass
class ThreadRun:
    """Result of one interpreter run: pre-state per node plus the
    assertion nodes this run could not prove."""
    envs: dict  # node id -> AbstractEnv (state immediately before the node)
    violable: set = field(default_factory=set)

    def post(self, cfg: ThreadCfg, node_id: int, policy=None) -> AbstractEnv:
        node = cfg.nodes[node_id]
        if policy is None:
            return transfer(node.stmt, self.envs[node_id])
        return transfer_with_policy(node, self.envs[node_id], policy)


def _edge_env(cfg, src, filt, env):
    if filt is None:
        return env
    _, cond, polarity = filt
    return filter_cond(cond, polarity, env)


def analyze_thread(cfg: ThreadCfg, init: AbstractEnv, policy,
                   widening_delay: int = 3, narrowing_passes: int = 1,
                   visit_budget: int = 100_000,
                   identity_nodes: frozenset = frozenset()) -> ThreadRun:
    """Run the worklist fixpoint over one thread from the given entry state.

    Widening fires at loop heads (back-edge targets) once a node has been
    updated more than `widening_delay` times; a bounded descending pass
    then narrows the widened bounds back where the loop body permits.
    Nodes in `identity_nodes` (off-slice statements under pruning) pass
    their state through unchanged and their branch edges do not filter.
    """
    envs = {n: AbstractEnv.bot() for n in cfg.nodes}
    envs[cfg.entry] = init
    if init.bottom:
        return ThreadRun(envs)

    def node_out(n):
        if n in identity_nodes:
            return envs[n]
        return transfer_with_policy(cfg.nodes[n], envs[n], policy)

    def edge_env(n, filt, out):
        if filt is None or n in identity_nodes:
            return out
        _, cond, polarity = filt
        return filter_cond(cond, polarity, out)

    widen_points = back_edge_targets(cfg)
    updates = {n: 0 for n in cfg.nodes}
    worklist = deque([cfg.entry])
    queued = {cfg.entry}
    visits = 0

    while worklist:
        visits += 1
        if visits > visit_budget:
            raise AnalysisBudgetExceeded(
                f"{cfg.name}: worklist exceeded {visit_budget} visits")
        n = worklist.popleft()
        queued.discard(n)
        out = node_out(n)
        for dst, filt in cfg.succs[n]:
            incoming = edge_env(n, filt, out)
            if incoming.leq(envs[dst]):
                continue
            joined = envs[dst].join(incoming)
            if dst in widen_points and updates[dst] >= widening_delay:
                joined = envs[dst].widen(joined)
            envs[dst] = joined
            updates[dst] += 1
            if dst not in queued:
                worklist.append(dst)
                queued.add(dst)

    # descending sweeps, in place so a narrowed loop head refines its
    # successors within the same pass; each update keeps the post-fixpoint
    # property since predecessors can only shrink afterwards
    preds = cfg.preds()
    for _ in range(max(0, narrowing_passes)):
        changed = False
        for n in cfg.node_order():
            if n == cfg.entry:
                continue
            incoming = AbstractEnv.bot()
            for p in preds[n]:
                out = node_out(p)
                for dst, filt in cfg.succs[p]:
                    if dst == n:
                        incoming = incoming.join(edge_env(p, filt, out))
            narrowed = envs[n].narrow(incoming)
            if narrowed != envs[n]:
                envs[n] = narrowed
                changed = True
        if not changed:
            break

    run = ThreadRun(envs)
    for n in cfg.node_order():
        stmt = cfg.nodes[n].stmt
        if isinstance(stmt, SAssert) and assert_violable(stmt.cond, envs[n]):
            run.violable.add(n)
    return run


def is_stable(cfg: ThreadCfg, run: ThreadRun, policy, init: AbstractEnv,
              identity_nodes: frozenset = frozenset()) -> bool:
    """Fixpoint check: one more sweep must change nothing."""
    if not init.leq(run.envs[cfg.entry]):
        return False
    for n in cfg.node_order():
        if n in identity_nodes:
            out = run.envs[n]
        else:
            out = transfer_with_policy(cfg.nodes[n], run.envs[n], policy)
        for dst, filt in cfg.succs[n]:
            if filt is not None and n not in identity_nodes:
                incoming = _edge_env(cfg, n, filt, out)
            else:
                incoming = out
            if not incoming.leq(run.envs[dst]):
                return False
    return True
