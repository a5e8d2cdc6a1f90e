"""Program dependence graph, property slicing, pruning and clustering.

The graph spans all threads: control dependence stays inside a thread,
data dependence covers intra-thread def-use over locals plus every
store-to-load pair on a matching global (cross-thread or not; slicing
must over-approximate).  Backward slices from the assertion nodes drive
two optimizations: off-slice statements become identity transfers and
their loads drop out of combination generation, and the connected
components of the on-slice subgraph split each thread's loads into
independently explorable clusters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ast import expr_vars
from .cfg import (
    ProgramModel, SAssert, SBranch, SCreate, SExit, SJoin, SLoad, SLocal,
    SNondet, SNop, SStore, ThreadCfg, dominator_sets, is_load, is_store,
    loads_of, reachable_sets,
)

VIRTUAL_EXIT = -1


@dataclass
class DependenceGraph:
    control: dict[int, set[int]] = field(default_factory=dict)  # node -> deps on it
    data: dict[int, set[int]] = field(default_factory=dict)

    def add(self, kind: str, src: int, dst: int):
        table = self.control if kind == "cd" else self.data
        table.setdefault(src, set()).add(dst)

    def successors(self, n: int):
        yield from self.control.get(n, ())
        yield from self.data.get(n, ())

    def edges(self):
        for src, dsts in sorted(self.control.items()):
            for dst in sorted(dsts):
                yield ("cd", src, dst)
        for src, dsts in sorted(self.data.items()):
            for dst in sorted(dsts):
                yield ("dd", src, dst)


@dataclass
class SlicePlan:
    per_assertion: dict[int, set[int]]
    union: set[int]
    off_slice: set[int]


@dataclass
class ClusterPlan:
    """Per-thread partition of the on-slice loads."""
    by_thread: dict[int, list[list[int]]]

    def total_clusters(self) -> int:
        return sum(len(groups) for groups in self.by_thread.values())


def _post_dominators(cfg: ThreadCfg):
    """Post-dominator sets over the reversed CFG with a virtual exit.
    Nodes that cannot reach the exit (infinite loops) also feed the
    virtual exit so the computation stays total."""
    reach = reachable_sets(cfg.succs)
    rsuccs = {n: [] for n in cfg.nodes}
    rsuccs[VIRTUAL_EXIT] = [(cfg.exit, None)]
    for n, edges in cfg.succs.items():
        for dst, _ in edges:
            rsuccs[dst].append((n, None))
    for n in cfg.nodes:
        if n != cfg.exit and cfg.exit not in reach[n]:
            rsuccs[VIRTUAL_EXIT].append((n, None))  # sink without an exit path
    return dominator_sets(rsuccs, VIRTUAL_EXIT)


def _control_dependence(cfg: ThreadCfg, graph: DependenceGraph):
    """n depends on branch m when n post-dominates one successor of m
    but not m itself."""
    pdom = _post_dominators(cfg)
    for m in cfg.node_order():
        if not isinstance(cfg.nodes[m].stmt, SBranch):
            continue
        mdoms = pdom.get(m, set())
        for succ, _ in cfg.succs[m]:
            for n in pdom.get(succ, ()):
                if n != VIRTUAL_EXIT and n != m and n not in mdoms:
                    graph.add("cd", m, n)


def _defs_and_uses(node):
    stmt = node.stmt
    if isinstance(stmt, SLocal):
        return {stmt.target}, expr_vars(stmt.expr)
    if isinstance(stmt, SLoad):
        return {stmt.target}, set()
    if isinstance(stmt, SNondet):
        return {stmt.target}, set()
    if isinstance(stmt, SStore):
        return set(), expr_vars(stmt.expr)
    if isinstance(stmt, (SBranch, SAssert)):
        return set(), expr_vars(stmt.cond)
    return set(), set()


def _data_dependence(cfg: ThreadCfg, graph: DependenceGraph):
    """Reaching definitions of locals, flow-sensitive per thread.
    Thread parameters are treated as defined at the entry node."""
    gen = {}
    for n in cfg.node_order():
        d, _ = _defs_and_uses(cfg.nodes[n])
        gen[n] = d
    param_defs = {p: {cfg.entry} for p in cfg.params}

    preds = cfg.preds()
    reaching: dict[int, dict[str, set]] = {n: {} for n in cfg.nodes}
    reaching[cfg.entry] = {p: set(d) for p, d in param_defs.items()}
    changed = True
    while changed:
        changed = False
        for n in cfg.node_order():
            incoming: dict[str, set] = (
                {p: set(d) for p, d in param_defs.items()}
                if n == cfg.entry else {})
            for p in preds[n]:
                for var, sites in reaching[p].items():
                    if var in gen[p]:
                        continue
                    incoming.setdefault(var, set()).update(sites)
                for var in gen[p]:
                    incoming.setdefault(var, set()).add(p)
            if incoming != reaching[n]:
                reaching[n] = incoming
                changed = True

    for n in cfg.node_order():
        _, uses = _defs_and_uses(cfg.nodes[n])
        for var in uses:
            for site in reaching[n].get(var, ()):
                graph.add("dd", site, n)


def build_pdg(model: ProgramModel) -> DependenceGraph:
    graph = DependenceGraph()
    for cfg in model.threads:
        _control_dependence(cfg, graph)
        _data_dependence(cfg, graph)
    # global flows: any store to v may feed any load of v
    stores = {}
    for node in model.all_nodes():
        if is_store(node):
            stores.setdefault(node.stmt.var, []).append(node.id)
    for node in model.all_nodes():
        if is_load(node):
            for s in stores.get(node.stmt.var, ()):
                graph.add("dd", s, node.id)
    # a created thread's entry (and so its parameters) depends on the
    # create site that spawns and binds it
    for create_node, child_tid in model.creates:
        graph.add("dd", create_node, model.thread(child_tid).entry)
    return graph


def backward_slices(graph: DependenceGraph, model: ProgramModel) -> SlicePlan:
    """Reverse-reachability closure from every assertion node."""
    rev: dict[int, set[int]] = {}
    for _, src, dst in graph.edges():
        rev.setdefault(dst, set()).add(src)

    per = {}
    for prop in model.assertions:
        seen = {prop}
        stack = [prop]
        while stack:
            n = stack.pop()
            for p in rev.get(n, ()):
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        per[prop] = seen
    union = set().union(*per.values()) if per else set()
    all_ids = {node.id for node in model.all_nodes()}
    return SlicePlan(per, union, all_ids - union)


@dataclass
class PruningDirectives:
    """What the interpreter and combination generator skip."""
    identity_nodes: frozenset
    pruned_loads: frozenset
    silent_stores: frozenset  # off-slice stores publish no interference


def apply_pruning(slices: SlicePlan, model: ProgramModel) -> PruningDirectives:
    identity = set()
    pruned_loads = set()
    silent_stores = set()
    for node in model.all_nodes():
        if node.id not in slices.off_slice:
            continue
        if isinstance(node.stmt, (SCreate, SJoin, SExit, SNop)):
            continue  # structural nodes keep their meaning
        identity.add(node.id)
        if is_load(node):
            pruned_loads.add(node.id)
        if is_store(node):
            silent_stores.add(node.id)
    return PruningDirectives(frozenset(identity), frozenset(pruned_loads),
                             frozenset(silent_stores))


def cluster(graph: DependenceGraph, slices: SlicePlan,
            model: ProgramModel) -> ClusterPlan:
    """Connected components of the on-slice subgraph (over both edge
    kinds, undirected); each component's loads in one thread form a
    cluster whose combinations can be explored independently."""
    adjacency: dict[int, set[int]] = {n: set() for n in slices.union}
    for _, src, dst in graph.edges():
        if src in slices.union and dst in slices.union:
            adjacency[src].add(dst)
            adjacency[dst].add(src)

    component: dict[int, int] = {}
    next_id = 0
    for n in sorted(slices.union):
        if n in component:
            continue
        stack = [n]
        component[n] = next_id
        while stack:
            cur = stack.pop()
            for other in adjacency[cur]:
                if other not in component:
                    component[other] = next_id
                    stack.append(other)
        next_id += 1

    by_thread: dict[int, list[list[int]]] = {}
    for cfg in model.threads:
        groups: dict[int, list[int]] = {}
        for l in loads_of(cfg):
            if l in slices.union:
                groups.setdefault(component[l], []).append(l)
        by_thread[cfg.tid] = [groups[c] for c in sorted(groups)]
    return ClusterPlan(by_thread)


def dot_dump(graph: DependenceGraph, model: ProgramModel,
             slices: SlicePlan | None = None) -> str:
    """DOT-compatible rendering; off-slice nodes are drawn dotted."""
    lines = ["digraph pdg {"]
    for node in model.all_nodes():
        style = ""
        if slices and node.id in slices.off_slice:
            style = " style=dotted"
        lines.append('  n%d [label="%s"%s];'
                     % (node.id, model.node_name(node.id), style))
    for kind, src, dst in graph.edges():
        lines.append('  n%d -> n%d [label="%s"];' % (src, dst, kind))
    lines.append("}")
    return "\n".join(lines)
