"""Lowering from the MTIR AST to per-thread control-flow graphs.

Every statement is normalized so that a shared (global) memory access is
an isolated load or store node: loads pull a global into a fresh local,
stores write an expression over locals only.  This makes the load/store
nodes the unit of interference for the whole analysis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ast import (
    Assign, AssertStmt, BinOp, BoolLit, CreateStmt, ErrorStmt, Expr, If,
    IntLit, JoinStmt, Nondet, Routine, SourceProgram, UnaryOp, Var, While,
    expr_vars,
)
from .errors import (
    CreateInLoopError, JoinWithoutCreateError, ModelError,
    RecursiveCreateError,
)


# --- normalized statement IR -------------------------------------------------

@dataclass(frozen=True)
class SLocal:
    target: str
    expr: Expr


@dataclass(frozen=True)
class SLoad:
    target: str
    var: str  # global being read


@dataclass(frozen=True)
class SStore:
    var: str  # global being written
    expr: Expr  # over locals and constants only


@dataclass(frozen=True)
class SBranch:
    cond: Expr  # over locals only; filters live on the out edges


@dataclass(frozen=True)
class SAssert:
    cond: Expr  # over locals only; judged, never assumed


@dataclass(frozen=True)
class SNondet:
    target: str


@dataclass(frozen=True)
class SCreate:
    routine: str
    args: tuple[int, ...]


@dataclass(frozen=True)
class SJoin:
    routine: str


@dataclass(frozen=True)
class SExit:
    pass


@dataclass(frozen=True)
class SNop:
    """Synthetic entry placeholder, used only when the first real node
    would otherwise receive a back edge."""


IRStmt = (SLocal, SLoad, SStore, SBranch, SAssert, SNondet, SCreate, SJoin,
          SExit, SNop)


@dataclass
class Node:
    id: int
    tid: int
    line: int
    stmt: object


# An edge filter is None (unconditional) or ("assume", cond, polarity).
Edge = tuple[int, object]


@dataclass
class ThreadCfg:
    tid: int
    name: str  # routine name, "#k"-suffixed for repeated instantiation
    routine: str
    nodes: dict[int, Node] = field(default_factory=dict)
    succs: dict[int, list[Edge]] = field(default_factory=dict)
    entry: int = -1
    exit: int = -1
    creation_site: int | None = None  # node id in the parent thread
    params: dict[str, int] = field(default_factory=dict)

    def preds(self) -> dict[int, list[int]]:
        out = {n: [] for n in self.nodes}
        for n, edges in self.succs.items():
            for dst, _ in edges:
                out[dst].append(n)
        return out

    def node_order(self) -> list[int]:
        return sorted(self.nodes)


@dataclass
class ProgramModel:
    threads: list[ThreadCfg]
    globals: dict[str, int]  # name -> initializer
    creates: list[tuple[int, int]]  # (create node id, child tid)
    joins: list[tuple[int, int]]  # (join node id, child tid)
    assertions: list[int]  # SAssert node ids
    source: SourceProgram | None = None

    def __post_init__(self):
        self._node_index = {}
        for cfg in self.threads:
            for node in cfg.nodes.values():
                self._node_index[node.id] = node
        self._names = {}
        seen: dict[tuple[int, int], int] = {}
        for cfg in self.threads:
            for nid in cfg.node_order():
                node = cfg.nodes[nid]
                key = (cfg.tid, node.line)
                count = seen.get(key, 0)
                seen[key] = count + 1
                suffix = "" if count == 0 else "_%d" % (count + 1)
                self._names[nid] = "t%d.%d%s" % (cfg.tid, node.line, suffix)

    def node(self, nid: int) -> Node:
        return self._node_index[nid]

    def thread(self, tid: int) -> ThreadCfg:
        return self.threads[tid]

    def thread_named(self, name: str) -> ThreadCfg:
        for cfg in self.threads:
            if cfg.name == name:
                return cfg
        raise KeyError(name)

    def node_name(self, nid: int) -> str:
        """Stable display name, `t<thread>.<line>` (suffixed if shared)."""
        return self._names[nid]

    def all_nodes(self):
        for cfg in self.threads:
            for nid in cfg.node_order():
                yield cfg.nodes[nid]


def is_load(node: Node) -> bool:
    return isinstance(node.stmt, SLoad)


def is_store(node: Node) -> bool:
    return isinstance(node.stmt, SStore)


def access_var(node: Node) -> str | None:
    if isinstance(node.stmt, (SLoad, SStore)):
        return node.stmt.var
    return None


def loads_of(cfg: ThreadCfg) -> list[int]:
    """All load nodes of a thread, in node-id order."""
    return [n for n in cfg.node_order() if isinstance(cfg.nodes[n].stmt, SLoad)]


def stores_of(cfg: ThreadCfg) -> list[int]:
    return [n for n in cfg.node_order() if isinstance(cfg.nodes[n].stmt, SStore)]


# --- graph utilities ---------------------------------------------------------

def reachable_sets(succs: dict[int, list[Edge]]) -> dict[int, set[int]]:
    """reachable_sets(g)[n] = nodes reachable from n via a nonempty path."""
    plain = {n: [dst for dst, _ in edges] for n, edges in succs.items()}
    out = {}
    for start in plain:
        seen = set()
        stack = list(plain[start])
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(plain[n])
        out[start] = seen
    return out


def dominator_sets(succs: dict[int, list[Edge]], entry: int) -> dict[int, set[int]]:
    """Iterative forward data-flow over reverse postorder; dom[n] includes n."""
    plain = {n: [dst for dst, _ in edges] for n, edges in succs.items()}
    preds = {n: [] for n in plain}
    for n, ss in plain.items():
        for s in ss:
            preds[s].append(n)

    order = []
    seen = set()

    def postorder(n):
        seen.add(n)
        for s in plain[n]:
            if s not in seen:
                postorder(s)
        order.append(n)

    postorder(entry)
    rpo = list(reversed(order))

    all_nodes = set(rpo)
    dom = {n: set(all_nodes) for n in rpo}
    dom[entry] = {entry}
    changed = True
    while changed:
        changed = False
        for n in rpo:
            if n == entry:
                continue
            ps = [p for p in preds[n] if p in all_nodes]
            new = set.intersection(*(dom[p] for p in ps)) if ps else set()
            new.add(n)
            if new != dom[n]:
                dom[n] = new
                changed = True
    return dom


def back_edge_targets(cfg: ThreadCfg) -> set[int]:
    """Loop heads: targets n of edges m->n where n dominates m."""
    dom = dominator_sets(cfg.succs, cfg.entry)
    heads = set()
    for m, edges in cfg.succs.items():
        for n, _ in edges:
            if n in dom.get(m, ()):
                heads.add(n)
    return heads


# --- lowering ----------------------------------------------------------------

class _ThreadBuilder:
    def __init__(self, cfg: ThreadCfg, globals_: set[str], ids):
        self.cfg = cfg
        self.globals = globals_
        self.ids = ids  # shared counter across all threads
        self.temp_count = 0

    def fresh(self) -> str:
        name = "$t%d" % self.temp_count
        self.temp_count += 1
        return name

    def new_node(self, stmt, line) -> int:
        nid = next(self.ids)
        self.cfg.nodes[nid] = Node(nid, self.cfg.tid, line, stmt)
        self.cfg.succs[nid] = []
        return nid

    def connect(self, ends, nid):
        for src, filt in ends:
            self.cfg.succs[src].append((nid, filt))

    def seq(self, ends, stmt, line):
        nid = self.new_node(stmt, line)
        self.connect(ends, nid)
        return nid, [(nid, None)]

    def hoist(self, expr: Expr, ends, line):
        """Pull global reads and nondet picks out of an expression.

        Returns (rewritten expr over locals, entry node id or None,
        open ends).  Each global occurrence becomes its own load node.
        """
        entry = None

        def walk(e):
            nonlocal entry, ends
            if isinstance(e, Var) and e.name in self.globals:
                t = self.fresh()
                nid, ends = self.seq(ends, SLoad(t, e.name), line)
                if entry is None:
                    entry = nid
                return Var(t)
            if isinstance(e, Nondet):
                t = self.fresh()
                nid, ends = self.seq(ends, SNondet(t), line)
                if entry is None:
                    entry = nid
                return Var(t)
            if isinstance(e, UnaryOp):
                return UnaryOp(e.op, walk(e.operand))
            if isinstance(e, BinOp):
                left = walk(e.left)
                right = walk(e.right)
                return BinOp(e.op, left, right)
            return e

        return walk(expr), entry, ends

    def lower_block(self, stmts, ends):
        """Returns (entry node id or None, open ends after the block)."""
        block_entry = None
        for s in stmts:
            entry, ends = self.lower_stmt(s, ends)
            if block_entry is None:
                block_entry = entry
        return block_entry, ends

    def lower_stmt(self, s, ends):
        if isinstance(s, Assign):
            if isinstance(s.expr, Var) and s.expr.name in self.globals \
                    and s.target not in self.globals:
                nid, ends = self.seq(ends, SLoad(s.target, s.expr.name), s.line)
                return nid, ends
            if isinstance(s.expr, Nondet) and s.target not in self.globals:
                nid, ends = self.seq(ends, SNondet(s.target), s.line)
                return nid, ends
            expr, entry, ends = self.hoist(s.expr, ends, s.line)
            if s.target in self.globals:
                if not isinstance(expr, (IntLit, BoolLit, Var)):
                    t = self.fresh()
                    nid, ends = self.seq(ends, SLocal(t, expr), s.line)
                    if entry is None:
                        entry = nid
                    expr = Var(t)
                nid, ends = self.seq(ends, SStore(s.target, expr), s.line)
            else:
                nid, ends = self.seq(ends, SLocal(s.target, expr), s.line)
            return entry if entry is not None else nid, ends

        if isinstance(s, If):
            cond, entry, ends = self.hoist(s.cond, ends, s.line)
            branch, _ = self.seq(ends, SBranch(cond), s.line)
            if entry is None:
                entry = branch
            then_ends = [(branch, ("assume", cond, True))]
            then_entry, then_ends = self.lower_block(s.then_body, then_ends)
            else_ends = [(branch, ("assume", cond, False))]
            else_entry, else_ends = self.lower_block(s.else_body, else_ends)
            return entry, then_ends + else_ends

        if isinstance(s, While):
            cond, head, pre_ends = self.hoist(s.cond, ends, s.line)
            branch, _ = self.seq(pre_ends, SBranch(cond), s.line)
            if head is None:
                head = branch
            body_ends = [(branch, ("assume", cond, True))]
            _, body_ends = self.lower_block(s.body, body_ends)
            self.connect(body_ends, head)  # back edge to cond re-evaluation
            return head, [(branch, ("assume", cond, False))]

        if isinstance(s, AssertStmt):
            cond, entry, ends = self.hoist(s.cond, ends, s.line)
            nid, ends = self.seq(ends, SAssert(cond), s.line)
            return entry if entry is not None else nid, ends

        if isinstance(s, ErrorStmt):
            nid, ends = self.seq(ends, SAssert(BoolLit(False)), s.line)
            return nid, ends

        if isinstance(s, CreateStmt):
            nid, ends = self.seq(ends, SCreate(s.routine, tuple(s.args)), s.line)
            return nid, ends

        if isinstance(s, JoinStmt):
            nid, ends = self.seq(ends, SJoin(s.routine), s.line)
            return nid, ends

        raise TypeError(s)


def _check_no_global_shadowing(routine: Routine, globals_: set):
    for param in routine.params:
        if param in globals_:
            raise ModelError(
                f"routine {routine.name!r}: parameter {param!r} shadows a "
                "global")

    def scan(stmts):
        for s in stmts:
            if isinstance(s, Assign) and s.decl and s.target in globals_:
                raise ModelError(
                    f"line {s.line}: local declaration of {s.target!r} "
                    "shadows a global")
            elif isinstance(s, If):
                scan(s.then_body)
                scan(s.else_body)
            elif isinstance(s, While):
                scan(s.body)

    scan(routine.body)


def _instantiate(routine: Routine, tid, name, args, creation_site, globals_,
                 ids) -> ThreadCfg:
    if len(args) != len(routine.params):
        raise ModelError(
            f"routine {routine.name!r} takes {len(routine.params)} "
            f"argument(s), got {len(args)}")
    _check_no_global_shadowing(routine, globals_)
    cfg = ThreadCfg(tid=tid, name=name, routine=routine.name,
                    creation_site=creation_site,
                    params=dict(zip(routine.params, args)))
    builder = _ThreadBuilder(cfg, globals_, ids)
    entry, ends = builder.lower_block(routine.body, [])
    exit_id = builder.new_node(SExit(), routine.end_line)
    builder.connect(ends, exit_id)
    cfg.entry = entry if entry is not None else exit_id
    cfg.exit = exit_id
    if cfg.preds()[cfg.entry]:
        # a loop at the start of the body targets the entry; give the CFG
        # a predecessor-free entry
        nop = builder.new_node(SNop(), routine.line)
        builder.connect([(nop, None)], cfg.entry)
        cfg.entry = nop
    return cfg


def _check_creation_shape(prog: SourceProgram):
    """Creation must be a finite tree: no routine creates itself
    (transitively) and no create site sits inside a loop."""
    edges: dict[str, set[str]] = {r.name: set() for r in prog.routines}

    def scan(stmts, routine, in_loop):
        for s in stmts:
            if isinstance(s, CreateStmt):
                if in_loop:
                    raise CreateInLoopError(
                        f"line {s.line}: create inside a loop would make "
                        "the thread count dynamic")
                edges[routine].add(s.routine)
            elif isinstance(s, If):
                scan(s.then_body, routine, in_loop)
                scan(s.else_body, routine, in_loop)
            elif isinstance(s, While):
                scan(s.body, routine, True)

    for r in prog.routines:
        scan(r.body, r.name, False)

    # cycle check over the routine creation graph
    state: dict[str, int] = {}

    def visit(name, trail):
        state[name] = 1
        for succ in sorted(edges[name]):
            if state.get(succ) == 1:
                raise RecursiveCreateError(
                    "creation cycle: " + " -> ".join(trail + [succ]))
            if state.get(succ) != 2:
                visit(succ, trail + [succ])
        state[name] = 2

    for r in prog.routines:
        if state.get(r.name) != 2:
            visit(r.name, [r.name])


def build_model(prog: SourceProgram) -> ProgramModel:
    """Instantiate one ThreadCfg per create site plus the entry thread."""
    _check_creation_shape(prog)
    globals_ = {name: init for name, _, init in prog.globals}
    ids = iter(range(10 ** 9))

    entry_routine = prog.routine(prog.entry)
    threads = [_instantiate(entry_routine, 0, prog.entry, [], None,
                            set(globals_), ids)]
    creates: list[tuple[int, int]] = []
    instance_count: dict[str, int] = {prog.entry: 1}

    # breadth-first over create sites, in node order: deterministic tids
    queue = [threads[0]]
    while queue:
        parent = queue.pop(0)
        for nid in parent.node_order():
            stmt = parent.nodes[nid].stmt
            if not isinstance(stmt, SCreate):
                continue
            routine = prog.routine(stmt.routine)
            count = instance_count.get(stmt.routine, 0)
            instance_count[stmt.routine] = count + 1
            tid = len(threads)
            child = _instantiate(routine, tid, stmt.routine, list(stmt.args),
                                 nid, set(globals_), ids)
            threads.append(child)
            creates.append((nid, tid))
            queue.append(child)

    # name repeated instances "routine#k"
    for cfg in threads:
        if instance_count.get(cfg.routine, 0) > 1:
            k = sum(1 for other in threads[:cfg.tid]
                    if other.routine == cfg.routine) + 1
            cfg.name = "%s#%d" % (cfg.routine, k)

    # resolve joins: FIFO against this thread's own unjoined children
    joins: list[tuple[int, int]] = []
    children_by_routine: dict[int, dict[str, list[int]]] = {}
    for nid, child_tid in creates:
        parent_tid = None
        for cfg in threads:
            if nid in cfg.nodes:
                parent_tid = cfg.tid
                break
        per = children_by_routine.setdefault(parent_tid, {})
        per.setdefault(threads[child_tid].routine, []).append(child_tid)
    for cfg in threads:
        pending = {r: list(tids) for r, tids
                   in children_by_routine.get(cfg.tid, {}).items()}
        for nid in cfg.node_order():
            stmt = cfg.nodes[nid].stmt
            if isinstance(stmt, SJoin):
                avail = pending.get(stmt.routine, [])
                if not avail:
                    raise JoinWithoutCreateError(
                        f"{cfg.name}: join({stmt.routine}) has no matching "
                        "create in this thread")
                joins.append((nid, avail.pop(0)))

    assertions = [node.id
                  for cfg in threads
                  for node in (cfg.nodes[n] for n in cfg.node_order())
                  if isinstance(node.stmt, SAssert)]

    model = ProgramModel(threads, globals_, creates, joins, assertions, prog)
    _check_normalization(model)
    return model


def _check_normalization(model: ProgramModel):
    globals_ = set(model.globals)
    for node in model.all_nodes():
        s = node.stmt
        accesses = 0
        if isinstance(s, SLoad):
            accesses = 1
        elif isinstance(s, SStore):
            accesses = 1 + len(expr_vars(s.expr) & globals_)
        elif isinstance(s, SLocal):
            accesses = len(expr_vars(s.expr) & globals_)
        elif isinstance(s, (SBranch, SAssert)):
            accesses = len(expr_vars(s.cond) & globals_)
        if accesses > 1 or (accesses == 1 and not isinstance(s, (SLoad, SStore))):
            raise ModelError(
                f"node {model.node_name(node.id)} breaks normalization: {s}")
    for cfg in model.threads:
        preds = cfg.preds()
        if preds[cfg.entry]:
            raise ModelError(f"{cfg.name}: entry node has predecessors")
        reach = reachable_sets(cfg.succs)
        reachable = {cfg.entry} | reach[cfg.entry]
        missing = set(cfg.nodes) - reachable
        if missing:
            raise ModelError(f"{cfg.name}: unreachable nodes {sorted(missing)}")
        for nid, edges in cfg.succs.items():
            want = 2 if isinstance(cfg.nodes[nid].stmt, SBranch) else 1
            if isinstance(cfg.nodes[nid].stmt, SExit):
                want = 0
            if len(edges) != want:
                raise ModelError(
                    f"node {model.node_name(nid)}: arity {len(edges)}, "
                    f"expected {want}")


def ir_dump(model: ProgramModel) -> str:
    """Human-readable listing of the normalized IR, one node per line."""
    from .ast import expr_to_source as ets
    out = []
    for cfg in model.threads:
        out.append(f"thread {cfg.name} (tid {cfg.tid}) entry={cfg.entry} "
                   f"exit={cfg.exit}")
        for nid in cfg.node_order():
            node = cfg.nodes[nid]
            s = node.stmt
            if isinstance(s, SLocal):
                text = f"{s.target} = {ets(s.expr)}"
            elif isinstance(s, SLoad):
                text = f"{s.target} = load {s.var}"
            elif isinstance(s, SStore):
                text = f"store {s.var}, {ets(s.expr)}"
            elif isinstance(s, SBranch):
                text = f"branch {ets(s.cond)}"
            elif isinstance(s, SAssert):
                text = f"assert {ets(s.cond)}"
            elif isinstance(s, SNondet):
                text = f"{s.target} = nondet"
            elif isinstance(s, SCreate):
                text = f"create {s.routine}{list(s.args)}"
            elif isinstance(s, SJoin):
                text = f"join {s.routine}"
            elif isinstance(s, SNop):
                text = "nop"
            else:
                text = "exit"
            succs = ", ".join(
                "%d%s" % (dst, "" if f is None else ("+" if f[2] else "-"))
                for dst, f in cfg.succs[nid])
            out.append(f"  {model.node_name(nid):>10}  {text:<28} -> {succs}")
    return "\n".join(out)
