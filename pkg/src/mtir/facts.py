"""Finite relations over CFG nodes, Horn rules, and the feasibility engine.

The engine decides whether an interference combination (a store-to-load
flow assignment) can be realized by any execution.  It works purely on
statement ordering: base relations are extracted from the CFGs, a small
fixed rule set derives must-happen-before facts, and a combination is
infeasible when the closure contains a contradiction.

Ordering facts come in two strengths and the distinction is what keeps
transitive reasoning sound in the presence of branches:

  MHBS(m,n)  "strong": if n executes then m executed, earlier.
             Dominance, thread creation (a child node running means its
             create ran), joins (code after a join means the child
             exited), and the virtual initial stores all have this shape,
             and it survives unrestricted transitive composition.

  MHB(m,n)   "weak": in every execution where both m and n run, m runs
             first.  Same-thread program order (m reaches n, n can never
             get back to m) is weak, and so is everything rule R3
             derives.  A weak edge followed by strong edges composes (the
             strong suffix forces the middle node to have executed); two
             weak edges do not, unless the middle node is known to
             execute because it is an endpoint of the combination under
             test (relation Executes, seeded from the ReadsFrom facts).

Rules (MNRF = must-not-read-from):

  S1:  MHBS(m,n)  <- Dominates(m,n), NotReachableFrom(m,n)
  S2a: MHBS(m,n)  <- ThCreates(m,n)
  S2b: MHBS(n,m)  <- ThJoins(m,n)
  S4:  MHBS(a,c)  <- MHBS(a,b), MHBS(b,c)
  SW:  MHB(m,n)   <- MHBS(m,n)
  PO:  MHB(m,n)   <- Reaches(m,n), NotReachableFrom(m,n)
  W4:  MHB(a,c)   <- MHB(a,b), MHBS(b,c)
  W4e: MHB(a,c)   <- MHB(a,b), MHB(b,c), Executes(b)
  R3:  MHB(l,s2)  <- ReadsFrom(l,s1), MHB(s1,s2),
                     IsLoad(l,v), IsStore(s1,v), IsStore(s2,v)
  R5:  MNRF(a,b)  <- MHB(a,b)
  R6:  MNRF(l2,s1) <- ReadsFrom(l1,s1), MHB(l1,s2), MHBS(s2,l2),
                      IsLoad(l1,v), IsLoad(l2,v), IsStore(s2,v)
  R6e: MNRF(l2,s1) <- ReadsFrom(l1,s1), MHB(l1,s2), MHB(s2,l2),
                      Executes(s2), IsLoad(l1,v), IsLoad(l2,v),
                      IsStore(s2,v)

R3 is sound with a weak premise because its s1 is a flow source and
therefore executes; its conclusion is weak.  R6 needs the overwriting
store s2 to actually run before l2, hence the strong (or executing)
premise.  A contradiction is ReadsFrom(l,s) together with MNRF(l,s), or
an MHB self-loop on a node that executes.

Initial values are modeled as one virtual store node per global
(`init:<var>`) that strongly precedes every real node.  A load that can
only ever observe the initial value through its own environment (no store
to the variable reaches it in its own thread or on the creating chain
before the create sites) contributes ReadsFrom(load, init:<var>) when a
combination assigns it the self source.
"""

from __future__ import annotations

from dataclasses import dataclass

from .cfg import (
    ProgramModel, dominator_sets, is_load, is_store, loads_of,
    reachable_sets,
)

DERIVED = ("MHBS", "MHB", "MustNotReadFrom")
RELATIONS = (
    "Dominates", "Reaches", "NotReachableFrom", "ThCreates", "ThJoins",
    "IsLoad", "IsStore", "ReadsFrom", "Executes",
) + DERIVED


@dataclass(frozen=True)
class Rule:
    name: str
    head: tuple  # (relation, variable tuple)
    body: tuple  # of (relation, variable tuple)


RULES = (
    Rule("S1", ("MHBS", ("m", "n")),
         (("Dominates", ("m", "n")), ("NotReachableFrom", ("m", "n")))),
    Rule("S2a", ("MHBS", ("m", "n")), (("ThCreates", ("m", "n")),)),
    Rule("S2b", ("MHBS", ("n", "m")), (("ThJoins", ("m", "n")),)),
    Rule("S4", ("MHBS", ("a", "c")),
         (("MHBS", ("a", "b")), ("MHBS", ("b", "c")))),
    Rule("SW", ("MHB", ("m", "n")), (("MHBS", ("m", "n")),)),
    Rule("PO", ("MHB", ("m", "n")),
         (("Reaches", ("m", "n")), ("NotReachableFrom", ("m", "n")))),
    Rule("W4", ("MHB", ("a", "c")),
         (("MHB", ("a", "b")), ("MHBS", ("b", "c")))),
    Rule("W4e", ("MHB", ("a", "c")),
         (("MHB", ("a", "b")), ("MHB", ("b", "c")), ("Executes", ("b",)))),
    Rule("R3", ("MHB", ("l", "s2")),
         (("ReadsFrom", ("l", "s1")), ("MHB", ("s1", "s2")),
          ("IsLoad", ("l", "v")), ("IsStore", ("s1", "v")),
          ("IsStore", ("s2", "v")))),
    Rule("R5", ("MustNotReadFrom", ("a", "b")), (("MHB", ("a", "b")),)),
    Rule("R6", ("MustNotReadFrom", ("l2", "s1")),
         (("ReadsFrom", ("l1", "s1")), ("MHB", ("l1", "s2")),
          ("MHBS", ("s2", "l2")), ("IsLoad", ("l1", "v")),
          ("IsLoad", ("l2", "v")), ("IsStore", ("s2", "v")))),
    Rule("R6e", ("MustNotReadFrom", ("l2", "s1")),
         (("ReadsFrom", ("l1", "s1")), ("MHB", ("l1", "s2")),
          ("MHB", ("s2", "l2")), ("Executes", ("s2",)),
          ("IsLoad", ("l1", "v")), ("IsLoad", ("l2", "v")),
          ("IsStore", ("s2", "v")))),
)

# R5 only feeds the contradiction check (MustNotReadFrom appears in no
# rule body), so feasibility queries inline it instead of materializing
# one MustNotReadFrom tuple per MHB tuple.
RULES_QUERY = tuple(rule for rule in RULES if rule.name != "R5")


def init_node(var: str) -> str:
    return "init:%s" % var


class FactBase:
    """Named finite relations of fixed-width tuples."""

    def __init__(self, relations=None):
        self.relations = {name: set() for name in RELATIONS}
        if relations:
            for name, tuples in relations.items():
                self.relations[name] = set(tuples)

    def add(self, name, tup):
        self.relations[name].add(tup)

    def has(self, name, tup) -> bool:
        return tup in self.relations[name]

    def copy(self) -> "FactBase":
        return FactBase(self.relations)

    def query_copy(self) -> "FactBase":
        """Copy for one feasibility query: the relations a query can grow
        are private, the rest are shared.  MHBS is shared too: no rule
        derives strong facts from ReadsFrom or Executes, so queries never
        write to it."""
        out = FactBase.__new__(FactBase)
        out.relations = dict(self.relations)
        for name in ("MHB", "MustNotReadFrom", "ReadsFrom", "Executes"):
            out.relations[name] = set(self.relations[name])
        return out

    def __eq__(self, other):
        return isinstance(other, FactBase) and self.relations == other.relations

    def counts(self):
        return {name: len(tuples) for name, tuples in self.relations.items()
                if tuples}


def _match(pattern, tup, bindings):
    out = bindings
    copied = False
    for var, val in zip(pattern, tup):
        if var in out:
            if out[var] != val:
                return None
        else:
            if not copied:
                out = dict(out)
                copied = True
            out[var] = val
    return out if copied else dict(out)


class _Indexes:
    """Lazy per-relation indexes on the first or second tuple position."""

    def __init__(self, facts: FactBase):
        self.facts = facts
        self.by_pos: dict = {}

    def _index(self, rel, pos):
        index = self.by_pos.get((rel, pos))
        if index is None:
            index = {}
            for tup in self.facts.relations[rel]:
                index.setdefault(tup[pos], []).append(tup)
            self.by_pos[(rel, pos)] = index
        return index

    def candidates(self, rel, pattern, bindings):
        for pos, var in enumerate(pattern):
            if var in bindings:
                return self._index(rel, pos).get(bindings[var], ())
        return self.facts.relations[rel]


def _eval_from(atoms, bindings, indexes, emit):
    if not atoms:
        emit(bindings)
        return
    (rel, pattern), rest = atoms[0], atoms[1:]
    if all(v in bindings for v in pattern):
        tup = tuple(bindings[v] for v in pattern)
        if tup in indexes.facts.relations[rel]:
            _eval_from(rest, bindings, indexes, emit)
        return
    for tup in indexes.candidates(rel, pattern, bindings):
        got = _match(pattern, tup, bindings)
        if got is not None:
            _eval_from(rest, got, indexes, emit)


def fixpoint(facts: FactBase, rules=RULES, delta=None) -> FactBase:
    """Close `facts` under `rules` in place, semi-naive: each round only
    re-joins tuples derived in the previous round.  `delta` seeds the
    first round; by default every existing tuple is new."""
    if delta is None:
        delta = {name: set(tuples) for name, tuples in facts.relations.items()}
    else:
        delta = {name: set(tuples) for name, tuples in delta.items()}

    while any(delta.values()):
        new = {}
        indexes = _Indexes(facts)
        for rule in rules:
            head_rel, head_pat = rule.head
            for i, (rel, pattern) in enumerate(rule.body):
                dset = delta.get(rel)
                if not dset:
                    continue
                rest = rule.body[:i] + rule.body[i + 1:]

                def emit(bindings, head_rel=head_rel, head_pat=head_pat):
                    tup = tuple(bindings[v] for v in head_pat)
                    if tup not in facts.relations[head_rel] \
                            and tup not in new.get(head_rel, ()):
                        new.setdefault(head_rel, set()).add(tup)

                for tup in dset:
                    got = _match(pattern, tup, {})
                    if got is not None:
                        _eval_from(rest, got, indexes, emit)
        for name, tuples in new.items():
            facts.relations[name] |= tuples
        delta = new
    return facts


def naive_fixpoint(facts: FactBase, rules=RULES) -> FactBase:
    """Reference closure: iterate every rule over every tuple until no
    change.  Used to cross-check the semi-naive engine."""
    changed = True
    while changed:
        changed = False
        indexes = _Indexes(facts)
        pending = []
        for rule in rules:
            head_rel, head_pat = rule.head

            def emit(bindings, head_rel=head_rel, head_pat=head_pat):
                tup = tuple(bindings[v] for v in head_pat)
                if tup not in facts.relations[head_rel]:
                    pending.append((head_rel, tup))

            _eval_from(rule.body, {}, indexes, emit)
        for head_rel, tup in pending:
            if tup not in facts.relations[head_rel]:
                facts.relations[head_rel].add(tup)
                changed = True
    return facts


def contradiction(facts: FactBase):
    """Returns a witness of unsatisfiability, or None.

    A self-loop only contradicts at a node that is known to execute
    (weak ordering facts are vacuous for statements an execution skips).
    """
    for pair in facts.relations["ReadsFrom"]:
        if pair in facts.relations["MustNotReadFrom"]:
            return ("reads-from-conflict", pair)
    mhb = facts.relations["MHB"]
    for (node,) in facts.relations["Executes"]:
        if (node, node) in mhb:
            return ("mhb-cycle", (node, node))
    return None


# --- base fact extraction ----------------------------------------------------

def _portal_closure(per_thread_after: dict, portals) -> dict:
    """Transitive closure of per-thread successor sets composed through
    portal edges; returns node -> set of strictly later nodes."""
    ordered_after: dict = {}

    def order_from(e, visiting=()):
        # every node at-or-after e, following portal edges
        if e in ordered_after:
            return ordered_after[e]
        if e in visiting:
            raise RuntimeError("portal cycle through %r" % (e,))
        out = {e} | per_thread_after[e]
        for src, dst in portals:
            if src in out:
                out |= order_from(dst, visiting + (e,))
        ordered_after[e] = out
        return out

    closed = {m: set(after) for m, after in per_thread_after.items()}
    for src, dst in portals:
        targets = order_from(dst)
        for m, after in per_thread_after.items():
            if src in after or m == src:
                closed[m] |= targets
    return closed


def build_base_facts(model: ProgramModel) -> FactBase:
    """Extract the combination-independent relations and close the two
    ordering strengths (no ReadsFrom facts exist yet, so nothing else
    fires).

    The closures are built directly instead of through the rule engine:
    per-thread dominance and program order are already transitive, so
    the full relations are those per-thread orders composed through the
    create and join edges, with the weak relation additionally allowing
    one program-order step before a strong chain.  `test_facts` checks
    this equals the rule-engine closure.
    """
    facts = FactBase()
    po: dict = {}  # node -> strictly later nodes of the same thread (weak)
    dom_after: dict = {}  # node -> nodes it strictly dominates (strong)
    for cfg in model.threads:
        reach = reachable_sets(cfg.succs)
        nodes = cfg.node_order()
        dom = dominator_sets(cfg.succs, cfg.entry)
        for n in nodes:
            dom_after.setdefault(n, set())
            for m in dom[n]:
                if m != n:
                    facts.add("Dominates", (m, n))
                    if m not in reach[n]:  # loop guard, as in rule S1
                        dom_after.setdefault(m, set()).add(n)
        for m in nodes:
            after = set()
            for n in nodes:
                if n in reach[m]:
                    facts.add("Reaches", (m, n))
                    if m not in reach[n]:
                        after.add(n)
                if m not in reach[n]:
                    facts.add("NotReachableFrom", (m, n))
            po[m] = after
        for n in nodes:
            node = cfg.nodes[n]
            if is_load(node):
                facts.add("IsLoad", (n, node.stmt.var))
            elif is_store(node):
                facts.add("IsStore", (n, node.stmt.var))

    portals = []  # (src, dst): dst's thread region starts after src
    for create_node, child_tid in model.creates:
        child_entry = model.thread(child_tid).entry
        facts.add("ThCreates", (create_node, child_entry))
        portals.append((create_node, child_entry))
    for join_node, child_tid in model.joins:
        child_exit = model.thread(child_tid).exit
        facts.add("ThJoins", (join_node, child_exit))
        portals.append((child_exit, join_node))

    strong_after = _portal_closure(dom_after, portals)
    mhbs = facts.relations["MHBS"]
    for m, after in strong_after.items():
        for n in after:
            mhbs.add((m, n))

    # weak = strong, plus program order, plus one program-order step
    # followed by a strong chain (W4); strong-then-weak does not compose
    mhb = facts.relations["MHB"]
    mhb |= mhbs
    for m, after in po.items():
        for b in after:
            mhb.add((m, b))
            for n in strong_after[b]:
                mhb.add((m, n))

    all_nodes = [node.id for node in model.all_nodes()]
    for var in model.globals:
        init = init_node(var)
        facts.add("IsStore", (init, var))
        for n in all_nodes:
            mhbs.add((init, n))
            mhb.add((init, n))

    return facts


def initial_value_loads(model: ProgramModel) -> set[int]:
    """Loads whose self-read can only ever observe the global's initial
    value: no store to the variable reaches the load inside its own
    thread, the load is not on a cycle, and no ancestor thread can store
    the variable before the create site that spawns the chain."""
    reach_by_tid = {cfg.tid: reachable_sets(cfg.succs) for cfg in model.threads}
    out = set()
    for cfg in model.threads:
        reach = reach_by_tid[cfg.tid]
        for l in loads_of(cfg):
            var = cfg.nodes[l].stmt.var
            if l in reach[l]:  # self-reachable: handled by merged sources
                continue
            if any(l in reach[s] for s in cfg.node_order()
                   if is_store(cfg.nodes[s]) and cfg.nodes[s].stmt.var == var):
                continue
            clean = True
            cur = cfg
            while cur.creation_site is not None and clean:
                parent = model.thread(model.node(cur.creation_site).tid)
                preach = reach_by_tid[parent.tid]
                for s in parent.node_order():
                    node = parent.nodes[s]
                    if is_store(node) and node.stmt.var == var \
                            and cur.creation_site in preach[s]:
                        clean = False
                        break
                cur = parent
            if clean:
                out.add(l)
    return out


# --- feasibility engine --------------------------------------------------------

class FeasibilityEngine:
    """Query interface over a fixed model: base facts are computed once,
    every combination check works on a private copy and leaves the base
    untouched."""

    def __init__(self, model: ProgramModel):
        self.model = model
        self.base = build_base_facts(model)
        self.initial_loads = initial_value_loads(model)
        self._cache: dict[frozenset, bool] = {}
        self.queries = 0

    def must_happen_before(self, a: int, b: int) -> bool:
        """Combination-independent ordering query (base closure only)."""
        return (a, b) in self.base.relations["MHB"]

    def reads_from_facts(self, combination) -> frozenset:
        """ReadsFrom tuples a combination pins down.  Remote-store sources
        name their store; a self source names the virtual initial store
        when that is the only value the load could see; merged loop
        sources stay unconstrained."""
        from .interp import SelfSource, StoreSource

        out = []
        for load, source in combination.items():
            if isinstance(source, StoreSource):
                out.append((load, source.store))
            elif isinstance(source, SelfSource) and load in self.initial_loads:
                var = self.model.node(load).stmt.var
                out.append((load, init_node(var)))
        return frozenset(out)

    @staticmethod
    def _executes(rf) -> set:
        # every endpoint of a realized flow runs in the witnessing execution
        return {(node,) for pair in rf for node in pair}

    def check_facts(self, reads_from):
        """Close base + the given ReadsFrom facts under the full rule set;
        returns (feasible, closed fact base) so callers can inspect the
        derivation.  Rule 5 makes MustNotReadFrom explicit here, so the
        dump carries the whole derivation."""
        work = self.base.copy()
        rf = set(reads_from)
        executes = self._executes(rf)
        work.relations["ReadsFrom"] |= rf
        work.relations["Executes"] |= executes
        delta = {"ReadsFrom": set(rf), "Executes": set(executes),
                 "MHB": set(work.relations["MHB"])}
        fixpoint(work, RULES, delta=delta)
        return contradiction(work) is None, work

    def _feasible(self, rf: frozenset) -> bool:
        """Hot path: Rule 5 stays implicit (MustNotReadFrom feeds no rule
        body, so `ReadsFrom meets MHB` is the same contradiction)."""
        work = self.base.query_copy()
        executes = self._executes(rf)
        work.relations["ReadsFrom"] |= rf
        work.relations["Executes"] |= executes
        fixpoint(work, RULES_QUERY,
                 delta={"ReadsFrom": set(rf), "Executes": set(executes)})
        mhb = work.relations["MHB"]
        mnrf = work.relations["MustNotReadFrom"]
        for pair in rf:
            if pair in mhb or pair in mnrf:
                return False
        for (node,) in work.relations["Executes"]:
            if (node, node) in mhb:
                return False
        return True

    def is_feasible(self, combination) -> bool:
        """Alg-style Add / Satisfiable / Remove in one step: the base
        facts are never mutated."""
        rf = self.reads_from_facts(combination)
        if not rf:
            return True
        cached = self._cache.get(rf)
        if cached is None:
            self.queries += 1
            cached = self._feasible(rf)
            self._cache[rf] = cached
        return cached


def dump_facts(model: ProgramModel, facts: FactBase,
               relations=("MHB", "MustNotReadFrom", "ReadsFrom")) -> str:
    """One fact per line, `REL(a, b)`, with stable `t<thread>.<line>`
    node names; consumed by golden tests."""
    def name(x):
        if isinstance(x, int):
            return model.node_name(x)
        return str(x)

    lines = []
    for rel in relations:
        for tup in facts.relations[rel]:
            lines.append("%s(%s)" % (rel, ", ".join(name(x) for x in tup)))
    return "\n".join(sorted(lines))
