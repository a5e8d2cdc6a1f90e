import pytest

from conftest import node_ids
from mtir.ast import expr_vars
from mtir.cfg import (
    SAssert, SBranch, SExit, SLoad, SLocal, SNondet, SStore, build_model,
    ir_dump, loads_of, stores_of,
)
from mtir.errors import (
    CreateInLoopError, JoinWithoutCreateError, ModelError,
    RecursiveCreateError,
)
from mtir.parser import parse
from mtir.corpus import PROGRAMS, source


def model_of(text):
    return build_model(parse(text))


def test_global_increment_normalization():
    # x = x + 1 splits into load, local arithmetic, store
    model = model_of("int x = 0;\nthread main() { x = x + 1; }")
    kinds = [type(model.node(n).stmt)
             for n in model.thread(0).node_order()]
    assert kinds == [SLoad, SLocal, SStore, SExit]
    load = model.thread(0).nodes[0].stmt
    store = model.thread(0).nodes[2].stmt
    assert load.var == "x"
    assert store.var == "x"


def test_store_of_constant_is_single_node():
    model = model_of("int x = 0;\nthread main() { x = 4; x = 5; }")
    kinds = [type(model.node(n).stmt) for n in model.thread(0).node_order()]
    assert kinds == [SStore, SStore, SExit]


def test_load_into_local_is_single_node():
    model = model_of("int x = 0;\nthread main() { int b = x; }")
    kinds = [type(model.node(n).stmt) for n in model.thread(0).node_order()]
    assert kinds == [SLoad, SExit]


def test_empty_body_only_exit():
    model = model_of("thread t() { }\nthread main() { create(t); }")
    child = model.thread_named("t")
    assert [type(child.nodes[n].stmt) for n in child.node_order()] == [SExit]
    assert child.entry == child.exit


def test_condition_loads_hoisted():
    model = model_of("int x = 0;\nthread main() { if (x > 1) { x = 0; } }")
    kinds = [type(model.node(n).stmt) for n in model.thread(0).node_order()]
    assert kinds == [SLoad, SBranch, SStore, SExit]
    branch = model.thread(0).nodes[1].stmt
    assert not (expr_vars(branch.cond) & set(model.globals))


def test_while_reloads_condition_each_iteration():
    model = model_of("int x = 0;\nthread main() { while (x < 3) { x = x + 1; } }")
    cfg = model.thread(0)
    cond_load = loads_of(cfg)[0]  # the hoisted load feeding the branch
    body_store = stores_of(cfg)[-1]
    # the loop body flows back to the condition load, so it re-executes
    assert any(dst == cond_load for dst, _ in cfg.succs[body_store])


def test_param_guard_instances():
    model = model_of(source("param_guard"))
    assert len(model.threads) == 3
    names = [cfg.name for cfg in model.threads]
    assert names == ["main", "thr#1", "thr#2"]
    assert model.thread_named("thr#1").params == {"v": 5}
    assert model.thread_named("thr#2").params == {"v": 10}
    # each instance was created at its own site
    sites = [model.node_name(cfg.creation_site)
             for cfg in model.threads if cfg.creation_site is not None]
    assert sites == ["t0.10", "t0.11"]


def test_single_thread_model():
    model = model_of("thread main() { }")
    assert len(model.threads) == 1
    assert model.creates == []


def test_loop_reader_creates():
    model = model_of(source("loop_reader"))
    assert len(model.threads) == 3
    names = node_ids(model)
    created = [(model.node_name(site), model.thread(tid).name)
               for site, tid in model.creates]
    assert created == [("t0.3", "thread2"), ("t0.7", "thread3")]
    assert names["t0.3"] == model.threads[1].creation_site


def test_loads_of_flag_sync():
    model = model_of(source("flag_sync"))
    t2 = model.thread_named("thread2")
    assert [model.node_name(n) for n in loads_of(t2)] == ["t2.9", "t2.11"]
    t1 = model.thread_named("thread1")
    assert loads_of(t1) == []
    assert [model.node_name(n) for n in stores_of(t1)] \
        == ["t1.4", "t1.5", "t1.6"]


def test_loads_of_disjoint_chains():
    model = model_of(source("disjoint_chains"))
    t2 = model.thread_named("thread2")
    loads = loads_of(t2)
    assert [model.node(n).stmt.var for n in loads] == ["x", "y"]


def test_assertion_registry():
    model = model_of(source("disjoint_chains"))
    assert len(model.assertions) == 2
    assert all(isinstance(model.node(n).stmt, SAssert)
               for n in model.assertions)


@pytest.mark.parametrize("name", PROGRAMS)
def test_normalization_single_global_access(name):
    model = model_of(source(name))
    globals_ = set(model.globals)
    for node in model.all_nodes():
        stmt = node.stmt
        if isinstance(stmt, SLoad):
            continue
        if isinstance(stmt, SStore):
            assert not (expr_vars(stmt.expr) & globals_)
        elif isinstance(stmt, (SBranch, SAssert)):
            assert not (expr_vars(stmt.cond) & globals_)
        elif isinstance(stmt, SLocal):
            assert not (expr_vars(stmt.expr) & globals_)


@pytest.mark.parametrize("name", PROGRAMS)
def test_deterministic_build(name):
    one = ir_dump(model_of(source(name)))
    two = ir_dump(model_of(source(name)))
    assert one == two


def test_branch_arity():
    model = model_of(source("flag_sync"))
    for cfg in model.threads:
        for n, edges in cfg.succs.items():
            stmt = cfg.nodes[n].stmt
            if isinstance(stmt, SBranch):
                assert len(edges) == 2
            elif isinstance(stmt, SExit):
                assert edges == []
            else:
                assert len(edges) == 1


def test_entry_has_no_predecessors():
    model = model_of("int x = 0;\nthread main() { while (*) { x = 1; } }")
    cfg = model.thread(0)
    assert cfg.preds()[cfg.entry] == []


def test_recursive_create_rejected():
    with pytest.raises(RecursiveCreateError):
        model_of("thread a() { create(b); }\n"
                 "thread b() { create(a); }\n"
                 "thread main() { create(a); }")


def test_self_create_rejected():
    with pytest.raises(RecursiveCreateError):
        model_of("thread a() { create(a); }\nthread main() { create(a); }")


def test_create_in_loop_rejected():
    with pytest.raises(CreateInLoopError):
        model_of("thread a() { }\n"
                 "thread main() { while (*) { create(a); } }")


def test_join_without_create():
    with pytest.raises(JoinWithoutCreateError):
        model_of("thread a() { }\nthread main() { join(a); }")


def test_join_not_own_child():
    with pytest.raises(JoinWithoutCreateError):
        model_of("thread a() { join(b); }\nthread b() { }\n"
                 "thread main() { create(a); create(b); }")


def test_join_fifo_matching():
    model = model_of("thread a() { }\n"
                     "thread main() { create(a); create(a); join(a); join(a); }")
    assert [tid for _, tid in model.creates] == [1, 2]
    assert [tid for _, tid in model.joins] == [1, 2]


def test_wrong_arity_create():
    with pytest.raises(ModelError):
        model_of("thread a(int v) { }\nthread main() { create(a); }")


def test_nondet_statement():
    model = model_of("thread main() { int a = *; }")
    assert isinstance(model.thread(0).nodes[0].stmt, SNondet)


def test_param_shadowing_global_rejected():
    with pytest.raises(ModelError):
        model_of("int v = 0;\nthread a(int v) { }\n"
                 "thread main() { create(a, 1); }")


def test_local_declaration_shadowing_global_rejected():
    with pytest.raises(ModelError):
        model_of("int x = 0;\nthread main() { int x = 1; }")
