import random

from mtir.ast import BinOp, IntLit, Var
from mtir.cfg import SLoad, SLocal, SNondet, SStore
from mtir.domain import (
    EMPTY, TOP, AbstractEnv, assert_violable, eval_expr,
    filter_cond, interval, render_env, transfer,
)
from mtir.oracle import eval_concrete

N_CASES = 1000


def iv(lo, hi):
    return interval(lo, hi)


# --- pinned examples ----------------------------------------------------------

def test_join_hull():
    assert iv(0, 5).join(iv(10, 20)) == iv(0, 20)
    assert iv(0, 0).join(iv(10, 10)) == iv(0, 10)


def test_env_join_pointwise():
    a = AbstractEnv({"x": iv(0, 5)})
    b = AbstractEnv({"x": iv(10, 20)})
    assert a.join(b) == AbstractEnv({"x": iv(0, 20)})
    assert AbstractEnv.bot().join(a) == a
    assert a.join(AbstractEnv.bot()) == a


def test_order_examples():
    assert AbstractEnv({"x": iv(0, 2)}).leq(AbstractEnv({"x": iv(0, 5)}))
    e = AbstractEnv({"x": iv(3, 4)})
    assert e.leq(e)
    assert not AbstractEnv({"x": iv(0, 6)}).leq(AbstractEnv({"x": iv(0, 5)}))
    assert AbstractEnv.bot().leq(e)


def test_widen_examples():
    a = AbstractEnv({"x": iv(0, 1)})
    b = AbstractEnv({"x": iv(0, 2)})
    assert a.widen(b) == AbstractEnv({"x": iv(0, None)})
    assert a.widen(a) == a
    assert AbstractEnv({"x": iv(1, 5)}).widen(AbstractEnv({"x": iv(0, 5)})) \
        == AbstractEnv({"x": iv(None, 5)})


def test_transfer_add():
    env = AbstractEnv({"x": iv(0, 5), "y": iv(10, 20)})
    out = transfer(SLocal("x", BinOp("+", Var("x"), Var("y"))), env)
    assert out == AbstractEnv({"x": iv(10, 25), "y": iv(10, 20)})


def test_transfer_nondet():
    env = AbstractEnv({"t": iv(1, 1), "u": iv(2, 3)})
    out = transfer(SNondet("t"), env)
    assert out.get("t") == TOP
    assert out.get("u") == iv(2, 3)


def test_filter_negative_guard_empties():
    # the guarded branch of a scaled positive parameter: 5 * [5,5] = [25,25]
    env = AbstractEnv({"v": iv(5, 5)})
    env = transfer(SLocal("t1", BinOp("*", IntLit(5), Var("v"))), env)
    assert env.get("t1") == iv(25, 25)
    taken = filter_cond(BinOp("<", Var("t1"), IntLit(0)), True, env)
    assert taken.bottom


def test_filter_not_equal_singleton():
    env = AbstractEnv({"t1": iv(5, 5)})
    assert filter_cond(BinOp("!=", Var("t1"), IntLit(5)), True, env).bottom
    wide = AbstractEnv({"t1": iv(0, 5)})
    out = filter_cond(BinOp("!=", Var("t1"), IntLit(5)), True, wide)
    assert out.get("t1") == iv(0, 4)


def test_filter_boolean_variable():
    env = AbstractEnv({"b": iv(0, 1)})
    assert filter_cond(Var("b"), True, env).get("b") == iv(1, 1)
    assert filter_cond(Var("b"), False, env).get("b") == iv(0, 0)


def test_filter_var_vs_var():
    env = AbstractEnv({"a": iv(0, 9), "b": iv(4, 5)})
    out = filter_cond(BinOp("<", Var("a"), Var("b")), True, env)
    assert out.get("a") == iv(0, 4)
    assert out.get("b") == iv(4, 5)


def test_filter_conjunction():
    env = AbstractEnv({"a": iv(0, 9), "b": iv(0, 9)})
    cond = BinOp("&&", BinOp(">", Var("a"), IntLit(3)),
                 BinOp("<", Var("b"), IntLit(2)))
    out = filter_cond(cond, True, env)
    assert out.get("a") == iv(4, 9)
    assert out.get("b") == iv(0, 1)


def test_division_with_zero_divisor_is_top():
    env = AbstractEnv({"a": iv(1, 10), "d": iv(-1, 1)})
    out = eval_expr(BinOp("/", Var("a"), Var("d")), env)
    assert out == TOP


def test_division_endpoints():
    env = AbstractEnv({"a": iv(10, 20), "d": iv(2, None)})
    out = eval_expr(BinOp("/", Var("a"), Var("d")), env)
    assert out == iv(0, 10)


def test_assert_judged_not_assumed():
    env = AbstractEnv({"t": iv(0, 5)})
    assert assert_violable(BinOp("!=", Var("t"), IntLit(5)), env)
    assert not assert_violable(BinOp(">=", Var("t"), IntLit(0)), env)


def test_render():
    env = AbstractEnv({"x": iv(0, 5), "flag": iv(1, 1)})
    assert render_env(env) == "{flag:[1,1], x:[0,5]}"
    assert render_env(AbstractEnv.bot()) == "⊥"
    assert render_env(AbstractEnv({"x": iv(0, None)})) == "{x:[0,+inf]}"


def test_empty_interval_is_canonical():
    assert iv(3, 2) is EMPTY
    assert iv(3, 2) == iv(10, 1)


def test_env_drops_top_and_collapses_empty():
    assert AbstractEnv({"x": TOP}) == AbstractEnv({})
    assert AbstractEnv({"x": EMPTY}).bottom


# --- randomized lattice laws ----------------------------------------------------

def rand_interval(rng):
    choice = rng.random()
    if choice < 0.1:
        return TOP
    lo = None if rng.random() < 0.15 else rng.randint(-20, 20)
    hi = None if rng.random() < 0.15 else rng.randint(-20, 20)
    if lo is not None and hi is not None and lo > hi:
        lo, hi = hi, lo
    return interval(lo, hi)


def rand_env(rng, names=("x", "y", "z")):
    if rng.random() < 0.05:
        return AbstractEnv.bot()
    return AbstractEnv({n: rand_interval(rng) for n in names
                        if rng.random() < 0.8})


def test_lattice_laws():
    rng = random.Random(7)
    for _ in range(N_CASES):
        a, b, c = rand_env(rng), rand_env(rng), rand_env(rng)
        assert a.join(b) == b.join(a)
        assert a.join(b).join(c) == a.join(b.join(c))
        assert a.join(a) == a
        assert a.leq(a.join(b)) and b.leq(a.join(b))
        # partial order
        assert a.leq(a)
        if a.leq(b) and b.leq(a):
            assert a == b
        if a.leq(b) and b.leq(c):
            assert a.leq(c)
        # meet is a lower bound
        assert a.meet(b).leq(a) and a.meet(b).leq(b)


def test_widening_above_join_and_stabilizes():
    rng = random.Random(11)
    names = ("x", "y", "z")
    for _ in range(N_CASES):
        a, b = rand_env(rng, names), rand_env(rng, names)
        w = a.widen(b)
        assert a.join(b).leq(w)
        # an ascending chain closed under widening stabilizes within
        # 2 * |vars| + 1 steps
        cur = a
        steps = 0
        while True:
            nxt = cur.widen(cur.join(rand_env(rng, names)))
            steps += 1
            if nxt == cur:
                break
            cur = nxt
            assert steps <= 2 * len(names) + 1


def test_narrowing_bounds():
    rng = random.Random(13)
    for _ in range(N_CASES):
        a = rand_env(rng)
        b = rand_env(rng).meet(a)  # ensure b <= a
        n = a.narrow(b)
        assert b.leq(n) and n.leq(a)


def rand_stmt(rng, names):
    kind = rng.randrange(5)
    target = rng.choice(names)
    def operand():
        if rng.random() < 0.5:
            return Var(rng.choice(names))
        return IntLit(rng.randint(-5, 5))
    expr = BinOp(rng.choice(("+", "-", "*", "/")), operand(), operand())
    if kind == 0:
        return SLocal(target, expr)
    if kind == 1:
        return SLocal(target, operand())
    if kind == 2:
        return SNondet(target)
    if kind == 3:
        return SLoad(target, rng.choice(names))
    return SStore(target, operand())


def test_transfer_monotone():
    rng = random.Random(17)
    names = ("x", "y")
    for _ in range(N_CASES):
        st = rand_stmt(rng, names)
        a = rand_env(rng, names)
        b = rand_env(rng, names).join(a)  # a <= b by construction
        assert transfer(st, a).leq(transfer(st, b)), (st, a, b)


def test_filter_monotone_and_sound():
    rng = random.Random(19)
    names = ("x", "y")
    ops = ("<", "<=", ">", ">=", "==", "!=")
    for _ in range(N_CASES):
        op = rng.choice(ops)
        right = Var("y") if rng.random() < 0.5 else IntLit(rng.randint(-5, 5))
        cond = BinOp(op, Var("x"), right)
        a = rand_env(rng, names)
        b = rand_env(rng, names).join(a)
        pol = rng.random() < 0.5
        fa, fb = filter_cond(cond, pol, a), filter_cond(cond, pol, b)
        assert fa.leq(fb)
        assert fa.leq(a)  # filtering only refines


def test_concretization_soundness_vs_concrete_eval():
    # the concrete step of any state within gamma(env) lands in
    # gamma(transfer(env))
    rng = random.Random(23)
    names = ("x", "y")
    for _ in range(N_CASES):
        st = rand_stmt(rng, names)
        if isinstance(st, SNondet):
            continue
        state = {n: rng.randint(-6, 6) for n in names}
        env = AbstractEnv({n: interval(state[n] - rng.randint(0, 3),
                                       state[n] + rng.randint(0, 3))
                           for n in names})
        out = transfer(st, env)
        if isinstance(st, (SLocal,)):
            value = eval_concrete(st.expr, state)
            assert out.get(st.target).contains(value), (st, state, env)
        elif isinstance(st, SLoad):
            assert out.get(st.target).contains(state[st.var])
        elif isinstance(st, SStore):
            value = eval_concrete(st.expr, state)
            assert out.get(st.var).contains(value)
