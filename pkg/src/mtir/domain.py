"""Interval abstract domain and abstract environments.

Values are mathematical integers; booleans embed as intervals over
{0, 1}.  Bounds of None stand for -inf (lo) and +inf (hi).  The empty
interval has the single canonical representation EMPTY; an environment
never binds a variable to EMPTY, it collapses to Bottom instead.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ast import BinOp, BoolLit, Expr, IntLit, UnaryOp, Var
from .cfg import (
    SAssert, SBranch, SCreate, SExit, SJoin, SLoad, SLocal, SNondet, SNop,
    SStore,
)
from .errors import UnknownVariableError


# --- extended-integer bound helpers -----------------------------------------
# lo bounds: None = -inf, hi bounds: None = +inf

def _lo_min(a, b):
    if a is None or b is None:
        return None
    return min(a, b)


def _lo_max(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return max(a, b)


def _hi_max(a, b):
    if a is None or b is None:
        return None
    return max(a, b)


def _hi_min(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def _lo_leq(a, b):
    """a <= b where both are lower bounds (None = -inf)."""
    if a is None:
        return True
    if b is None:
        return False
    return a <= b


def _hi_leq(a, b):
    """a <= b where both are upper bounds (None = +inf)."""
    if b is None:
        return True
    if a is None:
        return False
    return a <= b


@dataclass(frozen=True)
class Interval:
    lo: int | None
    hi: int | None
    empty: bool = False

    def __post_init__(self):
        if self.empty:
            if (self.lo, self.hi) != (1, 0):
                raise ValueError("empty interval has one representation")
        elif self.lo is not None and self.hi is not None \
                and self.lo > self.hi:
            raise ValueError(f"malformed interval [{self.lo}, {self.hi}]")

    def __repr__(self):
        if self.empty:
            return "[]"
        lo = "-inf" if self.lo is None else str(self.lo)
        hi = "+inf" if self.hi is None else str(self.hi)
        return f"[{lo},{hi}]"

    def is_top(self):
        return not self.empty and self.lo is None and self.hi is None

    def contains(self, value: int) -> bool:
        if self.empty:
            return False
        return _lo_leq(self.lo, value) and _hi_leq(value, self.hi)

    def leq(self, other: "Interval") -> bool:
        if self.empty:
            return True
        if other.empty:
            return False
        return _lo_leq(other.lo, self.lo) and _hi_leq(self.hi, other.hi)

    def join(self, other: "Interval") -> "Interval":
        if self.empty:
            return other
        if other.empty:
            return self
        return Interval(_lo_min(self.lo, other.lo), _hi_max(self.hi, other.hi))

    def meet(self, other: "Interval") -> "Interval":
        if self.empty or other.empty:
            return EMPTY
        lo = _lo_max(self.lo, other.lo)
        hi = _hi_min(self.hi, other.hi)
        if lo is not None and hi is not None and lo > hi:
            return EMPTY
        return Interval(lo, hi)

    def widen(self, other: "Interval") -> "Interval":
        """Unstable bounds jump to infinity."""
        if self.empty:
            return other
        if other.empty:
            return self
        lo = self.lo if _lo_leq(self.lo, other.lo) else None
        hi = self.hi if _hi_leq(other.hi, self.hi) else None
        return Interval(lo, hi)

    def narrow(self, other: "Interval") -> "Interval":
        """Refine only infinite bounds using the descending iterate."""
        if self.empty:
            return self
        if other.empty:
            return other
        lo = other.lo if self.lo is None else self.lo
        hi = other.hi if self.hi is None else self.hi
        if lo is not None and hi is not None and lo > hi:
            return EMPTY
        return Interval(lo, hi)


TOP = Interval(None, None)
EMPTY = Interval(1, 0, empty=True)


def const(value) -> Interval:
    value = int(value)
    return Interval(value, value)


def interval(lo, hi) -> Interval:
    if lo is not None and hi is not None and lo > hi:
        return EMPTY
    return Interval(lo, hi)


# --- interval arithmetic ------------------------------------------------------

def _add(a: Interval, b: Interval) -> Interval:
    if a.empty or b.empty:
        return EMPTY
    lo = None if a.lo is None or b.lo is None else a.lo + b.lo
    hi = None if a.hi is None or b.hi is None else a.hi + b.hi
    return Interval(lo, hi)


def _neg(a: Interval) -> Interval:
    if a.empty:
        return EMPTY
    return Interval(None if a.hi is None else -a.hi,
                    None if a.lo is None else -a.lo)


def _mul(a: Interval, b: Interval) -> Interval:
    if a.empty or b.empty:
        return EMPTY
    # candidate products over (lo, hi) pairs; infinities tracked as
    # ("-inf"/"+inf") with 0 * inf = 0 (set product, not a limit)
    def prod(x, xs, y, ys):
        # xs/ys: -1 for a lo bound, +1 for a hi bound (sign of infinity)
        if x is None and y is None:
            return None, xs * ys
        if x is None:
            if y == 0:
                return 0, 0
            return None, xs * (1 if y > 0 else -1)
        if y is None:
            if x == 0:
                return 0, 0
            return None, ys * (1 if x > 0 else -1)
        return x * y, 0

    candidates = [
        prod(a.lo, -1, b.lo, -1),
        prod(a.lo, -1, b.hi, +1),
        prod(a.hi, +1, b.lo, -1),
        prod(a.hi, +1, b.hi, +1),
    ]
    finite = [v for v, s in candidates if v is not None]
    has_neg_inf = any(v is None and s < 0 for v, s in candidates)
    has_pos_inf = any(v is None and s > 0 for v, s in candidates)
    lo = None if has_neg_inf else min(finite)
    hi = None if has_pos_inf else max(finite)
    return Interval(lo, hi)


def _div(a: Interval, b: Interval) -> Interval:
    """Floor division; a divisor interval containing 0 yields top."""
    if a.empty or b.empty:
        return EMPTY
    if b.contains(0):
        return TOP

    finite, neg_inf, pos_inf = [], False, False

    def consider(x, x_sign, y, y_sign):
        # x_sign / y_sign: -1 if the bound is a lo (-inf when None), +1 if hi
        nonlocal neg_inf, pos_inf
        if x is None and y is None:
            return  # extremes are covered by the finite-partner pairs
        if x is None:
            sign = x_sign * (1 if y > 0 else -1)
            if sign < 0:
                neg_inf = True
            else:
                pos_inf = True
        elif y is None:
            # quotient limit at an infinite divisor: 0 or -1 (floor)
            same_side = (x >= 0) if y_sign > 0 else (x <= 0)
            finite.append(0 if same_side else -1)
        else:
            finite.append(x // y)

    for x, xs in ((a.lo, -1), (a.hi, +1)):
        for y, ys in ((b.lo, -1), (b.hi, +1)):
            consider(x, xs, y, ys)
    lo = None if neg_inf else min(finite)
    hi = None if pos_inf else max(finite)
    return Interval(lo, hi)


def _truth(a: Interval) -> Interval:
    """Boolean image of an interval: nonzero is true."""
    if a.empty:
        return EMPTY
    if a.lo == a.hi == 0:
        return const(0)
    if not a.contains(0):
        return const(1)
    return interval(0, 1)


def _not(a: Interval) -> Interval:
    t = _truth(a)
    if t.empty:
        return EMPTY
    if t.lo == t.hi:
        return const(1 - t.lo)
    return interval(0, 1)


def _cmp(op: str, a: Interval, b: Interval) -> Interval:
    if a.empty or b.empty:
        return EMPTY
    always = never = False
    if op == "<":
        always = (a.hi is not None and b.lo is not None and a.hi < b.lo)
        never = (b.hi is not None and a.lo is not None and b.hi <= a.lo)
    elif op == "<=":
        always = (a.hi is not None and b.lo is not None and a.hi <= b.lo)
        never = (b.hi is not None and a.lo is not None and b.hi < a.lo)
    elif op == ">":
        return _cmp("<", b, a)
    elif op == ">=":
        return _cmp("<=", b, a)
    elif op == "==":
        always = (a.lo == a.hi == b.lo == b.hi and a.lo is not None)
        never = a.meet(b).empty
    elif op == "!=":
        inner = _cmp("==", a, b)
        return _not(inner)
    else:
        raise ValueError(op)
    if always:
        return const(1)
    if never:
        return const(0)
    return interval(0, 1)


def _and(a: Interval, b: Interval) -> Interval:
    ta, tb = _truth(a), _truth(b)
    if ta.empty or tb.empty:
        return EMPTY
    if ta == const(0) or tb == const(0):
        return const(0)
    if ta == const(1) and tb == const(1):
        return const(1)
    return interval(0, 1)


def _or(a: Interval, b: Interval) -> Interval:
    ta, tb = _truth(a), _truth(b)
    if ta.empty or tb.empty:
        return EMPTY
    if ta == const(1) or tb == const(1):
        return const(1)
    if ta == const(0) and tb == const(0):
        return const(0)
    return interval(0, 1)


# --- abstract environments ---------------------------------------------------

class AbstractEnv:
    """Total map from variable names to intervals; absent means top.

    Either Bottom (no state) or a finite set of non-top, non-empty
    bindings.  Instances are immutable by convention: all operations
    return fresh environments.
    """

    __slots__ = ("bottom", "bindings")

    def __init__(self, bindings=None, bottom=False):
        self.bottom = bottom
        if bottom:
            self.bindings = {}
            return
        clean = {}
        for name, iv in (bindings or {}).items():
            if iv.empty:
                self.bottom = True
                self.bindings = {}
                return
            if not iv.is_top():
                clean[name] = iv
        self.bindings = clean

    # construction helpers
    @staticmethod
    def top() -> "AbstractEnv":
        return AbstractEnv({})

    @staticmethod
    def bot() -> "AbstractEnv":
        return AbstractEnv(bottom=True)

    def get(self, name: str) -> Interval:
        if self.bottom:
            return EMPTY
        return self.bindings.get(name, TOP)

    def set(self, name: str, iv: Interval) -> "AbstractEnv":
        if self.bottom:
            return self
        if iv.empty:
            return AbstractEnv.bot()
        new = dict(self.bindings)
        if iv.is_top():
            new.pop(name, None)
        else:
            new[name] = iv
        return AbstractEnv(new)

    def __eq__(self, other):
        if not isinstance(other, AbstractEnv):
            return NotImplemented
        return self.bottom == other.bottom and self.bindings == other.bindings

    def __hash__(self):
        if self.bottom:
            return hash("bot")
        return hash(frozenset(self.bindings.items()))

    def __repr__(self):
        return render_env(self)

    def leq(self, other: "AbstractEnv") -> bool:
        if self.bottom:
            return True
        if other.bottom:
            return False
        # pointwise containment; only other's bindings can constrain
        for name, iv in other.bindings.items():
            if not self.get(name).leq(iv):
                return False
        return True

    def join(self, other: "AbstractEnv") -> "AbstractEnv":
        if self.bottom:
            return other
        if other.bottom:
            return self
        out = {}
        for name in self.bindings.keys() & other.bindings.keys():
            out[name] = self.bindings[name].join(other.bindings[name])
        return AbstractEnv(out)

    def meet(self, other: "AbstractEnv") -> "AbstractEnv":
        if self.bottom or other.bottom:
            return AbstractEnv.bot()
        out = dict(self.bindings)
        for name, iv in other.bindings.items():
            got = out.get(name, TOP).meet(iv)
            if got.empty:
                return AbstractEnv.bot()
            out[name] = got
        return AbstractEnv(out)

    def widen(self, other: "AbstractEnv") -> "AbstractEnv":
        if self.bottom:
            return other
        if other.bottom:
            return self
        out = {}
        for name in self.bindings.keys() & other.bindings.keys():
            out[name] = self.bindings[name].widen(other.bindings[name])
        return AbstractEnv(out)

    def narrow(self, other: "AbstractEnv") -> "AbstractEnv":
        if self.bottom:
            return self
        if other.bottom:
            return other
        out = dict(self.bindings)
        for name, iv in other.bindings.items():
            out[name] = out.get(name, TOP).narrow(iv)
        return AbstractEnv(out)

    def project(self, names) -> "AbstractEnv":
        if self.bottom:
            return self
        return AbstractEnv({n: iv for n, iv in self.bindings.items()
                            if n in names})


def join(a: AbstractEnv, b: AbstractEnv) -> AbstractEnv:
    return a.join(b)


def leq(a: AbstractEnv, b: AbstractEnv) -> bool:
    return a.leq(b)


def widen(a: AbstractEnv, b: AbstractEnv) -> AbstractEnv:
    return a.widen(b)


def render_interval(iv: Interval) -> str:
    return repr(iv)


def render_env(env: AbstractEnv) -> str:
    if env.bottom:
        return "⊥"
    items = ", ".join(f"{name}:{env.bindings[name]!r}"
                      for name in sorted(env.bindings))
    return "{%s}" % items


# --- expression evaluation and condition filtering ---------------------------

def eval_expr(e: Expr, env: AbstractEnv) -> Interval:
    if env.bottom:
        return EMPTY
    if isinstance(e, IntLit):
        return const(e.value)
    if isinstance(e, BoolLit):
        return const(1 if e.value else 0)
    if isinstance(e, Var):
        return env.get(e.name)
    if isinstance(e, UnaryOp):
        return _not(eval_expr(e.operand, env))
    if isinstance(e, BinOp):
        a = eval_expr(e.left, env)
        b = eval_expr(e.right, env)
        if e.op == "+":
            return _add(a, b)
        if e.op == "-":
            return _add(a, _neg(b))
        if e.op == "*":
            return _mul(a, b)
        if e.op == "/":
            return _div(a, b)
        if e.op in ("<", "<=", ">", ">=", "==", "!="):
            return _cmp(e.op, a, b)
        if e.op == "&&":
            return _and(a, b)
        if e.op == "||":
            return _or(a, b)
    raise UnknownVariableError(f"cannot evaluate {e!r}")


_FLIP = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}
_NEGATE = {"<": ">=", "<=": ">", ">": "<=", ">=": "<", "==": "!=", "!=": "=="}


def _lit_value(e: Expr):
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, BoolLit):
        return 1 if e.value else 0
    return None


def _refine_var(env, name, iv):
    got = env.get(name).meet(iv)
    if got.empty:
        return AbstractEnv.bot()
    return env.set(name, got)


def _trim_ne(iv: Interval, c: int) -> Interval:
    """Remove c from iv when it sits on an endpoint."""
    if iv.empty or not iv.contains(c):
        return iv
    if iv.lo == iv.hi == c:
        return EMPTY
    if iv.lo == c:
        return Interval(c + 1, iv.hi)
    if iv.hi == c:
        return Interval(iv.lo, c - 1)
    return iv


def _filter_cmp(env, op, left, right):
    """Bound tightening for `v op c`, `c op v` and `v op w` comparisons."""
    lc, rc = _lit_value(left), _lit_value(right)
    if isinstance(left, Var) and rc is not None:
        name, c = left.name, rc
    elif isinstance(right, Var) and lc is not None:
        name, c, op = right.name, lc, _FLIP[op]
    elif isinstance(left, Var) and isinstance(right, Var):
        return _filter_var_var(env, op, left.name, right.name)
    else:
        return env  # unsupported shape: sound identity

    if op == "<":
        return _refine_var(env, name, interval(None, c - 1))
    if op == "<=":
        return _refine_var(env, name, interval(None, c))
    if op == ">":
        return _refine_var(env, name, interval(c + 1, None))
    if op == ">=":
        return _refine_var(env, name, interval(c, None))
    if op == "==":
        return _refine_var(env, name, const(c))
    if op == "!=":
        trimmed = _trim_ne(env.get(name), c)
        if trimmed.empty:
            return AbstractEnv.bot()
        return env.set(name, trimmed)
    return env


def _filter_var_var(env, op, a, b):
    ia, ib = env.get(a), env.get(b)
    if ia.empty or ib.empty:
        return AbstractEnv.bot()
    off = 1 if op in ("<", ">") else 0
    if op in ("<", "<="):
        na = ia.meet(interval(None, None if ib.hi is None else ib.hi - off))
        nb = ib.meet(interval(None if ia.lo is None else ia.lo + off, None))
    elif op in (">", ">="):
        na = ia.meet(interval(None if ib.lo is None else ib.lo + off, None))
        nb = ib.meet(interval(None, None if ia.hi is None else ia.hi - off))
    elif op == "==":
        na = nb = ia.meet(ib)
    elif op == "!=":
        na = _trim_ne(ia, ib.lo) if ib.lo == ib.hi and ib.lo is not None else ia
        nb = _trim_ne(ib, ia.lo) if ia.lo == ia.hi and ia.lo is not None else ib
    else:
        return env
    if na.empty or nb.empty:
        return AbstractEnv.bot()
    return env.set(a, na).set(b, nb)


def filter_cond(cond: Expr, polarity: bool, env: AbstractEnv) -> AbstractEnv:
    """Refine env assuming cond evaluates to polarity.  Sound: falls back
    to identity on shapes the tightening does not understand."""
    if env.bottom:
        return env
    value = _truth(eval_expr(cond, env))
    if value.empty:
        return AbstractEnv.bot()
    if polarity and value == const(0):
        return AbstractEnv.bot()
    if not polarity and value == const(1):
        return AbstractEnv.bot()

    if isinstance(cond, UnaryOp) and cond.op == "!":
        return filter_cond(cond.operand, not polarity, env)
    if isinstance(cond, Var):
        iv = env.get(cond.name)
        if polarity:
            trimmed = _trim_ne(iv, 0)
            if trimmed.empty:
                return AbstractEnv.bot()
            return env.set(cond.name, trimmed)
        return _refine_var(env, cond.name, const(0))
    if isinstance(cond, BinOp):
        op = cond.op
        if op in ("&&", "||"):
            # assume(a && b) = assume(a); assume(b), dually for a false or
            if (op == "&&") == polarity:
                e1 = filter_cond(cond.left, polarity, env)
                return filter_cond(cond.right, polarity, e1)
            return env
        if op in _FLIP:
            if not polarity:
                op = _NEGATE[op]
            return _filter_cmp(env, op, cond.left, cond.right)
    if isinstance(cond, (IntLit, BoolLit)):
        truth = _lit_value(cond) != 0
        return env if truth == polarity else AbstractEnv.bot()
    return env


# --- statement transfer -------------------------------------------------------

def transfer(stmt, env: AbstractEnv) -> AbstractEnv:
    """Abstract post-state of one normalized statement.

    Loads here read only the thread-local binding; interference-aware
    load handling is layered on top by the interpreter's load policy.
    Branches are identity (their filters live on the CFG edges) and
    asserts never assume their condition.
    """
    if env.bottom:
        return env
    if isinstance(stmt, SLocal):
        return env.set(stmt.target, eval_expr(stmt.expr, env))
    if isinstance(stmt, SLoad):
        return env.set(stmt.target, env.get(stmt.var))
    if isinstance(stmt, SStore):
        return env.set(stmt.var, eval_expr(stmt.expr, env))
    if isinstance(stmt, SNondet):
        return env.set(stmt.target, TOP)
    if isinstance(stmt, (SBranch, SAssert, SCreate, SJoin, SExit, SNop)):
        return env
    raise TypeError(stmt)


def assert_violable(cond: Expr, env: AbstractEnv) -> bool:
    """An assert can fail when its pre-state meets the negated condition."""
    return not filter_cond(cond, False, env).bottom
