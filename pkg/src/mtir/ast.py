"""AST for the MTIR source language, plus a pretty printer.

Expressions are shared with the normalized statement IR: after
normalization they only ever mention locals and constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field


# --- expressions -----------------------------------------------------------

@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Nondet:
    """The `*` expression: an arbitrary integer."""


@dataclass(frozen=True)
class UnaryOp:
    op: str  # only "!"
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = IntLit | BoolLit | Var | Nondet | UnaryOp | BinOp


def expr_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, UnaryOp):
        return expr_vars(e.operand)
    if isinstance(e, BinOp):
        return expr_vars(e.left) | expr_vars(e.right)
    return set()


# --- statements ------------------------------------------------------------

@dataclass
class Assign:
    target: str
    expr: Expr
    line: int
    decl: bool = False  # declared with a type at this site


@dataclass
class If:
    cond: Expr
    then_body: list["Stmt"]
    else_body: list["Stmt"]
    line: int


@dataclass
class While:
    cond: Expr
    body: list["Stmt"]
    line: int


@dataclass
class AssertStmt:
    cond: Expr
    line: int


@dataclass
class ErrorStmt:
    """`error;` - sugar for assert(false) at this location."""
    line: int


@dataclass
class CreateStmt:
    routine: str
    args: list[int]
    line: int


@dataclass
class JoinStmt:
    routine: str
    line: int


Stmt = Assign | If | While | AssertStmt | ErrorStmt | CreateStmt | JoinStmt


@dataclass
class Routine:
    name: str
    params: list[str]
    body: list[Stmt]
    line: int
    end_line: int


@dataclass
class SourceProgram:
    globals: list[tuple[str, str, int]]  # (name, "int"|"bool", initializer)
    routines: list[Routine] = field(default_factory=list)
    entry: str = "main"

    def routine(self, name: str) -> Routine:
        for r in self.routines:
            if r.name == name:
                return r
        raise KeyError(name)


# --- pretty printer --------------------------------------------------------

_PREC = {
    "||": 1, "&&": 2,
    "==": 3, "!=": 3,
    "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6,
}


def expr_to_source(e: Expr, parent_prec: int = 0) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Nondet):
        return "*"
    if isinstance(e, UnaryOp):
        return "!" + expr_to_source(e.operand, 7)
    prec = _PREC[e.op]
    text = "%s %s %s" % (
        expr_to_source(e.left, prec),
        e.op,
        expr_to_source(e.right, prec + 1),
    )
    return "(%s)" % text if prec < parent_prec else text


def _stmt_lines(s: Stmt, indent: str) -> list[str]:
    if isinstance(s, Assign):
        return [f"{indent}{s.target} = {expr_to_source(s.expr)};"]
    if isinstance(s, If):
        out = [f"{indent}if ({expr_to_source(s.cond)}) {{"]
        for inner in s.then_body:
            out.extend(_stmt_lines(inner, indent + "  "))
        if s.else_body:
            out.append(f"{indent}}} else {{")
            for inner in s.else_body:
                out.extend(_stmt_lines(inner, indent + "  "))
        out.append(f"{indent}}}")
        return out
    if isinstance(s, While):
        out = [f"{indent}while ({expr_to_source(s.cond)}) {{"]
        for inner in s.body:
            out.extend(_stmt_lines(inner, indent + "  "))
        out.append(f"{indent}}}")
        return out
    if isinstance(s, AssertStmt):
        return [f"{indent}assert({expr_to_source(s.cond)});"]
    if isinstance(s, ErrorStmt):
        return [f"{indent}error;"]
    if isinstance(s, CreateStmt):
        args = "".join(", %d" % a for a in s.args)
        return [f"{indent}create({s.routine}{args});"]
    if isinstance(s, JoinStmt):
        return [f"{indent}join({s.routine});"]
    raise TypeError(s)


def to_source(prog: SourceProgram) -> str:
    """Render a program as parseable MTIR text."""
    lines = []
    for name, typ, init in prog.globals:
        if typ == "bool":
            lines.append("bool %s = %s;" % (name, "true" if init else "false"))
        else:
            lines.append("int %s = %d;" % (name, init))
    for r in prog.routines:
        params = ", ".join("int %s" % p for p in r.params)
        lines.append(f"thread {r.name}({params}) {{")
        for s in r.body:
            lines.extend(_stmt_lines(s, "  "))
        lines.append("}")
    return "\n".join(lines) + "\n"


def strip_lines(prog: SourceProgram) -> object:
    """Structural fingerprint of a program, ignoring source positions.

    Used by the round-trip test: pretty printing moves statements to new
    lines, so equality must be up to positions.
    """
    def expr_key(e):
        if isinstance(e, UnaryOp):
            return ("!", expr_key(e.operand))
        if isinstance(e, BinOp):
            return (e.op, expr_key(e.left), expr_key(e.right))
        return e

    def stmt_key(s):
        if isinstance(s, Assign):
            return ("assign", s.target, expr_key(s.expr))
        if isinstance(s, If):
            return ("if", expr_key(s.cond),
                    tuple(stmt_key(x) for x in s.then_body),
                    tuple(stmt_key(x) for x in s.else_body))
        if isinstance(s, While):
            return ("while", expr_key(s.cond),
                    tuple(stmt_key(x) for x in s.body))
        if isinstance(s, AssertStmt):
            return ("assert", expr_key(s.cond))
        if isinstance(s, ErrorStmt):
            return ("error",)
        if isinstance(s, CreateStmt):
            return ("create", s.routine, tuple(s.args))
        if isinstance(s, JoinStmt):
            return ("join", s.routine)
        raise TypeError(s)

    return (
        tuple(prog.globals),
        tuple((r.name, tuple(r.params), tuple(stmt_key(s) for s in r.body))
              for r in prog.routines),
        prog.entry,
    )
