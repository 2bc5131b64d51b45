"""Recursive-descent parser for the textual IR.

Grammar (``#`` starts a comment)::

    program   := (bufdecl | groupdecl)* stmt*
    bufdecl   := "buffer" NAME ("global"|"shared"|"register") TYPE "[" dims "]" ("stages" INT)? ";"
    groupdecl := "pipeline" NAME ("shared"|"register") "capacity" INT ";"
    stmt      := for | copy | compute | sync | pred | block
    for       := "for" NAME ("seq"|"par"|"unroll") INT ".." INT "{" stmt* "}"
    copy      := "copy_async" NAME "[" exprs "]" "<-" NAME "[" exprs "]" ";"
    compute   := NAME "[" exprs "]" "=" OPTAG "(" operand ("," operand)* ")" "flops" INT ";"
    sync      := ("producer_acquire"|"producer_commit"|"consumer_wait"|"consumer_release") NAME ";"
    pred      := "if" expr "{" stmt* "}"
    block     := "{" stmt* "}"
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .nodes import (
    DTYPE_BYTES,
    Access,
    Add,
    AsyncCopy,
    Block,
    BufferDecl,
    Compute,
    Const,
    Eq,
    Expr,
    FloorDiv,
    For,
    LoopKind,
    Lt,
    Min,
    Mod,
    Mul,
    PipelineGroup,
    Predicated,
    Program,
    Scope,
    Stmt,
    Sync,
    SyncKind,
    Var,
)


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass
class Token:
    kind: str  # NAME, INT, OP, EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>#[^\n]*)"
    r"|(?P<INT>\d+)|(?P<NAME>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<OP>\.\.|<-|==|[\[\]{}();,=+*/%<-])"
)

KEYWORDS = {
    "buffer", "pipeline", "stages", "capacity", "for", "seq", "par", "unroll",
    "copy_async", "flops", "if", "min", "global", "shared", "register",
} | {k.value for k in SyncKind}


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("INT", "NAME", "OP"):
            tokens.append(Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.buffers: dict[str, BufferDecl] = {}
        self.groups: dict[str, PipelineGroup] = {}
        self.scope: list[str] = []

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def at(self, text: str) -> bool:
        return self.tok.kind in ("OP", "NAME") and self.tok.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}, got {self.tok.text or 'end of input'!r}")
        return self.advance()

    def name(self) -> Token:
        if self.tok.kind != "NAME" or self.tok.text in KEYWORDS:
            self.error(f"expected a name, got {self.tok.text or 'end of input'!r}")
        return self.advance()

    def integer(self) -> int:
        if self.tok.kind != "INT":
            self.error(f"expected an integer, got {self.tok.text or 'end of input'!r}")
        return int(self.advance().text)

    # -- declarations
    def program(self) -> Program:
        while self.at("buffer") or self.at("pipeline"):
            if self.at("buffer"):
                self.bufdecl()
            else:
                self.groupdecl()
        body = []
        while self.tok.kind != "EOF":
            body.append(self.stmt())
        return Program(tuple(self.buffers.values()), tuple(self.groups.values()), tuple(body))

    def bufdecl(self) -> None:
        self.expect("buffer")
        tok = self.name()
        if tok.text in self.buffers:
            self.error(f"duplicate buffer name {tok.text!r}", tok)
        scope_tok = self.advance()
        if scope_tok.text not in ("global", "shared", "register"):
            self.error("expected global, shared or register", scope_tok)
        dtype = self.advance()
        if dtype.text not in DTYPE_BYTES:
            self.error(f"unknown element type {dtype.text!r}", dtype)
        self.expect("[")
        dims = [self.integer()]
        while self.at(","):
            self.advance()
            dims.append(self.integer())
        self.expect("]")
        stages = None
        if self.at("stages"):
            self.advance()
            stages = self.integer()
        self.expect(";")
        self.buffers[tok.text] = BufferDecl(tok.text, Scope.from_keyword(scope_tok.text), tuple(dims), dtype.text, stages)

    def groupdecl(self) -> None:
        self.expect("pipeline")
        tok = self.name()
        if tok.text in self.groups:
            self.error(f"duplicate pipeline group {tok.text!r}", tok)
        scope_tok = self.advance()
        if scope_tok.text not in ("shared", "register"):
            self.error("pipeline scope must be shared or register", scope_tok)
        self.expect("capacity")
        cap = self.integer()
        self.expect(";")
        self.groups[tok.text] = PipelineGroup(tok.text, Scope.from_keyword(scope_tok.text), cap)

    # -- statements
    def stmt(self) -> Stmt:
        t = self.tok
        if self.at("for"):
            return self.for_stmt()
        if self.at("copy_async"):
            return self.copy_stmt()
        if self.at("if"):
            self.advance()
            cond = self.expr()
            return Predicated(cond, self.braced())
        if self.at("{"):
            return Block(self.braced())
        if t.kind == "NAME" and t.text in {k.value for k in SyncKind}:
            self.advance()
            g = self.name()
            if g.text not in self.groups:
                self.error(f"undeclared pipeline group {g.text!r}", g)
            self.expect(";")
            return Sync(SyncKind(t.text), g.text)
        if t.kind == "NAME" and t.text not in KEYWORDS:
            return self.compute_stmt()
        self.error(f"expected a statement, got {t.text or 'end of input'!r}")

    def braced(self) -> tuple[Stmt, ...]:
        self.expect("{")
        body = []
        while not self.at("}"):
            if self.tok.kind == "EOF":
                self.error("unterminated block")
            body.append(self.stmt())
        self.expect("}")
        return tuple(body)

    def for_stmt(self) -> For:
        self.expect("for")
        var = self.name()
        if var.text in self.scope:
            self.error(f"loop variable {var.text!r} shadows an enclosing loop", var)
        kind_tok = self.advance()
        kinds = {k.value: k for k in LoopKind}
        if kind_tok.text not in kinds:
            self.error("expected seq, par or unroll", kind_tok)
        lo_tok = self.tok
        lo = self.integer()
        self.expect("..")
        hi = self.integer()
        if lo != 0:
            self.error("loop lower bound must be 0", lo_tok)
        if hi <= lo:
            self.error(f"zero-extent loop {var.text!r} rejected", lo_tok)
        self.scope.append(var.text)
        body = self.braced()
        self.scope.pop()
        return For(var.text, hi, kinds[kind_tok.text], body)

    def access(self) -> Access:
        tok = self.name()
        if tok.text not in self.buffers:
            self.error(f"undeclared buffer {tok.text!r}", tok)
        self.expect("[")
        idx = [self.expr()]
        while self.at(","):
            self.advance()
            idx.append(self.expr())
        self.expect("]")
        return Access(tok.text, tuple(idx))

    def copy_stmt(self) -> AsyncCopy:
        self.expect("copy_async")
        dst = self.access()
        self.expect("<-")
        src = self.access()
        self.expect(";")
        return AsyncCopy(dst, src)

    def compute_stmt(self) -> Compute:
        dst = self.access()
        self.expect("=")
        op = self.name().text
        self.expect("(")
        operands = [self.access()]
        while self.at(","):
            self.advance()
            operands.append(self.access())
        self.expect(")")
        self.expect("flops")
        flops = self.integer()
        self.expect(";")
        return Compute(dst, op, tuple(operands), flops)

    # -- expressions, C precedence
    def expr(self) -> Expr:
        lhs = self.additive()
        if self.at("==") or self.at("<"):
            op = self.advance().text
            rhs = self.additive()
            return Eq(lhs, rhs) if op == "==" else Lt(lhs, rhs)
        return lhs

    def additive(self) -> Expr:
        e = self.term()
        while self.at("+"):
            self.advance()
            e = Add(e, self.term())
        return e

    def term(self) -> Expr:
        e = self.primary()
        ops = {"*": Mul, "/": FloorDiv, "%": Mod}
        while self.tok.kind == "OP" and self.tok.text in ops:
            cls = ops[self.advance().text]
            e = cls(e, self.primary())
        return e

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "INT":
            return Const(self.integer())
        if self.at("-") and self.toks[self.i + 1].kind == "INT":
            self.advance()
            return Const(-self.integer())
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if self.at("min"):
            self.advance()
            self.expect("(")
            a = self.expr()
            self.expect(",")
            b = self.expr()
            self.expect(")")
            return Min(a, b)
        if t.kind == "NAME" and t.text not in KEYWORDS:
            self.advance()
            if t.text not in self.scope:
                self.error(f"unbound variable {t.text!r}", t)
            return Var(t.text)
        self.error(f"expected an expression, got {t.text or 'end of input'!r}")


def parse_program(text: str) -> Program:
    return _Parser(text).program()
