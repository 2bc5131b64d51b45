"""Loop-nest tensor IR: expressions, statements, buffers and programs.

All nodes are frozen dataclasses; structural equality is ``==``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Optional, Union


class Scope(Enum):
    REGISTER = 0
    SHARED = 1
    GLOBAL = 2

    @property
    def level(self) -> int:
        return self.value

    def __lt__(self, other: "Scope") -> bool:
        return self.value < other.value

    def __le__(self, other: "Scope") -> bool:
        return self.value <= other.value

    @property
    def keyword(self) -> str:
        return self.name.lower()

    @classmethod
    def from_keyword(cls, word: str) -> "Scope":
        return cls[word.upper()]


class LoopKind(Enum):
    SEQUENTIAL = "seq"
    PARALLEL = "par"
    UNROLLED = "unroll"


class SyncKind(Enum):
    PRODUCER_ACQUIRE = "producer_acquire"
    PRODUCER_COMMIT = "producer_commit"
    CONSUMER_WAIT = "consumer_wait"
    CONSUMER_RELEASE = "consumer_release"


DTYPE_BYTES = {"i8": 1, "u8": 1, "i16": 2, "f16": 2, "bf16": 2, "i32": 4, "f32": 4, "i64": 8, "f64": 8}


# ---------------------------------------------------------------- expressions


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Add:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Mul:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class FloorDiv:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Mod:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Min:
    lhs: "Expr"
    rhs: "Expr"


# comparisons yield 0/1; only used as predicate conditions
@dataclass(frozen=True)
class Eq:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Lt:
    lhs: "Expr"
    rhs: "Expr"


Expr = Union[Var, Const, Add, Mul, FloorDiv, Mod, Min, Eq, Lt]
BINARY_EXPRS = (Add, Mul, FloorDiv, Mod, Min, Eq, Lt)


def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Const):
        return set()
    return free_vars(e.lhs) | free_vars(e.rhs)


def substitute(e: Expr, mapping: dict[str, Expr]) -> Expr:
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    return type(e)(substitute(e.lhs, mapping), substitute(e.rhs, mapping))


def eval_expr(e: Expr, env: dict[str, int]) -> int:
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Const):
        return e.value
    a = eval_expr(e.lhs, env)
    b = eval_expr(e.rhs, env)
    if isinstance(e, Add):
        return a + b
    if isinstance(e, Mul):
        return a * b
    if isinstance(e, (FloorDiv, Mod)):
        if b <= 0:
            raise ZeroDivisionError(f"non-positive divisor {b}")
        return a // b if isinstance(e, FloorDiv) else a % b
    if isinstance(e, Min):
        return min(a, b)
    if isinstance(e, Eq):
        return int(a == b)
    if isinstance(e, Lt):
        return int(a < b)
    raise TypeError(f"not an expression: {e!r}")


# ----------------------------------------------------------------- statements


@dataclass(frozen=True)
class Access:
    buffer: str
    indices: tuple[Expr, ...]


@dataclass(frozen=True)
class For:
    var: str
    extent: int
    kind: LoopKind
    body: tuple["Stmt", ...] = ()


@dataclass(frozen=True)
class Block:
    body: tuple["Stmt", ...] = ()


@dataclass(frozen=True)
class AsyncCopy:
    dst: Access
    src: Access


@dataclass(frozen=True)
class Compute:
    dst: Access
    op: str
    operands: tuple[Access, ...]
    flops: int = 0


@dataclass(frozen=True)
class Sync:
    kind: SyncKind
    group: str


@dataclass(frozen=True)
class Predicated:
    cond: Expr
    body: tuple["Stmt", ...] = ()


Stmt = Union[For, Block, AsyncCopy, Compute, Sync, Predicated]
Path = tuple[int, ...]


def children(s: Stmt) -> tuple[Stmt, ...]:
    if isinstance(s, (For, Block, Predicated)):
        return s.body
    return ()


def with_body(s: Stmt, body: tuple[Stmt, ...]) -> Stmt:
    if isinstance(s, For):
        return For(s.var, s.extent, s.kind, tuple(body))
    if isinstance(s, Block):
        return Block(tuple(body))
    if isinstance(s, Predicated):
        return Predicated(s.cond, tuple(body))
    raise TypeError(f"{type(s).__name__} has no body")


def walk(body: tuple[Stmt, ...], prefix: Path = ()) -> Iterator[tuple[Path, Stmt]]:
    """Pre-order traversal yielding ``(path, stmt)``."""
    for i, s in enumerate(body):
        path = prefix + (i,)
        yield path, s
        yield from walk(children(s), path)


def reads(s: Stmt) -> tuple[Access, ...]:
    if isinstance(s, AsyncCopy):
        return (s.src,)
    if isinstance(s, Compute):
        return s.operands
    return ()


def writes(s: Stmt) -> tuple[Access, ...]:
    if isinstance(s, (AsyncCopy, Compute)):
        return (s.dst,)
    return ()


# ------------------------------------------------------------------- program


@dataclass(frozen=True)
class BufferDecl:
    name: str
    scope: Scope
    shape: tuple[int, ...]
    dtype: str = "i32"
    stages: Optional[int] = None

    @property
    def elem_bytes(self) -> int:
        return DTYPE_BYTES[self.dtype]

    @property
    def size(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n

    @property
    def nbytes(self) -> int:
        return self.size * self.elem_bytes


@dataclass(frozen=True)
class PipelineGroup:
    name: str
    scope: Scope
    capacity: int


@dataclass(frozen=True)
class Program:
    buffers: tuple[BufferDecl, ...] = ()
    groups: tuple[PipelineGroup, ...] = ()
    body: tuple[Stmt, ...] = ()

    def buffer(self, name: str) -> BufferDecl:
        for b in self.buffers:
            if b.name == name:
                return b
        raise KeyError(name)

    def group(self, name: str) -> Optional[PipelineGroup]:
        for g in self.groups:
            if g.name == name:
                return g
        return None

    def written_buffers(self) -> set[str]:
        return {a.buffer for _, s in walk(self.body) for a in writes(s)}

    @property
    def outputs(self) -> tuple[BufferDecl, ...]:
        written = self.written_buffers()
        return tuple(b for b in self.buffers if b.scope is Scope.GLOBAL and b.name in written)

    @property
    def inputs(self) -> tuple[BufferDecl, ...]:
        written = self.written_buffers()
        return tuple(b for b in self.buffers if b.scope is Scope.GLOBAL and b.name not in written)

    @property
    def locals(self) -> tuple[BufferDecl, ...]:
        return tuple(b for b in self.buffers if b.scope is not Scope.GLOBAL)

    def stmt_at(self, path: Path) -> Stmt:
        body = self.body
        s: Stmt
        for i in path:
            s = body[i]
            body = children(s)
        return s


def replace_at(body: tuple[Stmt, ...], path: Path, new: Stmt) -> tuple[Stmt, ...]:
    i = path[0]
    if len(path) == 1:
        return body[:i] + (new,) + body[i + 1:]
    s = body[i]
    return body[:i] + (with_body(s, replace_at(children(s), path[1:], new)),) + body[i + 1:]
