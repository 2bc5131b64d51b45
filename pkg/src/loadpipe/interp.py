"""Reference interpreter with asynchronous-copy staging semantics.

Programs are compiled once into Python closures, then executed. Values are
integers. An ``AsyncCopy`` into a buffer that owns a pipeline group is staged
into the group's open batch; ``producer_commit`` seals the batch,
``consumer_wait`` makes the oldest sealed batch visible and
``consumer_release`` frees it. Copies into other buffers land immediately.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .ir.nodes import (
    Access,
    Add,
    AsyncCopy,
    Block,
    Compute,
    Const,
    Eq,
    Expr,
    FloorDiv,
    For,
    Lt,
    Min,
    Mod,
    Mul,
    Predicated,
    Program,
    Stmt,
    Sync,
    SyncKind,
    Var,
)
from .ir.validate import check


class ExecMode(enum.Enum):
    STRICT = "strict"
    STALE_READ = "stale"


class InterpError(RuntimeError):
    pass


class OutOfBoundsError(InterpError):
    pass


class StaleReadError(InterpError):
    pass


class PipelineFault(InterpError):
    pass


UNARY_OPS: dict[str, Callable[[int], int]] = {
    "copy": lambda x: x,
    "neg": lambda x: -x,
    "inc": lambda x: x + 1,
    "sq": lambda x: x * x,
    "relu": lambda x: x if x > 0 else 0,
}
BINARY_OPS: dict[str, Callable[[int, int], int]] = {
    "add": lambda a, b: a + b,
    "mul": lambda a, b: a * b,
}
PRE_PREFIX = "mma_pre_"


def op_function(tag: str, arity: int) -> Callable[..., int]:
    """Resolve a compute tag into a Python callable over operand values."""
    if tag == "mma" and arity == 3:
        return lambda acc, a, b: acc + a * b
    if tag.startswith(PRE_PREFIX) and arity == 3:
        f = UNARY_OPS.get(tag[len(PRE_PREFIX):])
        if f is not None:
            return lambda acc, a, b: acc + f(a) * b
    if tag in UNARY_OPS and arity == 1:
        return UNARY_OPS[tag]
    if tag in BINARY_OPS and arity == 2:
        return BINARY_OPS[tag]
    raise InterpError(f"unknown op {tag!r} with {arity} operand(s)")


@dataclass
class TraceEvent:
    step: int
    kind: str
    group: str
    acquired: int
    committed: int
    waited: int
    released: int
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PipelineRuntime:
    name: str
    capacity: int
    open: list = field(default_factory=list)
    sealed: deque = field(default_factory=deque)
    flushed: int = 0
    acquired: int = 0
    committed: int = 0
    waited: int = 0
    released: int = 0


class _Machine:
    def __init__(self, p: Program, mode: ExecMode):
        self.p = p
        self.mode = mode
        self.decls = {b.name: b for b in p.buffers}
        self.data: dict[str, list[int]] = {b.name: [0] * b.size for b in p.buffers}
        self.pending: dict[str, dict[int, int]] = {b.name: {} for b in p.buffers}
        self.pipes = {g.name: PipelineRuntime(g.name, g.capacity) for g in p.groups}
        self.slots: dict[str, int] = {}
        self.trace: list[TraceEvent] = []
        self.step = 0
        self.faults = 0

    # -- faults
    def fault(self, exc_type, msg: str, group: str = "") -> None:
        self.faults += 1
        rt = self.pipes.get(group)
        self._event("fault", rt, msg, group)
        if self.mode is ExecMode.STRICT:
            raise exc_type(msg)

    def _event(self, kind: str, rt: Optional[PipelineRuntime], detail: str = "", group: str = "") -> None:
        if rt is None:
            self.trace.append(TraceEvent(self.step, kind, group, 0, 0, 0, 0, detail))
        else:
            self.trace.append(
                TraceEvent(self.step, kind, rt.name, rt.acquired, rt.committed, rt.waited, rt.released, detail)
            )

    # -- compilation of expressions into closures over a slot list
    def slot(self, name: str) -> int:
        if name not in self.slots:
            self.slots[name] = len(self.slots)
        return self.slots[name]

    def cexpr(self, e: Expr) -> Callable[[list], int]:
        if isinstance(e, Const):
            v = e.value
            return lambda env: v
        if isinstance(e, Var):
            i = self.slot(e.name)
            return lambda env: env[i]
        f, g = self.cexpr(e.lhs), self.cexpr(e.rhs)
        if isinstance(e, Add):
            if isinstance(e.rhs, Const):
                c = e.rhs.value
                return lambda env: f(env) + c
            return lambda env: f(env) + g(env)
        if isinstance(e, Mul):
            if isinstance(e.rhs, Const):
                c = e.rhs.value
                return lambda env: f(env) * c
            return lambda env: f(env) * g(env)
        if isinstance(e, (Mod, FloorDiv)):
            div = isinstance(e, FloorDiv)

            def run(env):
                b = g(env)
                if b <= 0:
                    raise InterpError(f"non-positive divisor {b}")
                return f(env) // b if div else f(env) % b

            return run
        if isinstance(e, Min):
            return lambda env: min(f(env), g(env))
        if isinstance(e, Eq):
            return lambda env: int(f(env) == g(env))
        if isinstance(e, Lt):
            return lambda env: int(f(env) < g(env))
        raise InterpError(f"not an expression: {e!r}")

    def caddr(self, a: Access) -> Callable[[list], int]:
        decl = self.decls[a.buffer]
        shape = decl.shape
        strides = []
        acc = 1
        for d in reversed(shape):
            strides.append(acc)
            acc *= d
        strides.reverse()
        parts = list(zip([self.cexpr(e) for e in a.indices], shape, strides))
        name = a.buffer

        def addr(env):
            flat = 0
            for f, dim, stride in parts:
                i = f(env)
                if i < 0 or i >= dim:
                    raise OutOfBoundsError(f"{name} index {i} out of bounds for dimension of size {dim}")
                flat += i * stride
            return flat

        return addr

    def cload(self, a: Access) -> Callable[[list], int]:
        addr = self.caddr(a)
        data = self.data[a.buffer]
        pending = self.pending[a.buffer]
        name = a.buffer

        def load(env):
            i = addr(env)
            if pending and pending.get(i):
                self.fault(StaleReadError, f"read of {name}[{i}] before its async copy became visible", name)
            return data[i]

        return load

    # -- statements
    def cstmt(self, s: Stmt) -> Callable[[list], None]:
        if isinstance(s, For):
            i = self.slot(s.var)
            body = self.cbody(s.body)
            n = s.extent

            def run_for(env):
                for v in range(n):
                    env[i] = v
                    body(env)

            return run_for
        if isinstance(s, Block):
            return self.cbody(s.body)
        if isinstance(s, Predicated):
            cond = self.cexpr(s.cond)
            body = self.cbody(s.body)

            def run_if(env):
                if cond(env):
                    body(env)

            return run_if
        if isinstance(s, Compute):
            addr = self.caddr(s.dst)
            data = self.data[s.dst.buffer]
            loads = [self.cload(a) for a in s.operands]
            fn = op_function(s.op, len(loads))
            if len(loads) == 3:
                l0, l1, l2 = loads

                def run3(env):
                    data[addr(env)] = fn(l0(env), l1(env), l2(env))

                return run3

            def run_compute(env):
                data[addr(env)] = fn(*[ld(env) for ld in loads])

            return run_compute
        if isinstance(s, AsyncCopy):
            addr = self.caddr(s.dst)
            load = self.cload(s.src)
            name = s.dst.buffer
            data = self.data[name]
            rt = self.pipes.get(name)
            if rt is None:

                def run_copy(env):
                    data[addr(env)] = load(env)

                return run_copy
            pending = self.pending[name]

            def run_staged(env):
                i = addr(env)
                rt.open.append((i, load(env)))
                pending[i] = pending.get(i, 0) + 1

            return run_staged
        if isinstance(s, Sync):
            rt = self.pipes[s.group]
            handler = {
                SyncKind.PRODUCER_ACQUIRE: self.acquire,
                SyncKind.PRODUCER_COMMIT: self.commit,
                SyncKind.CONSUMER_WAIT: self.wait,
                SyncKind.CONSUMER_RELEASE: self.release,
            }[s.kind]
            return lambda env: handler(rt)
        raise InterpError(f"not a statement: {s!r}")

    def cbody(self, body) -> Callable[[list], None]:
        fns = [self.cstmt(s) for s in body]
        if len(fns) == 1:
            return fns[0]

        def run_body(env):
            for f in fns:
                f(env)

        return run_body

    # -- pipeline primitives
    def acquire(self, rt: PipelineRuntime) -> None:
        self.step += 1
        rt.acquired += 1
        self._event("producer_acquire", rt)
        if rt.acquired - rt.released > rt.capacity:
            self.fault(PipelineFault, f"pipeline {rt.name} overflow: more than {rt.capacity} batches in flight", rt.name)

    def commit(self, rt: PipelineRuntime) -> None:
        self.step += 1
        rt.committed += 1
        rt.sealed.append(rt.open)
        rt.open = []
        self._event("producer_commit", rt)
        if rt.committed > rt.acquired:
            self.fault(PipelineFault, f"pipeline {rt.name}: commit without acquire", rt.name)

    def wait(self, rt: PipelineRuntime) -> None:
        self.step += 1
        if not rt.sealed:
            self._event("consumer_wait", rt)
            self.fault(PipelineFault, f"pipeline {rt.name}: wait with no committed batch", rt.name)
            return
        rt.waited += 1
        batch = rt.sealed.popleft()
        data, pending = self.data[rt.name], self.pending[rt.name]
        for i, v in batch:
            data[i] = v
            left = pending[i] - 1
            if left:
                pending[i] = left
            else:
                del pending[i]
        rt.flushed += 1
        self._event("consumer_wait", rt, f"{len(batch)} elements")

    def release(self, rt: PipelineRuntime) -> None:
        self.step += 1
        if rt.flushed == 0:
            self._event("consumer_release", rt)
            self.fault(PipelineFault, f"pipeline {rt.name}: release without a completed wait", rt.name)
            return
        rt.flushed -= 1
        rt.released += 1
        self._event("consumer_release", rt)


@dataclass
class RunResult:
    outputs: dict[str, np.ndarray]
    trace: list[TraceEvent]
    faults: int


def random_inputs(p: Program, seed: int, low: int = -4, high: int = 4) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    return {b.name: rng.integers(low, high + 1, size=b.shape, dtype=np.int64) for b in p.inputs}


def run(
    p: Program,
    inputs: dict[str, object],
    mode: ExecMode = ExecMode.STRICT,
    seed: Optional[int] = None,
) -> RunResult:
    """Execute ``p`` on ``inputs`` (arrays or flat lists keyed by buffer name).

    ``seed`` is accepted for interface symmetry; evaluation is deterministic
    and does not consume randomness.
    """
    check(p)
    m = _Machine(p, mode)
    for b in p.inputs:
        if b.name not in inputs:
            raise InterpError(f"unbound input {b.name!r}")
        arr = np.asarray(inputs[b.name], dtype=np.int64).reshape(-1)
        if arr.size != b.size:
            raise InterpError(f"input {b.name!r} has {arr.size} elements, expected {b.size}")
        m.data[b.name][:] = [int(x) for x in arr]
    body = m.cbody(p.body)
    env = [0] * max(1, len(m.slots))
    body(env)
    outputs = {b.name: np.array(m.data[b.name], dtype=np.int64).reshape(b.shape) for b in p.outputs}
    return RunResult(outputs, m.trace, m.faults)


@dataclass
class Equivalence:
    equal: bool
    buffer: Optional[str] = None
    index: Optional[tuple[int, ...]] = None
    expected: Optional[int] = None
    actual: Optional[int] = None

    def __bool__(self) -> bool:
        return self.equal

    def __str__(self) -> str:
        if self.equal:
            return "equivalent"
        return f"first divergence at {self.buffer}{list(self.index)}: expected {self.expected}, got {self.actual}"


def _signature(p: Program):
    return (
        sorted((b.name, b.shape) for b in p.inputs),
        sorted((b.name, b.shape) for b in p.outputs),
    )


def compare_outputs(a: dict[str, np.ndarray], b: dict[str, np.ndarray]) -> Equivalence:
    for name in sorted(a):
        diff = np.argwhere(a[name] != b[name])
        if len(diff):
            idx = tuple(int(i) for i in diff[0])
            return Equivalence(False, name, idx, int(a[name][idx]), int(b[name][idx]))
    return Equivalence(True)


def check_equivalence(
    p1: Program,
    p2: Program,
    inputs: dict[str, object],
    mode: ExecMode = ExecMode.STRICT,
) -> Equivalence:
    """Run both programs on the same inputs and compare outputs bit-exactly."""
    if _signature(p1) != _signature(p2):
        raise InterpError("programs have different input/output signatures")
    r1 = run(p1, inputs, mode)
    r2 = run(p2, inputs, mode)
    return compare_outputs(r1.outputs, r2.outputs)
