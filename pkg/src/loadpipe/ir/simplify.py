"""Value-preserving algebraic simplification of index expressions."""

from __future__ import annotations

from .nodes import Add, Const, Eq, Expr, FloorDiv, Lt, Min, Mod, Mul, Var


class SimplifyError(ValueError):
    pass


def _terms(e: Expr) -> list[Expr]:
    if isinstance(e, Add):
        return _terms(e.lhs) + _terms(e.rhs)
    return [e]


def _sum(terms: list[Expr]) -> Expr:
    if not terms:
        return Const(0)
    out = terms[0]
    for t in terms[1:]:
        out = Add(out, t)
    return out


def _is_multiple_of(t: Expr, c: int) -> bool:
    if isinstance(t, Const):
        return t.value % c == 0
    if isinstance(t, Mul):
        return any(isinstance(x, Const) and x.value % c == 0 for x in (t.lhs, t.rhs))
    return False


def _simplify_add(a: Expr, b: Expr) -> Expr:
    terms = [t for t in _terms(a) + _terms(b) if t != Const(0)]
    consts = [t for t in terms if isinstance(t, Const)]
    rest = [t for t in terms if not isinstance(t, Const)]
    c = sum(t.value for t in consts)
    if c != 0 or not rest:
        rest.append(Const(c))
    return _sum(rest)


def _simplify_mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if Const(0) in (a, b):
        return Const(0)
    if a == Const(1):
        return b
    if b == Const(1):
        return a
    return Mul(a, b)


def _divisor(b: Expr) -> int | None:
    if isinstance(b, Const):
        if b.value <= 0:
            raise SimplifyError(f"division by non-positive constant {b.value}")
        return b.value
    return None


def _simplify_mod(a: Expr, b: Expr) -> Expr:
    c = _divisor(b)
    if c is None:
        return Mod(a, b)
    if c == 1:
        return Const(0)
    if isinstance(a, Const):
        return Const(a.value % c)
    # (x % k) % c == x % c whenever c divides k
    if isinstance(a, Mod) and isinstance(a.rhs, Const) and a.rhs.value % c == 0:
        return _simplify_mod(a.lhs, b)
    if isinstance(a, Add):
        terms = []
        for t in _terms(a):
            if _is_multiple_of(t, c):
                continue
            if isinstance(t, Const):
                t = Const(t.value % c)
            terms.append(t)
        reduced = _simplify_add(_sum(terms), Const(0)) if terms else Const(0)
        if reduced != a:
            return _simplify_mod(reduced, b)
    return Mod(a, b)


def _simplify_div(a: Expr, b: Expr) -> Expr:
    c = _divisor(b)
    if c is None:
        return FloorDiv(a, b)
    if c == 1:
        return a
    if isinstance(a, Const):
        return Const(a.value // c)
    return FloorDiv(a, b)


def simplify(e: Expr) -> Expr:
    """Constant folding, identity removal and modulo reduction.

    The result evaluates identically to ``e`` under every assignment of its
    free variables.
    """
    if isinstance(e, (Var, Const)):
        return e
    a, b = simplify(e.lhs), simplify(e.rhs)
    if isinstance(e, Add):
        return _simplify_add(a, b)
    if isinstance(e, Mul):
        return _simplify_mul(a, b)
    if isinstance(e, Mod):
        return _simplify_mod(a, b)
    if isinstance(e, FloorDiv):
        return _simplify_div(a, b)
    both = isinstance(a, Const) and isinstance(b, Const)
    if isinstance(e, Min):
        return Const(min(a.value, b.value)) if both else Min(a, b)
    if isinstance(e, Eq):
        return Const(int(a.value == b.value)) if both else Eq(a, b)
    if isinstance(e, Lt):
        return Const(int(a.value < b.value)) if both else Lt(a, b)
    raise TypeError(f"not an expression: {e!r}")
