"""Type syntax for Callas: base types, function types, code-record types
(sensor-resident vs anonymous), recursive types, and type variables.

Recursive types are treated equi-recursively: a recursive type and its
unfolding are the same type.  Equality is decided coinductively with an
assumed-pair set.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union


@dataclass(frozen=True)
class Base:
    kind: str  # int | float | bool | string

    def __str__(self) -> str:
        return self.kind


INT = Base("int")
FLOAT = Base("float")
BOOL = Base("bool")
STRING = Base("string")
BASE_KINDS = {"int": INT, "float": FLOAT, "bool": BOOL, "string": STRING}


@dataclass(frozen=True)
class Fun:
    params: tuple["Type", ...]
    ret: "Type"

    def __str__(self) -> str:
        return f"({', '.join(map(str, self.params))}) -> {self.ret}"


@dataclass(frozen=True)
class Code:
    """A record of function signatures.  `sensor=True` is the type of code
    installed in a sensor; `sensor=False` types anonymous modules.  The two
    are never equal, even with identical entries."""

    entries: tuple[tuple[str, Fun], ...] = ()
    sensor: bool = False

    def __post_init__(self):
        labels = [l for l, _ in self.entries]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in code type: {labels}")
        ordered = tuple(sorted(self.entries, key=lambda e: e[0]))
        object.__setattr__(self, "entries", ordered)

    def labels(self) -> tuple[str, ...]:
        return tuple(l for l, _ in self.entries)

    def get(self, label: str) -> Optional[Fun]:
        for l, fn in self.entries:
            if l == label:
                return fn
        return None

    def __str__(self) -> str:
        inner = ", ".join(f"{l}: {fn}" for l, fn in self.entries)
        return ("#{%s}" if self.sensor else "{%s}") % inner


EMPTY_CODE = Code()


@dataclass(frozen=True)
class TVar:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Rec:
    var: str
    body: "Type"

    def __post_init__(self):
        # contractivity: unfolding must eventually reach a constructor
        binders = {self.var}
        body = self.body
        while isinstance(body, Rec):
            binders.add(body.var)
            body = body.body
        if isinstance(body, TVar) and body.name in binders:
            raise ValueError(f"non-contractive recursive type rec {self.var}. ...")

    def __str__(self) -> str:
        return f"rec {self.var}. {self.body}"


Type = Union[Base, Fun, Code, Rec, TVar]


# ---------------------------------------------------------------------------
# Substitution and unfolding

def subst_type(t: Type, name: str, repl: Type) -> Type:
    match t:
        case TVar(n):
            return repl if n == name else t
        case Base():
            return t
        case Fun(params, ret):
            return Fun(tuple(subst_type(p, name, repl) for p in params),
                       subst_type(ret, name, repl))
        case Code(entries, sensor):
            return Code(tuple((l, subst_type(fn, name, repl)) for l, fn in entries), sensor)
        case Rec(var, body):
            if var == name:  # shadowed
                return t
            return Rec(var, subst_type(body, name, repl))
    raise TypeError(f"unknown type {t!r}")


def unfold(t: Type) -> Type:
    """One unfolding of a recursive type; identity on everything else."""
    if isinstance(t, Rec):
        return subst_type(t.body, t.var, t)
    return t


# ---------------------------------------------------------------------------
# Equi-recursive equality

_memo: dict = {}


def type_equal(a: Type, b: Type) -> bool:
    """Decide equality of the infinite unfoldings of two closed types."""
    if a is b:
        return True
    key = (a, b)
    hit = _memo.get(key)
    if hit is None:
        hit = _equal(a, b, frozenset())
        if len(_memo) > 200_000:
            _memo.clear()
        _memo[key] = hit
    return hit


def _equal(a: Type, b: Type, assumed: frozenset) -> bool:
    if a is b:
        return True
    if isinstance(a, Rec) or isinstance(b, Rec):
        key = (a, b)
        if key in assumed:
            return True
        hit = _memo.get(key)
        if hit is not None:
            return hit
        return _equal(unfold(a), unfold(b), assumed | {key})
    if type(a) is not type(b):
        return False
    match a:
        case Base(kind):
            return kind == b.kind
        case TVar(name):
            return name == b.name
        case Fun(params, ret):
            return (len(params) == len(b.params)
                    and all(_equal(p, q, assumed) for p, q in zip(params, b.params))
                    and _equal(ret, b.ret, assumed))
        case Code(entries, sensor):
            if sensor != b.sensor or a.labels() != b.labels():
                return False
            return all(_equal(fa, fb, assumed)
                       for (_, fa), (_, fb) in zip(entries, b.entries))
    raise TypeError(f"unknown type {a!r}")


# ---------------------------------------------------------------------------
# Sums

def _as_code(t: Type) -> tuple[Optional[str], Code]:
    if isinstance(t, Rec) and isinstance(t.body, Code):
        return t.var, t.body
    if isinstance(t, Code):
        return None, t
    raise ValueError(f"not a code type: {t}")


def _collect_names(t: Type, acc: set) -> None:
    match t:
        case TVar(n):
            acc.add(n)
        case Rec(var, body):
            acc.add(var)
            _collect_names(body, acc)
        case Fun(params, ret):
            for p in params:
                _collect_names(p, acc)
            _collect_names(ret, acc)
        case Code(entries, _):
            for _, fn in entries:
                _collect_names(fn, acc)


def code_type_sum(a: Type, b: Type) -> Type:
    """Right-biased union of two anonymous code types.

    Operands may be recursion-wrapped; the result is wrapped iff either
    operand was, with both self-references renamed to one shared binder.
    """
    var_a, code_a = _as_code(a)
    var_b, code_b = _as_code(b)
    if code_a.sensor or code_b.sensor:
        raise ValueError("code_type_sum is defined on anonymous code types")
    ea, eb = code_a.entries, code_b.entries
    if var_a is None and var_b is None:
        var = None
    elif var_a == var_b or var_b is None:
        var = var_a
    elif var_a is None:
        var = var_b
    else:
        # distinct binders: pick a name that cannot capture anything
        used_a: set = set()
        used_b: set = set()
        for _, fn in ea:
            _collect_names(fn, used_a)
        for _, fn in eb:
            _collect_names(fn, used_b)

        def ok(v):
            return ((v == var_a or v not in (used_a - {var_a}))
                    and (v == var_b or v not in (used_b - {var_b})))

        var = var_a
        while not ok(var):
            var += "'"
    if var is not None and var_a not in (None, var):
        ea = tuple((l, subst_type(fn, var_a, TVar(var))) for l, fn in ea)
    if var is not None and var_b not in (None, var):
        eb = tuple((l, subst_type(fn, var_b, TVar(var))) for l, fn in eb)
    right = {l for l, _ in eb}
    merged = tuple((l, fn) for l, fn in ea if l not in right) + eb
    code = Code(merged, sensor=False)
    return Rec(var, code) if var is not None else code


def env_sum(g1: dict, g2: dict) -> dict:
    """Right-biased environment union."""
    out = dict(g1)
    out.update(g2)
    return out
