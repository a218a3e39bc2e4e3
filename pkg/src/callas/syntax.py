"""Abstract syntax for Callas sensor programs.

Values, processes, modules, messages, timer entries, sensor states and
networks, together with the purely syntactic operations every other layer
builds on: simultaneous substitution, free variables, module sum, and
evaluation-context decomposition.

Substitution only ever replaces variables by *closed* values, so no
capture-avoiding machinery (de Bruijn indices etc.) is needed.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Mapping, Optional, Union


class InterpreterBug(RuntimeError):
    """An internal invariant was violated.  Never a user-program error."""


Label = str  # function names; kept disjoint from variables by construction


@dataclass(frozen=True)
class Variable:
    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("variable name must be non-empty")

    def __str__(self) -> str:
        return self.name


SELF = Variable("self")


@dataclass(frozen=True)
class Builtin:
    """A built-in constant: int, float, bool or string."""

    value: Union[int, float, bool, str]

    def kind(self) -> str:
        v = self.value
        if isinstance(v, bool):  # bool before int: bool is an int subclass
            return "bool"
        if isinstance(v, int):
            return "int"
        if isinstance(v, float):
            return "float"
        if isinstance(v, str):
            return "string"
        raise InterpreterBug(f"unsupported builtin payload {v!r}")

    def __str__(self) -> str:
        if isinstance(self.value, bool):
            return "true" if self.value else "false"
        return repr(self.value) if isinstance(self.value, str) else str(self.value)


@dataclass(frozen=True)
class SensorRef:
    """The `sensor` keyword: the receiving sensor's own installed module."""

    def __str__(self) -> str:
        return "sensor"


SENSOR = SensorRef()


@dataclass(frozen=True)
class FunctionDef:
    """A named function body `(self, x1, ..., xn) P`.

    `param_types`/`ret_type` hold optional surface annotations (types from
    callas.types, or None); they are carried along for the checker and are
    ignored by equality of the enclosing module only insofar as dataclass
    equality compares them structurally.
    """

    params: tuple[Variable, ...]
    body: "Process"
    param_types: tuple = ()
    ret_type: object = None

    def __post_init__(self):
        if not self.params or self.params[0] != SELF:
            raise ValueError("first function parameter must be `self`")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameters in {names}")
        if len(self.param_types) not in (0, len(self.params)):
            raise ValueError("param_types must align with params")
        if not self.param_types:
            object.__setattr__(self, "param_types", (None,) * len(self.params))


@dataclass(frozen=True)
class ModuleValue:
    """An ordered record of named functions; insertion order is printing order."""

    entries: tuple[tuple[Label, FunctionDef], ...] = ()

    def __post_init__(self):
        labels = [l for l, _ in self.entries]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in module: {labels}")

    def labels(self) -> tuple[Label, ...]:
        return tuple(l for l, _ in self.entries)

    def get(self, label: Label) -> Optional[FunctionDef]:
        for l, fn in self.entries:
            if l == label:
                return fn
        return None

    def __contains__(self, label: Label) -> bool:
        return any(l == label for l, _ in self.entries)


EMPTY_MODULE = ModuleValue()

Value = Union[Builtin, Variable, ModuleValue, SensorRef]


# ---------------------------------------------------------------------------
# Processes

@dataclass(frozen=True)
class Val:
    value: Value


@dataclass(frozen=True)
class Call:
    target: Value
    label: Label
    args: tuple[Value, ...] = ()


@dataclass(frozen=True)
class Extern:
    label: Label
    args: tuple[Value, ...] = ()


@dataclass(frozen=True)
class Timer:
    label: Label
    args: tuple[Value, ...]
    period: Value
    duration: Value


@dataclass(frozen=True)
class Send:
    label: Label
    args: tuple[Value, ...] = ()


@dataclass(frozen=True)
class Receive:
    pass


@dataclass(frozen=True)
class Install:
    target: Value
    source: Value


@dataclass(frozen=True)
class Let:
    var: Variable
    bound: "Process"
    body: "Process"


@dataclass(frozen=True)
class If:
    cond: Value
    then: "Process"
    orelse: "Process"


Process = Union[Val, Call, Extern, Timer, Send, Receive, Install, Let, If]

UNIT = Val(EMPTY_MODULE)  # the `{}` every completed effect reduces to


# ---------------------------------------------------------------------------
# Run-time state

@dataclass(frozen=True)
class Message:
    """A packaged function call travelling between sensors.

    `mid` is routing-layer metadata (deduplication id); it is not part of
    the calculus-level message and is excluded from equality.
    """

    label: Label
    args: tuple[Value, ...] = ()
    mid: Optional[int] = field(default=None, compare=False)


@dataclass
class TimerEntry:
    """One timed call: what to call, how often, and until when.

    `expire_at` and `next_at` are absolute clock values.
    """

    label: Label
    args: tuple[Value, ...]
    period: int
    expire_at: int
    next_at: int

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("timer period must be >= 1")


@dataclass
class SensorState:
    """The full per-sensor configuration (the 8 runtime components)."""

    id: str
    running: Process = UNIT
    run_queue: deque = field(default_factory=deque)
    installed: ModuleValue = EMPTY_MODULE
    timers: list = field(default_factory=list)
    inbox: deque = field(default_factory=deque)
    outbox: deque = field(default_factory=deque)
    position: tuple[float, float] = (0.0, 0.0)
    clock: int = 0


@dataclass
class NetEntry:
    """A free sensor plus the membrane of sensors captured by an ongoing
    broadcast (empty outside of a broadcast)."""

    sensor: SensorState
    captives: list = field(default_factory=list)


@dataclass
class Network:
    entries: list = field(default_factory=list)

    @classmethod
    def from_sensors(cls, sensors) -> "Network":
        net = cls([NetEntry(s) for s in sorted(sensors, key=lambda s: s.id)])
        ids = [s.id for s in net.all_sensors()]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate sensor ids: {ids}")
        return net

    def all_sensors(self) -> Iterator[SensorState]:
        for e in self.entries:
            yield e.sensor
            yield from e.captives

    def sensor_ids(self) -> list[str]:
        return sorted(s.id for s in self.all_sensors())

    def find(self, sensor_id: str) -> SensorState:
        for s in self.all_sensors():
            if s.id == sensor_id:
                return s
        raise KeyError(sensor_id)


# ---------------------------------------------------------------------------
# Free variables

def value_free_vars(v: Value) -> frozenset[Variable]:
    if isinstance(v, Variable):
        return frozenset((v,))
    if isinstance(v, ModuleValue):
        acc: frozenset[Variable] = frozenset()
        for _, fn in v.entries:
            acc |= free_vars(fn.body) - frozenset(fn.params)
        return acc
    return frozenset()


def _values_free_vars(values) -> frozenset[Variable]:
    acc: frozenset[Variable] = frozenset()
    for v in values:
        acc |= value_free_vars(v)
    return acc


def free_vars(p: Process) -> frozenset[Variable]:
    """Variables with a free occurrence in `p` (binders: let and params)."""
    match p:
        case Val(v):
            return value_free_vars(v)
        case Call(target, _, args):
            return value_free_vars(target) | _values_free_vars(args)
        case Extern(_, args) | Send(_, args):
            return _values_free_vars(args)
        case Timer(_, args, period, duration):
            return _values_free_vars(args) | value_free_vars(period) | value_free_vars(duration)
        case Receive():
            return frozenset()
        case Install(target, source):
            return value_free_vars(target) | value_free_vars(source)
        case Let(var, bound, body):
            return free_vars(bound) | (free_vars(body) - {var})
        case If(cond, then, orelse):
            return value_free_vars(cond) | free_vars(then) | free_vars(orelse)
    raise InterpreterBug(f"unknown process {p!r}")


@lru_cache(maxsize=65536)
def _module_is_closed(m: ModuleValue) -> bool:
    return not value_free_vars(m)


def is_closed_value(v: Value) -> bool:
    if isinstance(v, (Builtin, SensorRef)):
        return True
    if isinstance(v, Variable):
        return False
    return _module_is_closed(v)


# ---------------------------------------------------------------------------
# Substitution

def _subst_value(v: Value, mapping: Mapping[Variable, Value]) -> Value:
    if isinstance(v, Variable):
        return mapping.get(v, v)
    if isinstance(v, ModuleValue):
        if _module_is_closed(v):
            return v
        entries = []
        for l, fn in v.entries:
            inner = {k: w for k, w in mapping.items() if k not in fn.params}
            entries.append((l, FunctionDef(fn.params, substitute(fn.body, inner),
                                           fn.param_types, fn.ret_type)))
        return ModuleValue(tuple(entries))
    return v


def substitute(p: Process, mapping: Mapping[Variable, Value]) -> Process:
    """Simultaneously replace free occurrences of the mapped variables.

    All substituted values must be closed; open values indicate a bug in
    the caller, not in the user program.
    """
    for var, v in mapping.items():
        if not is_closed_value(v):
            raise InterpreterBug(f"substituting open value {v!r} for {var}")
    return _subst(p, dict(mapping))


def _subst(p: Process, mapping: dict) -> Process:
    if not mapping:
        return p
    sv = lambda v: _subst_value(v, mapping)
    match p:
        case Val(v):
            return Val(sv(v))
        case Call(target, label, args):
            return Call(sv(target), label, tuple(sv(a) for a in args))
        case Extern(label, args):
            return Extern(label, tuple(sv(a) for a in args))
        case Timer(label, args, period, duration):
            return Timer(label, tuple(sv(a) for a in args), sv(period), sv(duration))
        case Send(label, args):
            return Send(label, tuple(sv(a) for a in args))
        case Receive():
            return p
        case Install(target, source):
            return Install(sv(target), sv(source))
        case Let(var, bound, body):
            inner = {k: w for k, w in mapping.items() if k != var}
            return Let(var, _subst(bound, mapping), _subst(body, inner))
        case If(cond, then, orelse):
            return If(sv(cond), _subst(then, mapping), _subst(orelse, mapping))
    raise InterpreterBug(f"unknown process {p!r}")


# ---------------------------------------------------------------------------
# Module sum

def module_sum(left: ModuleValue, right: ModuleValue) -> ModuleValue:
    """Right-biased union: right's entry wins on a shared label.

    Surviving left entries keep left's order, followed by right's entries
    in right's order.
    """
    right_labels = set(right.labels())
    entries = tuple((l, fn) for l, fn in left.entries if l not in right_labels)
    return ModuleValue(entries + right.entries)


# ---------------------------------------------------------------------------
# Evaluation contexts  C ::= [] | let x = C in P

def decompose(p: Process) -> tuple[list[tuple[Variable, Process]], Process]:
    """Split `p` into its spine of let-bound frames and the redex.

    Frames are returned outermost first as (var, let-body) pairs.  A let
    whose bound part is already a value is itself the redex.
    """
    frames: list[tuple[Variable, Process]] = []
    while isinstance(p, Let) and not isinstance(p.bound, Val):
        frames.append((p.var, p.body))
        p = p.bound
    return frames, p


def recompose(frames, redex: Process) -> Process:
    for var, body in reversed(frames):
        redex = Let(var, redex, body)
    return redex


# ---------------------------------------------------------------------------
# Alpha-equivalence (used by round-trip tests and canonical comparisons)

def alpha_equal(p: Process, q: Process) -> bool:
    return _alpha(p, q, {}, set())


def _alpha_value(v: Value, w: Value, env: dict, rng: set) -> bool:
    if isinstance(v, Variable) and isinstance(w, Variable):
        if v in env:
            return env[v] == w
        return v == w and w not in rng
    if isinstance(v, ModuleValue) and isinstance(w, ModuleValue):
        if v.labels() != w.labels():
            return False
        for (_, f), (_, g) in zip(v.entries, w.entries):
            if len(f.params) != len(g.params):
                return False
            if f.param_types != g.param_types or f.ret_type != g.ret_type:
                return False
            env2 = {k: x for k, x in env.items() if k not in f.params}
            env2.update(dict(zip(f.params, g.params)))
            rng2 = (rng - set(f.params)) | set(g.params)
            if not _alpha(f.body, g.body, env2, rng2):
                return False
        return True
    return v == w


def _alpha(p: Process, q: Process, env: dict, rng: set) -> bool:
    if type(p) is not type(q):
        return False
    av = lambda v, w: _alpha_value(v, w, env, rng)
    match p:
        case Val(v):
            return av(v, q.value)
        case Call(t, l, args):
            return (l == q.label and av(t, q.target) and len(args) == len(q.args)
                    and all(av(a, b) for a, b in zip(args, q.args)))
        case Extern(l, args) | Send(l, args):
            return (l == q.label and len(args) == len(q.args)
                    and all(av(a, b) for a, b in zip(args, q.args)))
        case Timer(l, args, period, duration):
            return (l == q.label and len(args) == len(q.args)
                    and all(av(a, b) for a, b in zip(args, q.args))
                    and av(period, q.period) and av(duration, q.duration))
        case Receive():
            return True
        case Install(t, s):
            return av(t, q.target) and av(s, q.source)
        case Let(var, bound, body):
            if not _alpha(bound, q.bound, env, rng):
                return False
            env2 = dict(env)
            env2[var] = q.var
            return _alpha(body, q.body, env2, rng | {q.var})
        case If(c, then, orelse):
            return av(c, q.cond) and _alpha(then, q.then, env, rng) and _alpha(orelse, q.orelse, env, rng)
    raise InterpreterBug(f"unknown process {p!r}")


def fresh_variable(avoid, base: str = "_x") -> Variable:
    taken = {v.name for v in avoid}
    i = 0
    while f"{base}{i}" in taken:
        i += 1
    return Variable(f"{base}{i}")
