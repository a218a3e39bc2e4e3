"""Canonical concrete syntax for values and processes.

The printer emits text that `parse_program` accepts; re-parsing yields a
process alpha-equivalent to the original (sequencing sugar re-introduces
fresh binders).
"""
from __future__ import annotations

from .syntax import (Builtin, Call, Extern, FunctionDef, If, Install, Let,
                     ModuleValue, Process, Receive, Send, SensorRef, Timer,
                     Val, Value, Variable, free_vars, InterpreterBug)

_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t"}


def _string_lit(s: str) -> str:
    return '"' + "".join(_ESCAPES.get(c, c) for c in s) + '"'


def pp_value(v: Value) -> str:
    match v:
        case Builtin(x):
            if isinstance(x, bool):
                return "true" if x else "false"
            if isinstance(x, str):
                return _string_lit(x)
            return repr(x)
        case Variable(name):
            return name
        case SensorRef():
            return "sensor"
        case ModuleValue(entries):
            if not entries:
                return "{}"
            return "{ " + " ".join(_pp_entry(l, fn) for l, fn in entries) + " }"
    raise InterpreterBug(f"unknown value {v!r}")


def _pp_entry(label: str, fn: FunctionDef) -> str:
    params = []
    for p, t in zip(fn.params, fn.param_types):
        params.append(p.name if t is None else f"{p.name}: {t}")
    head = f"{label} = ({', '.join(params)})"
    if fn.ret_type is not None:
        head += f": {fn.ret_type}"
    return f"{head} {pretty_print(fn.body)}"


def _args(values) -> str:
    return ", ".join(pp_value(v) for v in values)


def _grouped(p: Process) -> str:
    """Parenthesize processes that would otherwise swallow what follows."""
    text = pretty_print(p)
    if isinstance(p, (Let, If)):
        return f"({text})"
    return text


def pretty_print(p: Process) -> str:
    match p:
        case Val(v):
            return pp_value(v)
        case Call(target, label, args):
            return f"{pp_value(target)}.{label}({_args(args)})"
        case Extern(label, args):
            return f"external {label}({_args(args)})"
        case Timer(label, args, period, duration):
            return (f"timer {label}({_args(args)}) "
                    f"every {pp_value(period)} expire {pp_value(duration)}")
        case Send(label, args):
            return f"send {label}({_args(args)})"
        case Receive():
            return "receive"
        case Install(target, source):
            if isinstance(target, SensorRef):
                return f"install {pp_value(source)}"
            return f"{pp_value(target)}.install {pp_value(source)}"
        case Let(var, bound, body):
            if var not in free_vars(body):
                return f"{_grouped(bound)}; {pretty_print(body)}"
            return f"let {var.name} = {_grouped(bound)} in {pretty_print(body)}"
        case If(cond, then, orelse):
            return (f"if {pp_value(cond)} then {pretty_print(then)} "
                    f"else {pretty_print(orelse)}")
    raise InterpreterBug(f"unknown process {p!r}")
