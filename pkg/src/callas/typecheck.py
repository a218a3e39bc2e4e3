"""Typing judgments for values, processes, sensors, queues and networks.

Every judgment is parameterized by the declared interfaces: the extern
signatures available on a sensor, and the network-wide sensor interface
that all installed code must honor.

Checking is bidirectional where it has to be: module literals destined
for sensor installation are checked against the sensor interface (their
`self` is typed at the sensor-code type), so annotations on them are
optional.  Free-standing module literals synthesize their own recursive
code type and therefore require parameter and return annotations.

Installed modules may implement any *subset* of the sensor interface:
programs legitimately send calls that only other sensors implement, and
code for a label may arrive over the radio later.
"""
from __future__ import annotations

from typing import Optional

from . import types as ty
from .syntax import (Builtin, Call, Extern, If, Install, Let, Message,
                     ModuleValue, Network, Process, Receive, Send,
                     SensorRef, SensorState, Timer, TimerEntry, Val, Value,
                     Variable, is_closed_value)


class TypeCheckError(Exception):
    """A violated typing rule, with enough context to locate it."""

    def __init__(self, rule: str, message: str, location: str = "",
                 expected=None, found=None):
        self.rule = rule
        self.message = message
        self.location = location
        self.expected = expected
        self.found = found
        super().__init__(message)

    def __str__(self) -> str:
        parts = [f"[{self.rule}]"]
        if self.location:
            parts.append(f"{self.location}:")
        parts.append(self.message)
        if self.expected is not None:
            parts.append(f"(expected {self.expected}, found {self.found})")
        return " ".join(parts)

    def at(self, location: str) -> "TypeCheckError":
        if not self.location:
            self.location = location
        return self


class Interfaces:
    """The two interface records every judgment carries: extern signatures
    and the sensor-code interface."""

    def __init__(self, externs: dict[str, ty.Fun], sensor_iface: ty.Rec):
        body = sensor_iface.body if isinstance(sensor_iface, ty.Rec) else None
        if not (isinstance(body, ty.Code) and body.sensor):
            raise ValueError("sensor interface must be a recursive sensor-code type")
        self.externs = dict(externs)
        self.sensor_iface = sensor_iface
        unfolded = ty.unfold(sensor_iface)
        self.sensor_entries: dict[str, ty.Fun] = dict(unfolded.entries)


def make_interfaces(externs: dict[str, tuple], sensor: dict[str, tuple],
                    rec_var: str = "m") -> Interfaces:
    """Build Interfaces from {label: (param_types, ret_type)} declarations.

    `sensor` declarations omit the self parameter; it is added here.
    """
    ext = {l: ty.Fun(tuple(ps), r) for l, (ps, r) in externs.items()}
    entries = tuple(
        (l, ty.Fun((ty.TVar(rec_var), *ps), r)) for l, (ps, r) in sensor.items()
    )
    return Interfaces(ext, ty.Rec(rec_var, ty.Code(entries, sensor=True)))


class Checker:
    """Typing judgments with per-object caches.

    The caches are keyed by object identity and are only used for closed
    components (empty environment), which makes re-checking a network
    after every reduction step cheap: unchanged queue entries and modules
    are never re-visited.
    """

    def __init__(self, ifaces: Interfaces):
        self.ifaces = ifaces
        self._proc_cache: dict = {}
        self._module_cache: dict = {}
        self._msg_cache: dict = {}
        self._twin_cache: dict = {}

    # --- values -------------------------------------------------------------

    def check_value(self, env: dict, v: Value) -> ty.Type:
        match v:
            case Builtin():
                return ty.BASE_KINDS[v.kind()]
            case Variable():
                t = env.get(v)
                if t is None:
                    raise TypeCheckError("T-var", f"unbound variable {v.name!r}")
                return t
            case SensorRef():
                return self.ifaces.sensor_iface
            case ModuleValue():
                return self._code_type(env, v)
        raise TypeCheckError("T-built-in", f"not a value: {v!r}")

    def _code_type(self, env: dict, m: ModuleValue) -> ty.Type:
        """Synthesize the recursive code type of a module literal."""
        if not m.entries:
            return ty.EMPTY_CODE
        sigs = []
        for label, fn in m.entries:
            ptypes = fn.param_types[1:]
            if any(t is None for t in ptypes) or fn.ret_type is None:
                raise TypeCheckError(
                    "T-code",
                    f"module literal needs parameter and return annotations on {label!r}")
            sigs.append((label, tuple(ptypes), fn.ret_type))
        rec = ty.Rec("m", ty.Code(
            tuple((l, ty.Fun((ty.TVar("m"), *ps), r)) for l, ps, r in sigs)))
        for (label, fn), (_, ptypes, ret) in zip(m.entries, sigs):
            inner = dict(env)
            inner[fn.params[0]] = rec
            inner.update(zip(fn.params[1:], ptypes))
            body_t = self.check_process(inner, fn.body)
            if not ty.type_equal(body_t, ret):
                raise TypeCheckError(
                    "T-code", f"body of {label!r} does not match its declared return type",
                    expected=ret, found=body_t)
        return rec

    def _check_args(self, env: dict, args, params, rule: str, what: str) -> None:
        if len(args) != len(params):
            raise TypeCheckError(
                rule, f"{what} takes {len(params)} argument(s), got {len(args)}")
        for i, (a, p) in enumerate(zip(args, params)):
            found = self.check_value(env, a)
            if not ty.type_equal(found, p):
                raise TypeCheckError(rule, f"argument {i + 1} of {what} has the wrong type",
                                     expected=p, found=found)

    def _sensor_call_type(self, env: dict, label: str, args, rule: str) -> ty.Type:
        fn = self.ifaces.sensor_entries.get(label)
        if fn is None:
            raise TypeCheckError(rule, f"{label!r} is not in the sensor interface")
        self._check_args(env, args, fn.params[1:], rule, f"{label!r}")
        return fn.ret

    # --- processes ------------------------------------------------------------

    def check_process(self, env: dict, p: Process) -> ty.Type:
        match p:
            case Val(v):
                return self.check_value(env, v)
            case Extern(label, args):
                sig = self.ifaces.externs.get(label)
                if sig is None:
                    raise TypeCheckError("T-extern", f"undeclared extern {label!r}")
                self._check_args(env, args, sig.params, "T-extern", f"extern {label!r}")
                return sig.ret
            case Send(label, args):
                ret = self._sensor_call_type(env, label, args, "T-send")
                if not ty.type_equal(ret, ty.EMPTY_CODE):
                    raise TypeCheckError(
                        "T-send", f"broadcast call {label!r} must return {{}}",
                        expected=ty.EMPTY_CODE, found=ret)
                return ty.EMPTY_CODE
            case Install(target, source):
                return self._check_install(env, target, source)
            case Call(target, label, args):
                return self._check_call(env, target, label, args)
            case Let(var, bound, body):
                bound_t = self.check_process(env, bound)
                inner = dict(env)
                inner[var] = bound_t
                return self.check_process(inner, body)
            case Receive():
                return ty.EMPTY_CODE
            case Timer(label, args, period, duration):
                ret = self._sensor_call_type(env, label, args, "T-timer")
                if not ty.type_equal(ret, ty.EMPTY_CODE):
                    raise TypeCheckError(
                        "T-timer", f"timed call {label!r} must return {{}}",
                        expected=ty.EMPTY_CODE, found=ret)
                for what, v in (("period", period), ("duration", duration)):
                    found = self.check_value(env, v)
                    if not ty.type_equal(found, ty.INT):
                        raise TypeCheckError("T-timer", f"timer {what} must be an int",
                                             expected=ty.INT, found=found)
                return ty.EMPTY_CODE
            case If(cond, then, orelse):
                cond_t = self.check_value(env, cond)
                if not ty.type_equal(cond_t, ty.BOOL):
                    raise TypeCheckError("T-if", "condition must be a bool",
                                         expected=ty.BOOL, found=cond_t)
                then_t = self.check_process(env, then)
                else_t = self.check_process(env, orelse)
                if not ty.type_equal(then_t, else_t):
                    raise TypeCheckError("T-if", "branches must have the same type",
                                         expected=then_t, found=else_t)
                return then_t
        raise TypeCheckError("T-built-in", f"not a process: {p!r}")

    def _check_call(self, env: dict, target: Value, label: str, args) -> ty.Type:
        target_t = self.check_value(env, target)
        u = ty.unfold(target_t)
        if not isinstance(u, ty.Code):
            raise TypeCheckError("T-call", "call target is not a code module",
                                 found=target_t)
        fn = u.get(label)
        if fn is None:
            raise TypeCheckError("T-call", f"no function {label!r} in the target's type",
                                 found=target_t)
        if not ty.type_equal(fn.params[0], target_t):
            raise TypeCheckError("T-call",
                                 f"self parameter of {label!r} does not match its module")
        self._check_args(env, args, fn.params[1:], "T-call", f"{label!r}")
        return fn.ret

    def _twin_type(self, labels: tuple) -> ty.Type:
        """The anonymous counterpart of the sensor interface restricted to
        `labels` (what a sensor-installable value must look like)."""
        key = frozenset(labels)
        twin = self._twin_cache.get(key)
        if twin is None:
            var = self.ifaces.sensor_iface.var
            entries = []
            for l in sorted(key):
                fn = self.ifaces.sensor_entries[l]
                entries.append((l, ty.Fun((ty.TVar(var), *fn.params[1:]), fn.ret)))
            twin = ty.Rec(var, ty.Code(tuple(entries), sensor=False))
            self._twin_cache[key] = twin
        return twin

    def check_module_against_iface(self, env: dict, m: ModuleValue) -> None:
        """Check installable code: labels form a subset of the sensor
        interface and every body fits its declared signature, with `self`
        typed at the sensor interface itself."""
        iface = self.ifaces
        for label, fn in m.entries:
            sig = iface.sensor_entries.get(label)
            if sig is None:
                raise TypeCheckError(
                    "T-sInstall", f"{label!r} is not in the sensor interface")
            expected = sig.params[1:]
            if len(fn.params) - 1 != len(expected):
                raise TypeCheckError(
                    "T-sInstall",
                    f"{label!r} takes {len(fn.params) - 1} parameter(s), "
                    f"interface declares {len(expected)}")
            for ann, exp in zip(fn.param_types[1:], expected):
                if ann is not None and not ty.type_equal(ann, exp):
                    raise TypeCheckError(
                        "T-sInstall", f"annotation on {label!r} disagrees with the interface",
                        expected=exp, found=ann)
            if fn.ret_type is not None and not ty.type_equal(fn.ret_type, sig.ret):
                raise TypeCheckError(
                    "T-sInstall", f"return annotation on {label!r} disagrees with the interface",
                    expected=sig.ret, found=fn.ret_type)
            inner = dict(env)
            inner[fn.params[0]] = iface.sensor_iface
            inner.update(zip(fn.params[1:], expected))
            body_t = self.check_process(inner, fn.body)
            if not ty.type_equal(body_t, sig.ret):
                raise TypeCheckError(
                    "T-sInstall", f"body of {label!r} does not match the interface",
                    expected=sig.ret, found=body_t)

    def _check_install(self, env: dict, target: Value, source: Value) -> ty.Type:
        target_t = self.check_value(env, target)
        u = ty.unfold(target_t)
        if not isinstance(u, ty.Code):
            raise TypeCheckError("T-sInstall", "install target must be code",
                                 found=target_t)
        if u.sensor:
            if isinstance(source, ModuleValue):
                self.check_module_against_iface(env, source)
                return ty.EMPTY_CODE
            source_t = self.check_value(env, source)
            us = ty.unfold(source_t)
            if not (isinstance(us, ty.Code) and not us.sensor):
                raise TypeCheckError("T-sInstall",
                                     "install source must be an anonymous module",
                                     found=source_t)
            missing = set(us.labels()) - set(self.ifaces.sensor_entries)
            if missing:
                raise TypeCheckError(
                    "T-sInstall",
                    f"installed labels {sorted(missing)} are not in the sensor interface")
            twin = self._twin_type(us.labels())
            if not ty.type_equal(source_t, twin):
                raise TypeCheckError(
                    "T-sInstall", "installed code disagrees with the sensor interface",
                    expected=twin, found=source_t)
            return ty.EMPTY_CODE
        # anonymous-module update
        source_t = self.check_value(env, source)
        us = ty.unfold(source_t)
        if not (isinstance(us, ty.Code) and not us.sensor):
            raise TypeCheckError("T-mInstall",
                                 "install source must be an anonymous module",
                                 found=source_t)
        return ty.code_type_sum(target_t, source_t)

    # --- sensors, queues, networks ------------------------------------------

    def _cached_proc(self, p: Process):
        key = id(p)
        hit = self._proc_cache.get(key)
        if hit is None or hit[0] is not p:
            try:
                hit = (p, self.check_process({}, p))
            except TypeCheckError as e:
                hit = (p, e)
            self._proc_cache[key] = hit
        result = hit[1]
        if isinstance(result, TypeCheckError):
            raise TypeCheckError(result.rule, result.message,
                                 expected=result.expected, found=result.found)
        return result

    def _cached_message(self, m: Message) -> Optional[TypeCheckError]:
        key = id(m)
        hit = self._msg_cache.get(key)
        if hit is None or hit[0] is not m:
            err = None
            try:
                if not all(is_closed_value(a) for a in m.args):
                    raise TypeCheckError("T-comm-queue",
                                         f"message {m.label!r} carries open values")
                self._sensor_call_type({}, m.label, m.args, "T-comm-queue")
            except TypeCheckError as e:
                err = e
            hit = (m, err)
            self._msg_cache[key] = hit
        err = hit[1]
        if err is None:
            return None
        return TypeCheckError(err.rule, err.message,
                              expected=err.expected, found=err.found)

    def _cached_module(self, m: ModuleValue) -> Optional[TypeCheckError]:
        key = id(m)
        hit = self._module_cache.get(key)
        if hit is None or hit[0] is not m:
            err = None
            try:
                self.check_module_against_iface({}, m)
            except TypeCheckError as e:
                err = e
            hit = (m, err)
            self._module_cache[key] = hit
        err = hit[1]
        if err is None:
            return None
        return TypeCheckError(err.rule, err.message,
                              expected=err.expected, found=err.found)

    def check_queues(self, s: SensorState) -> list[TypeCheckError]:
        """Run-queue, message queues and the timer table, element-wise."""
        errors: list[TypeCheckError] = []
        where = f"sensor {s.id}"
        for i, p in enumerate(s.run_queue):
            try:
                self._cached_proc(p)
            except TypeCheckError as e:
                errors.append(e.at(f"{where}: run-queue[{i}]"))
        for name, queue in (("inbox", s.inbox), ("outbox", s.outbox)):
            for i, m in enumerate(queue):
                err = self._cached_message(m)
                if err is not None:
                    errors.append(err.at(f"{where}: {name}[{i}]"))
        for i, e in enumerate(s.timers):
            loc = f"{where}: timers[{i}]"
            if not isinstance(e, TimerEntry):
                errors.append(TypeCheckError("T-event-queue", "not a timer entry", loc))
                continue
            try:
                if not all(is_closed_value(a) for a in e.args):
                    raise TypeCheckError("T-event-queue",
                                         f"timer {e.label!r} carries open values")
                self._sensor_call_type({}, e.label, e.args, "T-event-queue")
            except TypeCheckError as exc:
                errors.append(exc.at(loc))
            for what, v in (("period", e.period), ("expire_at", e.expire_at),
                            ("next_at", e.next_at)):
                if not isinstance(v, int) or isinstance(v, bool):
                    errors.append(TypeCheckError(
                        "T-event-queue", f"timer {what} must be an int", loc))
        return errors

    def check_sensor(self, s: SensorState) -> list[TypeCheckError]:
        errors: list[TypeCheckError] = []
        where = f"sensor {s.id}"
        try:
            self._cached_proc(s.running)
        except TypeCheckError as e:
            errors.append(e.at(f"{where}: running"))
        err = self._cached_module(s.installed)
        if err is not None:
            errors.append(err.at(f"{where}: installed"))
        errors.extend(self.check_queues(s))
        if not isinstance(s.clock, int) or isinstance(s.clock, bool) or s.clock < 0:
            errors.append(TypeCheckError("T-sensor", "clock must be a non-negative int",
                                         f"{where}: clock"))
        pos = s.position
        if (not isinstance(pos, tuple) or len(pos) != 2
                or not all(isinstance(c, (int, float)) and not isinstance(c, bool)
                           for c in pos)):
            errors.append(TypeCheckError("T-sensor", "position must be a coordinate pair",
                                         f"{where}: position"))
        return errors

    def check_network(self, n: Network) -> list[TypeCheckError]:
        errors: list[TypeCheckError] = []
        seen: set[str] = set()
        for sensor in n.all_sensors():
            if sensor.id in seen:
                errors.append(TypeCheckError("T-par", f"duplicate sensor id {sensor.id!r}",
                                             f"sensor {sensor.id}"))
            seen.add(sensor.id)
            errors.extend(self.check_sensor(sensor))
        return errors


# --- one-shot wrappers -------------------------------------------------------

def check_value(ifaces: Interfaces, env: dict, v: Value) -> ty.Type:
    return Checker(ifaces).check_value(env, v)


def check_process(ifaces: Interfaces, env: dict, p: Process) -> ty.Type:
    return Checker(ifaces).check_process(env, p)


def check_sensor(ifaces: Interfaces, s: SensorState) -> list[TypeCheckError]:
    return Checker(ifaces).check_sensor(s)


def check_queues(ifaces: Interfaces, s: SensorState) -> list[TypeCheckError]:
    return Checker(ifaces).check_queues(s)


def check_network(ifaces: Interfaces, n: Network) -> list[TypeCheckError]:
    return Checker(ifaces).check_network(n)
