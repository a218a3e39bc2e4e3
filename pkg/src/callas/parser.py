"""Concrete syntax for sensor programs.

Hand-rolled lexer and recursive-descent parser.  Statement sequencing
(`P; Q`), the bare `install M` form, and infix comparisons/arithmetic are
surface sugar: sequencing becomes a `let` with a fresh unused binder,
`install M` becomes `sensor.install M`, and binary operators become calls
to the reserved externs gt/lt/eq/add/sub/mul.

Grammar sketch (processes are parsed greedily up to `;`, `in`, `else`,
`)`, `}` or end of input):

    process  ::= "let" id "=" process "in" process
               | "if" expr "then" process ["else" process]
               | simple [";" process]
    simple   ::= "install" value | "timer" id "(" values ")" "every" value
                 "expire" value | "send" id "(" values ")" | "receive"
               | ("external" | "extern") id "(" values ")"
               | "(" process ")"
               | value "." "install" value | value "." id "(" values ")"
               | expr
    expr     ::= arith [(">" | "<" | "==") arith]
    arith    ::= term (("+" | "-") term)*
    term     ::= factor ("*" factor)*
    factor   ::= value | "(" expr ")"
    value    ::= int | float | string | "true" | "false" | id | "sensor"
               | module
    module   ::= "{" { id "=" "(" params ")" [":" type] process } "}"
    type     ::= "int" | "float" | "bool" | "string" | "{" "}"

Comments run from `//` to end of line.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import types as ty
from .syntax import (SENSOR, Builtin, Call, Extern, FunctionDef, If, Install,
                     Let, ModuleValue, Process, Receive, Send, Timer, Val,
                     Value, Variable, free_vars, fresh_variable)

KEYWORDS = {
    "let", "in", "if", "then", "else", "install", "timer", "every", "expire",
    "send", "receive", "external", "extern", "sensor", "true", "false",
}

_STOPPERS = {"in", "else"}  # keywords that end a greedy process

_ESCAPES = {"\\": "\\", '"': '"', "n": "\n", "t": "\t"}


class ParseError(Exception):
    """Syntax error with a position inside the source text."""

    def __init__(self, line: int, col: int, message: str, expected=()):
        self.line = line
        self.col = col
        self.message = message
        self.expected = tuple(expected)
        where = f"line {line}, column {col}"
        hint = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{where}: {message}{hint}")


@dataclass
class Token:
    kind: str  # INT FLOAT STRING IDENT KW PUNCT OP EOF
    text: str
    line: int
    col: int
    value: object = None


def tokenize(src: str) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(src)

    def err(msg):
        raise ParseError(line, col, msg)

    while i < n:
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if src.startswith("//", i):
            while i < n and src[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            is_float = False
            if j < n and src[j] == "." and j + 1 < n and src[j + 1].isdigit():
                is_float = True
                j += 1
                while j < n and src[j].isdigit():
                    j += 1
            if j < n and src[j] in "eE":
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    is_float = True
                    j = k
                    while j < n and src[j].isdigit():
                        j += 1
            text = src[i:j]
            value = float(text) if is_float else int(text)
            toks.append(Token("FLOAT" if is_float else "INT", text,
                              start_line, start_col, value))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            text = src[i:j]
            kind = "KW" if text in KEYWORDS else "IDENT"
            toks.append(Token(kind, text, start_line, start_col))
            col += j - i
            i = j
            continue
        if c == '"':
            j = i + 1
            out = []
            while j < n and src[j] != '"':
                if src[j] == "\\":
                    if j + 1 >= n or src[j + 1] not in _ESCAPES:
                        raise ParseError(start_line, start_col,
                                         f"bad escape in string literal")
                    out.append(_ESCAPES[src[j + 1]])
                    j += 2
                elif src[j] == "\n":
                    raise ParseError(start_line, start_col,
                                     "unterminated string literal")
                else:
                    out.append(src[j])
                    j += 1
            if j >= n:
                raise ParseError(start_line, start_col,
                                 "unterminated string literal")
            toks.append(Token("STRING", src[i:j + 1], start_line, start_col,
                              "".join(out)))
            col += j + 1 - i
            i = j + 1
            continue
        if src.startswith("==", i):
            toks.append(Token("OP", "==", start_line, start_col))
            i += 2
            col += 2
            continue
        if c in "><+-*":
            toks.append(Token("OP", c, start_line, start_col))
            i += 1
            col += 1
            continue
        if c in "{}(),;=.:":
            toks.append(Token("PUNCT", c, start_line, start_col))
            i += 1
            col += 1
            continue
        err(f"unexpected character {c!r}")
    toks.append(Token("EOF", "", line, col))
    return toks


# expression trees, desugared after parsing
@dataclass
class _Leaf:
    value: Value


@dataclass
class _BinOp:
    op: str  # extern label
    left: object
    right: object


_OP_LABELS = {">": "gt", "<": "lt", "==": "eq", "+": "add", "-": "sub", "*": "mul"}
RESERVED_EXTERNS = {
    "gt": (("int", "int"), "bool"),
    "lt": (("int", "int"), "bool"),
    "eq": (("int", "int"), "bool"),
    "add": (("int", "int"), "int"),
    "sub": (("int", "int"), "int"),
    "mul": (("int", "int"), "int"),
}


class _Parser:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.pos = 0
        self._fresh = 0

    # --- token plumbing ----------------------------------------------------
    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def take(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        t = self.peek()
        if not self.at(kind, text):
            want = text if text is not None else kind
            raise ParseError(t.line, t.col,
                             f"unexpected {t.text!r}" if t.text else "unexpected end of input",
                             expected=(want,))
        return self.take()

    def _at_terminator(self) -> bool:
        t = self.peek()
        return (t.kind == "EOF"
                or (t.kind == "PUNCT" and t.text in ")}")
                or (t.kind == "KW" and t.text in _STOPPERS))

    # --- values ------------------------------------------------------------
    def at_value(self) -> bool:
        t = self.peek()
        return (t.kind in ("INT", "FLOAT", "STRING", "IDENT")
                or (t.kind == "KW" and t.text in ("true", "false", "sensor"))
                or (t.kind == "PUNCT" and t.text == "{")
                or (t.kind == "OP" and t.text == "-"
                    and self.peek(1).kind in ("INT", "FLOAT")))

    def parse_value(self) -> Value:
        t = self.peek()
        if t.kind == "OP" and t.text == "-" and self.peek(1).kind in ("INT", "FLOAT"):
            self.take()
            num = self.take()
            return Builtin(-num.value)
        if t.kind in ("INT", "FLOAT", "STRING"):
            self.take()
            return Builtin(t.value)
        if t.kind == "KW" and t.text in ("true", "false"):
            self.take()
            return Builtin(t.text == "true")
        if t.kind == "KW" and t.text == "sensor":
            self.take()
            return SENSOR
        if t.kind == "IDENT":
            self.take()
            return Variable(t.text)
        if t.kind == "PUNCT" and t.text == "{":
            return self.parse_module()
        raise ParseError(t.line, t.col, f"expected a value, found {t.text!r}")

    def parse_values(self) -> tuple[Value, ...]:
        self.expect("PUNCT", "(")
        args: list[Value] = []
        if not self.at("PUNCT", ")"):
            args.append(self.parse_value())
            while self.at("PUNCT", ","):
                self.take()
                args.append(self.parse_value())
        self.expect("PUNCT", ")")
        return tuple(args)

    def parse_module(self) -> ModuleValue:
        open_tok = self.expect("PUNCT", "{")
        entries: list[tuple[str, FunctionDef]] = []
        labels: set[str] = set()
        while not self.at("PUNCT", "}"):
            t = self.peek()
            if t.kind != "IDENT":
                raise ParseError(t.line, t.col,
                                 f"expected a function label, found {t.text!r}")
            if t.text in labels:
                raise ParseError(t.line, t.col,
                                 f"duplicate label {t.text!r} in module")
            labels.add(t.text)
            label = self.take().text
            self.expect("PUNCT", "=")
            params, ptypes = self.parse_params()
            ret_type = None
            if self.at("PUNCT", ":"):
                self.take()
                ret_type = self.parse_type()
            body = self.parse_process()
            entries.append((label, FunctionDef(params, body, ptypes, ret_type)))
        self.expect("PUNCT", "}")
        _ = open_tok
        return ModuleValue(tuple(entries))

    def parse_params(self) -> tuple[tuple[Variable, ...], tuple]:
        self.expect("PUNCT", "(")
        params: list[Variable] = []
        ptypes: list = []
        while not self.at("PUNCT", ")"):
            if params:
                self.expect("PUNCT", ",")
            t = self.peek()
            if t.kind != "IDENT":
                raise ParseError(t.line, t.col,
                                 f"expected a parameter name, found {t.text!r}")
            name = self.take().text
            ann = None
            if self.at("PUNCT", ":"):
                self.take()
                ann = self.parse_type()
            params.append(Variable(name))
            ptypes.append(ann)
        close = self.expect("PUNCT", ")")
        if not params or params[0].name != "self":
            raise ParseError(close.line, close.col,
                             "first function parameter must be `self`")
        return tuple(params), tuple(ptypes)

    def parse_type(self):
        t = self.peek()
        if t.kind == "IDENT" and t.text in ty.BASE_KINDS:
            self.take()
            return ty.BASE_KINDS[t.text]
        if t.kind == "PUNCT" and t.text == "{":
            self.take()
            self.expect("PUNCT", "}")
            return ty.EMPTY_CODE
        raise ParseError(t.line, t.col,
                         f"expected a type, found {t.text!r}",
                         expected=("int", "float", "bool", "string", "{}"))

    # --- expressions -------------------------------------------------------
    def parse_expr_tree(self):
        left = self.parse_arith()
        if self.at("OP") and self.peek().text in ("<", ">", "=="):
            op = self.take().text
            right = self.parse_arith()
            return _BinOp(_OP_LABELS[op], left, right)
        return left

    def parse_arith(self):
        node = self.parse_term()
        while self.at("OP") and self.peek().text in ("+", "-"):
            op = self.take().text
            node = _BinOp(_OP_LABELS[op], node, self.parse_term())
        return node

    def parse_term(self):
        node = self.parse_factor()
        while self.at("OP", "*"):
            self.take()
            node = _BinOp("mul", node, self.parse_factor())
        return node

    def parse_factor(self):
        if self.at("PUNCT", "("):
            self.take()
            node = self.parse_expr_tree()
            self.expect("PUNCT", ")")
            return node
        return _Leaf(self.parse_value())

    def _tree_vars(self, node, acc: set) -> None:
        if isinstance(node, _Leaf):
            if isinstance(node.value, Variable):
                acc.add(node.value)
        else:
            self._tree_vars(node.left, acc)
            self._tree_vars(node.right, acc)

    def _desugar_tree(self, node, avoid: set) -> Process:
        """Flatten an operator tree into extern calls, let-lifting operands."""
        if isinstance(node, _Leaf):
            return Val(node.value)

        def operand(sub, binds):
            if isinstance(sub, _Leaf):
                return sub.value
            var = fresh_variable(avoid | {v for v, _ in binds}, "_e")
            binds.append((var, self._desugar_tree(sub, avoid | {var})))
            return var

        binds: list[tuple[Variable, Process]] = []
        left = operand(node.left, binds)
        right = operand(node.right, binds)
        out: Process = Extern(node.op, (left, right))
        for var, bound in reversed(binds):
            out = Let(var, bound, out)
        return out

    def desugar_expr(self, node) -> Process:
        avoid: set = set()
        self._tree_vars(node, avoid)
        return self._desugar_tree(node, avoid)

    # --- processes ----------------------------------------------------------
    def fresh_seq_var(self, continuation: Process) -> Variable:
        taken = free_vars(continuation)
        while True:
            var = Variable(f"_s{self._fresh}")
            self._fresh += 1
            if var not in taken:
                return var

    def parse_process(self) -> Process:
        if self.at("KW", "let"):
            self.take()
            name = self.expect("IDENT")
            self.expect("PUNCT", "=")
            bound = self.parse_process()
            self.expect("KW", "in")
            body = self.parse_process()
            return Let(Variable(name.text), bound, body)
        if self.at("KW", "if"):
            return self.parse_if()
        head = self.parse_simple()
        if self.at("PUNCT", ";"):
            self.take()
            if self._at_terminator():  # tolerate a trailing semicolon
                return head
            rest = self.parse_process()
            return Let(self.fresh_seq_var(rest), head, rest)
        return head

    def parse_if(self) -> Process:
        self.expect("KW", "if")
        cond_tree = self.parse_expr_tree()
        self.expect("KW", "then")
        then = self.parse_process()
        orelse: Process = Val(ModuleValue())
        if self.at("KW", "else"):
            self.take()
            orelse = self.parse_process()
        if isinstance(cond_tree, _Leaf):
            return If(cond_tree.value, then, orelse)
        avoid: set = set()
        self._tree_vars(cond_tree, avoid)
        avoid |= free_vars(then) | free_vars(orelse)
        var = fresh_variable(avoid, "_c")
        return Let(var, self.desugar_expr(cond_tree), If(var, then, orelse))

    def parse_simple(self) -> Process:
        t = self.peek()
        if t.kind == "KW":
            if t.text == "install":
                self.take()
                return Install(SENSOR, self.parse_value())
            if t.text == "timer":
                self.take()
                label = self.expect("IDENT").text
                args = self.parse_values()
                self.expect("KW", "every")
                period = self.parse_value()
                self.expect("KW", "expire")
                duration = self.parse_value()
                return Timer(label, args, period, duration)
            if t.text == "send":
                self.take()
                label = self.expect("IDENT").text
                return Send(label, self.parse_values())
            if t.text == "receive":
                self.take()
                return Receive()
            if t.text in ("external", "extern"):
                self.take()
                label = self.expect("IDENT").text
                return Extern(label, self.parse_values())
        if self.at("PUNCT", "(") and not self._paren_is_expr():
            self.take()
            inner = self.parse_process()
            self.expect("PUNCT", ")")
            return inner
        if not self.at_value() and not self.at("PUNCT", "("):
            raise ParseError(t.line, t.col,
                             f"unexpected {t.text!r}" if t.text else "unexpected end of input")
        if self.at_value():
            mark = self.pos
            v = self.parse_value()
            if self.at("PUNCT", "."):
                self.take()
                if self.at("KW", "install"):
                    self.take()
                    return Install(v, self.parse_value())
                label = self.expect("IDENT").text
                return Call(v, label, self.parse_values())
            if self.at("OP"):
                self.pos = mark  # reparse as an operator expression
            else:
                return Val(v)
        return self.desugar_expr(self.parse_expr_tree())

    def _paren_is_expr(self) -> bool:
        """Heuristic: `(` opens an arithmetic group only when a binary
        operator follows the matching close paren at depth 0 of values."""
        depth = 0
        i = self.pos
        while i < len(self.toks):
            tok = self.toks[i]
            if tok.kind == "PUNCT" and tok.text == "(":
                depth += 1
            elif tok.kind == "PUNCT" and tok.text == ")":
                depth -= 1
                if depth == 0:
                    nxt = self.toks[i + 1] if i + 1 < len(self.toks) else None
                    return nxt is not None and nxt.kind == "OP"
            elif tok.kind == "EOF":
                return False
            i += 1
        return False


def parse_program(src: str) -> Process:
    """Parse a full sensor program.  Raises ParseError on malformed input."""
    parser = _Parser(tokenize(src))
    p = parser.parse_process()
    tok = parser.peek()
    if tok.kind != "EOF":
        raise ParseError(tok.line, tok.col,
                         f"unexpected {tok.text!r} after program end")
    return p


def parse_value_text(src: str) -> Value:
    """Parse a single closed value (used for serialized queue contents)."""
    parser = _Parser(tokenize(src))
    v = parser.parse_value()
    tok = parser.peek()
    if tok.kind != "EOF":
        raise ParseError(tok.line, tok.col, f"unexpected {tok.text!r} after value")
    return v
