"""Operation script syntax: one operation per line, ``#`` comments.

Grammar::

    op      := path NAME args...
    path    := '.' | ('.'? segment ('.' segment)*)     segments may be '*' or '1!'
    atom    := "string" | number | NaN
    type    := String | Number | List type
             | '{' [ id ["name"] ':' type (',' ...)* ] '}'
             | '->' path
             | formula '(' [op (';' op)*] '^' path ')'

Lowercase names are value operations, capitalized names are type operations.
Printing is canonical (leading-dot paths); parse∘print is the identity on all
operations and print∘parse is the identity on canonical scripts.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

from . import ops as O
from .model import (
    BaselineError,
    Column,
    FormulaType,
    LinkType,
    ListType,
    NUMBER,
    NumberType,
    Path,
    RecordType,
    STRING,
    StringType,
    Type,
    format_number,
    parse_path,
    path_str,
)


class ParseError(BaselineError):
    def __init__(self, message: str, line: int = 1, col: int = 1, expected: tuple[str, ...] = ()):
        self.line = line
        self.col = col
        self.expected = expected
        where = f"line {line}, col {col}"
        if expected:
            message = f"{message} (expected one of: {', '.join(expected)})"
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------------------
# Printing

def print_string(s: str) -> str:
    out = s.replace("\\", "\\\\").replace('"', '\\"')
    out = out.replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r")
    return f'"{out}"'


def print_atom(v) -> str:
    if isinstance(v, str):
        return print_string(v)
    if isinstance(v, float):
        return format_number(v)
    raise ParseError(f"not an atomic value: {v!r}")


def print_type(t: Type) -> str:
    if isinstance(t, StringType):
        return "String"
    if isinstance(t, NumberType):
        return "Number"
    if isinstance(t, ListType):
        return f"List {print_type(t.elem)}"
    if isinstance(t, RecordType):
        cols = ", ".join(
            f"{c.id} {print_string(c.name)}: {print_type(c.type)}" for c in t.columns
        )
        return "{" + cols + "}"
    if isinstance(t, LinkType):
        return f"-> {path_str(t.range)}"
    if isinstance(t, FormulaType):
        body = " ; ".join(print_op(op) for op in t.ops)
        sep = " " if body else ""
        return f"formula({body}{sep}^ {path_str(t.ret)})"
    raise ParseError(f"unprintable type {t!r}")


def print_op(op: O.Op) -> str:
    p = path_str(op.target)
    if isinstance(op, O.Noop):
        return f"{p} noop"
    if isinstance(op, O.Write):
        return f"{p} write {print_atom(op.value)}"
    if isinstance(op, O.Insert):
        return f"{p} insert {op.new_id} before {op.before_id}"
    if isinstance(op, O.Append):
        return f"{p} append {op.new_id}"
    if isinstance(op, O.Delete):
        return f"{p} delete {op.elem_id}"
    if isinstance(op, O.Move):
        return f"{p} move {path_str(op.dest)}"
    if isinstance(op, O.LinkSet):
        return f"{p} link {op.link_target}"
    if isinstance(op, O.DeletePresent):
        return f"{p} deletePresent"
    if isinstance(op, O.DeleteAbsent):
        return f"{p} deleteAbsent"
    if isinstance(op, O.Define):
        return f"{p} Define {print_type(op.type)}"
    if isinstance(op, O.Convert):
        return f"{p} Convert {print_type(op.type)}"
    if isinstance(op, O.Rename):
        return f"{p} Rename {print_string(op.name)}"
    if isinstance(op, O.InsertCol):
        return f"{p} Insert {op.new_id} before {op.before_id}"
    if isinstance(op, O.AppendCol):
        return f"{p} Append {op.new_id}"
    if isinstance(op, O.DeleteCol):
        return f"{p} Delete {op.col_id}"
    if isinstance(op, O.MoveCol):
        return f"{p} Move {path_str(op.dest)}"
    if isinstance(op, O.ListOf):
        return f"{p} ListOf"
    if isinstance(op, O.IntoFirst):
        return f"{p} IntoFirst"
    if isinstance(op, O.RecordOf):
        return f"{p} RecordOf {op.field_id}"
    if isinstance(op, O.IntoField):
        return f"{p} IntoField {op.field_id}"
    if isinstance(op, O.LinkType_):
        return f"{p} Link {path_str(op.range)}"
    if isinstance(op, O.Split):
        return f"{p} Split {path_str(op.dest)}"
    if isinstance(op, O.Join):
        return f"{p} Join"
    raise ParseError(f"unprintable op {op!r}")


def print_script(operations) -> str:
    return "\n".join(print_op(op) for op in operations) + "\n"


# ---------------------------------------------------------------------------
# Tokenizing

@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # 'string' | 'punct' | 'word' | 'end'
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r'"(?:[^"\\]|\\.)*"'
    r"|->"
    r"|[{}():,;^]"
    r'|[^\s{}():,;^"]+'
)

_ESCAPES = {"\\": "\\", '"': '"', "n": "\n", "t": "\t", "r": "\r"}


def _unquote(text: str, line: int, col: int) -> str:
    body = text[1:-1]
    out: list[str] = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            i += 1
            if i >= len(body) or body[i] not in _ESCAPES:
                raise ParseError(f"bad escape in string", line, col)
            out.append(_ESCAPES[body[i]])
        else:
            out.append(ch)
        i += 1
    return "".join(out)


def _tokenize(text: str, line: int) -> list[Token]:
    toks: list[Token] = []
    for m in _TOKEN_RE.finditer(text):
        t = m.group(0)
        col = m.start() + 1
        if t.startswith('"'):
            if not (len(t) >= 2 and t.endswith('"')):
                raise ParseError("unterminated string", line, col)
            toks.append(Token("string", _unquote(t, line, col), line, col))
        elif t in ("{", "}", "(", ")", ":", ",", ";", "^", "->"):
            toks.append(Token("punct", t, line, col))
        else:
            toks.append(Token("word", t, line, col))
    toks.append(Token("end", "", line, len(text) + 1))
    return toks


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.toks[self.pos]

    def next(self) -> Token:
        tok = self.toks[self.pos]
        if tok.kind != "end":
            self.pos += 1
        return tok

    def fail(self, message: str, *expected: str):
        tok = self.peek()
        raise ParseError(message, tok.line, tok.col, expected)

    def expect_punct(self, text: str) -> Token:
        tok = self.peek()
        if tok.kind != "punct" or tok.text != text:
            self.fail(f"got {tok.text!r}", text)
        return self.next()

    def word(self, what: str) -> str:
        tok = self.peek()
        if tok.kind != "word":
            self.fail(f"got {tok.text!r}", what)
        return self.next().text

    def string(self) -> str:
        tok = self.peek()
        if tok.kind != "string":
            self.fail(f"got {tok.text!r}", "quoted string")
        return self.next().text

    def path(self) -> Path:
        raw = self.word("path")
        try:
            return parse_path(raw)
        except BaselineError:
            self.fail(f"bad path {raw!r}", "path")
            raise  # unreachable

    def ident(self) -> str:
        return self.word("id")

    def atom(self):
        tok = self.peek()
        if tok.kind == "string":
            return self.next().text
        raw = self.word("atomic value")
        if raw == "NaN":
            return math.nan
        if raw == "Infinity":
            return math.inf
        if raw == "-Infinity":
            return -math.inf
        if re.match(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$", raw):
            return float(raw)
        self.fail(f"bad atom {raw!r}", "number", "string")

    def type_expr(self) -> Type:
        tok = self.peek()
        if tok.kind == "punct" and tok.text == "->":
            self.next()
            return LinkType(self.path())
        if tok.kind == "punct" and tok.text == "{":
            self.next()
            cols: list[Column] = []
            while True:
                tok = self.peek()
                if tok.kind == "punct" and tok.text == "}":
                    self.next()
                    break
                cid = self.ident()
                name = cid
                if self.peek().kind == "string":
                    name = self.string()
                self.expect_punct(":")
                cols.append(Column(cid, name, self.type_expr()))
                tok = self.peek()
                if tok.kind == "punct" and tok.text == ",":
                    self.next()
            return RecordType(tuple(cols))
        word = self.word("type")
        if word == "String":
            return STRING
        if word == "Number":
            return NUMBER
        if word == "List":
            return ListType(self.type_expr())
        if word == "formula":
            self.expect_punct("(")
            timeline: list[O.Op] = []
            while not (self.peek().kind == "punct" and self.peek().text == "^"):
                timeline.append(self.operation())
                tok = self.peek()
                if tok.kind == "punct" and tok.text == ";":
                    self.next()
            self.expect_punct("^")
            ret = self.path()
            self.expect_punct(")")
            return FormulaType(tuple(timeline), ret)
        self.fail(f"bad type {word!r}", "String", "Number", "List", "{", "->", "formula")
        raise AssertionError

    def operation(self) -> O.Op:
        target = self.path()
        name = self.word("operation name")
        if name == "noop":
            return O.Noop(target)
        if name == "write":
            return O.Write(target, self.atom())
        if name == "insert":
            new = self.ident()
            kw = self.word("'before'")
            if kw != "before":
                self.fail(f"got {kw!r}", "before")
            return O.Insert(target, new, self.ident())
        if name == "append":
            return O.Append(target, self.ident())
        if name == "delete":
            return O.Delete(target, self.ident())
        if name == "move":
            return O.Move(target, self.path())
        if name == "link":
            return O.LinkSet(target, self.ident())
        if name == "deletePresent":
            return O.DeletePresent(target)
        if name == "deleteAbsent":
            return O.DeleteAbsent(target)
        if name == "Define":
            return O.Define(target, self.type_expr())
        if name == "Convert":
            return O.Convert(target, self.type_expr())
        if name == "Rename":
            return O.Rename(target, self.string())
        if name == "Insert":
            new = self.ident()
            kw = self.word("'before'")
            if kw != "before":
                self.fail(f"got {kw!r}", "before")
            return O.InsertCol(target, new, self.ident())
        if name == "Append":
            return O.AppendCol(target, self.ident())
        if name == "Delete":
            return O.DeleteCol(target, self.ident())
        if name == "Move":
            return O.MoveCol(target, self.path())
        if name == "ListOf":
            return O.ListOf(target)
        if name == "IntoFirst":
            return O.IntoFirst(target)
        if name == "RecordOf":
            return O.RecordOf(target, self.ident())
        if name == "IntoField":
            return O.IntoField(target, self.ident())
        if name == "Link":
            return O.LinkType_(target, self.path())
        if name == "Split":
            return O.Split(target, self.path())
        if name == "Join":
            return O.Join(target)
        self.fail(f"unknown operation {name!r}", "operation name")
        raise AssertionError

    def at_end(self) -> bool:
        return self.peek().kind == "end"


def parse_op(line: str, lineno: int = 1) -> O.Op:
    parser = _Parser(_tokenize(line, lineno))
    op = parser.operation()
    if not parser.at_end():
        parser.fail(f"trailing input {parser.peek().text!r}", "end of line")
    return op


def parse_script(text: str) -> list[O.Op]:
    operations: list[O.Op] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        operations.append(parse_op(line, lineno))
    return operations


def parse_type(text: str) -> Type:
    parser = _Parser(_tokenize(text, 1))
    t = parser.type_expr()
    if not parser.at_end():
        parser.fail(f"trailing input {parser.peek().text!r}", "end of input")
    return t
