"""Typed rich-data model: ids, paths, types, values, states.

Values and types are immutable; every function here is pure. A state pairs a
value with its type and is only considered valid when ``typecheck`` holds.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

# Reserved tokens. STAR addresses a list's element type (and is the null link
# target); WRAP is the element id used when a value is wrapped into a list.
STAR = "*"
WRAP = "1!"

_ID_RE = re.compile(r"^[a-z0-9_-]+$")

Path = tuple[str, ...]
ROOT: Path = ()


class BaselineError(Exception):
    """Base class for all engine errors."""


class PathNotFound(BaselineError):
    pass


class TombstoneAtPath(BaselineError):
    pass


class TypeMismatch(BaselineError):
    pass


class DuplicateId(BaselineError):
    pass


class MissingAnchor(BaselineError):
    pass


class InvalidTarget(BaselineError):
    pass


class DanglingLink(BaselineError):
    pass


class CycleDetected(BaselineError):
    pass


class IndexOutOfRange(BaselineError):
    pass


def valid_id(text: str) -> bool:
    """True for ids that may be written by users or generators."""
    return bool(_ID_RE.match(text)) and text not in (STAR, WRAP)


def path_str(p: Path) -> str:
    if not p:
        return "."
    return "".join("." + seg for seg in p)


def parse_path(text: str) -> Path:
    """Parse ``.a.b`` (or bare ``a.b``) into a path tuple; ``.`` is the root."""
    t = text.strip()
    if t in (".", ""):
        return ROOT
    if t.startswith("."):
        t = t[1:]
    segs = t.split(".")
    for seg in segs:
        if not seg or not (valid_id(seg) or seg in (STAR, WRAP)):
            raise PathNotFound(f"bad path segment {seg!r} in {text!r}")
    return tuple(segs)


def is_prefix(prefix: Path, p: Path) -> bool:
    return len(prefix) <= len(p) and p[: len(prefix)] == prefix


# ---------------------------------------------------------------------------
# Types

@dataclass(frozen=True, slots=True)
class StringType:
    def __repr__(self) -> str:
        return "String"


@dataclass(frozen=True, slots=True)
class NumberType:
    def __repr__(self) -> str:
        return "Number"


@dataclass(frozen=True, slots=True)
class BottomType:
    def __repr__(self) -> str:
        return "Bottom"


STRING = StringType()
NUMBER = NumberType()
BOTTOM = BottomType()


@dataclass(frozen=True, slots=True)
class ListType:
    elem: "Type"


@dataclass(frozen=True, slots=True)
class Column:
    id: str
    name: str
    type: "Type"


@dataclass(frozen=True, slots=True)
class RecordType:
    columns: tuple[Column, ...] = ()

    def column(self, cid: str) -> Column | None:
        for col in self.columns:
            if col.id == cid:
                return col
        return None

    def index(self, cid: str) -> int:
        for i, col in enumerate(self.columns):
            if col.id == cid:
                return i
        raise PathNotFound(f"no column {cid!r}")


@dataclass(frozen=True, slots=True)
class LinkType:
    range: Path  # path of the list the link points into


@dataclass(frozen=True, slots=True)
class FormulaType:
    """A stored operation sequence evaluated speculatively on the current state.

    ``ops`` is a tuple of Operation objects (kept untyped here to avoid a
    module cycle); ``ret`` is the path whose value the formula returns.
    """

    ops: tuple = ()
    ret: Path = ROOT


Type = (
    StringType | NumberType | BottomType | ListType | RecordType | LinkType | FormulaType
)

UNIT_TYPE = RecordType()


# ---------------------------------------------------------------------------
# Values

class Tomb:
    """Placeholder left by deletion; keeps the element id and position."""

    _instance: "Tomb | None" = None

    def __new__(cls) -> "Tomb":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Tomb"


class FormulaStub:
    """The stored 'value' of a formula field; the real value is computed on read."""

    _instance: "FormulaStub | None" = None

    def __new__(cls) -> "FormulaStub":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "FormulaStub"


TOMB = Tomb()
FORMULA_STUB = FormulaStub()

Entry = tuple[str, "Value"]


@dataclass(frozen=True, slots=True)
class ListValue:
    entries: tuple[Entry, ...] = ()

    def ids(self) -> list[str]:
        return [i for i, _ in self.entries]

    def get(self, eid: str) -> "Value":
        for i, v in self.entries:
            if i == eid:
                return v
        raise PathNotFound(f"no element {eid!r}")

    def has(self, eid: str) -> bool:
        return any(i == eid for i, _ in self.entries)

    def live_entries(self) -> list[Entry]:
        return [(i, v) for i, v in self.entries if v is not TOMB]

    def set(self, eid: str, value: "Value") -> "ListValue":
        return ListValue(tuple((i, value if i == eid else v) for i, v in self.entries))


@dataclass(frozen=True, slots=True)
class RecordValue:
    fields: tuple[Entry, ...] = ()

    def get(self, fid: str) -> "Value":
        for i, v in self.fields:
            if i == fid:
                return v
        raise PathNotFound(f"no field {fid!r}")

    def has(self, fid: str) -> bool:
        return any(i == fid for i, _ in self.fields)

    def set(self, fid: str, value: "Value") -> "RecordValue":
        return RecordValue(tuple((i, value if i == fid else v) for i, v in self.fields))


@dataclass(frozen=True, slots=True)
class LinkValue:
    target: str = STAR  # element id in the range list, or STAR for null


Value = str | float | ListValue | RecordValue | LinkValue | Tomb | FormulaStub

UNIT_VALUE = RecordValue()


@dataclass(frozen=True, slots=True)
class State:
    value: Value
    type: Type


UNIT_STATE = State(UNIT_VALUE, UNIT_TYPE)


def make_state(value: Value, type_: Type) -> State:
    if not typecheck(value, type_):
        raise TypeMismatch(f"value does not match type {type_!r}")
    return State(value, type_)


# ---------------------------------------------------------------------------
# Id generation

@dataclass(frozen=True, slots=True)
class IdGen:
    """Deterministic id source; ids are ``<replica>-<counter>``."""

    replica: str
    counter: int = 0

    def fresh(self) -> tuple[str, "IdGen"]:
        new = f"{self.replica}-{self.counter}"
        assert valid_id(new)
        return new, IdGen(self.replica, self.counter + 1)


# ---------------------------------------------------------------------------
# Initial values and typechecking

def initial_value(t: Type) -> Value:
    if isinstance(t, StringType):
        return ""
    if isinstance(t, NumberType):
        return math.nan
    if isinstance(t, ListType):
        return ListValue()
    if isinstance(t, RecordType):
        return RecordValue(tuple((c.id, initial_value(c.type)) for c in t.columns))
    if isinstance(t, LinkType):
        return LinkValue(STAR)
    if isinstance(t, FormulaType):
        return FORMULA_STUB
    if isinstance(t, BottomType):
        return TOMB
    raise TypeMismatch(f"unknown type {t!r}")


def typecheck(v: Value, t: Type) -> bool:
    if v is TOMB:
        return True  # bottom is a subtype of every type
    if isinstance(t, StringType):
        return isinstance(v, str)
    if isinstance(t, NumberType):
        return isinstance(v, float) and not isinstance(v, bool)
    if isinstance(t, ListType):
        if not isinstance(v, ListValue):
            return False
        seen: set[str] = set()
        for eid, ev in v.entries:
            if eid in seen or eid == STAR:
                return False
            seen.add(eid)
            if not typecheck(ev, t.elem):
                return False
        return True
    if isinstance(t, RecordType):
        if not isinstance(v, RecordValue):
            return False
        if len(v.fields) != len(t.columns):
            return False
        for (fid, fv), col in zip(v.fields, t.columns):
            if fid != col.id or not typecheck(fv, col.type):
                return False
        return True
    if isinstance(t, LinkType):
        return isinstance(v, LinkValue)
    if isinstance(t, FormulaType):
        return v is FORMULA_STUB
    if isinstance(t, BottomType):
        return v is TOMB
    return False


# ---------------------------------------------------------------------------
# Structural equality. Tombstone list entries are invisible: they are deletion
# bookkeeping, and both the inverse law and diff cancellation rely on states
# that differ only in tombstones being equal. NaN compares equal to NaN.

def same_value(a: Value, b: Value) -> bool:
    if a is TOMB or b is TOMB:
        return a is TOMB and b is TOMB
    if isinstance(a, float) and isinstance(b, float):
        return (math.isnan(a) and math.isnan(b)) or a == b
    if isinstance(a, str) and isinstance(b, str):
        return a == b
    if isinstance(a, LinkValue) and isinstance(b, LinkValue):
        return a.target == b.target
    if a is FORMULA_STUB or b is FORMULA_STUB:
        return a is b
    if isinstance(a, ListValue) and isinstance(b, ListValue):
        la, lb = a.live_entries(), b.live_entries()
        if len(la) != len(lb):
            return False
        return all(ia == ib and same_value(va, vb) for (ia, va), (ib, vb) in zip(la, lb))
    if isinstance(a, RecordValue) and isinstance(b, RecordValue):
        if len(a.fields) != len(b.fields):
            return False
        return all(
            ia == ib and same_value(va, vb) for (ia, va), (ib, vb) in zip(a.fields, b.fields)
        )
    return False


def same_type(a: Type, b: Type) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, (StringType, NumberType, BottomType)):
        return True
    if isinstance(a, ListType):
        return same_type(a.elem, b.elem)
    if isinstance(a, RecordType):
        if len(a.columns) != len(b.columns):
            return False
        return all(
            ca.id == cb.id and ca.name == cb.name and same_type(ca.type, cb.type)
            for ca, cb in zip(a.columns, b.columns)
        )
    if isinstance(a, LinkType):
        return a.range == b.range
    if isinstance(a, FormulaType):
        if a.ret != b.ret or len(a.ops) != len(b.ops):
            return False
        return all(oa == ob for oa, ob in zip(a.ops, b.ops))
    return False


def same_state(a: State, b: State) -> bool:
    return same_type(a.type, b.type) and same_value(a.value, b.value)


def is_initial(v: Value, t: Type) -> bool:
    return same_value(v, initial_value(t))


# ---------------------------------------------------------------------------
# Path resolution

@dataclass(frozen=True, slots=True)
class Resolved:
    """Result of resolving a path: type always; value only until a ``*`` is crossed."""

    value: Value | None
    type: Type


def resolve(state: State, path: Path) -> Resolved:
    """Drill into nested records and lists.

    A ``*`` segment selects a list's element type and makes the rest of the
    resolution type-only. Selecting a tombstoned element raises
    TombstoneAtPath; most callers treat that the same as not found.
    """
    v: Value | None = state.value
    t: Type = state.type
    for i, seg in enumerate(path):
        where = path_str(path[: i + 1])
        if isinstance(t, ListType):
            if seg == STAR:
                v, t = None, t.elem
                continue
            t = t.elem
            if v is None:
                raise PathNotFound(f"{where}: element id under a type-only path")
            if not isinstance(v, ListValue) or not v.has(seg):
                raise PathNotFound(where)
            v = v.get(seg)
            if v is TOMB:
                raise TombstoneAtPath(where)
            continue
        if isinstance(t, RecordType):
            col = t.column(seg)
            if col is None:
                raise PathNotFound(where)
            t = col.type
            if v is not None:
                if not isinstance(v, RecordValue):
                    raise PathNotFound(where)
                v = v.get(seg)
            continue
        raise PathNotFound(where)
    return Resolved(v, t)


def resolvable(state: State, path: Path) -> bool:
    try:
        resolve(state, path)
        return True
    except BaselineError:
        return False


def iter_link_cells(state: State):
    """Yield (value path, LinkType, LinkValue) for every link cell in the state."""

    def walk(v: Value, t: Type, prefix: Path):
        if isinstance(t, LinkType) and isinstance(v, LinkValue):
            yield prefix, t, v
        elif isinstance(t, ListType) and isinstance(v, ListValue):
            for eid, ev in v.entries:
                if ev is not TOMB:
                    yield from walk(ev, t.elem, prefix + (eid,))
        elif isinstance(t, RecordType) and isinstance(v, RecordValue):
            for (fid, fv), col in zip(v.fields, t.columns):
                yield from walk(fv, col.type, prefix + (fid,))

    yield from walk(state.value, state.type, ROOT)


def iter_formula_columns(t: Type, prefix: Path = ROOT):
    """Yield (type path, FormulaType) for every formula in a type tree."""
    if isinstance(t, FormulaType):
        yield prefix, t
    elif isinstance(t, ListType):
        yield from iter_formula_columns(t.elem, prefix + (STAR,))
    elif isinstance(t, RecordType):
        for col in t.columns:
            yield from iter_formula_columns(col.type, prefix + (col.id,))


def iter_list_paths(t: Type, prefix: Path = ROOT):
    """Yield the type path of every list in a type tree."""
    if isinstance(t, ListType):
        yield prefix
        yield from iter_list_paths(t.elem, prefix + (STAR,))
    elif isinstance(t, RecordType):
        for col in t.columns:
            yield from iter_list_paths(col.type, prefix + (col.id,))


def format_number(x: float) -> str:
    """Shortest locale-free decimal; NaN and infinities get word tokens."""
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def parse_number(text: str) -> float:
    """Decimal parse with optional sign, point, exponent; anything else is NaN."""
    if re.match(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$", text.strip()):
        return float(text)
    return math.nan
