"""The operation vocabulary.

Value operations never change the type component of a state; type operations
may change both and migrate values to keep the state well typed. Every
operation carries a target path. Lowercase surface names are value operations,
capitalized names are type operations (see script.py for the grammar).
"""
from __future__ import annotations

from dataclasses import dataclass

from .model import Path, ROOT, Type, Value


@dataclass(frozen=True, slots=True)
class Op:
    target: Path = ROOT


# -- value operations --------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Noop(Op):
    pass


@dataclass(frozen=True, slots=True)
class Write(Op):
    value: Value = ""


@dataclass(frozen=True, slots=True)
class Insert(Op):
    """Insert element ``new_id`` into the list at target, before ``before_id``.

    Tombstones are valid anchors. Inserting an id that exists only as a
    tombstone revives it in place with the element type's initial value.
    """

    new_id: str = ""
    before_id: str = ""


@dataclass(frozen=True, slots=True)
class Append(Op):
    new_id: str = ""


@dataclass(frozen=True, slots=True)
class Delete(Op):
    elem_id: str = ""


@dataclass(frozen=True, slots=True)
class Move(Op):
    """Merge the element at target into the element at ``dest`` (same list).

    The destination takes the source's value, the source becomes a tombstone,
    and every link in the document targeting the source is forwarded to the
    destination.
    """

    dest: Path = ROOT


@dataclass(frozen=True, slots=True)
class LinkSet(Op):
    link_target: str = "*"


@dataclass(frozen=True, slots=True)
class DeletePresent(Op):
    """Delete the rows whose cell at the target column is non-initial."""


@dataclass(frozen=True, slots=True)
class DeleteAbsent(Op):
    """Delete the rows whose cell at the target column is initial."""


# -- type operations ---------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Define(Op):
    """Set the type at target, re-initializing the corresponding values."""

    type: Type = None  # type: ignore[assignment]


@dataclass(frozen=True, slots=True)
class Convert(Op):
    """Convert between atomic types, converting each value in place."""

    type: Type = None  # type: ignore[assignment]


@dataclass(frozen=True, slots=True)
class Rename(Op):
    name: str = ""


@dataclass(frozen=True, slots=True)
class InsertCol(Op):
    new_id: str = ""
    before_id: str = ""


@dataclass(frozen=True, slots=True)
class AppendCol(Op):
    new_id: str = ""


@dataclass(frozen=True, slots=True)
class DeleteCol(Op):
    col_id: str = ""


@dataclass(frozen=True, slots=True)
class MoveCol(Op):
    """Move the column at target to the end of the record at ``dest``.

    ``dest`` must be the same record, its parent record, or a record-typed
    column of the same record; the column keeps its id.
    """

    dest: Path = ROOT


@dataclass(frozen=True, slots=True)
class ListOf(Op):
    """Wrap the value at target into a one-element list with the wrap id."""


@dataclass(frozen=True, slots=True)
class IntoFirst(Op):
    """Replace the list at target by its first live element, else the initial value."""


@dataclass(frozen=True, slots=True)
class RecordOf(Op):
    field_id: str = ""


@dataclass(frozen=True, slots=True)
class IntoField(Op):
    field_id: str = ""


@dataclass(frozen=True, slots=True)
class LinkType_(Op):
    """Define the target column as a link ranging over the list at ``range``."""

    range: Path = ROOT


@dataclass(frozen=True, slots=True)
class Split(Op):
    """Move the target column and all columns after it into a new linked table
    at ``dest``; the target column is replaced by a link column over ``dest``."""

    dest: Path = ROOT


@dataclass(frozen=True, slots=True)
class Join(Op):
    """Replace the link column at target by the linked table's columns,
    copying each row's cells from its linked row, then delete the table."""


Operation = Op

VALUE_OPS = (Noop, Write, Insert, Append, Delete, Move, LinkSet, DeletePresent, DeleteAbsent)
TYPE_OPS = (
    Define,
    Convert,
    Rename,
    InsertCol,
    AppendCol,
    DeleteCol,
    MoveCol,
    ListOf,
    IntoFirst,
    RecordOf,
    IntoField,
    LinkType_,
    Split,
    Join,
)


def is_type_op(op: Op) -> bool:
    return isinstance(op, TYPE_OPS)


def is_value_op(op: Op) -> bool:
    return isinstance(op, VALUE_OPS)


def is_noop(op: Op) -> bool:
    return isinstance(op, Noop)


def same_op(a: Op, b: Op) -> bool:
    """Structural equality with NaN-tolerant atoms (dataclass eq breaks on NaN)."""
    from .script import print_op

    return print_op(a) == print_op(b)
