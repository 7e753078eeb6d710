"""Execution engine: apply one operation (or a timeline) to a state, and invert.

Type operations migrate values to keep the state well typed. After every type
operation the engine remaps link ranges and forward-rewrites every formula in
the document so stored timelines stay runnable. All functions are pure; on any
error the input state is returned unchanged (errors are raised, nothing is
mutated in place).
"""
from __future__ import annotations

from dataclasses import replace

from . import ops as O
from .model import (
    BOTTOM,
    BaselineError,
    Column,
    DanglingLink,
    DuplicateId,
    FORMULA_STUB,
    FormulaType,
    InvalidTarget,
    LinkType,
    LinkValue,
    ListType,
    ListValue,
    MissingAnchor,
    NUMBER,
    NumberType,
    Path,
    PathNotFound,
    RecordType,
    RecordValue,
    Resolved,
    STAR,
    STRING,
    State,
    StringType,
    TOMB,
    TombstoneAtPath,
    Type,
    TypeMismatch,
    UNIT_TYPE,
    UNIT_VALUE,
    Value,
    WRAP,
    format_number,
    initial_value,
    is_initial,
    is_prefix,
    iter_link_cells,
    parse_number,
    path_str,
    resolve,
    same_value,
    typecheck,
)


class TimelineError(BaselineError):
    """An operation failed mid-timeline; nothing was applied."""

    def __init__(self, index: int, cause: BaselineError):
        self.index = index
        self.cause = cause
        super().__init__(f"op {index}: {cause}")


# ---------------------------------------------------------------------------
# Generic tree editing

def _edit_value(v: Value, t: Type, path: Path, fn) -> Value:
    """Rewrite the value at a concrete path; the type is left untouched."""
    if not path:
        return fn(v, t)
    seg = path[0]
    if isinstance(t, ListType) and isinstance(v, ListValue):
        if seg == STAR:
            raise InvalidTarget(f"value operation cannot cross {path_str(path)}")
        if not v.has(seg):
            raise PathNotFound(path_str(path))
        ev = v.get(seg)
        if ev is TOMB:
            raise TombstoneAtPath(path_str(path))
        return v.set(seg, _edit_value(ev, t.elem, path[1:], fn))
    if isinstance(t, RecordType) and isinstance(v, RecordValue):
        col = t.column(seg)
        if col is None or not v.has(seg):
            raise PathNotFound(path_str(path))
        return v.set(seg, _edit_value(v.get(seg), col.type, path[1:], fn))
    raise PathNotFound(path_str(path))


def _edit_schema(v: Value | None, t: Type, path: Path, editor):
    """Rewrite type and value at a type path; ``*`` fans out over live elements.

    ``editor(value_or_None, type)`` returns ``(new_value_or_None, new_type)``
    and is called with None for the value when no concrete value corresponds
    (empty lists still get their element type migrated).
    """
    if not path:
        return editor(v, t)
    seg = path[0]
    if isinstance(t, ListType):
        if seg != STAR:
            raise InvalidTarget(
                f"type operation must cross lists via '*', got {path_str(path)}"
            )
        _, nt = _edit_schema(None, t.elem, path[1:], editor)
        if v is None:
            return None, ListType(nt)
        entries = []
        for eid, ev in v.entries:
            if ev is TOMB:
                entries.append((eid, TOMB))
            else:
                nv, _ = _edit_schema(ev, t.elem, path[1:], editor)
                entries.append((eid, nv))
        return ListValue(tuple(entries)), ListType(nt)
    if isinstance(t, RecordType):
        col = t.column(seg)
        if col is None:
            raise PathNotFound(path_str(path))
        fv = v.get(seg) if isinstance(v, RecordValue) else None
        nv, nt = _edit_schema(fv, col.type, path[1:], editor)
        new_cols = tuple(replace(c, type=nt) if c.id == seg else c for c in t.columns)
        new_val = v.set(seg, nv) if isinstance(v, RecordValue) else v
        return new_val, RecordType(new_cols)
    raise PathNotFound(path_str(path))


def _set_at(state: State, path: Path, new_v: Value | None, new_t: Type) -> State:
    nv, nt = _edit_schema(state.value, state.type, path, lambda v, t: (new_v if v is not None or new_v is not None else None, new_t))
    return State(nv, nt)


def concrete_paths(state: State, path: Path) -> list[Path]:
    """Expand each ``*`` in a type path to the live element ids beneath it."""
    out: list[Path] = []

    def walk(v: Value, t: Type, rest: Path, acc: Path):
        if not rest:
            out.append(acc)
            return
        seg = rest[0]
        if isinstance(t, ListType) and isinstance(v, ListValue):
            if seg == STAR:
                for eid, ev in v.entries:
                    if ev is not TOMB:
                        walk(ev, t.elem, rest[1:], acc + (eid,))
                return
            if v.has(seg) and v.get(seg) is not TOMB:
                walk(v.get(seg), t.elem, rest[1:], acc + (seg,))
                return
            raise PathNotFound(path_str(rest))
        if isinstance(t, RecordType) and isinstance(v, RecordValue):
            col = t.column(seg)
            if col is None:
                raise PathNotFound(path_str(rest))
            walk(v.get(seg), col.type, rest[1:], acc + (seg,))
            return
        raise PathNotFound(path_str(rest))

    walk(state.value, state.type, path, ())
    return out


# ---------------------------------------------------------------------------
# Column-path helpers (paths of the form table.*.column)

def split_column_path(path: Path) -> tuple[Path, str]:
    """Return (table path, column id) for a ``...*.col`` column path."""
    if len(path) < 2 or path[-2] != STAR:
        raise InvalidTarget(f"{path_str(path)} does not address a table column")
    return path[:-2], path[-1]


def table_at(state: State, table_path: Path) -> tuple[ListValue, RecordType]:
    got = resolve(state, table_path)
    if not isinstance(got.type, ListType) or not isinstance(got.type.elem, RecordType):
        raise TypeMismatch(f"{path_str(table_path)} is not a table")
    if not isinstance(got.value, ListValue):
        raise InvalidTarget(f"{path_str(table_path)} has no concrete rows here")
    return got.value, got.type.elem


# ---------------------------------------------------------------------------
# Link bookkeeping

def _retarget_links(state: State, range_path: Path, old: str, new: str | None) -> State:
    """Rewrite every link over ``range_path`` targeting ``old``; None means null."""
    value = state.value
    for cell_path, lt, lv in list(iter_link_cells(state)):
        if lt.range == range_path and lv.target == old:
            nv = LinkValue(new if new is not None else STAR)
            value = _edit_value(value, state.type, cell_path, lambda v, t: nv)
    return State(value, state.type)


def _check_integrity(state: State) -> None:
    """Every link range resolves to a list and every non-null target is live."""
    for cell_path, lt, lv in iter_link_cells(state):
        try:
            got = resolve(state, lt.range)
        except BaselineError:
            raise InvalidTarget(
                f"link at {path_str(cell_path)} ranges over missing {path_str(lt.range)}"
            )
        if not isinstance(got.type, ListType) or not isinstance(got.value, ListValue):
            raise InvalidTarget(f"link range {path_str(lt.range)} is not a list")
        if lv.target != STAR:
            if not got.value.has(lv.target) or got.value.get(lv.target) is TOMB:
                raise DanglingLink(
                    f"link at {path_str(cell_path)} targets dead {lv.target!r}"
                )


# ---------------------------------------------------------------------------
# Atomic conversion

def convert_atom(v: Value, src: Type, dst: Type) -> Value:
    if isinstance(src, StringType) and isinstance(dst, NumberType):
        return parse_number(v)  # anything unparseable becomes NaN
    if isinstance(src, NumberType) and isinstance(dst, StringType):
        return format_number(v)
    return v


# ---------------------------------------------------------------------------
# deletePresent / deleteAbsent

def deletewhere_matches(state: State, op: O.Op) -> list[str]:
    """Live row ids the delete-where op would tombstone, in row order."""
    table_path, col = split_column_path(op.target)
    rows, row_t = table_at(state, table_path)
    column = row_t.column(col)
    if column is None:
        raise PathNotFound(path_str(op.target))
    if isinstance(column.type, FormulaType):
        raise TypeMismatch("delete-where cannot scan a formula column")
    present = isinstance(op, O.DeletePresent)
    out = []
    for rid, rv in rows.entries:
        if rv is TOMB:
            continue
        cell = rv.get(col)
        if is_initial(cell, column.type) != present:
            out.append(rid)
    return out


# ---------------------------------------------------------------------------
# execute

def execute(state: State, op: O.Op) -> State:
    out = _execute(state, op)
    if O.is_type_op(op):
        out = _fixup_after_type_op(state, op, out)
    assert typecheck(out.value, out.type), f"engine bug: ill-typed result of {op}"
    _check_integrity(out)
    return out


def execute_timeline(state: State, operations) -> State:
    for i, op in enumerate(operations):
        try:
            state = execute(state, op)
        except BaselineError as e:
            raise TimelineError(i, e) from e
    return state


def _execute(state: State, op: O.Op) -> State:
    v, t = state.value, state.type
    p = op.target

    if isinstance(op, O.Noop):
        resolve(state, p)
        return state

    if isinstance(op, O.Write):
        got = resolve(state, p)
        if got.value is None:
            raise InvalidTarget("write needs a concrete target")
        if not isinstance(got.type, (StringType, NumberType)):
            raise TypeMismatch(f"write target {path_str(p)} is not atomic")
        if not typecheck(op.value, got.type):
            raise TypeMismatch(f"{op.value!r} does not match {got.type!r}")
        return State(_edit_value(v, t, p, lambda _v, _t: op.value), t)

    if isinstance(op, (O.Insert, O.Append)):
        new_id = op.new_id
        if new_id == STAR or not new_id:
            raise InvalidTarget(f"bad element id {new_id!r}")

        def ins(lv: Value, lt: Type) -> Value:
            if not isinstance(lt, ListType) or not isinstance(lv, ListValue):
                raise TypeMismatch(f"{path_str(p)} is not a list")
            if lv.has(new_id):
                if lv.get(new_id) is not TOMB:
                    raise DuplicateId(new_id)
                if isinstance(op, O.Insert) and not lv.has(op.before_id):
                    raise MissingAnchor(op.before_id)
                # revive in place; the tombstone kept the position
                return lv.set(new_id, initial_value(lt.elem))
            fresh = (new_id, initial_value(lt.elem))
            if isinstance(op, O.Append):
                return ListValue(lv.entries + (fresh,))
            if not lv.has(op.before_id):
                raise MissingAnchor(op.before_id)
            idx = lv.ids().index(op.before_id)
            return ListValue(lv.entries[:idx] + (fresh,) + lv.entries[idx:])

        return State(_edit_value(v, t, p, ins), t)

    if isinstance(op, O.Delete):
        got = resolve(state, p)
        if not isinstance(got.type, ListType) or not isinstance(got.value, ListValue):
            raise TypeMismatch(f"{path_str(p)} is not a list")
        lv = got.value
        if not lv.has(op.elem_id):
            raise PathNotFound(f"{path_str(p)}.{op.elem_id}")
        if lv.get(op.elem_id) is TOMB:
            raise InvalidTarget(f"{op.elem_id!r} is already deleted")
        out = State(_edit_value(v, t, p, lambda _v, _t: lv.set(op.elem_id, TOMB)), t)
        return _retarget_links(out, p, op.elem_id, None)

    if isinstance(op, O.Move):
        if len(p) < 1 or len(op.dest) < 1 or p[:-1] != op.dest[:-1]:
            raise InvalidTarget("move source and destination must share a list")
        if p == op.dest:
            raise InvalidTarget("move source equals destination")
        list_path, src_id, dst_id = p[:-1], p[-1], op.dest[-1]
        got = resolve(state, list_path)
        if not isinstance(got.type, ListType) or not isinstance(got.value, ListValue):
            raise TypeMismatch(f"{path_str(list_path)} is not a list")
        lv = got.value
        for eid in (src_id, dst_id):
            if not lv.has(eid):
                raise PathNotFound(f"{path_str(list_path)}.{eid}")
            if lv.get(eid) is TOMB:
                raise InvalidTarget(f"{eid!r} is deleted")
        merged = lv.set(dst_id, lv.get(src_id)).set(src_id, TOMB)
        out = State(_edit_value(v, t, list_path, lambda _v, _t: merged), t)
        return _retarget_links(out, list_path, src_id, dst_id)

    if isinstance(op, O.LinkSet):
        got = resolve(state, p)
        if not isinstance(got.type, LinkType):
            raise TypeMismatch(f"{path_str(p)} is not a link")
        if op.link_target != STAR:
            rng = resolve(state, got.type.range)
            if not isinstance(rng.value, ListValue) or not rng.value.has(op.link_target):
                raise DanglingLink(op.link_target)
            if rng.value.get(op.link_target) is TOMB:
                raise DanglingLink(f"{op.link_target!r} is deleted")
        return State(
            _edit_value(v, t, p, lambda _v, _t: LinkValue(op.link_target)), t
        )

    if isinstance(op, (O.DeletePresent, O.DeleteAbsent)):
        doomed = deletewhere_matches(state, op)
        table_path, _ = split_column_path(p)
        out = state
        for rid in doomed:
            rows, _ = table_at(out, table_path)
            out = State(
                _edit_value(out.value, out.type, table_path, lambda _v, _t: rows.set(rid, TOMB)),
                out.type,
            )
            out = _retarget_links(out, table_path, rid, None)
        return out

    # -- type operations ----------------------------------------------------

    if isinstance(op, O.Define):
        if op.type is None:
            raise InvalidTarget("define needs a type")
        resolve(state, p)
        nv, nt = _edit_schema(v, t, p, lambda _v, _t: (
            initial_value(op.type) if _v is not None else None, op.type))
        return State(nv, nt)

    if isinstance(op, O.Convert):
        if not isinstance(op.type, (StringType, NumberType)):
            raise TypeMismatch("convert target type must be atomic")

        def conv(cv, ct):
            if not isinstance(ct, (StringType, NumberType)):
                raise TypeMismatch(f"{path_str(p)} is not atomic")
            return (convert_atom(cv, ct, op.type) if cv is not None else None, op.type)

        nv, nt = _edit_schema(v, t, p, conv)
        return State(nv, nt)

    if isinstance(op, O.Rename):
        if not p:
            raise InvalidTarget("rename needs a column path")
        parent, cid = p[:-1], p[-1]

        def ren(rv, rt):
            if not isinstance(rt, RecordType) or rt.column(cid) is None:
                raise PathNotFound(path_str(p))
            cols = tuple(replace(c, name=op.name) if c.id == cid else c for c in rt.columns)
            return rv, RecordType(cols)

        nv, nt = _edit_schema(v, t, parent, ren)
        return State(nv, nt)

    if isinstance(op, (O.InsertCol, O.AppendCol)):
        new_id = op.new_id
        if new_id in (STAR, WRAP) or not new_id:
            raise InvalidTarget(f"bad column id {new_id!r}")

        def addcol(rv, rt):
            if not isinstance(rt, RecordType):
                raise TypeMismatch(f"{path_str(p)} is not a record")
            if rt.column(new_id) is not None:
                raise DuplicateId(new_id)
            col = Column(new_id, new_id, UNIT_TYPE)
            fresh = (new_id, UNIT_VALUE)
            if isinstance(op, O.AppendCol):
                cols = rt.columns + (col,)
                fields = rv.fields + (fresh,) if rv is not None else None
            else:
                if rt.column(op.before_id) is None:
                    raise MissingAnchor(op.before_id)
                i = rt.index(op.before_id)
                cols = rt.columns[:i] + (col,) + rt.columns[i:]
                fields = rv.fields[:i] + (fresh,) + rv.fields[i:] if rv is not None else None
            return (RecordValue(fields) if fields is not None else None, RecordType(cols))

        nv, nt = _edit_schema(v, t, p, addcol)
        return State(nv, nt)

    if isinstance(op, O.DeleteCol):
        def delcol(rv, rt):
            if not isinstance(rt, RecordType):
                raise TypeMismatch(f"{path_str(p)} is not a record")
            if rt.column(op.col_id) is None:
                raise PathNotFound(f"{path_str(p)}.{op.col_id}")
            cols = tuple(c for c in rt.columns if c.id != op.col_id)
            fields = (
                tuple(f for f in rv.fields if f[0] != op.col_id) if rv is not None else None
            )
            return (RecordValue(fields) if fields is not None else None, RecordType(cols))

        nv, nt = _edit_schema(v, t, p, delcol)
        return State(nv, nt)

    if isinstance(op, O.MoveCol):
        return _execute_movecol(state, op)

    if isinstance(op, O.ListOf):
        resolve(state, p)
        nv, nt = _edit_schema(v, t, p, lambda _v, _t: (
            ListValue(((WRAP, _v),)) if _v is not None else None, ListType(_t)))
        return State(nv, nt)

    if isinstance(op, O.IntoFirst):
        def unfold(lv, lt):
            if not isinstance(lt, ListType):
                raise TypeMismatch(f"{path_str(p)} is not a list")
            if lv is None:
                return None, lt.elem
            live = lv.live_entries()
            return (live[0][1] if live else initial_value(lt.elem)), lt.elem

        nv, nt = _edit_schema(v, t, p, unfold)
        return State(nv, nt)

    if isinstance(op, O.RecordOf):
        fid = op.field_id
        if fid in (STAR, WRAP) or not fid:
            raise InvalidTarget(f"bad field id {fid!r}")
        resolve(state, p)
        nv, nt = _edit_schema(v, t, p, lambda _v, _t: (
            RecordValue(((fid, _v),)) if _v is not None else None,
            RecordType((Column(fid, fid, _t),))))
        return State(nv, nt)

    if isinstance(op, O.IntoField):
        def unwrap(rv, rt):
            if not isinstance(rt, RecordType) or rt.column(op.field_id) is None:
                raise PathNotFound(f"{path_str(p)}.{op.field_id}")
            col = rt.column(op.field_id)
            return (rv.get(op.field_id) if rv is not None else None), col.type

        nv, nt = _edit_schema(v, t, p, unwrap)
        return State(nv, nt)

    if isinstance(op, O.LinkType_):
        rng = resolve(state, op.range)
        if not isinstance(rng.type, ListType) or rng.value is None:
            raise TypeMismatch(f"link range {path_str(op.range)} is not a concrete list")
        resolve(state, p)
        nv, nt = _edit_schema(v, t, p, lambda _v, _t: (
            LinkValue(STAR) if _v is not None else None, LinkType(op.range)))
        return State(nv, nt)

    if isinstance(op, O.Split):
        return _execute_split(state, op)

    if isinstance(op, O.Join):
        return _execute_join(state, op)

    raise InvalidTarget(f"unknown operation {op!r}")


def _execute_movecol(state: State, op: O.MoveCol) -> State:
    p, dest = op.target, op.dest
    if not p:
        raise InvalidTarget("move needs a column path")
    rec_path, fid = p[:-1], p[-1]
    src = resolve(state, rec_path)
    if not isinstance(src.type, RecordType) or src.type.column(fid) is None:
        raise PathNotFound(path_str(p))
    col = src.type.column(fid)

    if dest == rec_path:
        # reorder: the column moves to the end of its own record
        def reorder(rv, rt):
            cols = tuple(c for c in rt.columns if c.id != fid) + (col,)
            fields = None
            if rv is not None:
                cell = rv.get(fid)
                fields = tuple(f for f in rv.fields if f[0] != fid) + ((fid, cell),)
            return (RecordValue(fields) if fields is not None else None, RecordType(cols))

        nv, nt = _edit_schema(state.value, state.type, rec_path, reorder)
        return State(nv, nt)

    if rec_path and dest == rec_path[:-1]:
        # hoist into the containing record
        def hoist(rv, rt):
            if not isinstance(rt, RecordType):
                raise InvalidTarget("destination is not a record")
            inner_id = rec_path[-1]
            if rt.column(fid) is not None:
                raise DuplicateId(fid)
            inner_col = rt.column(inner_id)
            if inner_col is None or not isinstance(inner_col.type, RecordType):
                raise InvalidTarget("source record is not reachable from destination")
            new_inner_t = RecordType(tuple(c for c in inner_col.type.columns if c.id != fid))
            cols = tuple(
                replace(c, type=new_inner_t) if c.id == inner_id else c for c in rt.columns
            ) + (col,)
            fields = None
            if rv is not None:
                inner_v = rv.get(inner_id)
                cell = inner_v.get(fid)
                new_inner_v = RecordValue(tuple(f for f in inner_v.fields if f[0] != fid))
                fields = tuple(
                    (i, new_inner_v) if i == inner_id else (i, fv) for i, fv in rv.fields
                ) + ((fid, cell),)
            return (RecordValue(fields) if fields is not None else None, RecordType(cols))

        nv, nt = _edit_schema(state.value, state.type, dest, hoist)
        return State(nv, nt)

    if dest[:-1] == rec_path and len(dest) == len(rec_path) + 1:
        # push into a record-typed sibling column
        gid = dest[-1]
        if gid == fid:
            raise InvalidTarget("cannot move a column into itself")

        def push(rv, rt):
            gcol = rt.column(gid)
            if gcol is None or not isinstance(gcol.type, RecordType):
                raise InvalidTarget(f"{path_str(dest)} is not a record column")
            if gcol.type.column(fid) is not None:
                raise DuplicateId(fid)
            new_g_t = RecordType(gcol.type.columns + (col,))
            cols = tuple(
                replace(c, type=new_g_t) if c.id == gid else c
                for c in rt.columns
                if c.id != fid
            )
            fields = None
            if rv is not None:
                cell = rv.get(fid)
                gv = rv.get(gid)
                new_gv = RecordValue(gv.fields + ((fid, cell),))
                fields = tuple(
                    (i, new_gv) if i == gid else (i, fv)
                    for i, fv in rv.fields
                    if i != fid
                )
            return (RecordValue(fields) if fields is not None else None, RecordType(cols))

        nv, nt = _edit_schema(state.value, state.type, rec_path, push)
        return State(nv, nt)

    raise InvalidTarget(
        "move destination must be the same record, its parent, or a sibling record column"
    )


def _execute_split(state: State, op: O.Split) -> State:
    table_path, col = split_column_path(op.target)
    if STAR in table_path:
        raise InvalidTarget("split needs a concrete table")
    rows, row_t = table_at(state, table_path)
    if row_t.column(col) is None:
        raise PathNotFound(path_str(op.target))
    dest = op.dest
    if is_prefix(table_path, dest) or is_prefix(dest, table_path):
        raise InvalidTarget("split destination overlaps the table")
    got = resolve(state, dest)
    if got.value is None:
        raise InvalidTarget("split destination must be concrete")
    ok_dest = isinstance(got.type, (RecordType, ListType)) and is_initial(got.value, got.type)
    if isinstance(got.type, RecordType) and got.type.columns:
        ok_dest = False
    if not ok_dest:
        raise InvalidTarget(f"split destination {path_str(dest)} is not a fresh field")

    m = row_t.index(col)
    moved = row_t.columns[m:]
    kept = row_t.columns[:m]
    link_col = Column(col, row_t.column(col).name, LinkType(dest))

    dest_rows = []
    new_rows = []
    for rid, rv in rows.entries:
        if rv is TOMB:
            dest_rows.append((rid, TOMB))
            new_rows.append((rid, TOMB))
            continue
        dest_rows.append(
            (rid, RecordValue(tuple((c.id, rv.get(c.id)) for c in moved)))
        )
        new_rows.append(
            (rid, RecordValue(rv.fields[:m] + ((col, LinkValue(rid)),)))
        )

    out = _set_at(state, dest, ListValue(tuple(dest_rows)), ListType(RecordType(moved)))
    out = _set_at(
        out, table_path, ListValue(tuple(new_rows)), ListType(RecordType(kept + (link_col,)))
    )
    return out


def _execute_join(state: State, op: O.Join) -> State:
    table_path, col = split_column_path(op.target)
    if STAR in table_path:
        raise InvalidTarget("join needs a concrete table")
    rows, row_t = table_at(state, table_path)
    link_col = row_t.column(col)
    if link_col is None:
        raise PathNotFound(path_str(op.target))
    if not isinstance(link_col.type, LinkType):
        raise TypeMismatch(f"{path_str(op.target)} is not a link column")
    dest = link_col.type.range
    if not dest:
        raise InvalidTarget("cannot join a link to the root")
    linked_rows, linked_t = table_at(state, dest)

    m = row_t.index(col)
    other_ids = {c.id for i, c in enumerate(row_t.columns) if i != m}
    for c in linked_t.columns:
        if c.id in other_ids:
            raise DuplicateId(c.id)

    new_cols = row_t.columns[:m] + linked_t.columns + row_t.columns[m + 1:]
    new_rows = []
    for rid, rv in rows.entries:
        if rv is TOMB:
            new_rows.append((rid, TOMB))
            continue
        target = rv.get(col).target
        if target != STAR and linked_rows.has(target) and linked_rows.get(target) is not TOMB:
            srow = linked_rows.get(target)
            cells = tuple((c.id, srow.get(c.id)) for c in linked_t.columns)
        else:
            cells = tuple((c.id, initial_value(c.type)) for c in linked_t.columns)
        new_rows.append((rid, RecordValue(rv.fields[:m] + cells + rv.fields[m + 1:])))

    out = _set_at(state, table_path, ListValue(tuple(new_rows)), ListType(RecordType(new_cols)))

    # delete the linked table's field entirely
    parent, did = dest[:-1], dest[-1]

    def drop(rv, rt):
        if not isinstance(rt, RecordType) or rt.column(did) is None:
            raise InvalidTarget(f"linked table {path_str(dest)} is not a record field")
        cols = tuple(c for c in rt.columns if c.id != did)
        fields = tuple(f for f in rv.fields if f[0] != did) if rv is not None else None
        return (RecordValue(fields) if fields is not None else None, RecordType(cols))

    nv, nt = _edit_schema(out.value, out.type, parent, drop)
    return State(nv, nt)


# ---------------------------------------------------------------------------
# Post-pass for type ops: link range remapping and formula forward-rewriting

def _fixup_after_type_op(pre: State, op: O.Op, post: State) -> State:
    from . import transform  # local import; transform builds on this module

    def fix_type(t: Type) -> Type:
        if isinstance(t, LinkType):
            remapped = transform.remap_value_path(t.range, op, pre)
            return LinkType(remapped) if remapped is not None else t
        if isinstance(t, ListType):
            return ListType(fix_type(t.elem))
        if isinstance(t, RecordType):
            return RecordType(tuple(replace(c, type=fix_type(c.type)) for c in t.columns))
        if isinstance(t, FormulaType):
            if isinstance(op, O.Define) and op.type is t:
                return t  # freshly authored against the new schema
            return transform.rewrite_formula_forward(t, op, pre)
        return t

    return State(post.value, fix_type(post.type))


# ---------------------------------------------------------------------------
# Value reconstruction (used by invert)

def rebuild_value_ops(path: Path, desired: Value, t: Type) -> list[O.Op]:
    """Ops that morph the initial value of ``t`` at ``path`` into ``desired``.

    Tombstone entries are skipped: equality is tombstone-blind and rebuilt
    lists start empty.
    """
    out: list[O.Op] = []
    if desired is TOMB or desired is FORMULA_STUB:
        return out
    if isinstance(t, (StringType, NumberType)):
        if not is_initial(desired, t):
            out.append(O.Write(path, desired))
    elif isinstance(t, LinkType):
        if desired.target != STAR:
            out.append(O.LinkSet(path, desired.target))
    elif isinstance(t, RecordType):
        for col in t.columns:
            out.extend(rebuild_value_ops(path + (col.id,), desired.get(col.id), col.type))
    elif isinstance(t, ListType):
        for eid, ev in desired.entries:
            if ev is TOMB:
                continue
            out.append(O.Append(path, eid))
            out.extend(rebuild_value_ops(path + (eid,), ev, t.elem))
    return out


def morph_value_ops(path: Path, current: Value, desired: Value, t: Type) -> list[O.Op]:
    """Minimal value ops turning ``current`` into ``desired`` at ``path``."""
    if same_value(current, desired):
        return []
    if isinstance(t, (StringType, NumberType)):
        return [O.Write(path, desired)]
    if isinstance(t, LinkType):
        return [O.LinkSet(path, desired.target)]
    if isinstance(t, RecordType):
        out: list[O.Op] = []
        for col in t.columns:
            out.extend(
                morph_value_ops(path + (col.id,), current.get(col.id), desired.get(col.id), col.type)
            )
        return out
    if isinstance(t, ListType):
        return _morph_list_ops(path, current, desired, t)
    return []


def _morph_list_ops(path: Path, current: ListValue, desired: ListValue, t: ListType) -> list[O.Op]:
    cur_ids = [i for i, _ in current.entries]
    want = desired.live_entries()
    shared = [i for i, _ in want if i in cur_ids]
    order = [i for i in cur_ids if i in shared]
    if order != shared:
        # shared elements need reordering, which value ops cannot express
        return [O.Define(path, t)] + rebuild_value_ops(path, desired, t)

    out: list[O.Op] = []
    want_ids = {i for i, _ in want}
    for eid, ev in current.entries:
        if ev is not TOMB and eid not in want_ids:
            out.append(O.Delete(path, eid))
    # insert or revive missing elements right-to-left so anchors already exist
    for idx in range(len(want) - 1, -1, -1):
        eid, ev = want[idx]
        if eid in cur_ids:
            if current.get(eid) is TOMB:
                out.append(_revive_op(path, eid, current, cur_ids.index(eid)))
                out.extend(rebuild_value_ops(path + (eid,), ev, t.elem))
            else:
                out.extend(morph_value_ops(path + (eid,), current.get(eid), ev, t.elem))
            continue
        anchor = None
        for later, _lv in want[idx + 1:]:
            if later in cur_ids or later in want_ids:
                anchor = later
                break
        if anchor is None:
            out.append(O.Append(path, eid))
        else:
            out.append(O.Insert(path, eid, anchor))
        out.extend(rebuild_value_ops(path + (eid,), ev, t.elem))
    return out


def _revive_op(path: Path, eid: str, lv: ListValue, idx: int) -> O.Op:
    # insert with the original successor as anchor; revives happen in place
    if idx + 1 < len(lv.entries):
        return O.Insert(path, eid, lv.entries[idx + 1][0])
    return O.Append(path, eid)


# ---------------------------------------------------------------------------
# invert

def invert(state: State, op: O.Op) -> list[O.Op]:
    """A sequence that, executed after ``op``, restores ``state`` exactly
    (up to tombstone residue, which equality ignores)."""
    p = op.target

    if isinstance(op, O.Noop):
        return []

    if isinstance(op, O.Write):
        return [O.Write(p, resolve(state, p).value)]

    if isinstance(op, (O.Insert, O.Append)):
        return [O.Delete(p, op.new_id)]

    if isinstance(op, O.Delete):
        lv = resolve(state, p).value
        elem_t = resolve(state, p).type.elem
        idx = lv.ids().index(op.elem_id)
        old = lv.get(op.elem_id)
        out = [_revive_op(p, op.elem_id, lv, idx)]
        out.extend(rebuild_value_ops(p + (op.elem_id,), old, elem_t))
        out.extend(_relink_ops(state, p, op.elem_id))
        return out

    if isinstance(op, O.Move):
        list_path, src_id, dst_id = p[:-1], p[-1], op.dest[-1]
        lv = resolve(state, list_path).value
        elem_t = resolve(state, list_path).type.elem
        src_val, dst_val = lv.get(src_id), lv.get(dst_id)
        out = [_revive_op(list_path, src_id, lv, lv.ids().index(src_id))]
        out.extend(rebuild_value_ops(p, src_val, elem_t))
        out.extend(_relink_ops(state, list_path, src_id))
        # the destination currently holds the source's value
        out.extend(morph_value_ops(op.dest, src_val, dst_val, elem_t))
        return out

    if isinstance(op, O.LinkSet):
        return [O.LinkSet(p, resolve(state, p).value.target)]

    if isinstance(op, (O.DeletePresent, O.DeleteAbsent)):
        table_path, _ = split_column_path(p)
        lv = resolve(state, table_path).value
        elem_t = resolve(state, table_path).type.elem
        out: list[O.Op] = []
        for rid in deletewhere_matches(state, op):
            out.append(_revive_op(table_path, rid, lv, lv.ids().index(rid)))
            out.extend(rebuild_value_ops(table_path + (rid,), lv.get(rid), elem_t))
            out.extend(_relink_ops(state, table_path, rid))
        return out

    # -- type operations ----------------------------------------------------

    if isinstance(op, O.Define):
        old_t = resolve(state, p).type
        return [O.Define(p, old_t)] + _restore_values_ops(state, p, old_t)

    if isinstance(op, O.Convert):
        old_t = resolve(state, p).type
        out: list[O.Op] = [O.Convert(p, old_t)]
        for cpath in concrete_paths(state, p):
            old = resolve(state, cpath).value
            back = convert_atom(convert_atom(old, old_t, op.type), op.type, old_t)
            if not same_value(back, old):
                out.append(O.Write(cpath, old))
        return out

    if isinstance(op, O.Rename):
        parent, cid = p[:-1], p[-1]
        rt = resolve(state, parent).type
        return [O.Rename(p, rt.column(cid).name)]

    if isinstance(op, (O.InsertCol, O.AppendCol)):
        return [O.DeleteCol(p, op.new_id)]

    if isinstance(op, O.DeleteCol):
        rt = resolve(state, p).type
        i = rt.index(op.col_id)
        col = rt.columns[i]
        out: list[O.Op] = [
            O.InsertCol(p, col.id, rt.columns[i + 1].id)
            if i + 1 < len(rt.columns)
            else O.AppendCol(p, col.id)
        ]
        out.append(O.Define(p + (col.id,), col.type))
        if col.name != col.id:
            out.append(O.Rename(p + (col.id,), col.name))
        out.extend(_restore_values_ops(state, p + (col.id,), col.type))
        return out

    if isinstance(op, O.MoveCol):
        rec_path, fid = p[:-1], p[-1]
        rt = resolve(state, rec_path).type
        i = rt.index(fid)
        out = [O.MoveCol(op.dest + (fid,), rec_path)]
        for col in rt.columns[i + 1:]:
            out.append(O.MoveCol(rec_path + (col.id,), rec_path))
        return out

    if isinstance(op, O.ListOf):
        return [O.IntoFirst(p)]

    if isinstance(op, O.IntoFirst):
        old_t = resolve(state, p).type
        singleton = all(
            [e[0] for e in resolve(State(state.value, state.type), cp).value.live_entries()] == [WRAP]
            for cp in concrete_paths(state, p)
        )
        if singleton and concrete_paths(state, p):
            return [O.ListOf(p)]
        return [O.Define(p, old_t)] + _restore_values_ops(state, p, old_t)

    if isinstance(op, O.RecordOf):
        return [O.IntoField(p, op.field_id)]

    if isinstance(op, O.IntoField):
        old_t = resolve(state, p).type
        if len(old_t.columns) == 1 and old_t.columns[0].id == op.field_id:
            col = old_t.columns[0]
            out = [O.RecordOf(p, op.field_id)]
            if col.name != col.id:
                out.append(O.Rename(p + (col.id,), col.name))
            return out
        return [O.Define(p, old_t)] + _restore_values_ops(state, p, old_t)

    if isinstance(op, O.LinkType_):
        old_t = resolve(state, p).type
        return [O.Define(p, old_t)] + _restore_values_ops(state, p, old_t)

    if isinstance(op, O.Split):
        return [O.Join(p)]

    if isinstance(op, O.Join):
        return _invert_join(state, op)

    raise InvalidTarget(f"cannot invert {op!r}")


def _relink_ops(state: State, range_path: Path, target: str) -> list[O.Op]:
    """LinkSets restoring cells that pointed at ``target`` before it was removed."""
    out = []
    for cell_path, lt, lv in iter_link_cells(state):
        if lt.range == range_path and lv.target == target:
            out.append(O.LinkSet(cell_path, target))
    return out


def _restore_values_ops(state: State, p: Path, t: Type) -> list[O.Op]:
    out: list[O.Op] = []
    for cpath in concrete_paths(state, p):
        old = resolve(state, cpath).value
        out.extend(rebuild_value_ops(cpath, old, t))
        # links inside the restored subtree are re-established by rebuild;
        # links elsewhere that range into it survive untouched
    return out


def _invert_join(state: State, op: O.Join) -> list[O.Op]:
    table_path, col = split_column_path(op.target)
    rows, row_t = table_at(state, table_path)
    link_col = row_t.column(col)
    dest = link_col.type.range
    linked_rows, linked_t = table_at(state, dest)
    parent, did = dest[:-1], dest[-1]
    parent_t = resolve(state, parent).type
    di = parent_t.index(did)
    dest_col = parent_t.columns[di]
    m = row_t.index(col)

    out: list[O.Op] = []
    # restore the linked table field at its original position
    if di + 1 < len(parent_t.columns):
        out.append(O.InsertCol(parent, did, parent_t.columns[di + 1].id))
    else:
        out.append(O.AppendCol(parent, did))
    out.append(O.Define(dest, dest_col.type))
    if dest_col.name != did:
        out.append(O.Rename(dest, dest_col.name))
    out.extend(rebuild_value_ops(dest, linked_rows, dest_col.type))

    # drop the inlined columns and put the link column back
    for c in linked_t.columns:
        out.append(O.DeleteCol(table_path + (STAR,), c.id))
    successor = row_t.columns[m + 1].id if m + 1 < len(row_t.columns) else None
    if successor is not None:
        out.append(O.InsertCol(table_path + (STAR,), col, successor))
    else:
        out.append(O.AppendCol(table_path + (STAR,), col))
    out.append(O.Define(op.target, LinkType(dest)))
    if link_col.name != col:
        out.append(O.Rename(op.target, link_col.name))
    for rid, rv in rows.entries:
        if rv is TOMB:
            continue
        target = rv.get(col).target
        if target != STAR:
            out.append(O.LinkSet(table_path + (rid, col), target))
    return out
