"""Row filters for select: expression trees and host callables.

Expression predicates (`Comparison` combined with `And`/`Or`/`Not`) evaluate
vectorized over whole columns. A comparison whose operand is null evaluates
to False, and `Not` flips that False to True; this collapse of three-valued
logic is intentional and documented here rather than SQL's UNKNOWN
propagation. Float comparisons follow IEEE rules (NaN compares false except
under `!=`), unlike the engine's equality used by joins and set operators.

A bare callable is also accepted by select: it receives a `RowView` and
returns truthiness. Callables cannot be vectorized and cost a python call
per row.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .table import DType, Table

COMPARISON_OPS = ("==", "!=", "<=", ">=", "<", ">")


class RowView:
    """Read-only view of one row; index by column position or name."""

    __slots__ = ("_table", "_row")

    def __init__(self, table: Table, row: int):
        self._table = table
        self._row = row

    def __getitem__(self, key):
        table = self._table
        if isinstance(key, str):
            key = _resolve_name(table, key)
        return table.columns[key].value(self._row)

    def __len__(self):
        return len(self._table.columns)

    def as_tuple(self) -> tuple:
        return self._table.row(self._row)


def _resolve_name(table: Table, name: str) -> int:
    for i, field in enumerate(table.schema):
        if field.name == name:
            return i
    raise KeyError(f"no column named {name!r}")


class Predicate:
    def evaluate(self, table: Table) -> np.ndarray:
        raise NotImplementedError

    def evaluate_row(self, names: Sequence[str], values: Sequence) -> bool:
        raise NotImplementedError

    def __and__(self, other: "Predicate") -> "Predicate":
        return And((self, other))

    def __or__(self, other: "Predicate") -> "Predicate":
        return Or((self, other))

    def __invert__(self) -> "Predicate":
        return Not(self)


@dataclass(frozen=True)
class Comparison(Predicate):
    column: Union[int, str]
    op: str
    literal: object

    def evaluate_row(self, names: Sequence[str], values: Sequence) -> bool:
        """Scalar twin of evaluate: one row as plain python values."""
        if self.op not in COMPARISON_OPS:
            raise ValueError(f"unknown comparison operator {self.op!r}")
        ci = self.column
        if isinstance(ci, str):
            try:
                ci = list(names).index(ci)
            except ValueError:
                raise KeyError(f"no column named {self.column!r}") from None
        if not 0 <= ci < len(values):
            raise IndexError(f"column index {ci} out of range")
        v = values[ci]
        lit = self.literal
        if v is None or lit is None:
            return False
        if isinstance(v, str):
            if not isinstance(lit, str):
                raise TypeError(f"Utf8 column compared against {type(lit).__name__}")
        elif isinstance(v, bool):
            if not isinstance(lit, bool):
                raise TypeError("Bool column compared against non-bool literal")
        else:
            if isinstance(lit, bool) or not isinstance(lit, (int, float)):
                raise TypeError(f"numeric column compared against {type(lit).__name__}")
        return bool(_apply_op(v, self.op, lit))

    def evaluate(self, table: Table) -> np.ndarray:
        if self.op not in COMPARISON_OPS:
            raise ValueError(f"unknown comparison operator {self.op!r}")
        ci = self.column
        if isinstance(ci, str):
            ci = _resolve_name(table, ci)
        if not 0 <= ci < len(table.columns):
            raise IndexError(f"column index {ci} out of range")
        col = table.columns[ci]
        lit = self.literal
        if lit is None:
            return np.zeros(table.num_rows, dtype=np.bool_)

        if col.dtype is DType.Utf8:
            if not isinstance(lit, str):
                raise TypeError(f"Utf8 column compared against {type(lit).__name__}")
            vals = np.array(
                [col.value(i) if col.validity[i] else "" for i in range(col.length)],
                dtype=object,
            )
            mask = _apply_op(vals, self.op, lit)
        elif col.dtype is DType.Bool:
            if not isinstance(lit, (bool, np.bool_)):
                raise TypeError("Bool column compared against non-bool literal")
            mask = _apply_op(col.values.astype(np.uint8), self.op, int(bool(lit)))
        else:
            if isinstance(lit, bool) or not isinstance(lit, (int, float, np.number)):
                raise TypeError(
                    f"{col.dtype.name} column compared against {type(lit).__name__}"
                )
            mask = _apply_op(col.values, self.op, lit)
        return np.asarray(mask, dtype=np.bool_) & col.validity


def _apply_op(values, op, literal):
    if op == "==":
        return values == literal
    if op == "!=":
        return values != literal
    if op == "<":
        return values < literal
    if op == "<=":
        return values <= literal
    if op == ">":
        return values > literal
    return values >= literal


@dataclass(frozen=True)
class And(Predicate):
    parts: tuple

    def evaluate(self, table: Table) -> np.ndarray:
        mask = np.ones(table.num_rows, dtype=np.bool_)
        for p in self.parts:
            mask &= p.evaluate(table)
        return mask

    def evaluate_row(self, names, values) -> bool:
        return all(p.evaluate_row(names, values) for p in self.parts)


@dataclass(frozen=True)
class Or(Predicate):
    parts: tuple

    def evaluate(self, table: Table) -> np.ndarray:
        mask = np.zeros(table.num_rows, dtype=np.bool_)
        for p in self.parts:
            mask |= p.evaluate(table)
        return mask

    def evaluate_row(self, names, values) -> bool:
        return any(p.evaluate_row(names, values) for p in self.parts)


@dataclass(frozen=True)
class Not(Predicate):
    inner: Predicate

    def evaluate(self, table: Table) -> np.ndarray:
        return ~self.inner.evaluate(table)

    def evaluate_row(self, names, values) -> bool:
        return not self.inner.evaluate_row(names, values)


class RowPredicate(Predicate):
    """Wraps a row -> bool callable; evaluated one row at a time."""

    __slots__ = ("fn",)

    def __init__(self, fn: Callable):
        self.fn = fn

    def evaluate(self, table: Table) -> np.ndarray:
        out = np.empty(table.num_rows, dtype=np.bool_)
        for i in range(table.num_rows):
            out[i] = bool(self.fn(RowView(table, i)))
        return out


def as_predicate(pred) -> Predicate:
    """Coerce an expression string, callable, or Predicate to a Predicate."""
    if isinstance(pred, Predicate):
        return pred
    if isinstance(pred, str):
        return parse_predicate(pred)
    if callable(pred):
        return RowPredicate(pred)
    raise TypeError(f"not a predicate: {pred!r}")


# ---------------------------------------------------------------------------
# Tiny expression language for the command line, e.g.
#   "#1 > 0.5 and (name == 'bob' or not #0 <= 10)"
# Columns are referenced as #<index> or by name; literals are ints, floats,
# single- or double-quoted strings, true/false, null.

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<lparen>\() | (?P<rparen>\)) |
        (?P<op>==|!=|<=|>=|<|>) |
        (?P<number>-?\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|-?\.\d+(?:[eE][+-]?\d+)?) |
        (?P<string>'(?:[^'\\]|\\.)*'|"(?:[^"\\]|\\.)*") |
        (?P<colref>\#\d+) |
        (?P<word>[A-Za-z_][A-Za-z_0-9]*)
    )""",
    re.VERBOSE,
)


class PredicateSyntaxError(ValueError):
    pass


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            rest = text[pos:].strip()
            if not rest:
                break
            raise PredicateSyntaxError(f"cannot tokenize predicate at: {rest!r}")
        pos = m.end()
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None)

    def take(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, kind):
        k, v = self.take()
        if k != kind:
            raise PredicateSyntaxError(f"expected {kind}, got {v!r}")
        return v

    def parse(self) -> Predicate:
        node = self.parse_or()
        if self.pos != len(self.tokens):
            raise PredicateSyntaxError(f"trailing input: {self.tokens[self.pos:]}")
        return node

    def parse_or(self) -> Predicate:
        parts = [self.parse_and()]
        while self.peek() == ("word", "or"):
            self.take()
            parts.append(self.parse_and())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def parse_and(self) -> Predicate:
        parts = [self.parse_unary()]
        while self.peek() == ("word", "and"):
            self.take()
            parts.append(self.parse_unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def parse_unary(self) -> Predicate:
        kind, value = self.peek()
        if (kind, value) == ("word", "not"):
            self.take()
            return Not(self.parse_unary())
        if kind == "lparen":
            self.take()
            node = self.parse_or()
            self.expect("rparen")
            return node
        return self.parse_comparison()

    def parse_comparison(self) -> Predicate:
        kind, value = self.take()
        if kind == "colref":
            column: Union[int, str] = int(value[1:])
        elif kind == "word":
            column = value
        else:
            raise PredicateSyntaxError(f"expected a column reference, got {value!r}")
        op = self.expect("op")
        kind, value = self.take()
        literal: object
        if kind == "number":
            literal = float(value) if any(c in value for c in ".eE") else int(value)
        elif kind == "string":
            literal = re.sub(r"\\(.)", r"\1", value[1:-1])
        elif kind == "word" and value in ("true", "false"):
            literal = value == "true"
        elif kind == "word" and value == "null":
            literal = None
        else:
            raise PredicateSyntaxError(f"expected a literal, got {value!r}")
        return Comparison(column, op, literal)


def parse_predicate(text: str) -> Predicate:
    """Parse the CLI predicate syntax into an expression tree."""
    tokens = _tokenize(text)
    if not tokens:
        raise PredicateSyntaxError("empty predicate")
    return _Parser(tokens).parse()
