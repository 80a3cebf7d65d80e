"""Style-layer predicate evaluation over vector tables.

Expressions compile per table into a plan of vectorized kernels that thread
selection vectors; ``evaluate_tuple_at_a_time`` interprets the expression
row by row and serves as the semantics oracle.

Null semantics follow style-filter practice: any comparison or membership
test against a null value is false (including != and !in); ``has`` is true
exactly where the validity bit is set.  Combinators are pure set algebra:
all = intersection, any = union, none = complement of the union.

Text form is an s-expression per line, e.g.::

    (all (== class "river") (has name))
    (any (in subclass "stream" "canal") (> rank 3))
    (none (== $type "Point"))
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .memory import DictionaryVector, FlatVector, OffsetVector, SelectionVector, VectorTable
from .model import AttributeScope, GeometryType, ListType, ScalarType, StructType

MAX_DEPTH = 32

_COMPARE_OPS = ("==", "!=", "<", "<=", ">", ">=")
_TYPE_NAMES = {
    "Point": (GeometryType.POINT, GeometryType.MULTIPOINT),
    "LineString": (GeometryType.LINESTRING, GeometryType.MULTILINESTRING),
    "Polygon": (GeometryType.POLYGON, GeometryType.MULTIPOLYGON),
}


class FilterError(ValueError):
    """Malformed expression or literal incompatible with the column type."""


# -- expression tree ---------------------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    op: str
    column: str
    literal: object


@dataclass(frozen=True)
class Membership:
    column: str
    values: tuple
    negate: bool


@dataclass(frozen=True)
class Existence:
    column: str
    negate: bool


@dataclass(frozen=True)
class Combinator:
    kind: str  # all | any | none
    children: tuple


@dataclass(frozen=True)
class Constant:
    value: bool


FilterExpr = Union[Comparison, Membership, Existence, Combinator, Constant]


# -- text form ----------------------------------------------------------------------


def _tokenize(text: str):
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append(ch)
            i += 1
        elif ch == '"':
            i += 1
            out = []
            while i < len(text) and text[i] != '"':
                if text[i] == "\\" and i + 1 < len(text):
                    i += 1
                out.append(text[i])
                i += 1
            if i >= len(text):
                raise FilterError("unterminated string literal")
            i += 1
            tokens.append(("str", "".join(out)))
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append(("sym", text[i:j]))
            i = j
    return tokens


def _parse_literal(token) -> object:
    kind, value = token
    if kind == "str":
        return value
    if value == "true":
        return True
    if value == "false":
        return False
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        raise FilterError(f"cannot parse literal {value!r}") from None


def parse_filter(text: str) -> FilterExpr:
    """Parse one s-expression filter."""
    tokens = _tokenize(text)
    expr, rest = _parse_tokens(tokens)
    if rest:
        raise FilterError(f"trailing tokens after expression: {rest[:3]}")
    return expr


def _parse_tokens(tokens):
    if not tokens:
        raise FilterError("empty expression")
    head = tokens[0]
    if head == ")":
        raise FilterError("unbalanced ')'")
    if head != "(":
        if head[0] == "sym" and head[1] in ("true", "false"):
            return Constant(head[1] == "true"), tokens[1:]
        raise FilterError(f"expected '(' or constant, found {head}")
    tokens = tokens[1:]
    if not tokens or tokens[0] in ("(", ")"):
        raise FilterError("expected an operator symbol after '('")
    op = tokens[0][1]
    tokens = tokens[1:]
    if op in ("all", "any", "none"):
        children = []
        while tokens and tokens[0] != ")":
            child, tokens = _parse_tokens(tokens)
            children.append(child)
        if not tokens:
            raise FilterError("missing ')'")
        return Combinator(op, tuple(children)), tokens[1:]
    if op in ("true", "false"):
        if not tokens or tokens[0] != ")":
            raise FilterError(f"({op}) takes no arguments")
        return Constant(op == "true"), tokens[1:]
    if op in ("has", "!has"):
        if len(tokens) < 2 or not isinstance(tokens[0], tuple) or tokens[1] != ")":
            raise FilterError(f"({op} column) takes exactly one column name")
        return Existence(tokens[0][1], op == "!has"), tokens[2:]
    if op in ("in", "!in"):
        if not tokens or not isinstance(tokens[0], tuple):
            raise FilterError(f"({op} column values...) needs a column name")
        column = tokens[0][1]
        tokens = tokens[1:]
        values = []
        while tokens and tokens[0] != ")":
            if not isinstance(tokens[0], tuple):
                raise FilterError("membership values must be literals")
            values.append(_parse_literal(tokens[0]))
            tokens = tokens[1:]
        if not tokens:
            raise FilterError("missing ')'")
        return Membership(column, tuple(values), op == "!in"), tokens[1:]
    if op in _COMPARE_OPS:
        if len(tokens) < 3 or not isinstance(tokens[0], tuple) or not isinstance(tokens[1], tuple):
            raise FilterError(f"({op} column literal) takes two arguments")
        if tokens[2] != ")":
            raise FilterError(f"({op} ...) takes exactly two arguments")
        return Comparison(op, tokens[0][1], _parse_literal(tokens[1])), tokens[3:]
    raise FilterError(f"unknown operator {op!r}")


def load_filter_suite(text: str) -> list[FilterExpr]:
    """Parse a suite file: one filter per line, '#' comments allowed."""
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(parse_filter(line))
    return out


# -- compilation --------------------------------------------------------------------


class _ConstPlan:
    def __init__(self, value: bool):
        self.value = value

    def run(self, selection):
        return list(selection) if self.value else []


class _TypePlan:
    def __init__(self, codes: FlatVector, wanted: frozenset, negate: bool):
        self.codes = codes
        self.wanted = wanted
        self.negate = negate

    def run(self, selection):
        codes = self.codes.values
        wanted = self.wanted
        if self.negate:
            return [i for i in selection if codes[i] not in wanted]
        return [i for i in selection if codes[i] in wanted]


class _ComparePlan:
    def __init__(self, vector, op: str, literal):
        self.vector = vector
        self.op = op
        self.literal = literal

    def run(self, selection):
        vec = self.vector
        lit = self.literal
        values = vec.values
        op = self.op
        if vec.validity is not None:
            valid = vec.validity.flags
            if op == "==":
                return [i for i in selection if valid[i] and values[i] == lit]
            if op == "!=":
                return [i for i in selection if valid[i] and values[i] != lit]
            if op == "<":
                return [i for i in selection if valid[i] and values[i] < lit]
            if op == "<=":
                return [i for i in selection if valid[i] and values[i] <= lit]
            if op == ">":
                return [i for i in selection if valid[i] and values[i] > lit]
            return [i for i in selection if valid[i] and values[i] >= lit]
        if op == "==":
            return [i for i in selection if values[i] == lit]
        if op == "!=":
            return [i for i in selection if values[i] != lit]
        if op == "<":
            return [i for i in selection if values[i] < lit]
        if op == "<=":
            return [i for i in selection if values[i] <= lit]
        if op == ">":
            return [i for i in selection if values[i] > lit]
        return [i for i in selection if values[i] >= lit]


class _CompareStringPlan(_ComparePlan):
    def run(self, selection):
        vec = self.vector
        lit = self.literal.encode("utf-8")
        offsets = vec.offsets
        data = vec.data
        op = self.op
        if vec.validity is not None:
            valid = vec.validity.flags
            rows = [i for i in selection if valid[i]]
        else:
            rows = selection
        if op == "==":
            return [i for i in rows if data[offsets[i] : offsets[i + 1]] == lit]
        if op == "!=":
            return [i for i in rows if data[offsets[i] : offsets[i + 1]] != lit]
        if op == "<":
            return [i for i in rows if bytes(data[offsets[i] : offsets[i + 1]]) < lit]
        if op == "<=":
            return [i for i in rows if bytes(data[offsets[i] : offsets[i + 1]]) <= lit]
        if op == ">":
            return [i for i in rows if bytes(data[offsets[i] : offsets[i + 1]]) > lit]
        return [i for i in rows if bytes(data[offsets[i] : offsets[i + 1]]) >= lit]


class _IndexComparePlan:
    """String equality rewritten to dictionary-index equality."""

    def __init__(self, vector: DictionaryVector, index: int, negate: bool):
        self.vector = vector
        self.index = index
        self.negate = negate

    def run(self, selection):
        indices = self.vector.indices.values
        idx = self.index
        validity = self.vector.validity
        if validity is not None:
            valid = validity.flags
            if self.negate:
                return [i for i in selection if valid[i] and indices[i] != idx]
            return [i for i in selection if valid[i] and indices[i] == idx]
        if self.negate:
            return [i for i in selection if indices[i] != idx]
        return [i for i in selection if indices[i] == idx]


class _IndexInPlan:
    def __init__(self, vector: DictionaryVector, wanted: frozenset, negate: bool):
        self.vector = vector
        self.wanted = wanted
        self.negate = negate

    def run(self, selection):
        indices = self.vector.indices.values
        wanted = self.wanted
        validity = self.vector.validity
        if validity is not None:
            valid = validity.flags
            if self.negate:
                return [i for i in selection if valid[i] and indices[i] not in wanted]
            return [i for i in selection if valid[i] and indices[i] in wanted]
        if self.negate:
            return [i for i in selection if indices[i] not in wanted]
        return [i for i in selection if indices[i] in wanted]


class _InPlan:
    def __init__(self, vector, wanted: frozenset, negate: bool, is_string: bool):
        self.vector = vector
        self.wanted = frozenset(w.encode("utf-8") for w in wanted) if is_string else wanted
        self.negate = negate
        self.is_string = is_string

    def run(self, selection):
        vec = self.vector
        wanted = self.wanted
        if vec.validity is not None:
            valid = vec.validity.flags
            rows = [i for i in selection if valid[i]]
        else:
            rows = selection
        if self.is_string:
            offsets = vec.offsets
            data = vec.data
            if self.negate:
                return [i for i in rows if bytes(data[offsets[i] : offsets[i + 1]]) not in wanted]
            return [i for i in rows if bytes(data[offsets[i] : offsets[i + 1]]) in wanted]
        values = vec.values
        if self.negate:
            return [i for i in rows if values[i] not in wanted]
        return [i for i in rows if values[i] in wanted]


class _HasPlan:
    def __init__(self, vector, negate: bool):
        self.vector = vector
        self.negate = negate

    def run(self, selection):
        validity = self.vector.validity
        if validity is None:
            return [] if self.negate else list(selection)
        valid = validity.flags
        if self.negate:
            return [i for i in selection if not valid[i]]
        return [i for i in selection if valid[i]]


class _AllPlan:
    def __init__(self, children):
        self.children = children

    def run(self, selection):
        for child in self.children:
            if not selection:
                return []
            selection = child.run(selection)
        return selection


class _AnyPlan:
    def __init__(self, children):
        self.children = children

    def run(self, selection):
        seen: set = set()
        for child in self.children:
            seen.update(child.run(selection))
        return sorted(seen)


class _NonePlan:
    def __init__(self, children):
        self.children = children

    def run(self, selection):
        seen: set = set()
        for child in self.children:
            seen.update(child.run(selection))
        return [i for i in selection if i not in seen]


@dataclass
class FilterPlan:
    root: object
    row_count: int

    def kernels(self):
        """Plan nodes in post-order (children before parents)."""
        out = []

        def walk(node):
            for child in getattr(node, "children", ()):
                walk(child)
            out.append(node)

        walk(self.root)
        return out


def _literal_matches(literal, stype: ScalarType) -> bool:
    if stype == ScalarType.STRING:
        return isinstance(literal, str)
    if stype == ScalarType.BOOLEAN:
        return isinstance(literal, bool)
    if stype.is_float or stype.is_integer:
        return isinstance(literal, (int, float)) and not isinstance(literal, bool)
    return False


def _column_vector(table: VectorTable, name: str):
    column = table.schema.get(name)
    if column is None:
        return None, None
    if column.scope == AttributeScope.VERTEX or isinstance(column.type, (ListType, StructType)):
        # style filters see feature-scoped scalar properties only
        return None, None
    return table.columns[name], column.type


def _compile_node(expr: FilterExpr, table: VectorTable, depth: int):
    if depth > MAX_DEPTH:
        raise FilterError(f"expression deeper than {MAX_DEPTH}")
    if isinstance(expr, Constant):
        return _ConstPlan(expr.value)
    if isinstance(expr, Combinator):
        children = [_compile_node(c, table, depth + 1) for c in expr.children]
        if expr.kind == "all":
            return _AllPlan(children)
        if expr.kind == "any":
            return _AnyPlan(children)
        return _NonePlan(children)
    if isinstance(expr, Existence):
        if expr.column == "$type":
            return _ConstPlan(not expr.negate)
        vector, _ = _column_vector(table, expr.column)
        if vector is None:
            return _ConstPlan(expr.negate)
        return _HasPlan(vector, expr.negate)
    if isinstance(expr, Comparison):
        if expr.column == "$type":
            return _compile_type_test(expr.op, (expr.literal,), False, table)
        vector, stype = _column_vector(table, expr.column)
        if vector is None:
            return _ConstPlan(False)
        if not _literal_matches(expr.literal, stype):
            raise FilterError(
                f"literal {expr.literal!r} is not comparable to {stype.value} column {expr.column!r}"
            )
        if isinstance(vector, DictionaryVector) and expr.op in ("==", "!="):
            index = vector.index_of(expr.literal)
            if index is None:
                # == can never match; != matches every non-null row
                return _ConstPlan(False) if expr.op == "==" else _HasPlan(vector, False)
            return _IndexComparePlan(vector, index, expr.op == "!=")
        if isinstance(vector, DictionaryVector):
            # ordered comparison needs the strings themselves
            return _CompareStringPlan(_materialized_strings(vector), expr.op, expr.literal)
        if isinstance(vector, OffsetVector):
            return _CompareStringPlan(vector, expr.op, expr.literal)
        if stype == ScalarType.BOOLEAN:
            return _ComparePlan(vector, expr.op, 1 if expr.literal else 0)
        return _ComparePlan(vector, expr.op, expr.literal)
    if isinstance(expr, Membership):
        if expr.column == "$type":
            return _compile_type_test("in", expr.values, expr.negate, table)
        vector, stype = _column_vector(table, expr.column)
        if vector is None:
            return _ConstPlan(False)
        for value in expr.values:
            if not _literal_matches(value, stype):
                raise FilterError(
                    f"literal {value!r} is not comparable to {stype.value} column {expr.column!r}"
                )
        if isinstance(vector, DictionaryVector):
            wanted = frozenset(
                idx for idx in (vector.index_of(v) for v in expr.values) if idx is not None
            )
            if not wanted and not expr.negate:
                return _ConstPlan(False)
            return _IndexInPlan(vector, wanted, expr.negate)
        if stype == ScalarType.BOOLEAN:
            return _InPlan(vector, frozenset(1 if v else 0 for v in expr.values), expr.negate, False)
        return _InPlan(
            vector, frozenset(expr.values), expr.negate, isinstance(vector, OffsetVector)
        )
    raise FilterError(f"unknown expression node {expr!r}")


def _compile_type_test(op: str, literals, negate: bool, table: VectorTable):
    if op not in ("==", "!=", "in"):
        raise FilterError(f"$type supports ==, !=, in, !in; not {op}")
    wanted: set[int] = set()
    for lit in literals:
        if not isinstance(lit, str) or lit not in _TYPE_NAMES:
            raise FilterError(f"unknown geometry type literal {lit!r}")
        wanted.update(int(g) for g in _TYPE_NAMES[lit])
    return _TypePlan(table.type_codes, frozenset(wanted), negate or op == "!=")


def _materialized_strings(vector: DictionaryVector) -> OffsetVector:
    items = [
        vector.dictionary.raw(vector.indices.values[i]) if vector.is_valid(i) else b""
        for i in range(vector.length)
    ]
    flags = list(vector.validity.flags) if vector.validity is not None else None
    return OffsetVector(items, flags)


def compile(expr: FilterExpr, table: VectorTable) -> FilterPlan:
    """Resolve columns and dictionary literals against one table.

    Columns absent from the schema fold to constants; string equality on a
    dictionary column becomes index equality.
    """
    return FilterPlan(_compile_node(expr, table, 1), table.row_count)


def evaluate(plan: FilterPlan, table: VectorTable) -> SelectionVector:
    """Run the vectorized plan; returns the selected row indices, sorted."""
    return plan.root.run(list(range(table.row_count)))


def kernel_compare(vector, op: str, literal, selection: SelectionVector) -> SelectionVector:
    """One vectorized comparison over an input selection."""
    if isinstance(vector, DictionaryVector) and op in ("==", "!="):
        index = vector.index_of(literal)
        if index is None:
            return []
        return _IndexComparePlan(vector, index, op == "!=").run(selection)
    if isinstance(vector, OffsetVector):
        return _CompareStringPlan(vector, op, literal).run(selection)
    return _ComparePlan(vector, op, literal).run(selection)


# -- tuple-at-a-time oracle ----------------------------------------------------------


def evaluate_tuple_at_a_time(expr: FilterExpr, table: VectorTable) -> SelectionVector:
    """Row-by-row interpretation of the expression tree (Volcano style)."""
    vectors = {}

    def bind(node):
        if isinstance(node, (Comparison, Membership, Existence)):
            if node.column != "$type" and node.column not in vectors:
                vector, stype = _column_vector(table, node.column)
                vectors[node.column] = (vector, stype)
        for child in getattr(node, "children", ()):
            bind(child)

    bind(expr)
    type_codes = table.type_codes.values if table.row_count else ()

    def row_value(column, row):
        vector, _ = vectors[column]
        if vector is None:
            return None
        return vector.value(row)

    def eval_row(node, row) -> bool:
        if isinstance(node, Constant):
            return node.value
        if isinstance(node, Combinator):
            if node.kind == "all":
                return all(eval_row(c, row) for c in node.children)
            if node.kind == "any":
                return any(eval_row(c, row) for c in node.children)
            return not any(eval_row(c, row) for c in node.children)
        if isinstance(node, Existence):
            if node.column == "$type":
                return not node.negate
            vector, _ = vectors[node.column]
            present = vector is not None and vector.is_valid(row)
            return present != node.negate
        if isinstance(node, Comparison):
            if node.column == "$type":
                wanted = _TYPE_NAMES.get(node.literal)
                if wanted is None:
                    raise FilterError(f"unknown geometry type literal {node.literal!r}")
                hit = type_codes[row] in tuple(int(g) for g in wanted)
                return hit if node.op == "==" else not hit
            vector, stype = vectors[node.column]
            if vector is None:
                return False
            if stype is not None and not _literal_matches(node.literal, stype):
                raise FilterError(f"literal {node.literal!r} vs {stype.value}")
            value = vector.value(row)
            if value is None:
                return False
            if stype == ScalarType.BOOLEAN:
                value = bool(value)
            op = node.op
            if op == "==":
                return value == node.literal
            if op == "!=":
                return value != node.literal
            if op == "<":
                return value < node.literal
            if op == "<=":
                return value <= node.literal
            if op == ">":
                return value > node.literal
            return value >= node.literal
        if isinstance(node, Membership):
            if node.column == "$type":
                wanted = set()
                for lit in node.values:
                    if lit not in _TYPE_NAMES:
                        raise FilterError(f"unknown geometry type literal {lit!r}")
                    wanted.update(int(g) for g in _TYPE_NAMES[lit])
                hit = type_codes[row] in wanted
                return hit != node.negate
            vector, stype = vectors[node.column]
            if vector is None:
                return False
            if stype is not None:
                for lit in node.values:
                    if not _literal_matches(lit, stype):
                        raise FilterError(f"literal {lit!r} vs {stype.value}")
            value = vector.value(row)
            if value is None:
                return False
            if stype == ScalarType.BOOLEAN:
                value = bool(value)
            return (value in node.values) != node.negate
        raise FilterError(f"unknown expression node {node!r}")

    return [row for row in range(table.row_count) if eval_row(expr, row)]
