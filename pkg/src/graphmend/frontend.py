"""Lossless source frontend: span-annotated parse trees and surgical edits.

Rewrites never pretty-print the whole file. Every node carries the byte
range of its own source text, transformations are expressed as a set of
non-overlapping byte-range replacements, and emission splices those
replacements into the original bytes. Untouched code therefore survives
byte-for-byte, comments and blank lines included.

All offsets are byte offsets into the UTF-8 encoding of the file, which
is the coordinate system CPython's parser reports column offsets in.
"""

from __future__ import annotations

import ast
import difflib
from dataclasses import dataclass, field


class OverlapError(Exception):
    """Two edits in one edit set intersect."""


@dataclass(frozen=True)
class Span:
    """Byte range plus the (1-based line, byte col) of its start."""

    start: int
    end: int
    line: int
    col: int

    def contains(self, other: "Span") -> bool:
        return self.start <= other.start and other.end <= self.end


@dataclass(frozen=True)
class SpanEdit:
    """Replace bytes [start, end) of the original text with `replacement`."""

    start: int
    end: int
    replacement: str


@dataclass
class SourceModule:
    """One source file: path, text, and a byte index of line starts."""

    path: str
    text: str
    blob: bytes = field(repr=False)
    line_index: list[int] = field(repr=False)

    @classmethod
    def from_text(cls, path: str, text: str) -> "SourceModule":
        blob = text.encode("utf-8")
        index = [0]
        for i, b in enumerate(blob):
            if b == 0x0A:
                index.append(i + 1)
        return cls(path=path, text=text, blob=blob, line_index=index)

    @classmethod
    def load(cls, path: str) -> "SourceModule":
        with open(path, "rb") as fh:
            blob = fh.read()
        return cls.from_text(path, blob.decode("utf-8"))

    def offset(self, line: int, col: int) -> int:
        """Byte offset of 1-based `line` and parser byte column `col`."""
        return self.line_index[line - 1] + col

    def slice(self, start: int, end: int) -> str:
        return self.blob[start:end].decode("utf-8")

    def line_indent(self, offset: int) -> str:
        """Leading whitespace of the physical line containing `offset`."""
        start = self.blob.rfind(b"\n", 0, offset) + 1
        end = start
        while end < len(self.blob) and self.blob[end : end + 1] in (b" ", b"\t"):
            end += 1
        return self.blob[start:end].decode("utf-8")

    def end_of_line(self, offset: int) -> int:
        """Byte offset of the newline at or after `offset` (or EOF)."""
        pos = self.blob.find(b"\n", offset)
        return len(self.blob) if pos < 0 else pos


# kinds for the syntax constructs the analyses care about; anything else
# falls back to the lowercased class name of the parser node.
_KIND_MAP = {
    ast.Module: "module",
    ast.FunctionDef: "function-def",
    ast.AsyncFunctionDef: "function-def",
    ast.ClassDef: "class-def",
    ast.If: "if-stmt",
    ast.For: "for-stmt",
    ast.AsyncFor: "for-stmt",
    ast.While: "while-stmt",
    ast.Assign: "assignment",
    ast.AugAssign: "assignment",
    ast.AnnAssign: "assignment",
    ast.Expr: "expression-stmt",
    ast.Return: "return-stmt",
    ast.Call: "call",
    ast.Attribute: "attribute-access",
    ast.Subscript: "subscript",
    ast.Name: "name",
    ast.Constant: "literal",
    ast.JoinedStr: "literal",
    ast.BinOp: "binary-op",
    ast.BoolOp: "bool-op",
    ast.UnaryOp: "unary-op",
    ast.Compare: "compare",
    ast.Tuple: "tuple",
    ast.List: "list",
    ast.Dict: "dict",
    ast.Set: "set",
    ast.Import: "import",
    ast.ImportFrom: "import",
}

_STMT_KINDS = {
    "function-def",
    "class-def",
    "if-stmt",
    "for-stmt",
    "while-stmt",
    "assignment",
    "expression-stmt",
    "return-stmt",
    "import",
}


@dataclass
class AstNode:
    """Span-annotated syntax node.

    `py` is the underlying CPython parser node; passes use it for
    structure (fields like `test`, `body`) while spans drive all text
    manipulation.
    """

    id: int
    kind: str
    span: Span
    children: list[int]
    parent: int | None
    py: ast.AST = field(repr=False)

    def is_statement(self) -> bool:
        return isinstance(self.py, ast.stmt)


class Tree:
    """Parse result: the module root plus an id-indexed node table."""

    def __init__(self, source: SourceModule):
        self.source = source
        self.nodes: dict[int, AstNode] = {}
        self.root: AstNode | None = None
        self.by_py: dict[int, int] = {}  # id(ast node) -> node id

    def node(self, node_id: int) -> AstNode:
        return self.nodes[node_id]

    def of(self, py_node: ast.AST) -> AstNode:
        return self.nodes[self.by_py[id(py_node)]]

    def snippet(self, node: AstNode | int) -> str:
        if isinstance(node, int):
            node = self.nodes[node]
        return self.source.slice(node.span.start, node.span.end)

    def parent_of(self, node: AstNode) -> AstNode | None:
        return None if node.parent is None else self.nodes[node.parent]

    def walk(self, node: AstNode | None = None):
        stack = [node or self.root]
        while stack:
            n = stack.pop()
            yield n
            stack.extend(self.nodes[c] for c in reversed(n.children))


def _has_position(node: ast.AST) -> bool:
    return (
        getattr(node, "lineno", None) is not None
        and getattr(node, "end_lineno", None) is not None
        and getattr(node, "col_offset", None) is not None
        and getattr(node, "end_col_offset", None) is not None
    )


def _node_span(source: SourceModule, node: ast.AST) -> Span:
    start = source.offset(node.lineno, node.col_offset)
    end = source.offset(node.end_lineno, node.end_col_offset)
    return Span(start, end, node.lineno, node.col_offset)


def _decorator_at(source: SourceModule, expr_start: int) -> int:
    """Offset of the `@` introducing the decorator expression at expr_start."""
    pos = expr_start - 1
    while pos >= 0 and source.blob[pos : pos + 1] in (b" ", b"\t", b"\\", b"\n", b"\r"):
        pos -= 1
    if pos >= 0 and source.blob[pos : pos + 1] == b"@":
        return pos
    return expr_start


class _TreeBuilder:
    def __init__(self, source: SourceModule):
        self.source = source
        self.tree = Tree(source)
        self.next_id = 0

    def build(self, module: ast.Module) -> Tree:
        root = self._add(module, Span(0, len(self.source.blob), 1, 0), None)
        self.tree.root = root
        self._children(module, root)
        return self.tree

    def _add(self, py_node: ast.AST, span: Span, parent: int | None) -> AstNode:
        kind = _KIND_MAP.get(type(py_node), type(py_node).__name__.lower())
        node = AstNode(self.next_id, kind, span, [], parent, py_node)
        self.next_id += 1
        self.tree.nodes[node.id] = node
        self.tree.by_py[id(py_node)] = node.id
        return node

    def _children(self, py_node: ast.AST, parent: AstNode) -> None:
        decorators = getattr(py_node, "decorator_list", None) or []
        collected: list[AstNode] = []
        for field_name, value in ast.iter_fields(py_node):
            items = value if isinstance(value, list) else [value]
            for item in items:
                if not isinstance(item, ast.AST):
                    continue
                collected.extend(
                    self._visit(item, parent, as_decorator=item in decorators)
                )
        collected.sort(key=lambda n: (n.span.start, n.span.end))
        parent.children = [n.id for n in collected]

    def _visit(self, py_node: ast.AST, parent: AstNode, as_decorator: bool) -> list[AstNode]:
        # Inner f-string positions are unreliable before 3.12: keep the
        # whole literal as a leaf so sibling spans stay disjoint.
        if not _has_position(py_node):
            out: list[AstNode] = []
            for _, value in ast.iter_fields(py_node):
                items = value if isinstance(value, list) else [value]
                for item in items:
                    if isinstance(item, ast.AST):
                        out.extend(self._visit(item, parent, False))
            return out

        span = _node_span(self.source, py_node)
        if as_decorator:
            at = _decorator_at(self.source, span.start)
            span = Span(at, span.end, span.line, span.col)
        elif getattr(py_node, "decorator_list", None):
            first = py_node.decorator_list[0]
            dec_start = self.source.offset(first.lineno, first.col_offset)
            at = _decorator_at(self.source, dec_start)
            span = Span(at, span.end, span.line, span.col)

        node = self._add(py_node, span, parent.id)
        if as_decorator:
            node.kind = "decorator"
        if isinstance(py_node, ast.JoinedStr):
            return [node]
        self._children(py_node, node)
        return [node]


def parse_module(source: SourceModule) -> Tree:
    """Parse `source` into a span-annotated tree.

    Raises the parser's SyntaxError (with path/line/col) on invalid input;
    callers skip the file and keep going.
    """
    module = ast.parse(source.text, filename=source.path)
    return _TreeBuilder(source).build(module)


def check_edits(source: SourceModule, edits: list[SpanEdit]) -> list[SpanEdit]:
    """Validate bounds and pairwise disjointness; returns edits sorted by start."""
    ordered = sorted(edits, key=lambda e: (e.start, e.end))
    prev: SpanEdit | None = None
    for e in ordered:
        if e.start > e.end or e.start < 0 or e.end > len(source.blob):
            raise ValueError(f"edit out of bounds: [{e.start}, {e.end})")
        if prev is not None:
            overlap = e.start < prev.end or (
                e.start == prev.start and e.end == prev.end == e.start
            )
            if overlap:
                raise OverlapError(
                    f"edits overlap: [{prev.start}, {prev.end}) and [{e.start}, {e.end})"
                )
        prev = e
    return ordered

def emit_source(source: SourceModule, edits: list[SpanEdit]) -> str:
    """Original text with each edit range replaced; all other bytes unchanged."""
    if not edits:
        return source.text
    ordered = check_edits(source, edits)
    out = bytearray(source.blob)
    for e in reversed(ordered):
        out[e.start : e.end] = e.replacement.encode("utf-8")
    return bytes(out).decode("utf-8")


def unified_diff(old: str, new: str, path: str) -> str:
    lines = difflib.unified_diff(
        old.splitlines(keepends=True),
        new.splitlines(keepends=True),
        fromfile=f"a/{path}",
        tofile=f"b/{path}",
    )
    return "".join(lines)
