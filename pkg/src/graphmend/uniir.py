"""Unified IR: syntax tree interleaved with a symbol table and per-function CFGs.

The tree owns structure, the symbol table owns name resolution, and the
CFG owns statement-level control flow. After any mutation the table and
graphs are stale; `heal` rebuilds them with the same passes that created
them and re-verifies the structural invariants before anything else is
allowed to look at the IR again.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field

from .frontend import AstNode, SourceModule, SpanEdit, Tree, emit_source, parse_module


class VerificationError(Exception):
    """Structural invariants violated; the offending file must be left untouched."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


# ---------------------------------------------------------------------------
# Symbol table
# ---------------------------------------------------------------------------

@dataclass
class Scope:
    id: int
    kind: str  # module | class | function
    parent: int | None
    owner: int  # AstNode id of module/class-def/function-def
    name: str
    bound: set[str] = field(default_factory=set)

@dataclass
class Symbol:
    id: int
    name: str
    scope: int
    defs: list[int] = field(default_factory=list)   # defining AstNode ids, source order
    uses: list[int] = field(default_factory=list)   # using AstNode ids, source order
    is_param: bool = False
    is_external: bool = False
    import_origin: str | None = None  # dotted module path for import-bound names


class SymbolTable:
    def __init__(self) -> None:
        self.scopes: dict[int, Scope] = {}
        self.symbols: dict[int, Symbol] = {}
        self.scope_of_owner: dict[int, int] = {}  # owner node id -> scope id
        self.symbol_at: dict[int, int] = {}       # name/def node id -> symbol id
        self._by_scope: dict[tuple[int, str], int] = {}
        self._externals: dict[str, int] = {}
        self._next = 0

    def new_scope(self, kind: str, parent: int | None, owner: int, name: str) -> Scope:
        scope = Scope(len(self.scopes), kind, parent, owner, name)
        self.scopes[scope.id] = scope
        self.scope_of_owner[owner] = scope.id
        return scope

    def intern(self, scope_id: int, name: str) -> Symbol:
        key = (scope_id, name)
        if key not in self._by_scope:
            sym = Symbol(self._next, name, scope_id)
            self._next += 1
            self.symbols[sym.id] = sym
            self._by_scope[key] = sym.id
        return self.symbols[self._by_scope[key]]

    def external(self, name: str) -> Symbol:
        if name not in self._externals:
            sym = Symbol(self._next, name, 0, is_external=True)
            self._next += 1
            self.symbols[sym.id] = sym
            self._externals[name] = sym.id
        return self.symbols[self._externals[name]]

    def resolve(self, scope_id: int, name: str) -> Symbol:
        """Lexical lookup; class scopes are skipped for enclosed functions."""
        scope = self.scopes[scope_id]
        cur: Scope | None = scope
        first = True
        while cur is not None:
            visible = first or cur.kind != "class"
            if visible and name in cur.bound:
                return self.intern(cur.id, name)
            first = False
            cur = None if cur.parent is None else self.scopes[cur.parent]
        return self.external(name)

    def names_visible_from(self, scope_id: int) -> set[str]:
        names: set[str] = set()
        cur: Scope | None = self.scopes[scope_id]
        while cur is not None:
            names |= cur.bound
            cur = None if cur.parent is None else self.scopes[cur.parent]
        names |= set(self._externals)
        return names

    def symbol_of(self, node_id: int) -> Symbol | None:
        sid = self.symbol_at.get(node_id)
        return None if sid is None else self.symbols[sid]


def _binding_names(stmt: ast.stmt) -> list[str]:
    """Names a statement binds in its scope (the analyzed syntax subset)."""
    out: list[str] = []

    def targets(t: ast.expr) -> None:
        if isinstance(t, ast.Name):
            out.append(t.id)
        elif isinstance(t, (ast.Tuple, ast.List)):
            for e in t.elts:
                targets(e)
        elif isinstance(t, ast.Starred):
            targets(t.value)

    if isinstance(stmt, ast.Assign):
        for t in stmt.targets:
            targets(t)
    elif isinstance(stmt, (ast.AugAssign, ast.AnnAssign)):
        targets(stmt.target)
    elif isinstance(stmt, (ast.For, ast.AsyncFor)):
        targets(stmt.target)
    elif isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
        out.append(stmt.name)
    elif isinstance(stmt, ast.Import):
        for alias in stmt.names:
            out.append(alias.asname or alias.name.split(".")[0])
    elif isinstance(stmt, ast.ImportFrom):
        for alias in stmt.names:
            if alias.name != "*":
                out.append(alias.asname or alias.name)
    elif isinstance(stmt, (ast.With, ast.AsyncWith)):
        for item in stmt.items:
            if item.optional_vars is not None:
                targets(item.optional_vars)
    elif isinstance(stmt, ast.Global):
        pass
    return out


class _SymTabBuilder:
    """Two passes per scope: collect bound names, then resolve every name node."""

    def __init__(self, tree: Tree):
        self.tree = tree
        self.table = SymbolTable()

    def run(self) -> SymbolTable:
        root = self.tree.root
        scope = self.table.new_scope("module", None, root.id, "<module>")
        self._collect(root.py.body, scope)
        self._resolve_block(root.py.body, scope)
        return self.table

    # pass 1: bound names per scope (a name assigned anywhere in a function
    # is local to it throughout, per the language's scoping rule)
    def _collect(self, body: list[ast.stmt], scope: Scope) -> None:
        for stmt in body:
            for name in _binding_names(stmt):
                scope.bound.add(name)
            if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
                inner = self.table.new_scope(
                    "function", scope.id, self.tree.of(stmt).id, stmt.name
                )
                for a in self._params(stmt):
                    inner.bound.add(a.arg)
                self._collect(stmt.body, inner)
            elif isinstance(stmt, ast.ClassDef):
                inner = self.table.new_scope(
                    "class", scope.id, self.tree.of(stmt).id, stmt.name
                )
                self._collect(stmt.body, inner)
            else:
                for sub in self._nested_bodies(stmt):
                    self._collect(sub, scope)

    @staticmethod
    def _params(fn: ast.FunctionDef | ast.AsyncFunctionDef) -> list[ast.arg]:
        a = fn.args
        return [*a.posonlyargs, *a.args, *a.kwonlyargs] + (
            [a.vararg] if a.vararg else []
        ) + ([a.kwarg] if a.kwarg else [])

    @staticmethod
    def _nested_bodies(stmt: ast.stmt) -> list[list[ast.stmt]]:
        bodies = []
        for attr in ("body", "orelse", "finalbody"):
            sub = getattr(stmt, attr, None)
            if isinstance(sub, list) and sub and isinstance(sub[0], ast.stmt):
                bodies.append(sub)
        for handler in getattr(stmt, "handlers", []) or []:
            bodies.append(handler.body)
        return bodies

    # pass 2: attach every name occurrence to a symbol
    def _resolve_block(self, body: list[ast.stmt], scope: Scope) -> None:
        for stmt in body:
            if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
                self._record_def(stmt, scope, stmt.name)
                inner_id = self.table.scope_of_owner[self.tree.of(stmt).id]
                inner = self.table.scopes[inner_id]
                fn_node = self.tree.of(stmt)
                for a in self._params(stmt):
                    sym = self.table.intern(inner.id, a.arg)
                    sym.is_param = True
                    sym.defs.append(self.tree.of(a).id if id(a) in self.tree.by_py else fn_node.id)
                    if id(a) in self.tree.by_py:
                        self.table.symbol_at[self.tree.of(a).id] = sym.id
                for dec in stmt.decorator_list:
                    self._resolve_expr(dec, scope)
                for a in self._params(stmt):
                    if a.annotation is not None:
                        self._resolve_expr(a.annotation, scope)
                for d in stmt.args.defaults + [d for d in stmt.args.kw_defaults if d]:
                    self._resolve_expr(d, scope)
                self._resolve_block(stmt.body, inner)
            elif isinstance(stmt, ast.ClassDef):
                self._record_def(stmt, scope, stmt.name)
                for dec in stmt.decorator_list:
                    self._resolve_expr(dec, scope)
                for b in stmt.bases:
                    self._resolve_expr(b, scope)
                inner_id = self.table.scope_of_owner[self.tree.of(stmt).id]
                self._resolve_block(stmt.body, self.table.scopes[inner_id])
            elif isinstance(stmt, (ast.Import, ast.ImportFrom)):
                self._record_import(stmt, scope)
            else:
                for expr in ast.iter_child_nodes(stmt):
                    if isinstance(expr, ast.expr):
                        self._resolve_expr(expr, scope)
                for sub in self._nested_bodies(stmt):
                    self._resolve_block(sub, scope)
                if isinstance(stmt, (ast.For, ast.AsyncFor)):
                    pass  # target/iter handled as child expressions above

    def _record_def(self, stmt: ast.stmt, scope: Scope, name: str) -> None:
        sym = self.table.intern(scope.id, name)
        node = self.tree.of(stmt)
        sym.defs.append(node.id)
        self.table.symbol_at.setdefault(node.id, sym.id)

    def _record_import(self, stmt: ast.Import | ast.ImportFrom, scope: Scope) -> None:
        node = self.tree.of(stmt)
        for alias in stmt.names:
            if alias.name == "*":
                continue
            bound = alias.asname or (
                alias.name.split(".")[0] if isinstance(stmt, ast.Import) else alias.name
            )
            sym = self.table.intern(scope.id, bound)
            sym.defs.append(node.id)
            if isinstance(stmt, ast.Import):
                sym.import_origin = alias.name if alias.asname else alias.name.split(".")[0]
            else:
                sym.import_origin = f"{stmt.module}.{alias.name}" if stmt.module else alias.name

    def _resolve_expr(self, expr: ast.expr, scope: Scope) -> None:
        for sub in ast.walk(expr):
            if not isinstance(sub, ast.Name):
                continue
            sym = self.table.resolve(scope.id, sub.id)
            node_id = self.tree.by_py.get(id(sub))
            anchor = node_id
            if anchor is None:
                # names folded into an f-string leaf attach to the literal
                anchor = self._enclosing_node(expr)
            if isinstance(sub.ctx, ast.Load):
                if anchor is not None and anchor not in sym.uses:
                    sym.uses.append(anchor)
            else:
                if anchor is not None and anchor not in sym.defs:
                    sym.defs.append(anchor)
            if node_id is not None:
                self.table.symbol_at[node_id] = sym.id

    def _enclosing_node(self, expr: ast.expr) -> int | None:
        nid = self.tree.by_py.get(id(expr))
        return nid


def build_symbol_table(tree: Tree) -> SymbolTable:
    """SymTabBuildPass: lexical scopes, def/use lists, externals for the rest."""
    return _SymTabBuilder(tree).run()


# ---------------------------------------------------------------------------
# Control-flow graph (statement granularity)
# ---------------------------------------------------------------------------

ENTRY = -1
EXIT = -2

_EDGE_KINDS = ("fallthrough", "true-branch", "false-branch", "loop-back", "return")


@dataclass(frozen=True)
class CfgEdge:
    src: int
    dst: int
    kind: str


class Cfg:
    """Per-function graph whose nodes are statement AstNode ids plus ENTRY/EXIT."""

    def __init__(self, function: int):
        self.function = function
        self.nodes: list[int] = [ENTRY, EXIT]
        self.edges: list[CfgEdge] = []
        self.succs: dict[int, list[CfgEdge]] = {ENTRY: [], EXIT: []}
        self.preds: dict[int, list[CfgEdge]] = {ENTRY: [], EXIT: []}
        self.unreachable: list[int] = []
        self._dom: dict[int, frozenset[int]] | None = None

    def add_node(self, node_id: int) -> None:
        if node_id not in self.succs:
            self.nodes.append(node_id)
            self.succs[node_id] = []
            self.preds[node_id] = []

    def add_edge(self, src: int, dst: int, kind: str) -> None:
        assert kind in _EDGE_KINDS, kind
        edge = CfgEdge(src, dst, kind)
        self.edges.append(edge)
        self.succs[src].append(edge)
        self.preds[dst].append(edge)

    def successors(self, node: int) -> list[int]:
        return [e.dst for e in self.succs[node]]

    def predecessors(self, node: int) -> list[int]:
        return [e.src for e in self.preds[node]]

    def statement_nodes(self) -> list[int]:
        return [n for n in self.nodes if n not in (ENTRY, EXIT)]

    def dominators(self) -> dict[int, frozenset[int]]:
        """Iterative dominator sets: dom(n) = {n} ∪ ⋂ dom(preds)."""
        if self._dom is not None:
            return self._dom
        all_nodes = frozenset(self.nodes)
        dom: dict[int, frozenset[int]] = {n: all_nodes for n in self.nodes}
        dom[ENTRY] = frozenset({ENTRY})
        changed = True
        while changed:
            changed = False
            for n in self.nodes:
                if n == ENTRY:
                    continue
                preds = self.predecessors(n)
                if preds:
                    acc = frozenset.intersection(*(dom[p] for p in preds))
                else:
                    acc = frozenset()
                new = acc | {n}
                if new != dom[n]:
                    dom[n] = new
                    changed = True
        self._dom = dom
        return dom


def dominates(cfg: Cfg, a: int, b: int) -> bool:
    """True iff every ENTRY-to-b path passes through a."""
    return a in cfg.dominators()[b]


class _CfgBuilder:
    def __init__(self, tree: Tree, fn: AstNode):
        self.tree = tree
        self.fn = fn
        self.cfg = Cfg(fn.id)
        # loop context: (header id, break targets collector)
        self.loops: list[tuple[int, list[tuple[int, str]]]] = []

    def build(self) -> Cfg:
        exits = self._block(self.fn.py.body, [(ENTRY, "fallthrough")])
        for src, kind in exits:
            self.cfg.add_edge(src, EXIT, kind)
        return self.cfg

    def _stmt_node(self, stmt: ast.stmt) -> int:
        node = self.tree.of(stmt)
        self.cfg.add_node(node.id)
        return node.id

    def _block(
        self, body: list[ast.stmt], incoming: list[tuple[int, str]]
    ) -> list[tuple[int, str]]:
        preds = incoming
        for stmt in body:
            if not preds:
                self.cfg.unreachable.append(self.tree.of(stmt).id)
                continue
            preds = self._statement(stmt, preds)
        return preds

    def _statement(
        self, stmt: ast.stmt, preds: list[tuple[int, str]]
    ) -> list[tuple[int, str]]:
        nid = self._stmt_node(stmt)
        for src, kind in preds:
            self.cfg.add_edge(src, nid, kind)

        if isinstance(stmt, ast.If):
            then_exits = self._block(stmt.body, [(nid, "true-branch")])
            if stmt.orelse:
                else_exits = self._block(stmt.orelse, [(nid, "false-branch")])
            else:
                else_exits = [(nid, "false-branch")]
            return then_exits + else_exits

        if isinstance(stmt, (ast.While, ast.For, ast.AsyncFor)):
            breaks: list[tuple[int, str]] = []
            self.loops.append((nid, breaks))
            body_exits = self._block(stmt.body, [(nid, "true-branch")])
            self.loops.pop()
            for src, _ in body_exits:
                self.cfg.add_edge(src, nid, "loop-back")
            out = [(nid, "false-branch")] + breaks
            if stmt.orelse:
                return self._block(stmt.orelse, out)
            return out

        if isinstance(stmt, ast.Return):
            self.cfg.add_edge(nid, EXIT, "return")
            return []

        if isinstance(stmt, ast.Break):
            if self.loops:
                self.loops[-1][1].append((nid, "fallthrough"))
            return []

        if isinstance(stmt, ast.Continue):
            if self.loops:
                self.cfg.add_edge(nid, self.loops[-1][0], "loop-back")
            return []

        if isinstance(stmt, (ast.With, ast.AsyncWith)):
            return self._block(stmt.body, [(nid, "fallthrough")])

        # try/match and friends are opaque single nodes: exceptional flow is
        # not modeled, and any rewrite touching them is refused elsewhere
        return [(nid, "fallthrough")]


def build_cfg(tree: Tree, symtab: SymbolTable) -> dict[int, Cfg]:
    """CFGBuildPass: one statement-level graph per function-def."""
    cfgs: dict[int, Cfg] = {}
    for node in tree.walk():
        if node.kind == "function-def":
            cfgs[node.id] = _CfgBuilder(tree, node).build()
    return cfgs


# ---------------------------------------------------------------------------
# The unified IR and healing
# ---------------------------------------------------------------------------

class Uniir:
    def __init__(self, source: SourceModule):
        self.source = source
        self.tree: Tree | None = None
        self.symtab: SymbolTable | None = None
        self.cfgs: dict[int, Cfg] = {}
        self.consistent = False
        self.warnings: list[str] = []
        self.pending_edits: list[SpanEdit] = []

    @classmethod
    def build(cls, source: SourceModule) -> "Uniir":
        ir = cls(source)
        ir.tree = parse_module(source)
        ir._rebuild_tables()
        return ir

    def _rebuild_tables(self) -> None:
        self.symtab = build_symbol_table(self.tree)
        self.cfgs = build_cfg(self.tree, self.symtab)
        self.warnings = [
            f"{self.source.path}:{self.tree.node(n).span.line}: unreachable code"
            for cfg in self.cfgs.values()
            for n in cfg.unreachable
        ]
        verify(self)
        self.consistent = True

    def mark_dirty(self, edits: list[SpanEdit]) -> None:
        self.pending_edits.extend(edits)
        self.consistent = False

    def current_text(self) -> str:
        if not self.pending_edits:
            return self.source.text
        return emit_source(self.source, self.pending_edits)

    def cfg_of_stmt(self, node_id: int) -> Cfg | None:
        for cfg in self.cfgs.values():
            if node_id in cfg.succs:
                return cfg
        return None


def heal(ir: Uniir) -> Uniir:
    """Rebuild symbol table and CFGs after mutation and re-verify.

    Raises VerificationError when the rebuilt IR violates its invariants;
    callers abort the file, leaving the original text untouched.
    """
    if ir.consistent and not ir.pending_edits:
        verify(ir)
        return ir
    new_text = ir.current_text()
    new_source = SourceModule.from_text(ir.source.path, new_text)
    try:
        tree = parse_module(new_source)
    except SyntaxError as exc:  # a rewrite produced unparsable text
        raise VerificationError([f"rewritten source no longer parses: {exc}"]) from exc
    ir.source = new_source
    ir.tree = tree
    ir.pending_edits = []
    ir._rebuild_tables()
    return ir


def verify(ir: Uniir) -> None:
    """Span soundness, tree wellformedness, and CFG invariants."""
    violations: list[str] = []
    tree = ir.tree
    src = ir.source

    idx = src.line_index
    if not idx or idx[0] != 0 or any(a >= b for a, b in zip(idx, idx[1:])):
        violations.append("line index not strictly increasing from 0")
    elif idx[-1] > len(src.blob):
        violations.append("line index exceeds text length")

    for node in tree.nodes.values():
        if node is not tree.root and node.parent is None:
            violations.append(f"node {node.id} has no parent")
        if node.parent is not None:
            parent = tree.nodes.get(node.parent)
            if parent is None:
                violations.append(f"node {node.id} has dangling parent {node.parent}")
                continue
            if node.id not in parent.children:
                violations.append(f"node {node.id} missing from parent {parent.id}")
            if not parent.span.contains(node.span):
                violations.append(
                    f"child span {node.id} not inside parent {parent.id}"
                )
        spans = sorted(
            (tree.nodes[c].span for c in node.children), key=lambda s: s.start
        )
        for a, b in zip(spans, spans[1:]):
            if b.start < a.end:
                violations.append(f"sibling spans overlap under node {node.id}")
                break

    for fn_id, cfg in ir.cfgs.items():
        if cfg.predecessors(ENTRY):
            violations.append(f"cfg {fn_id}: ENTRY has predecessors")
        if cfg.successors(EXIT):
            violations.append(f"cfg {fn_id}: EXIT has successors")
        for e in cfg.edges:
            if e.kind == "return" and e.dst != EXIT:
                violations.append(f"cfg {fn_id}: return edge not targeting EXIT")
        seen: set[int] = set()
        stack = [ENTRY]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(cfg.successors(n))
        missing = [n for n in cfg.nodes if n not in seen]
        if missing:
            violations.append(f"cfg {fn_id}: unreachable cfg nodes {missing}")

    if ir.symtab is not None:
        for sym in ir.symtab.symbols.values():
            for ref in list(sym.defs) + list(sym.uses):
                if ref not in tree.nodes:
                    violations.append(
                        f"symbol {sym.name}: dangling node reference {ref}"
                    )

    if violations:
        raise VerificationError(violations)


# ---------------------------------------------------------------------------
# Debug rendering
# ---------------------------------------------------------------------------

def _label(tree: Tree, node_id: int) -> str:
    if node_id == ENTRY:
        return "ENTRY"
    if node_id == EXIT:
        return "EXIT"
    node = tree.node(node_id)
    return f"{node.span.line}:{node.span.col} {node.kind}"


def dump_ir(ir: Uniir) -> str:
    """Scope tree plus one `from -> to [kind]` line per CFG edge."""
    out: list[str] = []
    table = ir.symtab
    tree = ir.tree

    def scope_line(scope: Scope, depth: int) -> None:
        owner = tree.node(scope.owner)
        out.append(
            "  " * depth
            + f"{scope.kind} {scope.name} (line {owner.span.line}) "
            + f"binds [{', '.join(sorted(scope.bound))}]"
        )
        for child in table.scopes.values():
            if child.parent == scope.id:
                scope_line(child, depth + 1)

    out.append(f"scopes of {ir.source.path}:")
    scope_line(table.scopes[0], 1)
    for fn_id, cfg in sorted(ir.cfgs.items(), key=lambda kv: tree.node(kv[0]).span.start):
        fn = tree.node(fn_id)
        out.append(f"cfg {fn.py.name} (line {fn.span.line}):")
        for e in sorted(
            cfg.edges, key=lambda e: (_sort_key(tree, e.src), _sort_key(tree, e.dst), e.kind)
        ):
            out.append(f"  {_label(tree, e.src)} -> {_label(tree, e.dst)} [{e.kind}]")
    return "\n".join(out) + "\n"


def _sort_key(tree: Tree, node_id: int) -> tuple[int, int]:
    if node_id == ENTRY:
        return (-2, 0)
    if node_id == EXIT:
        return (10**9, 0)
    return (tree.node(node_id).span.start, node_id)
