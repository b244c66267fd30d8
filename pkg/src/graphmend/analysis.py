"""Entry-point discovery, tensor-value taint, and graph-break tagging.

Detection walks each compiled function's CFG with a worklist. If-conditions
are classified dynamic either because a condition subexpression reads a
torch attribute classed as dynamic (value-producing reductions like sum or
item) or because use-def taint shows the condition depends on tensor
inputs. print/logger calls, host scalar reads and dynamic-shape operators
are tagged as they are encountered.
"""

from __future__ import annotations

import ast
import enum
from dataclasses import dataclass, field
from importlib import resources

from .frontend import AstNode, Tree
from .uniir import ENTRY, EXIT, Symbol, Uniir


class BreakKind(str, enum.Enum):
    DYN_CTRL_FLOW = "DynCtrlFl"
    LOGGER_PRINT = "LoggerPrint"
    ITEM_ACCESS = "ItemAccess"
    DYNAMIC_SHAPE_OP = "DynamicShapeOp"
    UNSUPPORTED_OTHER = "UnsupportedOther"


UNFIXABLE_KINDS = {BreakKind.ITEM_ACCESS, BreakKind.DYNAMIC_SHAPE_OP, BreakKind.UNSUPPORTED_OTHER}

ITEM_READS = ("item", "data_ptr")
LOGGER_BASE_NAMES = ("logger", "logging")


# ---------------------------------------------------------------------------
# Configuration tables
# ---------------------------------------------------------------------------

def _read_config_lines(text: str) -> list[str]:
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return lines


def _data_text(name: str) -> str:
    return resources.files("graphmend").joinpath("data").joinpath(name).read_text("utf-8")


@dataclass(frozen=True)
class TorchAttrTable:
    """Attribute name -> dynamism class; loaded once per run, immutable."""

    entries: dict[str, str]

    @classmethod
    def default(cls) -> "TorchAttrTable":
        return cls.parse(_data_text("attr_table.cfg"))

    @classmethod
    def parse(cls, text: str) -> "TorchAttrTable":
        entries: dict[str, str] = {}
        for line in _read_config_lines(text):
            name, _, cls_name = line.partition("=")
            name, cls_name = name.strip(), cls_name.strip()
            if cls_name not in ("dynamic", "static"):
                raise ValueError(f"bad attr table line: {line!r}")
            entries[name] = cls_name
        return cls(entries)

    @classmethod
    def load(cls, path: str) -> "TorchAttrTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def classify(self, name: str) -> str:
        """Spec default: unlisted attributes are static."""
        return self.entries.get(name, "static")

    def lookup(self, name: str) -> str | None:
        return self.entries.get(name)


def default_dynamic_shape_ops() -> frozenset[str]:
    return frozenset(_read_config_lines(_data_text("dynamic_shape_ops.cfg")))


def load_dynamic_shape_ops(path: str) -> frozenset[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return frozenset(_read_config_lines(fh.read()))


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

@dataclass
class EntryPoint:
    function: int  # AstNode id of the function-def
    mechanism: str  # decorator | call-wrap | module-compile
    compile_args: str = ""


def _attr_chain(expr: ast.expr) -> list[str] | None:
    """['torch', 'compile'] for torch.compile; None when not a plain chain."""
    parts: list[str] = []
    cur = expr
    while isinstance(cur, ast.Attribute):
        parts.append(cur.attr)
        cur = cur.value
    if isinstance(cur, ast.Name):
        parts.append(cur.id)
        parts.reverse()
        return parts
    return None


def _is_torch_module_symbol(sym: Symbol | None) -> bool:
    if sym is None:
        return False
    if sym.import_origin is not None:
        return sym.import_origin == "torch" or sym.import_origin.startswith("torch.")
    return sym.is_external and sym.name == "torch"


class _EntryFinder:
    def __init__(self, ir: Uniir):
        self.ir = ir
        self.tree = ir.tree
        self.symtab = ir.symtab

    def _is_torch_compile(self, expr: ast.expr) -> bool:
        chain = _attr_chain(expr)
        if not chain or chain[-1] != "compile":
            return False
        base = self.symtab.resolve(0, chain[0])
        return _is_torch_module_symbol(base) and chain[:-1] in (["torch"], [base.name])

    def _args_src(self, call: ast.Call) -> str:
        pieces = list(call.args) + [kw.value for kw in call.keywords]
        if not pieces:
            return ""
        first = min(pieces, key=lambda e: (e.lineno, e.col_offset))
        last = max(pieces, key=lambda e: (e.end_lineno, e.end_col_offset))
        src = self.ir.source
        lo = src.offset(first.lineno, first.col_offset)
        hi = src.offset(last.end_lineno, last.end_col_offset)
        # back up over a keyword's `name=` prefix
        kw_names = {id(kw.value): kw.arg for kw in call.keywords}
        if id(first) in kw_names and kw_names[id(first)]:
            found = src.blob.rfind(kw_names[id(first)].encode(), 0, lo)
            if found >= 0:
                lo = found
        return src.slice(lo, hi)

    def run(self) -> list[EntryPoint]:
        entries: dict[int, EntryPoint] = {}

        # (a) decorated functions
        for node in self.tree.walk():
            if node.kind != "function-def":
                continue
            for dec in node.py.decorator_list:
                target = dec.func if isinstance(dec, ast.Call) else dec
                if self._is_torch_compile(target):
                    args = self._args_src(dec) if isinstance(dec, ast.Call) else ""
                    entries.setdefault(
                        node.id, EntryPoint(node.id, "decorator", args)
                    )

        # instance-producing classes, for mechanism (c)
        class_defs: dict[str, ast.ClassDef] = {
            n.py.name: n.py for n in self.tree.walk() if n.kind == "class-def"
        }
        module_instances: dict[str, str] = {}  # var -> class name
        for stmt in self.tree.root.py.body:
            if (
                isinstance(stmt, ast.Assign)
                and len(stmt.targets) == 1
                and isinstance(stmt.targets[0], ast.Name)
                and isinstance(stmt.value, ast.Call)
                and isinstance(stmt.value.func, ast.Name)
                and stmt.value.func.id in class_defs
            ):
                module_instances[stmt.targets[0].id] = stmt.value.func.id

        # (b) call wraps and (c) compiled module instances
        for node in self.tree.walk():
            if node.kind not in ("call", "decorator"):
                continue
            call = node.py
            if not isinstance(call, ast.Call) or not self._is_torch_compile(call.func):
                continue
            if not call.args:
                continue
            parent = self.tree.parent_of(node)
            bound = parent is not None and parent.kind == "assignment"
            target = call.args[0]
            cls_name: str | None = None
            if isinstance(target, ast.Name):
                sym = self.symtab.resolve(0, target.id)
                for def_id in sym.defs if sym else []:
                    def_node = self.tree.node(def_id)
                    if def_node.kind == "function-def" and bound:
                        entries.setdefault(
                            def_node.id,
                            EntryPoint(def_node.id, "call-wrap", self._args_src(call)),
                        )
                if target.id in module_instances:
                    cls_name = module_instances[target.id]
            elif isinstance(target, ast.Call) and isinstance(target.func, ast.Name):
                if target.func.id in class_defs:
                    cls_name = target.func.id
            if cls_name is not None:
                for stmt in class_defs[cls_name].body:
                    if (
                        isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef))
                        and stmt.name == "forward"
                    ):
                        fwd = self.tree.of(stmt)
                        entries.setdefault(
                            fwd.id,
                            EntryPoint(fwd.id, "module-compile", self._args_src(call)),
                        )

        ordered = sorted(entries.values(), key=lambda e: self.tree.node(e.function).span.start)
        return ordered


def find_entry_points(ir: Uniir) -> list[EntryPoint]:
    assert ir.consistent, "analysis requires a healed IR"
    return _EntryFinder(ir).run()


# ---------------------------------------------------------------------------
# Taint (forward dataflow over the statement CFG)
# ---------------------------------------------------------------------------

@dataclass
class TaintState:
    """Tainted symbol ids at each CFG node entry, per analyzed function."""

    facts: dict[int, frozenset[int]] = field(default_factory=dict)  # cfg node -> syms
    functions: list[int] = field(default_factory=list)

    def tainted_at(self, stmt_node: int) -> frozenset[int]:
        return self.facts.get(stmt_node, frozenset())

    def is_tainted(self, stmt_node: int, sym: Symbol | None) -> bool:
        return sym is not None and sym.id in self.tainted_at(stmt_node)


class _Tainter:
    def __init__(self, ir: Uniir, attr_table: TorchAttrTable):
        self.ir = ir
        self.attr_table = attr_table

    def scope_for(self, fn_id: int) -> int:
        return self.ir.symtab.scope_of_owner[fn_id]

    def resolve(self, fn_id: int, name: str) -> Symbol:
        return self.ir.symtab.resolve(self.scope_for(fn_id), name)

    def is_torch_rooted(self, fn_id: int, expr: ast.expr) -> bool:
        chain = _attr_chain(expr)
        if not chain:
            return False
        return _is_torch_module_symbol(self.resolve(fn_id, chain[0]))

    def expr_tainted(self, fn_id: int, expr: ast.expr, tainted: frozenset[int]) -> bool:
        """Value-level taint; attributes classed static shield their receiver."""
        if isinstance(expr, ast.Name):
            sym = self.resolve(fn_id, expr.id)
            return sym.id in tainted
        if isinstance(expr, ast.Constant):
            return False
        if isinstance(expr, ast.Attribute):
            cls = self.attr_table.lookup(expr.attr)
            if cls == "static":
                return False
            if self.is_torch_rooted(fn_id, expr):
                return True
            return self.expr_tainted(fn_id, expr.value, tainted)
        if isinstance(expr, ast.Call):
            if self.expr_tainted(fn_id, expr.func, tainted):
                return True
            parts = list(expr.args) + [kw.value for kw in expr.keywords]
            return any(self.expr_tainted(fn_id, p, tainted) for p in parts)
        if isinstance(expr, ast.JoinedStr):
            return any(
                self.resolve(fn_id, n.id).id in tainted
                for n in ast.walk(expr)
                if isinstance(n, ast.Name)
            )
        return any(
            self.expr_tainted(fn_id, sub, tainted)
            for sub in ast.iter_child_nodes(expr)
            if isinstance(sub, ast.expr)
        )

    def _transfer(self, fn_id: int, stmt: ast.stmt, fact: frozenset[int]) -> frozenset[int]:
        def names(t: ast.expr) -> list[str]:
            if isinstance(t, ast.Name):
                return [t.id]
            if isinstance(t, (ast.Tuple, ast.List)):
                return [n for e in t.elts for n in names(e)]
            if isinstance(t, ast.Starred):
                return names(t.value)
            return []

        def update(target_names: list[str], hot: bool) -> None:
            nonlocal fact
            syms = {self.resolve(fn_id, n).id for n in target_names}
            fact = (fact | syms) if hot else (fact - syms)

        if isinstance(stmt, ast.Assign):
            hot = self.expr_tainted(fn_id, stmt.value, fact)
            for t in stmt.targets:
                update(names(t), hot)
        elif isinstance(stmt, ast.AugAssign):
            hot = self.expr_tainted(fn_id, stmt.value, fact) or self.expr_tainted(
                fn_id, stmt.target, fact
            )
            update(names(stmt.target), hot)
        elif isinstance(stmt, ast.AnnAssign) and stmt.value is not None:
            update(names(stmt.target), self.expr_tainted(fn_id, stmt.value, fact))
        elif isinstance(stmt, (ast.For, ast.AsyncFor)):
            update(names(stmt.target), self.expr_tainted(fn_id, stmt.iter, fact))
        return fact

    def run_function(
        self, fn_id: int, extra_seeds: frozenset[int] = frozenset()
    ) -> dict[int, frozenset[int]]:
        cfg = self.ir.cfgs[fn_id]
        fn = self.ir.tree.node(fn_id)
        seeds = set(extra_seeds)
        params = _SymParams.of(fn.py)
        for i, a in enumerate(params):
            if i == 0 and a.arg == "self":
                continue
            seeds.add(self.resolve(fn_id, a.arg).id)

        facts: dict[int, frozenset[int]] = {n: frozenset() for n in cfg.nodes}
        facts[ENTRY] = frozenset(seeds)
        out: dict[int, frozenset[int]] = dict(facts)
        out[ENTRY] = frozenset(seeds)

        work = list(cfg.statement_nodes())
        while work:
            nid = work.pop(0)
            incoming = frozenset().union(
                *(out[p] for p in cfg.predecessors(nid))
            ) if cfg.predecessors(nid) else frozenset()
            facts[nid] = incoming
            stmt = self.ir.tree.node(nid).py
            new_out = self._transfer(fn_id, stmt, incoming)
            if new_out != out[nid]:
                out[nid] = new_out
                for s in cfg.successors(nid):
                    if s not in (EXIT,) and s not in work:
                        work.append(s)
        return facts


class _SymParams:
    @staticmethod
    def of(fn: ast.FunctionDef | ast.AsyncFunctionDef) -> list[ast.arg]:
        a = fn.args
        return [*a.posonlyargs, *a.args, *a.kwonlyargs] + (
            [a.vararg] if a.vararg else []
        ) + ([a.kwarg] if a.kwarg else [])


def _callable_functions(ir: Uniir, fn_id: int) -> list[int]:
    """Same-file functions this function calls directly (statically resolvable)."""
    tree = ir.tree
    fn = tree.node(fn_id)
    out: list[int] = []
    scope_id = ir.symtab.scope_of_owner[fn_id]
    enclosing_class = _enclosing_class(tree, fn)
    for node in tree.walk(fn):
        if node.kind != "call":
            continue
        callee = node.py.func
        if isinstance(callee, ast.Name):
            sym = ir.symtab.resolve(scope_id, callee.id)
            for def_id in sym.defs:
                if tree.node(def_id).kind == "function-def":
                    out.append(def_id)
        elif (
            isinstance(callee, ast.Attribute)
            and isinstance(callee.value, ast.Name)
            and callee.value.id == "self"
            and enclosing_class is not None
        ):
            for stmt in enclosing_class.py.body:
                if (
                    isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef))
                    and stmt.name == callee.attr
                ):
                    out.append(tree.of(stmt).id)
    return out


def _enclosing_class(tree: Tree, node: AstNode) -> AstNode | None:
    cur = tree.parent_of(node)
    while cur is not None:
        if cur.kind == "class-def":
            return cur
        cur = tree.parent_of(cur)
    return None


def traversal_set(ir: Uniir, entry: EntryPoint) -> list[int]:
    """Entry function plus same-file functions it calls directly."""
    out = [entry.function]
    for callee in _callable_functions(ir, entry.function):
        if callee not in out and callee in ir.cfgs:
            out.append(callee)
    return out


def compute_taint(ir: Uniir, entry: EntryPoint, attr_table: TorchAttrTable | None = None) -> TaintState:
    """Forward fixpoint from the entry's parameters; callees seeded alike."""
    assert ir.consistent, "analysis requires a healed IR"
    attr_table = attr_table or TorchAttrTable.default()
    tainter = _Tainter(ir, attr_table)
    state = TaintState()
    for fn_id in traversal_set(ir, entry):
        state.facts.update(tainter.run_function(fn_id))
        state.functions.append(fn_id)
    return state


# ---------------------------------------------------------------------------
# Graph-break detection
# ---------------------------------------------------------------------------

@dataclass
class GraphBreakTag:
    site: int                      # AstNode id of the tagged statement/call
    kind: BreakKind
    fixable: bool
    evidence: list[tuple[int, str]] = field(default_factory=list)
    function: int = -1
    reason: str | None = None      # set when fixable is False

    def line_col(self, tree: Tree) -> tuple[int, int]:
        span = tree.node(self.site).span
        return span.line, span.col


class _Detector:
    def __init__(
        self,
        ir: Uniir,
        attr_table: TorchAttrTable,
        dynamic_shape_ops: frozenset[str],
    ):
        self.ir = ir
        self.tree = ir.tree
        self.attr_table = attr_table
        self.dso = dynamic_shape_ops
        self.tainter = _Tainter(ir, attr_table)
        self.tags: dict[tuple[int, BreakKind], GraphBreakTag] = {}

    # -- condition dynamism ------------------------------------------------

    def condition_dynamic(
        self, fn_id: int, cond: ast.expr, tainted: frozenset[int]
    ) -> tuple[bool, list[tuple[int, str]]]:
        shielded: set[int] = set()  # id() of receiver Name nodes under static attrs
        for sub in ast.walk(cond):
            if not isinstance(sub, ast.Attribute):
                continue
            cls = self.attr_table.lookup(sub.attr)
            receiver_hot = self.tainter.is_torch_rooted(fn_id, sub) or self.tainter.expr_tainted(
                fn_id, sub.value, tainted
            )
            if cls == "static":
                for n in ast.walk(sub.value):
                    if isinstance(n, ast.Name):
                        shielded.add(id(n))
                continue
            if receiver_hot:
                anchor = self._call_anchor(sub)
                if cls == "dynamic":
                    return True, [(anchor, f"attr '{sub.attr}' dynamic")]
                return True, [(anchor, f"attr '{sub.attr}' not in table; tensor receiver")]
        for sub in ast.walk(cond):
            if isinstance(sub, ast.Name) and isinstance(sub.ctx, ast.Load):
                if id(sub) in shielded:
                    continue
                sym = self.tainter.resolve(fn_id, sub.id)
                if sym.id in tainted:
                    nid = self.tree.by_py.get(id(sub))
                    return True, [(nid if nid is not None else -1, f"name '{sub.id}' is tensor-dependent")]
        return False, []

    def _call_anchor(self, attr: ast.Attribute) -> int:
        """Prefer the call node over the bare attribute when it is a callee."""
        nid = self.tree.by_py.get(id(attr))
        if nid is None:
            return -1
        node = self.tree.node(nid)
        parent = self.tree.parent_of(node)
        if parent is not None and parent.kind == "call" and parent.py.func is attr:
            return parent.id
        return nid

    # -- per-statement checks ------------------------------------------------

    def logger_callee(self, fn_id: int, call: ast.Call) -> str | None:
        func = call.func
        if isinstance(func, ast.Name):
            sym = self.tainter.resolve(fn_id, func.id)
            if func.id == "print" and sym.is_external:
                return "print"
            return None
        if isinstance(func, ast.Attribute) and isinstance(func.value, ast.Name):
            base = func.value.id
            sym = self.tainter.resolve(fn_id, base)
            if base in LOGGER_BASE_NAMES:
                return f"{base}.{func.attr}"
            if sym.import_origin == "logging" or (
                sym.import_origin or ""
            ).startswith("logging."):
                return f"{base}.{func.attr}"
            # a name bound from logging.getLogger(...) and friends
            for def_id in sym.defs:
                def_node = self.tree.node(def_id)
                if not isinstance(def_node.py, ast.Assign):
                    parent = self.tree.parent_of(def_node)
                    if parent is None or not isinstance(parent.py, ast.Assign):
                        continue
                    def_node = parent
                if isinstance(def_node.py.value, ast.Call):
                    chain = _attr_chain(def_node.py.value.func)
                    if chain:
                        root = self.tainter.resolve(fn_id, chain[0])
                        from_logging = root.import_origin == "logging" or (
                            root.is_external and chain[0] == "logging"
                        )
                        if from_logging:
                            return f"{base}.{func.attr}"
        return None

    def scan_statement(self, fn_id: int, stmt_node: AstNode, tainted: frozenset[int]) -> None:
        stmt = stmt_node.py

        if isinstance(stmt, ast.If):
            dyn, evidence = self.condition_dynamic(fn_id, stmt.test, tainted)
            if dyn:
                self._tag(stmt_node.id, BreakKind.DYN_CTRL_FLOW, True, evidence, fn_id)
        elif isinstance(stmt, ast.While):
            dyn, evidence = self.condition_dynamic(fn_id, stmt.test, tainted)
            if dyn:
                self._tag(
                    stmt_node.id, BreakKind.DYN_CTRL_FLOW, False, evidence, fn_id, "loop"
                )
        elif isinstance(stmt, (ast.For, ast.AsyncFor)):
            if self.tainter.expr_tainted(fn_id, stmt.iter, tainted):
                nid = self.tree.by_py.get(id(stmt.iter), -1)
                self._tag(
                    stmt_node.id,
                    BreakKind.DYN_CTRL_FLOW,
                    False,
                    [(nid, "loop iterates a tensor-dependent value")],
                    fn_id,
                    "loop",
                )

        for sub in ast.walk(stmt):
            if not isinstance(sub, ast.Call):
                continue
            if self._inside_nested_function(sub, stmt):
                continue
            callee = self.logger_callee(fn_id, sub)
            call_id = self.tree.by_py.get(id(sub))
            if callee is not None and call_id is not None:
                self._tag(
                    call_id,
                    BreakKind.LOGGER_PRINT,
                    True,
                    [(call_id, f"call to {callee}")],
                    fn_id,
                )
                continue
            if isinstance(sub.func, ast.Attribute) and call_id is not None:
                attr = sub.func.attr
                receiver_hot = self.tainter.is_torch_rooted(
                    fn_id, sub.func
                ) or self.tainter.expr_tainted(fn_id, sub.func.value, tainted)
                if attr in ITEM_READS and receiver_hot:
                    self._tag(
                        call_id,
                        BreakKind.ITEM_ACCESS,
                        False,
                        [(call_id, f"host scalar read via .{attr}()")],
                        fn_id,
                        "host scalar read",
                    )
                elif attr in self.dso and receiver_hot:
                    self._tag(
                        call_id,
                        BreakKind.DYNAMIC_SHAPE_OP,
                        False,
                        [(call_id, f"dynamic output shape from .{attr}()")],
                        fn_id,
                        "dynamic shape operator",
                    )

    def _inside_nested_function(self, sub: ast.AST, stmt: ast.stmt) -> bool:
        if not isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
            return False
        return sub not in stmt.decorator_list

    def _tag(
        self,
        site: int,
        kind: BreakKind,
        fixable: bool,
        evidence: list[tuple[int, str]],
        fn_id: int,
        reason: str | None = None,
    ) -> None:
        self.tags.setdefault(
            (site, kind),
            GraphBreakTag(site, kind, fixable, evidence, fn_id, reason),
        )

    # -- worklist traversal ---------------------------------------------------

    def run(self, entries: list[EntryPoint]) -> list[GraphBreakTag]:
        visited_functions: set[int] = set()
        for entry in entries:
            taint = compute_taint(self.ir, entry, self.attr_table)
            for fn_id in traversal_set(self.ir, entry):
                if fn_id in visited_functions:
                    continue
                visited_functions.add(fn_id)
                self._walk_function(fn_id, taint)
        ordered = sorted(
            self.tags.values(), key=lambda t: self.tree.node(t.site).span.start
        )
        return ordered

    def _walk_function(self, fn_id: int, taint: TaintState) -> None:
        cfg = self.ir.cfgs[fn_id]
        seen: set[int] = set()
        work = list(cfg.successors(ENTRY))
        while work:
            nid = work.pop()
            if nid in seen or nid == EXIT:
                continue
            seen.add(nid)
            work.extend(cfg.successors(nid))
            self.scan_statement(fn_id, self.tree.node(nid), taint.tainted_at(nid))


def detect_breaks(
    ir: Uniir,
    entries: list[EntryPoint],
    attr_table: TorchAttrTable | None = None,
    dynamic_shape_ops: frozenset[str] | None = None,
) -> list[GraphBreakTag]:
    """Tag every break site reachable from the entry points, in source order."""
    assert ir.consistent, "analysis requires a healed IR"
    attr_table = attr_table or TorchAttrTable.default()
    dso = dynamic_shape_ops if dynamic_shape_ops is not None else default_dynamic_shape_ops()
    return _Detector(ir, attr_table, dso).run(entries)
