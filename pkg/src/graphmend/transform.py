"""Rewrite planning and application: branch predication and side-effect deferral.

Two rewrites exist. Predication replaces a tensor-dependent if/elif/else
whose arms are pure assignments with a predicate binding, unconditional
evaluation of every arm value, and one `torch.where` select per assigned
variable. Deferral replaces a top-level print/logger statement with a
tuple capture of its arguments and replays the call just before each
return the site dominates.

Both rewrites are planned against a consistent IR, validated by safety
gates (refusals are data, not errors), applied as span edits, and then
the IR is healed. Precision about what is *not* rewritten matters as much
as the rewrites: every refused site carries a machine-readable reason.
"""

from __future__ import annotations

import ast
import time
from dataclasses import dataclass, field

from .analysis import (
    BreakKind,
    EntryPoint,
    GraphBreakTag,
    TorchAttrTable,
    _attr_chain,
    _data_text,
    _Detector,
    _is_torch_module_symbol,
    _read_config_lines,
    compute_taint,
    default_dynamic_shape_ops,
    detect_breaks,
    find_entry_points,
)
from .frontend import AstNode, SourceModule, SpanEdit, Tree
from .uniir import EXIT, Uniir, VerificationError, dominates, heal


def default_allowlist() -> frozenset[str]:
    return frozenset(_read_config_lines(_data_text("pure_ops.cfg")))


def load_allowlist(path: str) -> frozenset[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return frozenset(_read_config_lines(fh.read()))


# refusal reasons (stable strings; consumed by reports and tests)
R_IMPURE = "impure branch"
R_UNSUPPORTED = "unsupported syntax"
R_NO_PRIOR = "no prior definition"
R_RETURN = "return in branch"
R_NESTED = "nested control flow"
R_NOT_STMT = "not expression statement"
R_EPILOGUE = "already at epilogue"

_ARITH_OPS = (
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.FloorDiv, ast.Mod, ast.Pow, ast.MatMult,
)
_CMP_OPS = (ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq)
_AUG_OP_TEXT = {
    ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/",
    ast.FloorDiv: "//", ast.Mod: "%", ast.Pow: "**", ast.MatMult: "@",
}


class _Refusal(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


# ---------------------------------------------------------------------------
# Rewrite records
# ---------------------------------------------------------------------------

@dataclass
class PredicationRewrite:
    if_node: int
    pred_name: str
    cond_src: str
    targets: list[str]
    then_exprs: dict[str, str]
    else_exprs: dict[str, str | None]  # None marks "prior value"
    insertion_point: int               # byte offset of the replaced statement
    replacement: str = ""
    covered_tags: list[int] = field(default_factory=list)
    proofs: dict[str, str] = field(default_factory=dict)
    function: int = -1

    def span(self) -> tuple[int, int]:
        return (self.insertion_point, self._end)

    _end: int = 0


@dataclass
class DeferralRewrite:
    call_node: int
    capture_name: str
    args_src: str
    callee_src: str
    epilogue_returns: list[int]
    epilogue_falloff: bool = False
    function: int = -1
    stmt_node: int = -1


@dataclass
class TransformPlan:
    file: str
    rewrites: list = field(default_factory=list)
    skipped: list[tuple[GraphBreakTag, str]] = field(default_factory=list)
    return_hoists: dict[int, str] = field(default_factory=dict)  # return node -> temp
    fixed_tags: set[int] = field(default_factory=set)            # tag site ids


# ---------------------------------------------------------------------------
# Fresh names
# ---------------------------------------------------------------------------

class _FreshNames:
    """Per-function `__gm_*` allocator; bumps past any name visible in scope."""

    def __init__(self, taken: set[str]):
        self.taken = set(taken)
        self.counters: dict[str, int] = {}

    def make(self, family: str, target: str | None = None) -> str:
        key = family if target is None else f"{family}_{target}"
        n = self.counters.get(key, 0)
        while True:
            name = (
                f"__gm_{family}_{n}" if target is None else f"__gm_{family}_{target}_{n}"
            )
            if name not in self.taken:
                break
            n += 1
        self.counters[key] = n + 1
        self.taken.add(name)
        return name


def _torch_alias(ir: Uniir) -> str:
    for sym in ir.symtab.symbols.values():
        if sym.import_origin == "torch":
            return sym.name
    return "torch"


# ---------------------------------------------------------------------------
# Predication validation (gate) and rendering
# ---------------------------------------------------------------------------

@dataclass
class _Chain:
    node: AstNode                  # the if statement
    then_items: list = field(default_factory=list)
    else_items: list = field(default_factory=list)
    # items are ("assign", target, value_expr, aug_op|None) or ("chain", _Chain)


class _Predicator:
    def __init__(
        self,
        ir: Uniir,
        fn_id: int,
        taint: frozenset[int],
        allowlist: frozenset[str],
    ):
        self.ir = ir
        self.tree = ir.tree
        self.fn_id = fn_id
        self.taint = taint
        self.allowlist = allowlist
        self.scope_id = ir.symtab.scope_of_owner[fn_id]
        self.torch_name = _torch_alias(ir)

    # -- gate ---------------------------------------------------------------

    def validate(self, if_py: ast.If) -> _Chain:
        chain = _Chain(self.tree.of(if_py))
        chain.then_items = self._validate_body(if_py.body)
        chain.else_items = self._validate_body(if_py.orelse)
        return chain

    def _validate_body(self, body: list[ast.stmt]) -> list:
        items: list = []
        for stmt in body:
            if isinstance(stmt, ast.Assign):
                if len(stmt.targets) != 1 or not isinstance(stmt.targets[0], ast.Name):
                    raise _Refusal(R_UNSUPPORTED)
                self._check_rhs(stmt.value)
                items.append(("assign", stmt.targets[0].id, stmt.value, None))
            elif isinstance(stmt, ast.AugAssign):
                if not isinstance(stmt.target, ast.Name):
                    raise _Refusal(R_UNSUPPORTED)
                if type(stmt.op) not in _AUG_OP_TEXT:
                    raise _Refusal(R_UNSUPPORTED)
                self._check_rhs(stmt.value)
                items.append(("assign", stmt.target.id, stmt.value, type(stmt.op)))
            elif isinstance(stmt, ast.AnnAssign):
                if stmt.value is None or not isinstance(stmt.target, ast.Name):
                    raise _Refusal(R_UNSUPPORTED)
                self._check_rhs(stmt.value)
                items.append(("assign", stmt.target.id, stmt.value, None))
            elif isinstance(stmt, ast.If):
                items.append(("chain", self.validate(stmt)))
            elif isinstance(stmt, ast.Pass):
                continue
            elif isinstance(stmt, ast.Expr):
                if isinstance(stmt.value, ast.Constant):
                    continue  # stray docstring
                raise _Refusal(R_IMPURE)
            elif isinstance(stmt, ast.Return):
                raise _Refusal(R_RETURN)
            elif isinstance(stmt, (ast.For, ast.While)):
                raise _Refusal(R_NESTED)
            else:
                raise _Refusal(R_UNSUPPORTED)
        return items

    def _check_rhs(self, expr: ast.expr) -> None:
        """Pure-value fragment: names, literals, arithmetic/compare, subscripts,
        torch-rooted calls, and allowlisted methods on tainted names."""
        if isinstance(expr, ast.Name):
            return
        if isinstance(expr, ast.Constant):
            return
        if isinstance(expr, ast.BinOp):
            if not isinstance(expr.op, _ARITH_OPS):
                raise _Refusal(R_UNSUPPORTED)
            self._check_rhs(expr.left)
            self._check_rhs(expr.right)
            return
        if isinstance(expr, ast.UnaryOp):
            if not isinstance(expr.op, (ast.USub, ast.UAdd)):
                raise _Refusal(R_UNSUPPORTED)
            self._check_rhs(expr.operand)
            return
        if isinstance(expr, ast.Compare):
            if not all(isinstance(op, _CMP_OPS) for op in expr.ops):
                raise _Refusal(R_UNSUPPORTED)
            self._check_rhs(expr.left)
            for c in expr.comparators:
                self._check_rhs(c)
            return
        if isinstance(expr, ast.Subscript):
            self._check_rhs(expr.value)
            sl = expr.slice
            if isinstance(sl, ast.Slice):
                for part in (sl.lower, sl.upper, sl.step):
                    if part is not None:
                        self._check_rhs(part)
            else:
                self._check_rhs(sl)
            return
        if isinstance(expr, ast.Call):
            self._check_call(expr)
            return
        raise _Refusal(R_UNSUPPORTED)

    def _check_call(self, call: ast.Call) -> None:
        func = call.func
        ok = False
        chain = _attr_chain(func)
        if chain is not None:
            base = self.ir.symtab.resolve(self.scope_id, chain[0])
            if _is_torch_module_symbol(base):
                ok = True  # torch.* functional call
            elif (
                isinstance(func, ast.Attribute)
                and isinstance(func.value, ast.Name)
                and func.attr in self.allowlist
                and base.id in self.taint
            ):
                ok = True  # allowlisted method on a tainted name
        if not ok:
            raise _Refusal(R_IMPURE)
        for a in call.args:
            if isinstance(a, ast.Starred):
                raise _Refusal(R_UNSUPPORTED)
            self._check_rhs(a)
        for kw in call.keywords:
            if kw.arg is None:
                raise _Refusal(R_UNSUPPORTED)
            self._check_rhs(kw.value)

    # -- target bookkeeping ---------------------------------------------------

    def chain_targets(self, chain: _Chain) -> list[str]:
        """Every name assigned anywhere in the construct, first-write order."""
        seen: list[str] = []

        def walk(items: list) -> None:
            for item in items:
                if item[0] == "assign":
                    if item[1] not in seen:
                        seen.append(item[1])
                else:
                    walk(item[1].then_items)
                    walk(item[1].else_items)

        walk(chain.then_items)
        walk(chain.else_items)
        return seen

    def _definitely_assigns(self, items: list, target: str) -> bool:
        for item in items:
            if item[0] == "assign" and item[1] == target and item[3] is None:
                return True
            if item[0] == "chain":
                sub = item[1]
                if self._definitely_assigns(
                    sub.then_items, target
                ) and self._definitely_assigns(sub.else_items, target):
                    return True
        return False

    def prior_def_proof(self, target: str, if_node: AstNode) -> str | None:
        """A definition of `target` whose statement dominates the if."""
        sym = self.ir.symtab.resolve(self.scope_id, target)
        cfg = self.ir.cfgs[self.fn_id]
        fn_node = self.tree.node(self.fn_id)
        for def_id in sym.defs:
            if def_id == self.fn_id:
                return f"param@{def_id}"
            def_node = self.tree.node(def_id)
            stmt = _enclosing_statement(self.tree, def_node, cfg)
            if stmt is None:
                if def_node.kind == "arg" and def_node.parent == fn_node.id:
                    return f"param@{def_id}"
                continue
            if stmt.id == if_node.id:
                continue
            if dominates(cfg, stmt.id, if_node.id):
                return f"def@{def_id}"
        return None

    def check_targets(self, chain: _Chain) -> dict[str, str]:
        proofs: dict[str, str] = {}
        for target in self.chain_targets(chain):
            both = self._definitely_assigns(
                chain.then_items, target
            ) and self._definitely_assigns(chain.else_items, target)
            if both:
                proofs[target] = "both-arms"
                continue
            proof = self.prior_def_proof(target, chain.node)
            if proof is None:
                raise _Refusal(R_NO_PRIOR)
            proofs[target] = proof
        return proofs

    # -- rendering --------------------------------------------------------------

    def render(self, chain: _Chain, fresh: _FreshNames) -> tuple[list[str], str, dict, dict]:
        """Replacement statements for the whole construct.

        Returns (lines, pred_name, then_exprs, else_exprs) for the top level.
        """
        lines: list[str] = []
        env: dict[str, str] = {}
        pred, env_then, env_else = self._render_level(chain, fresh, env, lines)
        then_exprs: dict[str, str] = {}
        else_exprs: dict[str, str | None] = {}
        for target in self.chain_targets(chain):
            thenv = env_then.get(target, target)
            elsev = env_else.get(target)
            then_exprs[target] = thenv
            else_exprs[target] = elsev
            lines.append(
                f"{target} = {self.torch_name}.where({pred}, {thenv}, {elsev or target})"
            )
        return lines, pred, then_exprs, else_exprs

    def _render_level(
        self,
        chain: _Chain,
        fresh: _FreshNames,
        env: dict[str, str],
        lines: list[str],
    ) -> tuple[str, dict[str, str], dict[str, str]]:
        pred = fresh.make("pred")
        cond_src = self._subst(chain.node.py.test, env)
        lines.append(f"{pred} = {cond_src}")
        env_then = dict(env)
        self._render_arm(chain.then_items, "then", fresh, env_then, lines)
        env_else = dict(env)
        self._render_arm(chain.else_items, "else", fresh, env_else, lines)
        return pred, env_then, env_else

    def _render_arm(
        self,
        items: list,
        family: str,
        fresh: _FreshNames,
        env: dict[str, str],
        lines: list[str],
    ) -> None:
        for item in items:
            if item[0] == "assign":
                _, target, value, aug = item
                rhs = self._subst(value, env)
                if aug is not None:
                    cur = env.get(target, target)
                    rhs = f"{cur} {_AUG_OP_TEXT[aug]} ({rhs})"
                temp = fresh.make(family, target)
                lines.append(f"{temp} = {rhs}")
                env[target] = temp
            else:
                sub = item[1]
                pred, env_then, env_else = self._render_level(sub, fresh, env, lines)
                for target in self.chain_targets(sub):
                    thenv = env_then.get(target, env.get(target, target))
                    elsev = env_else.get(target, env.get(target, target))
                    temp = fresh.make(family, target)
                    lines.append(
                        f"{temp} = {self.torch_name}.where({pred}, {thenv}, {elsev})"
                    )
                    env[target] = temp

    def _subst(self, expr: ast.expr, env: dict[str, str]) -> str:
        """Expression source with arm-local names replaced by their temps."""
        node = self.tree.of(expr)
        base = node.span.start
        src = self.tree.snippet(node)
        if not env:
            return src
        edits: list[tuple[int, int, str]] = []
        for sub in self.tree.walk(node):
            if (
                sub.kind == "name"
                and isinstance(sub.py.ctx, ast.Load)
                and sub.py.id in env
            ):
                edits.append((sub.span.start - base, sub.span.end - base, env[sub.py.id]))
        blob = src.encode("utf-8")
        out = bytearray(blob)
        for start, end, text in sorted(edits, reverse=True):
            out[start:end] = text.encode("utf-8")
        return bytes(out).decode("utf-8")


def _enclosing_statement(tree: Tree, node: AstNode, cfg) -> AstNode | None:
    cur: AstNode | None = node
    while cur is not None:
        if cur.id in cfg.succs:
            return cur
        cur = tree.parent_of(cur)
    return None


# ---------------------------------------------------------------------------
# Deferral gate helpers
# ---------------------------------------------------------------------------

def _benign_tail_stmt(ir: Uniir, fn_id: int, node: AstNode) -> bool:
    """Statements that carry no compilable tensor work: replayable prints and
    bare returns. Used to recognize sites already at the graph epilogue."""
    py = node.py
    if isinstance(py, ast.Return):
        return py.value is None or isinstance(py.value, (ast.Name, ast.Constant))
    if isinstance(py, ast.Pass):
        return True
    if isinstance(py, ast.Expr) and isinstance(py.value, ast.Call):
        call = py.value
        args_ok = all(
            isinstance(a, (ast.Name, ast.Constant))
            or (isinstance(a, ast.Starred) and isinstance(a.value, ast.Name))
            for a in call.args
        ) and not call.keywords
        if not args_ok:
            return False
        det = _Detector(ir, TorchAttrTable.default(), frozenset())
        return det.logger_callee(fn_id, call) is not None
    return False


def epilogue_positioned(ir: Uniir, fn_id: int, stmt_id: int) -> bool:
    """True when every path from the statement to EXIT is free of tensor work."""
    cfg = ir.cfgs.get(fn_id)
    if cfg is None or stmt_id not in cfg.succs:
        return False
    seen: set[int] = set()
    work = list(cfg.successors(stmt_id))
    while work:
        nid = work.pop()
        if nid in seen or nid == EXIT:
            continue
        seen.add(nid)
        if not _benign_tail_stmt(ir, fn_id, ir.tree.node(nid)):
            return False
        work.extend(cfg.successors(nid))
    return True


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------

def _taint_map(ir: Uniir, entries: list[EntryPoint], attr_table: TorchAttrTable):
    """Entry taint facts keyed by CFG node; first traversal of a function wins."""
    facts: dict[int, frozenset[int]] = {}
    for entry in entries:
        state = compute_taint(ir, entry, attr_table)
        for nid, f in state.facts.items():
            facts.setdefault(nid, f)
    return facts


def plan_fixes(
    ir: Uniir,
    tags: list[GraphBreakTag],
    allowlist: frozenset[str] | None = None,
    attr_table: TorchAttrTable | None = None,
) -> TransformPlan:
    """Turn fixable tags into validated rewrites; everything else is skipped
    with a reason. Rewrites end up pairwise non-overlapping, nested sites
    folded into their outermost chain."""
    assert ir.consistent, "planning requires a healed IR"
    allowlist = allowlist if allowlist is not None else default_allowlist()
    attr_table = attr_table or TorchAttrTable.default()
    plan = TransformPlan(file=ir.source.path)
    entries = find_entry_points(ir)
    taint_facts = _taint_map(ir, entries, attr_table)

    fresh_by_fn: dict[int, _FreshNames] = {}

    def fresh_for(fn_id: int) -> _FreshNames:
        if fn_id not in fresh_by_fn:
            scope = ir.symtab.scope_of_owner[fn_id]
            fresh_by_fn[fn_id] = _FreshNames(ir.symtab.names_visible_from(scope))
        return fresh_by_fn[fn_id]

    # --- predication: source order puts enclosing ifs first, so a refused
    # outer chain still lets its inner tagged ifs be planned on their own
    if_tags = [t for t in tags if t.kind == BreakKind.DYN_CTRL_FLOW and t.fixable]
    if_by_site = {t.site: t for t in if_tags}
    planned_spans: list[tuple[int, int]] = []
    for tag in sorted(if_tags, key=lambda t: ir.tree.node(t.site).span.start):
        node = ir.tree.node(tag.site)
        if any(lo <= node.span.start and node.span.end <= hi for lo, hi in planned_spans):
            continue  # folded into an enclosing rewrite
        pred = _Predicator(
            ir, tag.function, taint_facts.get(tag.site, frozenset()), allowlist
        )
        try:
            chain = pred.validate(node.py)
            proofs = pred.check_targets(chain)
        except _Refusal as refusal:
            plan.skipped.append((tag, refusal.reason))
            continue
        fresh = fresh_for(tag.function)
        lines, pred_name, then_exprs, else_exprs = pred.render(chain, fresh)
        indent = ir.source.line_indent(node.span.start)
        rewrite = PredicationRewrite(
            if_node=node.id,
            pred_name=pred_name,
            cond_src=ir.tree.snippet(ir.tree.of(node.py.test)),
            targets=pred.chain_targets(chain),
            then_exprs=then_exprs,
            else_exprs=else_exprs,
            insertion_point=node.span.start,
            replacement=("\n" + indent).join(lines),
            proofs=proofs,
            function=tag.function,
        )
        rewrite._end = node.span.end
        covered = [n.id for n in ir.tree.walk(node) if n.id in if_by_site]
        rewrite.covered_tags = covered
        plan.fixed_tags.update(covered)
        plan.rewrites.append(rewrite)
        planned_spans.append((node.span.start, node.span.end))

    # --- deferral
    logger_tags = [t for t in tags if t.kind == BreakKind.LOGGER_PRINT and t.fixable]
    for tag in sorted(logger_tags, key=lambda t: ir.tree.node(t.site).span.start):
        call_node = ir.tree.node(tag.site)
        cfg = ir.cfgs.get(tag.function)
        stmt = _enclosing_statement(ir.tree, call_node, cfg) if cfg else None
        is_expr_stmt = (
            stmt is not None
            and isinstance(stmt.py, ast.Expr)
            and stmt.py.value is call_node.py
        )
        if not is_expr_stmt:
            plan.skipped.append((tag, R_NOT_STMT))
            continue
        if stmt.parent != tag.function:
            plan.skipped.append((tag, R_NESTED))
            continue
        if epilogue_positioned(ir, tag.function, stmt.id):
            plan.skipped.append((tag, R_EPILOGUE))
            continue
        call = call_node.py
        if call.keywords:
            plan.skipped.append((tag, R_UNSUPPORTED))
            continue
        if any(isinstance(a, ast.GeneratorExp) for a in call.args):
            plan.skipped.append((tag, R_UNSUPPORTED))
            continue

        returns = [
            rid
            for rid in cfg.statement_nodes()
            if isinstance(ir.tree.node(rid).py, ast.Return)
            and dominates(cfg, stmt.id, rid)
        ]
        falloff = any(
            e.kind != "return" and _reachable(cfg, stmt.id, e.src)
            for e in cfg.preds[EXIT]
        )
        fresh = fresh_for(tag.function)
        capture = fresh.make("defer")
        args_src = _args_source(ir.source, call)
        rewrite = DeferralRewrite(
            call_node=call_node.id,
            capture_name=capture,
            args_src=args_src,
            callee_src=ir.tree.snippet(ir.tree.of(call.func)),
            epilogue_returns=sorted(
                returns, key=lambda r: ir.tree.node(r).span.start
            ),
            epilogue_falloff=falloff,
            function=tag.function,
            stmt_node=stmt.id,
        )
        for rid in rewrite.epilogue_returns:
            ret_py = ir.tree.node(rid).py
            needs_hoist = ret_py.value is not None and not isinstance(
                ret_py.value, (ast.Name, ast.Constant)
            )
            if needs_hoist and rid not in plan.return_hoists:
                plan.return_hoists[rid] = fresh.make("ret")
        plan.rewrites.append(rewrite)
        plan.fixed_tags.add(tag.site)

    return plan


def _reachable(cfg, src: int, dst: int) -> bool:
    if src == dst:
        return True
    seen = set()
    work = [src]
    while work:
        n = work.pop()
        if n in seen:
            continue
        seen.add(n)
        for s in cfg.successors(n):
            if s == dst:
                return True
            work.append(s)
    return False


def _args_source(source: SourceModule, call: ast.Call) -> str:
    if not call.args:
        return ""
    first = call.args[0]
    last = call.args[-1]
    lo = source.offset(first.lineno, first.col_offset)
    hi = source.offset(last.end_lineno, last.end_col_offset)
    return source.slice(lo, hi)


# ---------------------------------------------------------------------------
# Application
# ---------------------------------------------------------------------------

class EpilogueLedger:
    """Collects deferred replays so several rewrites can share return sites."""

    def __init__(self, plan: TransformPlan):
        self.plan = plan
        self.by_fn: dict[int, list[DeferralRewrite]] = {}

    def add(self, rewrite: DeferralRewrite) -> None:
        self.by_fn.setdefault(rewrite.function, []).append(rewrite)

    def finalize(self, ir: Uniir) -> list[SpanEdit]:
        edits: list[SpanEdit] = []
        for fn_id, rewrites in self.by_fn.items():
            rewrites = sorted(
                rewrites, key=lambda r: ir.tree.node(r.call_node).span.start
            )
            sites: dict[int, list[DeferralRewrite]] = {}
            falloff_replays: list[DeferralRewrite] = []
            for r in rewrites:
                for rid in r.epilogue_returns:
                    sites.setdefault(rid, []).append(r)
                if r.epilogue_falloff:
                    falloff_replays.append(r)
            for rid, replayers in sites.items():
                ret = ir.tree.node(rid)
                indent = ir.source.line_indent(ret.span.start)
                lines: list[str] = []
                ret_py = ret.py
                hoist = self.plan.return_hoists.get(rid)
                if hoist is not None:
                    value_src = ir.tree.snippet(ir.tree.of(ret_py.value))
                    lines.append(f"{hoist} = {value_src}")
                for r in replayers:
                    lines.append(f"{r.callee_src}(*{r.capture_name})")
                if hoist is not None:
                    lines.append(f"return {hoist}")
                elif ret_py.value is not None:
                    lines.append(f"return {ir.tree.snippet(ir.tree.of(ret_py.value))}")
                else:
                    lines.append("return")
                edits.append(
                    SpanEdit(
                        ret.span.start,
                        ret.span.end,
                        ("\n" + indent).join(lines),
                    )
                )
            if falloff_replays:
                fn = ir.tree.node(fn_id)
                last = ir.tree.of(fn.py.body[-1])
                body_indent = ir.source.line_indent(
                    ir.tree.of(fn.py.body[0]).span.start
                )
                pos = ir.source.end_of_line(last.span.end)
                text = "".join(
                    f"\n{body_indent}{r.callee_src}(*{r.capture_name})"
                    for r in falloff_replays
                )
                edits.append(SpanEdit(pos, pos, text))
        return edits


def apply_predication(ir: Uniir, rewrite: PredicationRewrite) -> Uniir:
    """Splice the rendered predication over the if statement; IR goes stale."""
    node = ir.tree.node(rewrite.if_node)
    ir.mark_dirty([SpanEdit(node.span.start, node.span.end, rewrite.replacement)])
    return ir


def apply_deferral(
    ir: Uniir, rewrite: DeferralRewrite, ledger: EpilogueLedger | None = None
) -> Uniir:
    """Replace the call with a tuple capture and register epilogue replays."""
    stmt = ir.tree.node(rewrite.stmt_node)
    capture_src = (
        f"{rewrite.capture_name} = ({rewrite.args_src},)"
        if rewrite.args_src
        else f"{rewrite.capture_name} = ()"
    )
    ir.mark_dirty([SpanEdit(stmt.span.start, stmt.span.end, capture_src)])
    if ledger is None:
        plan = TransformPlan(file=ir.source.path)
        scope = ir.symtab.scope_of_owner[rewrite.function]
        fresh = _FreshNames(ir.symtab.names_visible_from(scope))
        fresh.taken.add(rewrite.capture_name)
        for rid in rewrite.epilogue_returns:
            ret_py = ir.tree.node(rid).py
            if ret_py.value is not None and not isinstance(
                ret_py.value, (ast.Name, ast.Constant)
            ):
                plan.return_hoists[rid] = fresh.make("ret")
        ledger = EpilogueLedger(plan)
        ledger.add(rewrite)
        ir.mark_dirty(ledger.finalize(ir))
    else:
        ledger.add(rewrite)
    return ir


# ---------------------------------------------------------------------------
# End-to-end pipeline for one file
# ---------------------------------------------------------------------------

@dataclass
class SiteOutcome:
    line: int
    col: int
    kind: str
    status: str            # fixed | skipped | unfixable
    reason: str | None
    runtime_effective: bool  # expected to still split the graph at runtime


@dataclass
class FileOutcome:
    path: str
    status: str            # ok | skipped | aborted | error
    entry_points: int
    sites: list[SiteOutcome] = field(default_factory=list)
    edit_count: int = 0
    detail: str = ""
    notes: list[str] = field(default_factory=list)
    phase_s: dict[str, float] = field(default_factory=dict)

    @property
    def found(self) -> int:
        return len(self.sites)

    @property
    def fixed(self) -> int:
        return sum(1 for s in self.sites if s.status == "fixed")

    @property
    def skipped_count(self) -> int:
        return sum(1 for s in self.sites if s.status == "skipped")

    @property
    def unfixable(self) -> int:
        return sum(1 for s in self.sites if s.status == "unfixable")

    @property
    def predicted_residual(self) -> int:
        return sum(
            1 for s in self.sites if s.status != "fixed" and s.runtime_effective
        )


def fix_file(
    source: SourceModule,
    attr_table: TorchAttrTable | None = None,
    allowlist: frozenset[str] | None = None,
    dynamic_shape_ops: frozenset[str] | None = None,
) -> tuple[str, FileOutcome]:
    """parse -> build -> detect -> plan -> apply -> heal -> emit, for one file.

    On verification failure the returned text equals the input and the
    outcome says "aborted"; parse errors propagate to the caller.
    """
    attr_table = attr_table or TorchAttrTable.default()
    allowlist = allowlist if allowlist is not None else default_allowlist()
    dso = dynamic_shape_ops if dynamic_shape_ops is not None else default_dynamic_shape_ops()

    phase_s: dict[str, float] = {}
    t0 = time.perf_counter()
    ir = Uniir.build(source)
    phase_s["parse"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    entries = find_entry_points(ir)
    if not entries:
        phase_s["analyze"] = time.perf_counter() - t0
        return source.text, FileOutcome(
            source.path,
            "skipped",
            0,
            detail="no torch.compile entry point",
            phase_s=phase_s,
        )
    tags = detect_breaks(ir, entries, attr_table, dso)
    phase_s["analyze"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    plan = plan_fixes(ir, tags, allowlist, attr_table)
    notes = _depth_notes(ir, entries)

    skip_reasons = {id(tag): reason for tag, reason in plan.skipped}
    sites: list[SiteOutcome] = []
    for tag in tags:
        line, col = tag.line_col(ir.tree)
        stmt = _enclosing_statement(
            ir.tree, ir.tree.node(tag.site), ir.cfgs.get(tag.function)
        )
        at_epilogue = stmt is not None and epilogue_positioned(
            ir, tag.function, stmt.id
        )
        if tag.site in plan.fixed_tags:
            sites.append(SiteOutcome(line, col, tag.kind.value, "fixed", None, False))
        elif id(tag) in skip_reasons:
            reason = skip_reasons[id(tag)]
            sites.append(
                SiteOutcome(
                    line,
                    col,
                    tag.kind.value,
                    "skipped",
                    reason,
                    reason != R_EPILOGUE and not at_epilogue,
                )
            )
        elif not tag.fixable:
            sites.append(
                SiteOutcome(
                    line, col, tag.kind.value, "unfixable", tag.reason, not at_epilogue
                )
            )
        else:  # fixable but no rewrite and no refusal: treat as skipped
            sites.append(
                SiteOutcome(line, col, tag.kind.value, "skipped", "not planned", True)
            )

    outcome = FileOutcome(
        source.path, "ok", len(entries), sites, notes=notes, phase_s=phase_s
    )
    if not plan.rewrites:
        phase_s["transform"] = time.perf_counter() - t0
        phase_s["emit"] = 0.0
        return source.text, outcome

    ledger = EpilogueLedger(plan)
    predications = [r for r in plan.rewrites if isinstance(r, PredicationRewrite)]
    deferrals = [r for r in plan.rewrites if isinstance(r, DeferralRewrite)]
    for r in predications:
        apply_predication(ir, r)
    for r in deferrals:
        apply_deferral(ir, r, ledger)
    ir.mark_dirty(ledger.finalize(ir))
    outcome.edit_count = len(ir.pending_edits)
    phase_s["transform"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        heal(ir)
    except VerificationError as exc:
        phase_s["emit"] = time.perf_counter() - t0
        aborted = FileOutcome(
            source.path,
            "aborted",
            len(entries),
            [
                SiteOutcome(s.line, s.col, s.kind, "skipped", "aborted", True)
                if s.status == "fixed"
                else s
                for s in sites
            ],
            0,
            detail=str(exc),
            notes=notes,
            phase_s=phase_s,
        )
        return source.text, aborted
    phase_s["emit"] = time.perf_counter() - t0
    return ir.source.text, outcome


def _depth_notes(ir: Uniir, entries: list[EntryPoint]) -> list[str]:
    """Call chains deeper than one hop are out of analysis scope; say so."""
    from .analysis import _callable_functions, traversal_set

    traversed: set[int] = set()
    for entry in entries:
        traversed.update(traversal_set(ir, entry))
    notes: list[str] = []
    for fn_id in sorted(traversed):
        for deep in _callable_functions(ir, fn_id):
            if deep not in traversed and deep in ir.cfgs:
                caller = ir.tree.node(fn_id).py.name
                callee = ir.tree.node(deep).py.name
                notes.append(
                    f"call chain beyond one hop not analyzed: {caller} -> {callee}"
                )
    return sorted(set(notes))
