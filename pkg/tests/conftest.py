"""Shared fixtures and the independent oracles used across the suite.

Oracles here must stay independent of the implementation paths they check:
dominance is re-derived by enumerating simple paths, taint by a transitive
closure over def-use pairs that ignores control flow, and rewritten code is
judged by executing both versions.
"""

from __future__ import annotations

import ast
import contextlib
import importlib.util
import io
import itertools
import re
import sys
from pathlib import Path

import pytest

from graphmend import SourceModule, Uniir
from graphmend.uniir import ENTRY, Cfg

ROOT = Path(__file__).resolve().parent.parent
UNITS = ROOT / "tests" / "fixtures" / "units"
GOLDEN = ROOT / "tests" / "fixtures" / "golden"
CORPUS = ROOT / "corpus"

CORPUS_CASES = [
    "biogpt_like",
    "blenderbot_like",
    "flan_t5_like",
    "longformer_like",
    "moe_minicpm_like",
    "pegasus_like",
    "phi4_like",
    "qwen_audio_like",
]


@pytest.fixture
def unit():
    def load(name: str) -> SourceModule:
        return SourceModule.load(str(UNITS / name))

    return load


@pytest.fixture
def build_unit(unit):
    def build(name: str) -> Uniir:
        return Uniir.build(unit(name))

    return build


def corpus_sources() -> list[SourceModule]:
    return [SourceModule.load(str(CORPUS / c / "original.py")) for c in CORPUS_CASES]


def unit_sources() -> list[SourceModule]:
    return [SourceModule.load(str(p)) for p in sorted(UNITS.glob("*.py"))]


# ---------------------------------------------------------------------------
# Oracle: all simple ENTRY->target paths (graphs small enough to enumerate)
# ---------------------------------------------------------------------------

def enumerate_simple_paths(cfg: Cfg, target: int) -> list[list[int]]:
    paths: list[list[int]] = []

    def dfs(node: int, trail: list[int]) -> None:
        if node == target:
            paths.append(trail + [node])
            return
        for succ in cfg.successors(node):
            if succ not in trail and succ != node:
                dfs(succ, trail + [node])

    dfs(ENTRY, [])
    return paths


def brute_force_dominates(cfg: Cfg, a: int, b: int) -> bool:
    paths = enumerate_simple_paths(cfg, b)
    if not paths:
        return True
    return all(a in p for p in paths)


# ---------------------------------------------------------------------------
# Oracle: naive taint closure over def-use pairs, ignoring statement order
# ---------------------------------------------------------------------------

def naive_taint_closure(fn: ast.FunctionDef, torch_names: set[str] = frozenset({"torch"})) -> set[str]:
    """Transitive closure: params seed; an assignment taints its target when
    the RHS mentions a tainted name or reaches through a torch-rooted or
    value-reading attribute. No kills, no CFG."""
    tainted = {
        a.arg
        for a in [*fn.args.posonlyargs, *fn.args.args, *fn.args.kwonlyargs]
        if a.arg != "self"
    }
    static_attrs = {"shape", "size", "ndim", "dtype", "device", "is_cuda"}

    def rooted_at_torch(expr: ast.expr) -> bool:
        cur = expr
        while isinstance(cur, ast.Attribute):
            cur = cur.value
        return isinstance(cur, ast.Name) and cur.id in torch_names

    def rhs_hot(expr: ast.expr) -> bool:
        for sub in ast.walk(expr):
            if isinstance(sub, ast.Name) and sub.id in tainted:
                owner_static = False
                # the only shield: a bare static-attribute read
                for outer in ast.walk(expr):
                    if (
                        isinstance(outer, ast.Attribute)
                        and outer.attr in static_attrs
                        and sub in list(ast.walk(outer.value))
                    ):
                        owner_static = True
                if not owner_static:
                    return True
            if isinstance(sub, ast.Attribute) and rooted_at_torch(sub):
                return True
        return False

    changed = True
    while changed:
        changed = False
        for stmt in ast.walk(fn):
            if isinstance(stmt, ast.Assign) and isinstance(stmt.targets[0], ast.Name):
                name = stmt.targets[0].id
                if name not in tainted and rhs_hot(stmt.value):
                    tainted.add(name)
                    changed = True
    return tainted


# ---------------------------------------------------------------------------
# Oracle helpers: name-normalized comparison and execution of rewrites
# ---------------------------------------------------------------------------

_FRESH = re.compile(r"__gm_[A-Za-z0-9_]+")


def normalize_fresh_names(text: str) -> str:
    mapping: dict[str, str] = {}

    def repl(m: re.Match) -> str:
        return mapping.setdefault(m.group(0), f"GM{len(mapping)}")

    return _FRESH.sub(repl, text)


_module_counter = itertools.count()


def exec_source(text: str, tag: str = "fixture"):
    """Import source text as a throwaway module; returns the module object."""
    name = f"_gm_exec_{tag}_{next(_module_counter)}"
    spec = importlib.util.spec_from_loader(name, loader=None)
    module = importlib.util.module_from_spec(spec)
    sys.modules[name] = module
    exec(compile(text, f"<{name}>", "exec"), module.__dict__)
    return module


def run_with_stdout(fn, *args):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        result = fn(*args)
    return result, buf.getvalue()
