"""Rewrite gates, golden transforms, and execution-based equivalence oracles.

The equivalence oracle runs the original and rewritten code on tensor
inputs chosen to exercise each original branch, then compares returned
tensors elementwise and captured stdout verbatim.
"""

from __future__ import annotations

import pytest
import torch

from graphmend import (
    BreakKind,
    SourceModule,
    Uniir,
    apply_deferral,
    apply_predication,
    detect_breaks,
    find_entry_points,
    fix_file,
    heal,
    plan_fixes,
)
from graphmend.transform import (
    DeferralRewrite,
    PredicationRewrite,
    R_EPILOGUE,
    R_IMPURE,
    R_NESTED,
    R_NO_PRIOR,
    R_RETURN,
    R_UNSUPPORTED,
    epilogue_positioned,
)
from conftest import GOLDEN, exec_source, normalize_fresh_names, run_with_stdout


def build(text: str) -> Uniir:
    return Uniir.build(SourceModule.from_text("mem.py", text))


def plan_for(ir: Uniir):
    entries = find_entry_points(ir)
    tags = detect_breaks(ir, entries)
    return tags, plan_fixes(ir, tags)


def fixed_text(unit, name: str) -> str:
    new_text, outcome = fix_file(unit(name))
    return new_text


def assert_equivalent(original: str, transformed: str, fn: str, arg_sets) -> None:
    mod_a = exec_source(original, "orig")
    mod_b = exec_source(transformed, "fixed")
    for args in arg_sets:
        out_a, text_a = run_with_stdout(getattr(mod_a, fn), *map(torch.clone, args))
        out_b, text_b = run_with_stdout(getattr(mod_b, fn), *map(torch.clone, args))
        assert text_a == text_b
        if isinstance(out_a, torch.Tensor):
            if out_a.dtype.is_floating_point:
                torch.testing.assert_close(out_b, out_a, rtol=1e-6, atol=1e-7)
            else:
                assert torch.equal(out_b, out_a)
        else:
            assert out_a == out_b


# ---------------------------------------------------------------------------
# plan_fixes gates
# ---------------------------------------------------------------------------

def test_tensor_branch_plan_shape(build_unit):
    ir = build_unit("tensor_branch.py")
    tags, plan = plan_for(ir)
    assert len(plan.rewrites) == 1 and not plan.skipped
    rw = plan.rewrites[0]
    assert isinstance(rw, PredicationRewrite)
    assert rw.targets == ["z"]
    assert rw.cond_src == "x.sum() > 10"
    assert rw.then_exprs["z"].endswith("_then_z_0")
    assert rw.proofs == {"z": "both-arms"}
    assert rw.pred_name.startswith("__gm_pred_")


def test_print_mid_plan_shape(build_unit):
    ir = build_unit("debug_print_mid.py")
    tags, plan = plan_for(ir)
    assert len(plan.rewrites) == 1
    rw = plan.rewrites[0]
    assert isinstance(rw, DeferralRewrite)
    assert rw.args_src == '"tensor:", x'
    assert rw.callee_src == "print"
    assert len(rw.epilogue_returns) == 1 and not rw.epilogue_falloff


def test_impure_branch_skipped(build_unit):
    ir = build_unit("impure_branch.py")
    tags, plan = plan_for(ir)
    assert plan.rewrites == []
    assert [(t.kind, reason) for t, reason in plan.skipped] == [
        (BreakKind.DYN_CTRL_FLOW, R_IMPURE)
    ]


def test_return_in_branch_skipped():
    ir = build(
        "import torch\n\n@torch.compile\ndef f(x):\n"
        "    if x.sum() > 0:\n        return x + 1\n    return x - 1\n"
    )
    tags, plan = plan_for(ir)
    assert [reason for _, reason in plan.skipped] == [R_RETURN]


def test_no_prior_definition_skipped():
    ir = build(
        "import torch\n\n@torch.compile\ndef f(x):\n"
        "    if x.sum() > 0:\n        z = x + 1\n    return x\n"
    )
    tags, plan = plan_for(ir)
    assert [reason for _, reason in plan.skipped] == [R_NO_PRIOR]


def test_unsupported_region_skipped(build_unit):
    ir = build_unit("unsupported_region.py")
    tags, plan = plan_for(ir)
    assert [reason for _, reason in plan.skipped] == [R_UNSUPPORTED]


def test_tuple_target_skipped():
    ir = build(
        "import torch\n\n@torch.compile\ndef f(x):\n    a = x\n    b = x\n"
        "    if x.sum() > 0:\n        a, b = x + 1, x - 1\n    return a + b\n"
    )
    tags, plan = plan_for(ir)
    assert [reason for _, reason in plan.skipped] == [R_UNSUPPORTED]


def test_print_in_branch_both_refusals(build_unit):
    ir = build_unit("print_in_branch.py")
    tags, plan = plan_for(ir)
    reasons = {reason for _, reason in plan.skipped}
    assert reasons == {R_IMPURE, R_NESTED}


def test_print_kwargs_skipped():
    ir = build(
        "import torch\n\n@torch.compile\ndef f(x):\n    y = x * 2\n"
        "    print('v', x, sep=', ')\n    return y + 1\n"
    )
    tags, plan = plan_for(ir)
    assert [reason for _, reason in plan.skipped] == [R_UNSUPPORTED]


def test_trailing_print_already_at_epilogue():
    ir = build(
        "import torch\n\n@torch.compile\ndef f(x):\n    y = x * 2\n"
        "    print('done')\n    return y\n"
    )
    tags, plan = plan_for(ir)
    assert [reason for _, reason in plan.skipped] == [R_EPILOGUE]
    fn = find_entry_points(ir)[0].function
    stmt = [n for n in ir.cfgs[fn].statement_nodes()][1]
    assert epilogue_positioned(ir, fn, stmt)


def test_allowlisted_method_in_branch_ok():
    ir = build(
        "import torch\n\n@torch.compile\ndef f(x):\n"
        "    if x.sum() > 0:\n        z = x.relu()\n    else:\n        z = x.abs()\n"
        "    return z\n"
    )
    tags, plan = plan_for(ir)
    assert len(plan.rewrites) == 1 and not plan.skipped


def test_non_allowlisted_method_refused():
    ir = build(
        "import torch\n\n@torch.compile\ndef f(x):\n"
        "    if x.sum() > 0:\n        z = x.pin_memory()\n    else:\n        z = x.abs()\n"
        "    return z\n"
    )
    tags, plan = plan_for(ir)
    assert [reason for _, reason in plan.skipped] == [R_IMPURE]


def test_every_fixable_tag_fixed_or_reasoned(build_unit):
    for name in (
        "tensor_branch.py",
        "debug_print_mid.py",
        "mixed_breaks.py",
        "impure_branch.py",
        "multi_return_defer.py",
        "elif_chain.py",
    ):
        ir = build_unit(name)
        tags, plan = plan_for(ir)
        fixable = {t.site for t in tags if t.fixable}
        accounted = set(plan.fixed_tags) | {t.site for t, _ in plan.skipped}
        assert fixable <= accounted, name


def test_fresh_names_do_not_collide():
    ir = build(
        "import torch\n\n__gm_pred_0 = 1\n\n@torch.compile\ndef f(x):\n"
        "    __gm_then_z_0 = 4\n"
        "    if x.sum() > 0:\n        z = x + 1\n    else:\n        z = x - 1\n"
        "    return z + __gm_then_z_0\n"
    )
    tags, plan = plan_for(ir)
    rw = plan.rewrites[0]
    assert rw.pred_name == "__gm_pred_1"
    assert "__gm_then_z_1" in rw.replacement
    text, _ = fix_file(SourceModule.from_text("mem.py", ir.source.text))
    exec_source(text, "collision")  # still imports cleanly


# ---------------------------------------------------------------------------
# Golden transforms (name-normalized comparison)
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "fixture,golden",
    [
        ("tensor_branch.py", "tensor_branch_fixed.py"),
        ("debug_print_mid.py", "debug_print_mid_fixed.py"),
        ("elif_chain.py", "elif_chain_fixed.py"),
        ("if_no_else.py", "if_no_else_fixed.py"),
        ("multi_return_defer.py", "multi_return_defer_fixed.py"),
    ],
)
def test_golden_transform(unit, fixture, golden):
    got = normalize_fresh_names(fixed_text(unit, fixture))
    want = normalize_fresh_names((GOLDEN / golden).read_text())
    assert got == want


def test_tensor_branch_structure(unit):
    text = fixed_text(unit, "tensor_branch.py")
    assert "if " not in text.replace("@", "")
    assert text.count("torch.where(") == 1
    body = [l.strip() for l in text.splitlines() if l.startswith("    ")]
    assert body[2].startswith("__gm_pred_0 = ")
    assert body[3].startswith("__gm_then_z_0 = ")
    assert body[4].startswith("__gm_else_z_0 = ")
    assert body[5].startswith("z = torch.where(")


# ---------------------------------------------------------------------------
# apply_* in isolation
# ---------------------------------------------------------------------------

def test_apply_predication_then_heal_is_branch_free(build_unit):
    ir = build_unit("tensor_branch.py")
    tags, plan = plan_for(ir)
    apply_predication(ir, plan.rewrites[0])
    assert not ir.consistent
    heal(ir)
    assert ir.consistent
    cfg = next(iter(ir.cfgs.values()))
    kinds = {e.kind for e in cfg.edges}
    assert "true-branch" not in kinds and "false-branch" not in kinds


def test_apply_deferral_standalone(build_unit):
    ir = build_unit("debug_print_mid.py")
    tags, plan = plan_for(ir)
    apply_deferral(ir, plan.rewrites[0])
    heal(ir)
    lines = [l.strip() for l in ir.source.text.splitlines()]
    assert any(l.startswith("__gm_defer_0 = (") for l in lines)
    assert lines[-2] == "print(*__gm_defer_0)"
    assert lines[-1].startswith("return __gm_ret_")


# ---------------------------------------------------------------------------
# Equivalence oracles (execute original vs rewritten)
# ---------------------------------------------------------------------------

def test_tensor_branch_equivalence(unit):
    original = unit("tensor_branch.py").text
    transformed = fixed_text(unit, "tensor_branch.py")
    big = torch.full((6,), 4.0)     # sum = 24 > 10, true branch
    small = torch.full((6,), -1.0)  # false branch
    other = torch.randn(6)
    assert_equivalent(original, transformed, "f", [(big, other), (small, other)])


def test_print_mid_deferral_text_and_value(unit):
    original = unit("debug_print_mid.py").text
    transformed = fixed_text(unit, "debug_print_mid.py")
    mod_a = exec_source(original, "printo")
    mod_b = exec_source(transformed, "printt")
    x = torch.tensor([0.5, -1.0, 2.0])
    out_a, text_a = run_with_stdout(mod_a.fn, x.clone())
    out_b, text_b = run_with_stdout(mod_b.fn, x.clone())
    assert text_a == text_b and text_a.startswith("tensor:")
    torch.testing.assert_close(out_b, out_a)


def test_two_prints_replay_in_order():
    original = (
        "import torch\n\n@torch.compile\ndef f(a, b):\n"
        "    y = torch.relu(a)\n    print('first', 1)\n    z = y * b\n"
        "    print('second', 2)\n    return z + a + b\n"
    )
    new_text, outcome = fix_file(SourceModule.from_text("mem.py", original))
    assert outcome.fixed == 2
    mod_a = exec_source(original, "ordo")
    mod_b = exec_source(new_text, "ordt")
    a, b = torch.randn(4), torch.randn(4)
    out_a, text_a = run_with_stdout(mod_a.f, a.clone(), b.clone())
    out_b, text_b = run_with_stdout(mod_b.f, a.clone(), b.clone())
    assert text_a == text_b == "first 1\nsecond 2\n"
    torch.testing.assert_close(out_b, out_a)


@pytest.mark.parametrize(
    "fixture,fn,arg_sets",
    [
        (
            "multi_target.py",
            "pair",
            [(torch.full((4,), 2.0),), (torch.full((4,), -2.0),)],
        ),
        (
            "augassign_branch.py",
            "bump",
            [(torch.full((4,), 1.5),), (torch.full((4,), -1.5),)],
        ),
        (
            "intra_arm_dep.py",
            "chainy",
            [(torch.full((4,), 3.0),), (torch.full((4,), -3.0),)],
        ),
        (
            "nested_if_branch.py",
            "fold",
            [
                (torch.full((4,), 9.0),),   # outer true, inner true
                (torch.full((4,), 1.0),),   # outer true, inner false
                (torch.full((4,), -1.0),),  # outer false
            ],
        ),
        (
            "elif_chain.py",
            "route",
            [
                (torch.full((4,), 30.0),),   # first arm
                (torch.full((4,), 0.0),),    # middle arm
                (torch.full((4,), -30.0),),  # final else
            ],
        ),
        (
            "if_no_else.py",
            "clip",
            [(torch.full((4,), 3.0),), (torch.full((4,), 0.25),)],
        ),
    ],
)
def test_branch_equivalence(unit, fixture, fn, arg_sets):
    original = unit(fixture).text
    new_text, outcome = fix_file(unit(fixture))
    assert outcome.fixed >= 1, fixture
    assert_equivalent(original, new_text, fn, arg_sets)


def test_multi_return_deferral_equivalence(unit):
    original = unit("multi_return_defer.py").text
    transformed = fixed_text(unit, "multi_return_defer.py")
    mod_a = exec_source(original, "mro")
    mod_b = exec_source(transformed, "mrt")
    x = torch.randn(5)
    for flag in (True, False):
        out_a, text_a = run_with_stdout(mod_a.split, x.clone(), flag)
        out_b, text_b = run_with_stdout(mod_b.split, x.clone(), flag)
        assert text_a == text_b == "mid 1\n"
        torch.testing.assert_close(out_b, out_a)


# ---------------------------------------------------------------------------
# fix_file contract
# ---------------------------------------------------------------------------

def test_no_entry_file_reported_skipped(unit):
    source = unit("no_entry.py")
    new_text, outcome = fix_file(source)
    assert new_text == source.text
    assert outcome.status == "skipped"
    assert "no torch.compile" in outcome.detail


def test_idempotency_on_units(unit):
    for name in (
        "tensor_branch.py",
        "debug_print_mid.py",
        "elif_chain.py",
        "multi_return_defer.py",
        "mixed_breaks.py",
        "if_no_else.py",
    ):
        first, out1 = fix_file(unit(name))
        second, out2 = fix_file(SourceModule.from_text(name, first))
        assert second == first, name
        assert out2.fixed == 0, name


def test_unfixable_files_round_trip(unit):
    for name in ("item_access.py", "dynamic_shape_op.py", "loop_tensor_cond.py"):
        source = unit(name)
        new_text, outcome = fix_file(source)
        assert new_text == source.text, name
        assert outcome.fixed == 0 and outcome.found >= 1


def test_longformer_corpus_statuses():
    from conftest import CORPUS

    source = SourceModule.load(str(CORPUS / "longformer_like" / "original.py"))
    new_text, outcome = fix_file(source)
    by_status = {}
    for s in outcome.sites:
        by_status.setdefault(s.status, []).append(s.kind)
    assert sorted(by_status["fixed"]) == ["LoggerPrint", "LoggerPrint"]
    assert sorted(by_status["unfixable"]) == ["ItemAccess"] * 3
    assert outcome.predicted_residual == 2  # last item read sits at the epilogue


def test_deep_call_chain_noted():
    text = (
        "import torch\n\n\ndef deepest(t):\n    print('deep')\n    return t * 3\n\n\n"
        "def helper(t):\n    return deepest(t) + 1\n\n\n"
        "def outer(x):\n    return torch.relu(helper(x))\n\n\nouter_c = torch.compile(outer)\n"
    )
    _, outcome = fix_file(SourceModule.from_text("deep.py", text))
    assert outcome.found == 0  # the hop limit hides deepest's print
    assert outcome.notes == ["call chain beyond one hop not analyzed: helper -> deepest"]


def test_falloff_end_deferral():
    """A function without a return gets its replays appended at the end."""
    text = (
        "import torch\n\n\ndef log_stats(x):\n    y = x * 2\n"
        "    print('scale', 2)\n    z = torch.relu(y)\n    s = z + y\n\n\n"
        "log_stats_c = torch.compile(log_stats)\n"
    )
    new_text, outcome = fix_file(SourceModule.from_text("falloff.py", text))
    assert outcome.fixed == 1
    body = [l for l in new_text.splitlines() if l.startswith("    ")]
    assert body[-1] == "    print(*__gm_defer_0)"
    mod_a = exec_source(text, "fo")
    mod_b = exec_source(new_text, "ft")
    x = torch.randn(4)
    out_a, text_a = run_with_stdout(mod_a.log_stats, x.clone())
    out_b, text_b = run_with_stdout(mod_b.log_stats, x.clone())
    assert out_a is None and out_b is None
    assert text_a == text_b == "scale 2\n"
    second, out2 = fix_file(SourceModule.from_text("falloff.py", new_text))
    assert second == new_text and out2.fixed == 0


def test_disjoint_partial_targets_equivalence():
    """One branch writes u, the other writes v; both fall back to their
    prior values on the untaken side."""
    text = (
        "import torch\n\n@torch.compile\ndef f(x):\n    u = x\n    v = x\n"
        "    if x.sum() > 0:\n        u = x + 1\n    else:\n        v = x - 1\n"
        "    return u * v\n"
    )
    new_text, outcome = fix_file(SourceModule.from_text("disjoint.py", text))
    assert outcome.fixed == 1
    assert "u = torch.where(" in new_text and "v = torch.where(" in new_text
    assert_equivalent(
        text, new_text, "f", [(torch.full((4,), 2.0),), (torch.full((4,), -2.0),)]
    )


def test_rebound_target_within_arm_equivalence():
    text = (
        "import torch\n\n@torch.compile\ndef f(x):\n"
        "    if x.sum() > 0:\n        z = x + 1\n        z = z * 2\n"
        "    else:\n        z = x - 1\n    return z\n"
    )
    new_text, outcome = fix_file(SourceModule.from_text("rebind.py", text))
    assert outcome.fixed == 1
    assert_equivalent(
        text, new_text, "f", [(torch.full((4,), 2.0),), (torch.full((4,), -2.0),)]
    )


def test_verification_failure_aborts_file(unit, monkeypatch):
    import graphmend.transform as transform
    from graphmend import VerificationError

    def explode(ir):
        raise VerificationError(["forced"])

    monkeypatch.setattr(transform, "heal", explode)
    source = unit("tensor_branch.py")
    new_text, outcome = transform.fix_file(source)
    assert new_text == source.text
    assert outcome.status == "aborted"
    assert all(s.status != "fixed" for s in outcome.sites)
