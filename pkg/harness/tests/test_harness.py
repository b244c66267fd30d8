"""Runner mechanics: manifests, capture, tolerances, empty corpus."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
import torch

from graphmend_harness import FixtureCase, count_breaks, run_case, run_suite
from graphmend_harness.runner import _make_args

ROOT = Path(__file__).resolve().parent.parent.parent
CORPUS = ROOT / "corpus"


def test_manifest_roundtrip():
    case = FixtureCase.from_manifest(CORPUS / "biogpt_like")
    assert case.name == "biogpt_like"
    assert case.callable_name == "forward"
    assert case.expected_breaks_before == 2 and case.expected_breaks_after == 0
    assert len(case.inputs) >= 2


def test_make_args_deterministic():
    spec = [{"shape": [8], "dist": "randn"}, {"shape": [4], "dist": "uniform", "low": -1.0, "high": 1.0}]
    a1 = _make_args(spec, 7)
    a2 = _make_args(spec, 7)
    for t1, t2 in zip(a1, a2):
        assert torch.equal(t1, t2)
    assert a1[1].min() >= -1.0 and a1[1].max() <= 1.0


def test_count_breaks_clean_function():
    def clean(x):
        return torch.relu(x * 2)

    assert count_breaks(clean, [torch.randn(4)]) == 0


def test_count_breaks_tensor_branch():
    def branchy(x):
        if x.sum() > 0:
            return x + 1
        return x - 1

    assert count_breaks(branchy, [torch.randn(4)]) == 1


def _write_case(tmp_path: Path, original: str, transformed: str, **manifest) -> FixtureCase:
    case_dir = tmp_path / manifest.get("name", "case")
    case_dir.mkdir()
    (case_dir / "original.py").write_text(original)
    (case_dir / "transformed.py").write_text(transformed)
    doc = {
        "name": "case",
        "original": "original.py",
        "callable": "f",
        "inputs": [{"note": "v", "seed": 1, "args": [{"value": [100.1]}]}],
        "explain_input": 0,
        "expected_breaks_before": 0,
        "expected_breaks_after": 0,
        "compare_output_text": True,
    }
    doc.update(manifest)
    (case_dir / "manifest.json").write_text(json.dumps(doc))
    return FixtureCase.from_manifest(case_dir)


def test_negative_control_zero_tolerance(tmp_path):
    """Reassociated float math drifts by a few ulps: fine at the default
    tolerance, reported as a failure when the tolerance is forced to 0."""
    case = _write_case(
        tmp_path,
        "def f(x):\n    return (x + 512.0) - 512.0\n",
        "def f(x):\n    return x + (512.0 - 512.0)\n",
    )
    relaxed = run_case(case)
    assert relaxed.passed, relaxed.failures
    assert 0.0 < relaxed.max_rel_diff <= 1e-6
    strict = run_case(case, float_rtol=0.0)
    assert not strict.passed
    assert any("outputs differ" in f for f in strict.failures)


def test_side_effect_mismatch_detected(tmp_path):
    case = _write_case(
        tmp_path,
        "def f(x):\n    print('a')\n    return x\n",
        "def f(x):\n    print('b')\n    return x\n",
    )
    result = run_case(case)
    assert not result.passed and not result.side_effect_match


def test_break_count_mismatch_fails(tmp_path):
    case = _write_case(
        tmp_path,
        "def f(x):\n    return x * 2\n",
        "import torch\n\ndef f(x):\n    if x.sum() > 0:\n        return x + 1\n    return x - 1\n",
        expected_breaks_after=0,
    )
    result = run_case(case)
    assert not result.passed
    assert result.breaks_after == 1


def test_runtime_exception_fails_with_traceback(tmp_path):
    case = _write_case(
        tmp_path,
        "def f(x):\n    return x\n",
        "def f(x):\n    raise RuntimeError('boom')\n",
    )
    result = run_case(case)
    assert not result.passed
    assert any("boom" in f for f in result.failures)


def test_empty_corpus(tmp_path):
    report = tmp_path / "summary.json"
    summary = run_suite(tmp_path / "nothing_here", report)
    assert summary["cases"] == [] and summary["failed"] == 0
    assert json.loads(report.read_text())["passed"] == 0


def test_cli_empty_corpus(tmp_path, capsys):
    from graphmend_harness.cli import main

    empty = tmp_path / "none"
    empty.mkdir()
    code = main(["run", str(empty), "--report", str(tmp_path / "s.json")])
    assert code == 0
    assert "0/0 cases pass" in capsys.readouterr().out
