"""Execute original/transformed fixture pairs under the real tensor runtime.

For each case the runner loads both modules, drives the entry callable on
inputs that exercise every original branch, compares returned tensors and
captured side-effect text, and asks the compiler's capture diagnostics for
break counts on both versions. Counting interpretation is pinned in each
manifest: `graph_break_count` (graph splits), where a break event with no
tensor work after it does not split the graph.

Cases run sequentially in one process because the capture diagnostics
mutate global compiler state.
"""

from __future__ import annotations

import contextlib
import importlib.util
import io
import itertools
import json
import logging
import shutil
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

import torch

FLOAT_RTOL = 1e-6
FLOAT_ATOL = 1e-7


@dataclass
class InputSpec:
    note: str
    seed: int
    args: list[dict]


@dataclass
class FixtureCase:
    name: str
    original_path: Path
    transformed_path: Path
    callable_name: str
    inputs: list[InputSpec]
    explain_input: int
    expected_breaks_before: int
    expected_breaks_after: int
    compare_output_text: bool = True
    expected_output_text: list[str] | None = None
    counting: str = ""

    @classmethod
    def from_manifest(cls, case_dir: Path) -> "FixtureCase":
        man = json.loads((case_dir / "manifest.json").read_text())
        inputs = [InputSpec(i.get("note", ""), i["seed"], i["args"]) for i in man["inputs"]]
        if not inputs:
            raise ValueError(f"{man['name']}: input_spec must exercise every branch")
        if man["expected_breaks_after"] > man["expected_breaks_before"]:
            raise ValueError(f"{man['name']}: fixing must never add breaks")
        return cls(
            name=man["name"],
            original_path=case_dir / man.get("original", "original.py"),
            transformed_path=case_dir / "transformed.py",
            callable_name=man["callable"],
            inputs=inputs,
            explain_input=man.get("explain_input", 0),
            expected_breaks_before=man["expected_breaks_before"],
            expected_breaks_after=man["expected_breaks_after"],
            compare_output_text=man.get("compare_output_text", True),
            expected_output_text=man.get("expected_output_text"),
            counting=man.get("counting", ""),
        )


@dataclass
class EquivalenceResult:
    name: str
    max_abs_diff: float = 0.0
    max_rel_diff: float = 0.0
    side_effect_match: bool = True
    breaks_before: int = -1
    breaks_after: int = -1
    passed: bool = False
    failures: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "max_abs_diff": self.max_abs_diff,
            "max_rel_diff": self.max_rel_diff,
            "side_effect_match": self.side_effect_match,
            "breaks_before": self.breaks_before,
            "breaks_after": self.breaks_after,
            "pass": self.passed,
            "failures": self.failures,
        }


_module_ids = itertools.count()


def _load_module(path: Path, tag: str):
    name = f"_gmh_{tag}_{next(_module_ids)}"
    spec = importlib.util.spec_from_file_location(name, path)
    module = importlib.util.module_from_spec(spec)
    sys.modules[name] = module
    spec.loader.exec_module(module)
    return module


def _make_args(spec_args: list[dict], seed: int) -> list:
    torch.manual_seed(seed)
    out = []
    for a in spec_args:
        if "value" in a:
            out.append(torch.tensor(a["value"]))
        elif a.get("dist") == "uniform":
            t = torch.rand(a["shape"]) * (a["high"] - a["low"]) + a["low"]
            out.append(t)
        else:
            out.append(torch.randn(a["shape"]))
    return out


class _LogCapture(logging.Handler):
    def __init__(self):
        super().__init__(level=logging.DEBUG)
        self.lines: list[str] = []

    def emit(self, record: logging.LogRecord) -> None:
        self.lines.append(record.getMessage())


@contextlib.contextmanager
def _capture_side_effects():
    """Captured (stdout text, log lines) around one call."""
    handler = _LogCapture()
    root = logging.getLogger()
    old_level = root.level
    root.addHandler(handler)
    root.setLevel(logging.DEBUG)
    buf = io.StringIO()
    try:
        with contextlib.redirect_stdout(buf):
            yield buf, handler
    finally:
        root.removeHandler(handler)
        root.setLevel(old_level)


def _call_captured(fn, args):
    with _capture_side_effects() as (buf, handler):
        result = fn(*[a.clone() if isinstance(a, torch.Tensor) else a for a in args])
    return result, buf.getvalue().splitlines() + handler.lines


def _diffs(a: torch.Tensor, b: torch.Tensor) -> tuple[float, float]:
    if a.shape != b.shape:
        return float("inf"), float("inf")
    fa, fb = a.double(), b.double()
    abs_diff = (fa - fb).abs()
    denom = fa.abs().clamp_min(1e-12)
    return float(abs_diff.max()) if abs_diff.numel() else 0.0, (
        float((abs_diff / denom).max()) if abs_diff.numel() else 0.0
    )


def count_breaks(fn, args) -> int:
    """Graph splits reported by the capture diagnostics for one call."""
    torch._dynamo.reset()
    explanation = torch._dynamo.explain(fn)(
        *[a.clone() if isinstance(a, torch.Tensor) else a for a in args]
    )
    return explanation.graph_break_count


def run_case(case: FixtureCase, float_rtol: float = FLOAT_RTOL) -> EquivalenceResult:
    result = EquivalenceResult(name=case.name)
    try:
        mod_orig = _load_module(case.original_path, f"{case.name}_orig")
        mod_fix = _load_module(case.transformed_path, f"{case.name}_fix")
        fn_orig = getattr(mod_orig, case.callable_name)
        fn_fix = getattr(mod_fix, case.callable_name)

        for spec in case.inputs:
            args = _make_args(spec.args, spec.seed)
            out_a, text_a = _call_captured(fn_orig, args)
            out_b, text_b = _call_captured(fn_fix, args)
            if case.compare_output_text:
                if text_a != text_b:
                    result.side_effect_match = False
                    result.failures.append(
                        f"side effects differ on '{spec.note}': {text_a!r} vs {text_b!r}"
                    )
                if case.expected_output_text is not None and text_a != case.expected_output_text:
                    result.side_effect_match = False
                    result.failures.append(
                        f"side effects on '{spec.note}' differ from manifest: {text_a!r}"
                    )
            if isinstance(out_a, torch.Tensor):
                if out_a.dtype.is_floating_point:
                    abs_d, rel_d = _diffs(out_a, out_b)
                    result.max_abs_diff = max(result.max_abs_diff, abs_d)
                    result.max_rel_diff = max(result.max_rel_diff, rel_d)
                    if rel_d > float_rtol and abs_d > FLOAT_ATOL:
                        result.failures.append(
                            f"outputs differ on '{spec.note}': rel {rel_d:.3e}"
                        )
                elif not torch.equal(out_a, out_b):
                    result.failures.append(f"integer outputs differ on '{spec.note}'")
            elif out_a != out_b:
                result.failures.append(f"outputs differ on '{spec.note}'")

        explain_args = _make_args(
            case.inputs[case.explain_input].args, case.inputs[case.explain_input].seed
        )
        result.breaks_before = count_breaks(fn_orig, explain_args)
        result.breaks_after = count_breaks(fn_fix, explain_args)
        if result.breaks_after != case.expected_breaks_after:
            result.failures.append(
                f"breaks after fix: {result.breaks_after}, expected {case.expected_breaks_after}"
            )
    except Exception as exc:  # load or runtime failure fails the case
        import traceback

        result.failures.append(traceback.format_exc())
        result.passed = False
        return result

    result.passed = (
        not result.failures
        and result.side_effect_match
        and result.breaks_after == case.expected_breaks_after
    )
    return result


# ---------------------------------------------------------------------------
# Suite orchestration: drive the primary tool through its CLI, then run cases
# ---------------------------------------------------------------------------

def prepare_workdir(corpus_dir: Path, workdir: Path) -> dict:
    """Copy the corpus, produce transformed files with the primary tool, and
    collect its structured report. Only public surfaces are used: the
    `graphmend` CLI, its JSON report, and the corpus layout."""
    workdir.mkdir(parents=True, exist_ok=True)
    cases = sorted(p.parent.name for p in corpus_dir.glob("*/manifest.json"))
    for case in cases:
        dest = workdir / case
        if dest.exists():
            shutil.rmtree(dest)
        shutil.copytree(corpus_dir / case, dest)
        fixed_dir = dest / "_fixed"
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "graphmend",
                "fix",
                "--out",
                str(fixed_dir),
                str(dest / "original.py"),
            ],
            capture_output=True,
            text=True,
        )
        produced = fixed_dir / "original.py"
        if proc.returncode not in (0, 1) or not produced.exists():
            raise RuntimeError(
                f"primary tool failed on {case} (exit {proc.returncode}): "
                f"{proc.stdout}{proc.stderr}"
            )
        shutil.move(str(produced), str(dest / "transformed.py"))
        shutil.rmtree(fixed_dir)
    proc = subprocess.run(
        [sys.executable, "-m", "graphmend", "analyze", "--format", "json"]
        + [str(workdir / c / "original.py") for c in cases],
        capture_output=True,
        text=True,
    )
    if proc.returncode not in (0, 1):
        raise RuntimeError(
            f"primary analyze failed (exit {proc.returncode}): {proc.stdout}{proc.stderr}"
        )
    return json.loads(proc.stdout)


def run_suite(corpus_dir: Path, report_path: Path, workdir: Path | None = None) -> dict:
    """Run every case; cross-check measured residual breaks against the
    primary report's prediction; write a summary document."""
    corpus_dir = Path(corpus_dir)
    workdir = Path(workdir) if workdir else corpus_dir.parent / "_harness_work"
    case_dirs = sorted(p.parent.name for p in corpus_dir.glob("*/manifest.json"))
    if not case_dirs:
        summary = {
            "cases": [],
            "passed": 0,
            "failed": 0,
            "agreement": True,
            "fully_clean": 0,
            "partial": 0,
            "unchanged": 0,
        }
        Path(report_path).write_text(json.dumps(summary, indent=2) + "\n")
        return summary

    primary_report = prepare_workdir(corpus_dir, workdir)
    predicted = {
        Path(f["path"]).parent.name: f["predicted_residual"]
        for f in primary_report["files"]
    }
    statuses = {
        Path(f["path"]).parent.name: f
        for f in primary_report["files"]
    }

    results = []
    agreement = True
    for case_name in case_dirs:
        case = FixtureCase.from_manifest(workdir / case_name)
        result = run_case(case)
        entry = result.to_dict()
        entry["predicted_residual"] = predicted.get(case_name)
        entry["primary_fixed"] = statuses[case_name]["fixed"]
        entry["primary_unfixable"] = statuses[case_name]["unfixable"]
        if result.breaks_after != predicted.get(case_name):
            agreement = False
            entry["failures"].append(
                f"runtime residual {result.breaks_after} != predicted {predicted.get(case_name)}"
            )
            entry["pass"] = False
        results.append(entry)

    summary = {
        "cases": results,
        "passed": sum(1 for r in results if r["pass"]),
        "failed": sum(1 for r in results if not r["pass"]),
        "agreement": agreement,
        "fully_clean": sum(1 for r in results if r["breaks_after"] == 0),
        "partial": sum(
            1 for r in results if 0 < r["breaks_after"] < r["breaks_before"]
        ),
        "unchanged": sum(
            1 for r in results if r["breaks_after"] == r["breaks_before"] and r["breaks_before"] > 0
        ),
    }
    report_path = Path(report_path)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(summary, indent=2) + "\n")
    return summary
