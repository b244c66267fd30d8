"""Secondary acceptance: runtime agreement and semantic equivalence.

Runs the whole corpus once under the tensor runtime (sequentially; the
capture diagnostics mutate global compiler state) and checks both
criteria against that single suite run.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from graphmend_harness import run_suite

ROOT = Path(__file__).resolve().parent.parent.parent
CORPUS = ROOT / "corpus"

FULL_FIX_CASES = {
    "biogpt_like",
    "blenderbot_like",
    "flan_t5_like",
    "pegasus_like",
    "phi4_like",
    "qwen_audio_like",
}


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    work = tmp_path_factory.mktemp("harness_work")
    report = work / "summary.json"
    summary = run_suite(CORPUS, report, work / "cases")
    return summary


def test_runtime_agreement(suite):
    """Measured residual split count equals the primary tool's prediction:
    zero for six cases, two for the longformer-like case, unchanged for the
    dynamic-shape case."""
    try:
        by_name = {c["name"]: c for c in suite["cases"]}
        assert set(by_name) == FULL_FIX_CASES | {"longformer_like", "moe_minicpm_like"}
        for name in FULL_FIX_CASES:
            case = by_name[name]
            assert case["breaks_after"] == 0 == case["predicted_residual"], name
            assert case["breaks_before"] > 0, name
        lf = by_name["longformer_like"]
        assert lf["breaks_after"] == 2 == lf["predicted_residual"]
        assert lf["primary_fixed"] == 2 and lf["primary_unfixable"] == 3
        moe = by_name["moe_minicpm_like"]
        assert moe["breaks_after"] == moe["breaks_before"] == 15
        assert suite["agreement"] is True
        assert suite["fully_clean"] == 6
        assert suite["partial"] == 1
        assert suite["unchanged"] == 1
    except BaseException:
        print("[acceptance] runtime agreement (predicted residual = measured): FAIL")
        raise
    print("[acceptance] runtime agreement (predicted residual = measured): PASS")


def test_semantic_equivalence(suite):
    """Outputs match within 1e-6 relative on branch-forcing inputs; deferred
    side-effect text matches the original in order."""
    try:
        for case in suite["cases"]:
            assert case["pass"], (case["name"], case["failures"])
            assert case["max_rel_diff"] <= 1e-6, case["name"]
            assert case["side_effect_match"], case["name"]
    except BaseException:
        print("[acceptance] semantic equivalence (1e-6 rel, ordered side effects): FAIL")
        raise
    print("[acceptance] semantic equivalence (1e-6 rel, ordered side effects): PASS")
