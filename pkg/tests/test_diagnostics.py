import re
from pathlib import Path

from recap_engine.diagnostics import (
    CODE_REGISTRY,
    Diagnostic,
    Severity,
    TIER_RULES,
    explain_code,
)

SRC = Path(__file__).resolve().parents[1] / "src" / "recap_engine"


def emitted_codes():
    codes = set()
    for path in SRC.glob("*.py"):
        text = path.read_text()
        codes.update(re.findall(r'"(E_[A-Z_]+|W_[A-Z_]+|R\d_[a-z_]+)"', text))
    return codes


def test_every_emitted_code_is_registered_and_explainable():
    for code in emitted_codes():
        assert code in CODE_REGISTRY, f"{code} missing from the registry"
        assert explain_code(code)


def test_every_tier_rule_is_explainable():
    for rule in (
        "R_STEP1_MISMATCH",
        "R_STEP1_OPACITY",
        "R_SPECULATION",
        "R_MEASUREMENT_FAILED",
        "R_DESIGN_INCOMPATIBLE",
        "R_CORE",
        "R_SUPPLEMENT_COVERED",
        "R_UNCOVERED_AMBIGUITY",
        "R_CONSERVATIVE_MERGE",
    ):
        assert rule in TIER_RULES
        assert explain_code(rule)


def test_unknown_code_returns_none():
    assert explain_code("E_NOT_A_THING") is None


def test_diagnostic_render_carries_anchor():
    diag = Diagnostic("E_SECOND_ROUTE", "projects[0]", "second route", Severity.ERROR)
    rendered = diag.render()
    assert rendered.startswith("E_SECOND_ROUTE projects[0] second route")
    assert "[law:one_route]" in rendered


def test_severity_sorts_errors_first():
    assert Severity.ERROR < Severity.WARNING < Severity.INFO
