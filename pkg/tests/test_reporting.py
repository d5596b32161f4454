import random

import pytest

from genbundles import parse_dict, random_bundle_dict
from toy import toy_dict

from recap_engine.diagnostics import OperationRejected, Severity
from recap_engine.identifiers import Identifier
from recap_engine.model import Tier
from recap_engine.reporting import (
    STUDY_LOG_FIELDS,
    TIER_TABLE_FIELDS,
    build_study_log,
    build_tier_table,
    compliance_verdict,
    parse_report,
    render_report,
    validate_memo,
    validate_reviewer_block,
)


def errors_of(diags):
    return [d for d in diags if d.severity == Severity.ERROR]


# ---------------------------------------------------------------------------
# Study log
# ---------------------------------------------------------------------------


def test_toy_study_log_matches_golden_rows(toy):
    entries = build_study_log(toy, toy.projects[0])
    assert [e.study_id for e in entries] == ["S1", "S2", "S3"]
    s1 = entries[0]
    assert s1.design_type == "Observational (Abstract)"
    assert s1.tier_assignment == "core"
    assert s1.reasons_for_tiering == "Construct alignment"
    assert s1.bias_considerations == "Proxy for B → nondirectional risk"
    assert s1.measurement_definition_issues == "Partial misalignment for B"
    assert s1.notes == "Adequate for R2"


def test_excluded_unit_appears_in_study_log(toy):
    entries = build_study_log(toy, toy.projects[0])
    s3 = [e for e in entries if e.study_id == "S3"]
    assert s3 and s3[0].tier_assignment == "excluded"


def test_missing_mandatory_field_rejects_the_log(toy):
    toy.unit_by_id(Identifier("child", "C1", "S2")).bias_considerations = ""
    with pytest.raises(OperationRejected) as err:
        build_study_log(toy, toy.projects[0])
    assert "E_MISSING_FIELD" in [d.code for d in err.value.diagnostics]


def test_bias_without_direction_tag_rejected(toy):
    toy.unit_by_id(Identifier("child", "C1", "S1")).bias_considerations = "Some bias exists."
    with pytest.raises(OperationRejected) as err:
        build_study_log(toy, toy.projects[0])
    assert "E_BIAS_DIRECTION" in [d.code for d in err.value.diagnostics]


def test_zero_unit_project_logs_empty_but_warns():
    doc = toy_dict()
    doc["projects"][0]["unit_refs"] = []
    doc["projects"][0]["assignments"] = []
    bundle = parse_dict(doc)
    assert build_study_log(bundle, bundle.projects[0]) == []
    report = compliance_verdict(bundle)
    assert "W_NO_UNITS" in [d.code for d in report.findings]


# ---------------------------------------------------------------------------
# Tier table
# ---------------------------------------------------------------------------


def test_toy_tier_table_matches_golden_row(toy):
    rows = build_tier_table(toy, toy.projects[0])
    assert [r.study_id for r in rows] == ["S1", "S2"]
    s1 = rows[0]
    assert s1.methods_summary == "Association between A and C via m1–m3 mapping"
    assert s1.evidence_type == "Associational"
    assert s1.strengths == "Clear construct A; transparent m1"
    assert s1.limitations == "Proxy for B"


def test_all_excluded_project_has_empty_table():
    doc = toy_dict()
    for unit in doc["units"]:
        unit["interpretations"] = [
            {
                "construct_alignment": "mismatch",
                "measurement": "failed",
                "design": "sufficient",
                "reporting": "opaque",
                "speculation_required": False,
            }
        ]
        unit["declared_tier"] = "excluded"
    doc["projects"][0]["assignments"] = []
    bundle = parse_dict(doc)
    assert build_tier_table(bundle, bundle.projects[0]) == []


def test_row_counts_and_partition_over_random_bundles():
    rng = random.Random(55)
    for _ in range(60):
        bundle = parse_dict(random_bundle_dict(rng))
        for project in bundle.projects:
            log = build_study_log(bundle, project)
            table = build_tier_table(bundle, project)
            log_ids = [e.study_id for e in log]
            table_ids = {r.study_id for r in table}
            excluded_ids = {
                e.study_id for e in log if e.tier_assignment == "excluded"
            }
            assert len(table) == len(log) - len(excluded_ids)
            assert table_ids.isdisjoint(excluded_ids)
            assert set(log_ids) == table_ids | excluded_ids
            assert log_ids == sorted(log_ids)


# ---------------------------------------------------------------------------
# Reviewer block + memo
# ---------------------------------------------------------------------------


def test_toy_reviewer_block_validates_cleanly(toy):
    assert validate_reviewer_block(toy.reviewer_blocks[0], toy) == []


def test_empty_block_emits_all_six_codes(toy):
    block = toy.reviewer_blocks[0]
    block.methodological_findings = []
    block.conceptual_insight = ""
    block.anticipated_critique_text = ""
    block.anticipated_critique_refs = []
    block.disconfirming_model = ""
    block.assumptions_ref = []
    codes = {d.code for d in validate_reviewer_block(block, toy)}
    assert codes == {
        "E_RB_FINDINGS",
        "E_RB_INSIGHT",
        "E_RB_CRITIQUE",
        "E_RB_CRITIQUE_UNANCHORED",
        "E_RB_DISCONFIRMING",
        "E_RB_ASSUMPTIONS",
    }


def test_unanchored_critique_is_the_only_finding(toy):
    block = toy.reviewer_blocks[0]
    block.anticipated_critique_refs = []
    codes = [d.code for d in validate_reviewer_block(block, toy)]
    assert codes == ["E_RB_CRITIQUE_UNANCHORED"]


def test_block_must_mirror_committed_assumptions(toy):
    block = toy.reviewer_blocks[0]
    block.assumptions_ref = block.assumptions_ref[:1]
    assert [d.code for d in validate_reviewer_block(block, toy)] == ["E_RB_ASSUMPTIONS"]


def test_memo_requires_all_five_sections(toy):
    memo = toy.memos[0]
    assert validate_memo(memo) == []
    memo.sections.pop("uncertainty")
    assert [d.code for d in validate_memo(memo)] == ["E_MEMO_SECTION"]


# ---------------------------------------------------------------------------
# Compliance verdict
# ---------------------------------------------------------------------------


def test_complete_toy_bundle_is_compliant(toy):
    report = compliance_verdict(toy)
    assert report.verdict == "compliant"
    assert errors_of(report.findings) == []


def test_missing_study_log_fields_make_it_non_compliant(toy):
    for unit in toy.units:
        unit.bias_considerations = ""
        unit.tier_justification = ""
    report = compliance_verdict(toy)
    assert report.verdict == "non_compliant"
    codes = {d.code for d in report.findings}
    assert "E_NO_STUDY_LOG" in codes


def test_unresolved_contamination_is_non_compliant(toy):
    s2 = toy.unit_by_id(Identifier("child", "C1", "S2"))
    # a sibling child appears and S2 borrows from it without contract
    toy.layers.append(
        type(toy.layers[-1])(
            id=Identifier("child", "C2", "C2"),
            kind="child",
            version="v1.0",
            parent_ref=Identifier("parent", "P", "P"),
        )
    )
    s2.notes += " Matches child:C2:C2 conventions."
    report = compliance_verdict(toy)
    assert report.verdict == "non_compliant"
    assert "R3_horizontal_borrowing" in {d.code for d in report.findings}


def test_uncommitted_project_is_non_compliant(toy):
    toy.projects[0].committed_route = None
    toy.projects[0].assignments = []
    toy.reviewer_blocks = []  # mirrors the now-missing route
    report = compliance_verdict(toy)
    assert report.verdict == "non_compliant"
    assert "E_NO_ROUTE" in {d.code for d in report.findings}


def test_authored_route_without_disconfirming_model_is_flagged(toy):
    route = toy.route_by_id(Identifier("child", "C1", "R4"))
    route.disconfirming_models = []
    report = compliance_verdict(toy)
    assert report.verdict == "non_compliant"
    assert "E_NO_DISCONFIRMING" in {d.code for d in report.findings}


def test_verdict_monotonicity_under_added_fault(toy):
    assert compliance_verdict(toy).verdict == "compliant"
    toy.reviewer_blocks = []
    report = compliance_verdict(toy)
    assert report.verdict == "non_compliant"
    assert "E_NO_REVIEWER_BLOCK" in {d.code for d in report.findings}


def test_upward_findings_sort_before_other_directions(toy):
    gp = toy.grandparent()
    next(l for l in gp.laws if l.id.local_name == "B").text += " via child:C1:S1."
    child = type(toy.layers[-1])(
        id=Identifier("child", "C2", "C2"),
        kind="child",
        version="v1.0",
        parent_ref=Identifier("parent", "P", "P"),
    )
    toy.layers.append(child)
    toy.unit_by_id(Identifier("child", "C1", "S2")).notes += " Echoes child:C2:C2."
    report = compliance_verdict(toy)
    rules = [
        d.code
        for d in report.findings
        if d.code in ("R1_upward_content", "R3_horizontal_borrowing")
    ]
    assert rules == ["R1_upward_content", "R3_horizontal_borrowing"]


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def test_study_log_markdown_has_exact_headers(toy):
    text = render_report(build_study_log(toy, toy.projects[0]), "markdown")
    header = text.splitlines()[0]
    assert header == "| " + " | ".join(STUDY_LOG_FIELDS) + " |"
    assert len(STUDY_LOG_FIELDS) == 7


def test_empty_tier_table_renders_header_only_csv():
    doc = toy_dict()
    for unit in doc["units"]:
        unit["interpretations"][0].update(construct_alignment="mismatch")
        unit["declared_tier"] = "excluded"
    doc["projects"][0]["assignments"] = []
    bundle = parse_dict(doc)
    text = render_report(build_tier_table(bundle, bundle.projects[0]), "csv")
    assert text == ",".join(TIER_TABLE_FIELDS) + "\r\n"


def test_structured_renders_round_trip(toy):
    project = toy.projects[0]
    for artifact in (
        build_study_log(toy, project),
        build_tier_table(toy, project),
        toy.reviewer_blocks[0],
        compliance_verdict(toy),
    ):
        text = render_report(artifact, "structured")
        again = parse_report(text)
        assert again == artifact
        assert render_report(again, "structured") == text


def test_csv_unsupported_for_non_tabular(toy):
    with pytest.raises(OperationRejected) as err:
        render_report(toy.reviewer_blocks[0], "csv")
    assert err.value.diagnostics[0].code == "E_FORMAT_UNSUPPORTED"


def test_render_determinism(toy):
    log = build_study_log(toy, toy.projects[0])
    assert render_report(log, "markdown") == render_report(log, "markdown")
    assert render_report(log, "csv") == render_report(log, "csv")


def test_reports_never_synthesize_narratives(toy):
    # every narrative cell equals a string already present in the bundle
    from recap_engine.bundle import serialize_bundle

    blob = serialize_bundle(toy)
    for entry in build_study_log(toy, toy.projects[0]):
        for value in (
            entry.reasons_for_tiering,
            entry.bias_considerations,
            entry.measurement_definition_issues,
            entry.notes,
        ):
            if value:
                assert value in blob
    for row in build_tier_table(toy, toy.projects[0]):
        for value in (row.methods_summary, row.strengths, row.limitations):
            if value:
                assert value in blob
