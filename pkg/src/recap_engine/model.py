"""In-memory model of a project bundle.

One dataclass per record kind in the bundle document. The model is plain
data: invariant checking lives in the parser and the per-subsystem
validators, and every mutation goes through an operation that appends an
audit event.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

from .identifiers import Identifier

# ---------------------------------------------------------------------------
# Ordinal scales (worst -> best). Tier conservatism relies on these orders.
# ---------------------------------------------------------------------------

ALIGNMENT_LEVELS = ("mismatch", "partial", "aligned")
MEASUREMENT_LEVELS = ("failed", "conditional_proxy", "minor_limitation", "adequate")
DESIGN_LEVELS = ("incompatible", "limited", "sufficient")
REPORTING_LEVELS = ("opaque", "ambiguous", "transparent")

ASSESSMENT_DIMENSIONS = ("construct_alignment", "measurement", "design", "reporting")

LAYER_KINDS = ("grandparent", "parent", "child")
ABSTRACTION_KINDS = ("construct", "measurement_class", "design_form")
INFO_CLASSES = ("content", "measurement", "assumption", "methodological_insight")
CONTAMINATION_NATURES = ("content", "assumption", "measurement", "structural")
EVIDENCE_ROLES = (
    "primary_inference",
    "sensitivity",
    "boundary",
    "contextual",
    "measurement_evaluation",
)
FLOW_DIRECTIONS = ("upward", "downward", "horizontal")
VIOLATION_RULES = (
    "R1_upward_content",
    "R2_downward_rewrite",
    "R3_horizontal_borrowing",
    "R4_missing_contract",
    "R5_meta_engine_insulation",
)
CORRECTIVE_ACTIONS = ("quarantined", "reversed", "insight_extracted")

#: Seeded objective registry; open, so unknown tags are accepted.
OBJECTIVE_TAGS = (
    "comparative",
    "prognostic",
    "descriptive",
    "stability-mapping",
    "associational",
    "measurement-evaluation",
    "predictive",
)

#: Directional implication tags a bias statement must contain.
BIAS_DIRECTION_TAGS = ("attenuates", "inflates", "reverses", "nondirectional")

EVENT_KINDS = (
    "tier_declared",
    "retier",
    "route_declared",
    "route_frozen",
    "route_revised",
    "flow_recorded",
    "contamination_flagged",
    "contamination_resolved",
    "version_bumped",
    "unit_split",
    "declaration_added",
    "declaration_quarantined",
)

#: Required payload keys per audit-event kind.
EVENT_PAYLOAD_SCHEMAS: dict[str, frozenset] = {
    "tier_declared": frozenset({"unit", "tier", "justification"}),
    "retier": frozenset({"unit", "event"}),
    "route_declared": frozenset({"project", "route", "committed"}),
    "route_frozen": frozenset({"route", "frozen_at", "body_hash"}),
    "route_revised": frozenset({"route", "revision", "body", "body_hash"}),
    "flow_recorded": frozenset({"flow"}),
    "contamination_flagged": frozenset({"contamination"}),
    "contamination_resolved": frozenset({"contamination", "action", "effects"}),
    "version_bumped": frozenset({"entry", "laws"}),
    "unit_split": frozenset({"source", "units"}),
    "declaration_added": frozenset({"decl_kind", "record"}),
    "declaration_quarantined": frozenset({"target"}),
}


class Tier(enum.IntEnum):
    """Structural evidence tiers, ordered by inferential privilege.

    Lower value = more conservative; unsplittable ambiguity resolves to min().
    """

    EXCLUDED = 0
    SUPPLEMENT = 1
    CORE = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "Tier":
        return cls[label.upper()]


# ---------------------------------------------------------------------------
# Layers and laws
# ---------------------------------------------------------------------------


@dataclass
class Law:
    """A normative grandparent statement. The four protected laws carry
    immutable_core and can never change text across versions."""

    id: Identifier
    text: str
    immutable_core: bool = False
    quarantined: bool = False


@dataclass
class Abstraction:
    """A parent-level domain structure: construct, measurement class, or
    design form. correspondence maps measurement-class local names to
    construct local names within the same parent."""

    id: Identifier
    kind: str
    definition: str
    correspondence: dict[str, str] = field(default_factory=dict)
    quarantined: bool = False


@dataclass
class LayerDecl:
    id: Identifier
    kind: str
    version: str
    parent_ref: Identifier | None = None
    laws: list[Law] = field(default_factory=list)
    abstractions: list[Abstraction] = field(default_factory=list)
    vocabulary: list[str] = field(default_factory=list)

    @property
    def local_name(self) -> str:
        return self.id.local_name


@dataclass
class ChangelogEntry:
    """Formal record justifying a grandparent version increment."""

    from_version: str
    to_version: str
    motivating_insight: str
    boundary_affected: str
    generalizability_reasoning: str
    timestamp: str


# ---------------------------------------------------------------------------
# Units and tiering
# ---------------------------------------------------------------------------


@dataclass
class Assessment:
    """One declared reading of a unit on the four ordinal dimensions plus
    the speculation flag. All five are always present; ambiguity is an
    ordinal value, never an absent field."""

    construct_alignment: str
    measurement: str
    design: str
    reporting: str
    speculation_required: bool


@dataclass
class DeclaredAssumption:
    id: Identifier
    text: str
    covers: list[str]  # assessment dimension names


@dataclass
class ReTierEvent:
    timestamp: str
    source_of_information: str
    justification: str
    implications_for_route: str
    old_tier: Tier
    new_tier: Tier


@dataclass
class EvidentialUnit:
    """Smallest tierable entity, with its declared assessments and the
    narrative fields the study log projects."""

    study_id: Identifier
    design_type: str
    interpretations: list[Assessment]
    splittable: bool = False
    declared_tier: Tier | None = None
    tier_justification: str = ""
    explicit_assumptions: list[DeclaredAssumption] = field(default_factory=list)
    retier_events: list[ReTierEvent] = field(default_factory=list)
    measurement_refs: list[Identifier] = field(default_factory=list)
    bias_considerations: str = ""
    measurement_issues: str = ""
    notes: str = ""
    methods_summary: str = ""
    strengths: str = ""
    limitations: str = ""
    split_from: Identifier | None = None
    superseded: bool = False
    quarantined: bool = False


# ---------------------------------------------------------------------------
# Routing
# ---------------------------------------------------------------------------


@dataclass
class RouteAssumption:
    id: Identifier
    text: str
    plausibility: str
    failure_modes: str
    consequences_for_inference: str
    supporting_units: list[Identifier] = field(default_factory=list)
    untestable: bool = False


@dataclass
class RouteRevision:
    timestamp: str
    justification: str
    downstream_implications: str
    change_description: str


@dataclass
class RejectedAlternative:
    sketch: str
    rationale: str


@dataclass
class Route:
    id: Identifier
    project_ref: Identifier
    construct_ref: Identifier
    objective: str
    assumptions: list[RouteAssumption]
    disconfirming_models: list[str]
    rejected_alternatives: list[RejectedAlternative] = field(default_factory=list)
    frozen_at: str | None = None
    revisions: list[RouteRevision] = field(default_factory=list)
    quarantined: bool = False


@dataclass
class EvidenceRoleAssignment:
    unit_ref: Identifier
    route_ref: Identifier
    role: str


@dataclass
class ProjectDecl:
    """A child-layer project: its question, its single committed route, its
    evidence universe, and the role each unit plays."""

    id: Identifier
    layer_ref: Identifier
    question: str = ""
    committed_route: Identifier | None = None
    unit_refs: list[Identifier] = field(default_factory=list)
    assignments: list[EvidenceRoleAssignment] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Flows, contracts, contamination
# ---------------------------------------------------------------------------


@dataclass
class FlowEvent:
    """One recorded cross-layer information movement."""

    id: Identifier
    source_layer: Identifier
    dest_layer: Identifier
    info_class: str
    payload: str
    timestamp: str
    contract_ref: Identifier | None = None
    quarantined: bool = False


@dataclass
class BoundaryContract:
    """Explicit, auditable authorization for a boundary crossing. All five
    elements must be present for the contract to legalize anything."""

    id: Identifier
    info_type: str
    origin_layer: Identifier
    destination_layer: Identifier
    legal_justification: str
    no_reinterpretation_clause: bool = False
    documentation_ref: str = ""


@dataclass
class ContaminationSite:
    """Where a violation was detected: a declaration field, a reference
    token inside it, or a recorded flow."""

    container: str  # canonical id of the offending declaration or flow
    field: str = ""
    token: str = ""


@dataclass
class ContaminationEvent:
    id: str
    rule_violated: str
    direction: str
    nature: str
    site: ContaminationSite
    location: str = ""
    risks_introduced: str = ""
    decisions_affected: list[str] = field(default_factory=list)
    corrective_action: str | None = None
    versioned_update: str | None = None
    timestamp: str = ""
    resolved: bool = False


@dataclass
class InsightProposal:
    """The only lawful upward flow: a domain-independent, append-only
    methodological refinement, moving exactly one level up."""

    id: str
    origin_layer: Identifier
    target_layer: Identifier
    statement: str
    referenced_terms: list[Identifier] = field(default_factory=list)
    proposed_additions: list[dict] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Reporting artifacts (derived, never stored in the bundle)
# ---------------------------------------------------------------------------


@dataclass
class StudyLogEntry:
    study_id: str
    design_type: str
    tier_assignment: str
    reasons_for_tiering: str
    bias_considerations: str
    measurement_definition_issues: str
    notes: str


@dataclass
class TierTableRow:
    study_id: str
    methods_summary: str
    evidence_type: str
    strengths: str
    limitations: str


@dataclass
class ReviewerBlock:
    project_ref: Identifier
    methodological_findings: list[str]
    conceptual_insight: str
    anticipated_critique_text: str
    anticipated_critique_refs: list[Identifier]
    disconfirming_model: str
    assumptions_ref: list[Identifier]


@dataclass
class AnalyticMemo:
    project_ref: Identifier
    sections: dict[str, str]


MEMO_SECTIONS = (
    "interpretation_under_assumptions",
    "uncertainty",
    "boundary_evaluation",
    "supplement_roles",
    "inheritance_compliance",
)


@dataclass
class ComplianceReport:
    verdict: str  # "compliant" | "non_compliant"
    findings: list  # list[Diagnostic]


# ---------------------------------------------------------------------------
# Audit log
# ---------------------------------------------------------------------------


@dataclass
class AuditEvent:
    sequence: int
    timestamp: str
    actor: str
    kind: str
    payload: dict[str, Any]
    affected: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# The bundle
# ---------------------------------------------------------------------------

TOP_LEVEL_KEYS = (
    "recap_version",
    "layers",
    "projects",
    "units",
    "routes",
    "flows",
    "contracts",
    "events",
    "reviewer_blocks",
    "memos",
)


@dataclass
class ProjectBundle:
    """Root document: the project's complete epistemic ledger."""

    recap_version: str
    layers: list[LayerDecl] = field(default_factory=list)
    projects: list[ProjectDecl] = field(default_factory=list)
    units: list[EvidentialUnit] = field(default_factory=list)
    routes: list[Route] = field(default_factory=list)
    flows: list[FlowEvent] = field(default_factory=list)
    contracts: list[BoundaryContract] = field(default_factory=list)
    events: list[AuditEvent] = field(default_factory=list)
    reviewer_blocks: list[ReviewerBlock] = field(default_factory=list)
    memos: list[AnalyticMemo] = field(default_factory=list)

    # -- lookups ------------------------------------------------------------

    def grandparent(self) -> LayerDecl:
        for layer in self.layers:
            if layer.kind == "grandparent":
                return layer
        raise LookupError("bundle has no grandparent layer")

    def layer_by_id(self, ident: Identifier) -> LayerDecl | None:
        for layer in self.layers:
            if layer.id == ident:
                return layer
        return None

    def layer_by_name(self, local_name: str) -> LayerDecl | None:
        for layer in self.layers:
            if layer.local_name == local_name:
                return layer
        return None

    def unit_by_id(self, ident: Identifier) -> EvidentialUnit | None:
        for unit in self.units:
            if unit.study_id == ident:
                return unit
        return None

    def route_by_id(self, ident: Identifier) -> Route | None:
        for route in self.routes:
            if route.id == ident:
                return route
        return None

    def project_by_id(self, ident: Identifier) -> ProjectDecl | None:
        for project in self.projects:
            if project.id == ident:
                return project
        return None

    def contract_by_id(self, ident: Identifier) -> BoundaryContract | None:
        for contract in self.contracts:
            if contract.id == ident:
                return contract
        return None

    def next_sequence(self) -> int:
        return self.events[-1].sequence + 1 if self.events else 1
