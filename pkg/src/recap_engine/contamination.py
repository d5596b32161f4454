"""Flow permissions, contamination detection, tracing, and correction.

The layer graph is an information-gated system: constraints flow downward,
only validated methodological insight flows upward one level at a time, and
lateral transfers need an explicit boundary contract. An identifier's
namespace is its provenance, which makes every check here decidable without
reading prose.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .audit import commit, find_declaration, now_utc
from .diagnostics import Diagnostic, OperationRejected, error, reject
from .identifiers import Identifier, extract_references
from .model import (
    BoundaryContract,
    ContaminationEvent,
    ContaminationSite,
    FlowEvent,
    InsightProposal,
    LayerDecl,
    ProjectBundle,
    Tier,
)
from .tiering import effective_tier

_RANK = {"child": 0, "parent": 1, "grandparent": 2}

_WORD_RE = re.compile(r"[A-Za-z][A-Za-z0-9_-]*")


@dataclass(frozen=True)
class FlowVerdict:
    allowed: bool
    direction: str | None = None
    rule: str | None = None
    reason: str = ""

    @staticmethod
    def ok(reason: str = "") -> "FlowVerdict":
        return FlowVerdict(True, reason=reason)

    @staticmethod
    def violation(direction: str, rule: str, reason: str) -> "FlowVerdict":
        return FlowVerdict(False, direction=direction, rule=rule, reason=reason)


# ---------------------------------------------------------------------------
# Contracts
# ---------------------------------------------------------------------------


def validate_contract(contract: BoundaryContract) -> list[Diagnostic]:
    """All five contract elements must be present for it to authorize
    anything."""
    diags: list[Diagnostic] = []
    where = contract.id.render()
    if not contract.legal_justification.strip():
        diags.append(error("E_CONTRACT_INCOMPLETE", where, "legal justification missing"))
    if not contract.no_reinterpretation_clause:
        diags.append(
            error("E_CONTRACT_INCOMPLETE", where, "no-reinterpretation clause must be true")
        )
    if not contract.documentation_ref.strip():
        diags.append(error("E_CONTRACT_INCOMPLETE", where, "documentation mechanism missing"))
    return diags


def _contract_is_complete(contract: BoundaryContract) -> bool:
    return not validate_contract(contract)


def _horizontal_verdict(
    bundle: ProjectBundle,
    source: Identifier,
    dest: Identifier,
    info_class: str,
    cited: BoundaryContract | None,
) -> FlowVerdict:
    if cited is not None:
        if (
            cited.origin_layer == source
            and cited.destination_layer == dest
            and cited.info_type == info_class
            and _contract_is_complete(cited)
        ):
            return FlowVerdict.ok("authorized by boundary contract")
        return FlowVerdict.violation(
            "horizontal",
            "R4_missing_contract",
            "cited contract does not authorize this transfer",
        )
    near_miss = False
    for contract in bundle.contracts:
        if contract.origin_layer == source and contract.destination_layer == dest:
            if contract.info_type == info_class and _contract_is_complete(contract):
                return FlowVerdict.ok("authorized by boundary contract")
            near_miss = True
    if near_miss:
        return FlowVerdict.violation(
            "horizontal",
            "R4_missing_contract",
            "a contract exists for this boundary but does not cover this transfer",
        )
    return FlowVerdict.violation(
        "horizontal",
        "R3_horizontal_borrowing",
        "lateral transfer without an explicit boundary contract",
    )


# ---------------------------------------------------------------------------
# Insight transmission
# ---------------------------------------------------------------------------


def _known_terms(bundle: ProjectBundle) -> set[str]:
    terms: set[str] = set()
    for layer in bundle.layers:
        terms.update(t.lower() for t in layer.vocabulary)
    return terms


def _effective_vocabulary(bundle: ProjectBundle, layer: LayerDecl) -> set[str]:
    """A layer admits its own terms plus everything inherited from above."""
    terms: set[str] = set()
    cursor: LayerDecl | None = layer
    while cursor is not None:
        terms.update(t.lower() for t in cursor.vocabulary)
        cursor = bundle.layer_by_id(cursor.parent_ref) if cursor.parent_ref else None
    return terms


def validate_insight(proposal: InsightProposal, bundle: ProjectBundle) -> list[Diagnostic]:
    """Insight may move upward only when it is domain-independent,
    expressible in the target layer's vocabulary, and append-only."""
    diags: list[Diagnostic] = []
    where = proposal.id
    origin = bundle.layer_by_id(proposal.origin_layer)
    target = bundle.layer_by_id(proposal.target_layer)
    if origin is None or target is None:
        return [error("E_UNKNOWN_LAYER", where, "origin or target layer not found")]
    if _RANK[target.kind] != _RANK[origin.kind] + 1:
        diags.append(
            error(
                "R5_meta_engine_insulation",
                where,
                "insight moves exactly one level up; it cannot skip or descend",
            )
        )
    texts = [proposal.statement]
    for addition in proposal.proposed_additions:
        texts.append(str(addition.get("text", "")))
        texts.append(str(addition.get("definition", "")))
    referenced = list(proposal.referenced_terms)
    for text in texts:
        referenced.extend(extract_references(text))
    for ref in referenced:
        if ref.namespace == "child" or (
            target.kind == "grandparent" and ref.namespace == "parent"
        ):
            diags.append(
                error(
                    "E_DOMAIN_TERM",
                    where,
                    f"{ref.render()} is domain content relative to the "
                    f"{target.kind} layer",
                )
            )
    known = _known_terms(bundle)
    target_vocab = _effective_vocabulary(bundle, target)
    for text in texts:
        for token in _WORD_RE.findall(text):
            lowered = token.lower()
            if lowered in known and lowered not in target_vocab:
                diags.append(
                    error(
                        "E_FOREIGN_VOCAB",
                        where,
                        f"term {token!r} is not admitted in the {target.kind} "
                        "layer's vocabulary",
                    )
                )
    existing = {law.id.local_name for law in target.laws}
    existing.update(ab.id.local_name for ab in target.abstractions)
    for addition in proposal.proposed_additions:
        kind = addition.get("kind")
        local = str(addition.get("id", ""))
        if kind not in ("law", "abstraction"):
            diags.append(
                error("E_REWRITE_ATTEMPT", where, "additions must be laws or abstractions")
            )
            continue
        if kind == "law" and target.kind != "grandparent":
            diags.append(error("E_REWRITE_ATTEMPT", where, "laws live at the grandparent"))
        if kind == "abstraction" and target.kind != "parent":
            diags.append(error("E_REWRITE_ATTEMPT", where, "abstractions live at a parent"))
        if local in existing:
            diags.append(
                error(
                    "E_REWRITE_ATTEMPT",
                    where,
                    f"{local!r} already exists at the target; insight refines "
                    "by appending, never by editing",
                )
            )
    return diags


# ---------------------------------------------------------------------------
# Flow matrix
# ---------------------------------------------------------------------------


def check_flow(flow: FlowEvent, bundle: ProjectBundle) -> FlowVerdict:
    """Total verdict over the flow-permission matrix.

    Downward movement is always legal (constraints flow down, lineage or
    not). Upward movement is legal only for validated insight climbing one
    level. Same-kind movement between distinct layers is lateral and
    contract-gated. Contracts never legalize upward movement.
    """
    source = bundle.layer_by_id(flow.source_layer)
    dest = bundle.layer_by_id(flow.dest_layer)
    if source is None or dest is None:
        raise reject("E_UNKNOWN_LAYER", flow.id.render(), "flow endpoints must be layers")
    if source.id == dest.id:
        return FlowVerdict.ok("same-layer flow is a no-op")
    src_rank, dst_rank = _RANK[source.kind], _RANK[dest.kind]
    if src_rank > dst_rank:
        return FlowVerdict.ok("constraints flow downward")
    if src_rank < dst_rank:
        if flow.info_class != "methodological_insight":
            return FlowVerdict.violation(
                "upward",
                "R1_upward_content",
                f"{flow.info_class} may never move upward, contract or not",
            )
        if dst_rank - src_rank > 1:
            return FlowVerdict.violation(
                "upward",
                "R5_meta_engine_insulation",
                "insight reaches the grandparent only through a parent",
            )
        proposal = InsightProposal(
            id=flow.id.render(),
            origin_layer=source.id,
            target_layer=dest.id,
            statement=flow.payload,
        )
        failures = validate_insight(proposal, bundle)
        if not failures:
            return FlowVerdict.ok("validated methodological insight")
        rule = (
            "R5_meta_engine_insulation" if dest.kind == "grandparent" else "R1_upward_content"
        )
        return FlowVerdict.violation(
            "upward", rule, "; ".join(d.message for d in failures)
        )
    cited = None
    if flow.contract_ref is not None:
        cited = bundle.contract_by_id(flow.contract_ref)
        if cited is None:
            return FlowVerdict.violation(
                "horizontal", "R4_missing_contract", "cited contract does not exist"
            )
    return _horizontal_verdict(bundle, source.id, dest.id, flow.info_class, cited)


# ---------------------------------------------------------------------------
# Static bundle scan
# ---------------------------------------------------------------------------


def _classify_field(field_name: str) -> str:
    if field_name in ("measurement_refs", "measurement_issues"):
        return "measurement"
    if field_name in (
        "text",
        "plausibility",
        "failure_modes",
        "consequences_for_inference",
        "supporting_units",
    ):
        return "assumption"
    return "content"


class _Scanner:
    def __init__(self, bundle: ProjectBundle):
        self.bundle = bundle
        self.events: list[ContaminationEvent] = []
        self._owner_of: dict[str, LayerDecl] = {}
        for layer in bundle.layers:
            self._owner_of[layer.local_name] = layer

    def flag(
        self,
        rule: str,
        direction: str,
        nature: str,
        site: ContaminationSite,
        location: str,
    ) -> None:
        event = ContaminationEvent(
            id="",
            rule_violated=rule,
            direction=direction,
            nature=nature,
            site=site,
            location=location,
        )
        event.decisions_affected = trace_downstream(event, self.bundle)
        self.events.append(event)

    # -- helpers --------------------------------------------------------------

    def _ancestors(self, layer: LayerDecl) -> set[str]:
        """Local names of the layers above this one."""
        out: set[str] = set()
        cursor = layer
        while cursor is not None and cursor.parent_ref is not None:
            nxt = self.bundle.layer_by_id(cursor.parent_ref)
            if nxt is None:
                break
            out.add(nxt.local_name)
            cursor = nxt
        return out

    def _owner_layer(self, ident: Identifier) -> LayerDecl | None:
        if ident.namespace == "gp":
            try:
                return self.bundle.grandparent()
            except LookupError:
                return None
        return self._owner_of.get(ident.owner)

    def _check_child_ref(
        self,
        owner: LayerDecl,
        ref: Identifier,
        site: ContaminationSite,
        location: str,
        field_name: str,
    ) -> None:
        """A reference from a child-owned declaration: fine when it points at
        the child itself or an ancestor, lateral otherwise."""
        ref_owner = self._owner_layer(ref)
        if ref_owner is None or ref_owner.local_name == owner.local_name:
            return
        if ref_owner.local_name in self._ancestors(owner):
            return
        info_class = _classify_field(field_name)
        verdict = _horizontal_verdict(
            self.bundle, ref_owner.id, owner.id, info_class, cited=None
        )
        if verdict.allowed:
            return
        self.flag(verdict.rule or "R3_horizontal_borrowing", "horizontal", info_class, site, location)

    def _scan_text_refs(
        self,
        owner: LayerDecl,
        container: str,
        field_name: str,
        text: str,
        location: str,
    ) -> None:
        for ref in extract_references(text):
            site = ContaminationSite(container=container, field=field_name, token=ref.render())
            if owner.kind == "grandparent":
                if ref.namespace in ("parent", "child"):
                    self.flag("R1_upward_content", "upward", _classify_field(field_name), site, location)
            elif owner.kind == "parent":
                if ref.namespace == "child":
                    self.flag("R1_upward_content", "upward", _classify_field(field_name), site, location)
                elif ref.namespace == "parent" and ref.owner != owner.local_name:
                    info_class = _classify_field(field_name)
                    ref_owner = self._owner_of.get(ref.owner)
                    if ref_owner is None:
                        continue
                    verdict = _horizontal_verdict(
                        self.bundle, ref_owner.id, owner.id, info_class, cited=None
                    )
                    if not verdict.allowed:
                        self.flag(verdict.rule or "R3_horizontal_borrowing", "horizontal", info_class, site, location)
            else:
                self._check_child_ref(owner, ref, site, location, field_name)

    # -- passes ---------------------------------------------------------------

    def scan_layer_declarations(self) -> None:
        """Laws below the grandparent and abstractions outside a parent are
        local re-legislation of inherited structure."""
        for li, layer in enumerate(self.bundle.layers):
            inherited: set[str] = set()
            if layer.kind == "child":
                try:
                    gp = self.bundle.grandparent()
                    inherited.update(law.id.local_name for law in gp.laws)
                except LookupError:
                    pass
                parent = (
                    self.bundle.layer_by_id(layer.parent_ref) if layer.parent_ref else None
                )
                if parent is not None:
                    inherited.update(ab.id.local_name for ab in parent.abstractions)
            if layer.kind != "grandparent":
                for j, law in enumerate(layer.laws):
                    if law.quarantined:
                        continue
                    self.flag(
                        "R2_downward_rewrite",
                        "downward",
                        "structural",
                        ContaminationSite(container=law.id.render()),
                        f"layers[{li}].laws[{j}]",
                    )
            if layer.kind != "parent":
                for j, ab in enumerate(layer.abstractions):
                    if ab.quarantined:
                        continue
                    self.flag(
                        "R2_downward_rewrite",
                        "downward",
                        "structural",
                        ContaminationSite(container=ab.id.render()),
                        f"layers[{li}].abstractions[{j}]",
                    )

    def scan_layer_texts(self) -> None:
        for li, layer in enumerate(self.bundle.layers):
            if layer.kind == "grandparent" or layer.kind == "parent":
                for j, law in enumerate(layer.laws):
                    if law.quarantined:
                        continue
                    self._scan_text_refs(
                        layer, law.id.render(), "text", law.text, f"layers[{li}].laws[{j}].text"
                    )
                for j, ab in enumerate(layer.abstractions):
                    if ab.quarantined:
                        continue
                    self._scan_text_refs(
                        layer,
                        ab.id.render(),
                        "definition",
                        ab.definition,
                        f"layers[{li}].abstractions[{j}].definition",
                    )

    def scan_units(self) -> None:
        for ui, unit in enumerate(self.bundle.units):
            if unit.quarantined or unit.superseded:
                continue
            owner = self._owner_of.get(unit.study_id.owner)
            if owner is None:
                continue
            container = unit.study_id.render()
            for name in (
                "tier_justification",
                "bias_considerations",
                "measurement_issues",
                "notes",
                "methods_summary",
                "strengths",
                "limitations",
            ):
                self._scan_text_refs(
                    owner, container, name, getattr(unit, name), f"units[{ui}].{name}"
                )
            for j, da in enumerate(unit.explicit_assumptions):
                self._scan_text_refs(
                    owner,
                    da.id.render(),
                    "text",
                    da.text,
                    f"units[{ui}].explicit_assumptions[{j}].text",
                )
            for j, ref in enumerate(unit.measurement_refs):
                self._check_child_ref(
                    owner,
                    ref,
                    ContaminationSite(
                        container=container, field="measurement_refs", token=ref.render()
                    ),
                    f"units[{ui}].measurement_refs[{j}]",
                    "measurement_refs",
                )

    def scan_routes(self) -> None:
        for ri, route in enumerate(self.bundle.routes):
            if route.quarantined:
                continue
            owner = self._owner_of.get(route.id.owner)
            if owner is None:
                continue
            for j, assumption in enumerate(route.assumptions):
                base = f"routes[{ri}].assumptions[{j}]"
                for name in ("text", "plausibility", "failure_modes", "consequences_for_inference"):
                    self._scan_text_refs(
                        owner,
                        assumption.id.render(),
                        name,
                        getattr(assumption, name),
                        f"{base}.{name}",
                    )
                for k, ref in enumerate(assumption.supporting_units):
                    self._check_child_ref(
                        owner,
                        ref,
                        ContaminationSite(
                            container=assumption.id.render(),
                            field="supporting_units",
                            token=ref.render(),
                        ),
                        f"{base}.supporting_units[{k}]",
                        "supporting_units",
                    )
            for j, model in enumerate(route.disconfirming_models):
                for ref in extract_references(model):
                    self._check_child_ref(
                        owner,
                        ref,
                        ContaminationSite(
                            container=route.id.render(),
                            field=f"disconfirming_models[{j}]",
                            token=ref.render(),
                        ),
                        f"routes[{ri}].disconfirming_models[{j}]",
                        "content",
                    )

    def scan_projects(self) -> None:
        for pi, project in enumerate(self.bundle.projects):
            owner = self._owner_of.get(project.id.owner)
            if owner is None:
                continue
            for j, ref in enumerate(project.unit_refs):
                self._check_child_ref(
                    owner,
                    ref,
                    ContaminationSite(
                        container=project.id.render(), field="unit_refs", token=ref.render()
                    ),
                    f"projects[{pi}].unit_refs[{j}]",
                    "content",
                )
            if project.committed_route is not None:
                self._check_child_ref(
                    owner,
                    project.committed_route,
                    ContaminationSite(
                        container=project.id.render(),
                        field="committed_route",
                        token=project.committed_route.render(),
                    ),
                    f"projects[{pi}].committed_route",
                    "content",
                )
            for j, assignment in enumerate(project.assignments):
                for ref in (assignment.unit_ref, assignment.route_ref):
                    self._check_child_ref(
                        owner,
                        ref,
                        ContaminationSite(
                            container=project.id.render(),
                            field="assignments",
                            token=ref.render(),
                        ),
                        f"projects[{pi}].assignments[{j}]",
                        "content",
                    )

    def scan_flows(self) -> None:
        nature_of = {
            "content": "content",
            "measurement": "measurement",
            "assumption": "assumption",
            "methodological_insight": "content",
        }
        for fi, flow in enumerate(self.bundle.flows):
            if flow.quarantined:
                continue
            verdict = check_flow(flow, self.bundle)
            if verdict.allowed:
                continue
            self.flag(
                verdict.rule or "R1_upward_content",
                verdict.direction or "upward",
                nature_of[flow.info_class],
                ContaminationSite(container=flow.id.render(), field="payload"),
                f"flows[{fi}]",
            )


_DIRECTION_SEVERITY = {"upward": 0, "downward": 1, "horizontal": 2}


def scan_bundle(bundle: ProjectBundle) -> list[ContaminationEvent]:
    """Detect every contamination event currently present in the bundle.

    Pure over the bundle; quarantined and superseded declarations are inert
    and produce nothing. A clean bundle returns an empty list. Upward events
    come first: they are the most severe class.
    """
    scanner = _Scanner(bundle)
    scanner.scan_layer_declarations()
    scanner.scan_layer_texts()
    scanner.scan_units()
    scanner.scan_routes()
    scanner.scan_projects()
    scanner.scan_flows()
    ordered = sorted(
        enumerate(scanner.events),
        key=lambda pair: (_DIRECTION_SEVERITY[pair[1].direction], pair[0]),
    )
    events = [event for _, event in ordered]
    for i, event in enumerate(events):
        event.id = f"CONT-{i + 1:04d}"
    return events


# ---------------------------------------------------------------------------
# Downstream tracing
# ---------------------------------------------------------------------------


def build_reference_graph(bundle: ProjectBundle) -> dict[str, set[str]]:
    """Dependency edges: node -> the decisions and rows depending on it.

    Synthetic nodes name derived decisions: ``tier:<unit>``,
    ``coherence:<route>``, ``studylog:<unit>``, ``tiertable:<unit>``.
    """
    graph: dict[str, set[str]] = {}

    def edge(src: str, dst: str) -> None:
        graph.setdefault(src, set()).add(dst)

    gp = None
    for layer in bundle.layers:
        if layer.kind == "grandparent":
            gp = layer
    parent_of_child: dict[str, str] = {}
    for layer in bundle.layers:
        if layer.kind == "child" and layer.parent_ref is not None:
            parent_of_child[layer.local_name] = layer.parent_ref.local_name
    for project in bundle.projects:
        project_key = project.id.render()
        if gp is not None:
            for law in gp.laws:
                if not law.quarantined:
                    edge(law.id.render(), project_key)
        parent_name = parent_of_child.get(project.id.owner)
        for layer in bundle.layers:
            if layer.kind == "parent" and layer.local_name == parent_name:
                for ab in layer.abstractions:
                    if not ab.quarantined:
                        edge(ab.id.render(), project_key)
    active_units = [
        u for u in bundle.units if not u.quarantined and not u.superseded
    ]
    assignments = {}
    for project in bundle.projects:
        for assignment in project.assignments:
            assignments[assignment.unit_ref.render()] = assignment
    for unit in active_units:
        key = unit.study_id.render()
        tier_key = f"tier:{key}"
        edge(key, tier_key)
        edge(tier_key, f"studylog:{key}")
        tier = effective_tier(unit)
        if tier in (Tier.CORE, Tier.SUPPLEMENT):
            edge(tier_key, f"tiertable:{key}")
        assignment = assignments.get(key)
        if assignment is not None:
            edge(tier_key, f"coherence:{assignment.route_ref.render()}")
        for ref in unit.measurement_refs:
            edge(ref.render(), key)
    for route in bundle.routes:
        if route.quarantined:
            continue
        route_key = route.id.render()
        edge(route_key, f"coherence:{route_key}")
        for assumption in route.assumptions:
            edge(assumption.id.render(), f"coherence:{route_key}")
            for ref in assumption.supporting_units:
                edge(ref.render(), assumption.id.render())
    return graph


def trace_downstream(event: ContaminationEvent, bundle: ProjectBundle) -> list[str]:
    """Transitive closure from the contaminated declaration to the tier
    decisions, route coherence, and report rows that depend on it."""
    graph = build_reference_graph(bundle)
    start = event.site.container
    seen: set[str] = set()
    frontier = list(graph.get(start, ()))
    while frontier:
        node = frontier.pop()
        if node in seen:
            continue
        seen.add(node)
        frontier.extend(graph.get(node, ()))
    return sorted(seen)


# ---------------------------------------------------------------------------
# Recording and resolution
# ---------------------------------------------------------------------------


def record_flow(
    bundle: ProjectBundle,
    flow: FlowEvent,
    *,
    actor: str = "engine",
    timestamp: str | None = None,
) -> ProjectBundle:
    """Record a flow event. Recording is factual: illegal movements are
    recorded too, then flagged by the scan."""
    from .bundle import _encode_flow  # shared canonical encoding

    diags: list[Diagnostic] = []
    if bundle.layer_by_id(flow.source_layer) is None:
        diags.append(error("E_UNKNOWN_LAYER", flow.id.render(), "source layer not found"))
    if bundle.layer_by_id(flow.dest_layer) is None:
        diags.append(error("E_UNKNOWN_LAYER", flow.id.render(), "destination layer not found"))
    if flow.contract_ref is not None and bundle.contract_by_id(flow.contract_ref) is None:
        diags.append(
            error("E_UNRESOLVED_REF", flow.id.render(), "cited contract not declared")
        )
    for existing in bundle.flows:
        if existing.id == flow.id:
            diags.append(error("E_DUP_ID", flow.id.render(), "flow id already recorded"))
    if diags:
        raise OperationRejected(diags)
    commit(
        bundle,
        "flow_recorded",
        {"flow": _encode_flow(flow)},
        actor=actor,
        timestamp=timestamp or flow.timestamp or now_utc(),
        affected=[flow.id.render()],
    )
    return bundle


def _event_record(event: ContaminationEvent) -> dict:
    return {
        "id": event.id,
        "rule_violated": event.rule_violated,
        "direction": event.direction,
        "nature": event.nature,
        "site": {
            "container": event.site.container,
            "field": event.site.field,
            "token": event.site.token,
        },
        "location": event.location,
        "risks_introduced": event.risks_introduced,
        "decisions_affected": list(event.decisions_affected),
        "corrective_action": event.corrective_action,
        "versioned_update": event.versioned_update,
        "timestamp": event.timestamp,
        "resolved": event.resolved,
    }


def flag_contamination(
    bundle: ProjectBundle,
    event: ContaminationEvent,
    *,
    actor: str = "engine",
    timestamp: str | None = None,
) -> ProjectBundle:
    """Persist a detection into the audit log without resolving it."""
    commit(
        bundle,
        "contamination_flagged",
        {"contamination": _event_record(event)},
        actor=actor,
        timestamp=timestamp or now_utc(),
        affected=list(event.decisions_affected),
    )
    return bundle


def _reversal_effects(bundle: ProjectBundle, event: ContaminationEvent) -> list[dict]:
    site = event.site
    decl = find_declaration(bundle, site.container)
    if decl is None:
        raise reject("E_UNDOCUMENTED", site.container, "contaminated declaration not found")
    if not site.field:
        # The declaration itself is the violation (unauthorized law or
        # abstraction): reversal deletes it.
        return [{"op": "remove_declaration", "target": site.container}]
    if site.field == "payload":
        return [{"op": "remove_flow", "target": site.container}]
    if site.field in ("measurement_refs", "supporting_units", "unit_refs"):
        return [
            {
                "op": "remove_ref",
                "container": site.container,
                "field": site.field,
                "target": site.token,
            }
        ]
    if site.field == "committed_route":
        return [{"op": "clear_ref", "container": site.container, "field": site.field}]
    if site.field == "assignments":
        return [
            {"op": "remove_assignment", "container": site.container, "token": site.token}
        ]
    m = re.fullmatch(r"disconfirming_models\[(\d+)\]", site.field)
    if m is not None:
        index = int(m.group(1))
        old = decl.disconfirming_models[index]
        return [
            {
                "op": "edit_list_item",
                "container": site.container,
                "field": "disconfirming_models",
                "index": index,
                "old": old,
                "new": old.replace(site.token, "", 1).strip(),
            }
        ]
    old = getattr(decl, site.field, None)
    if not isinstance(old, str):
        raise reject("E_UNDOCUMENTED", site.container, f"cannot reverse field {site.field!r}")
    return [
        {
            "op": "edit_text",
            "container": site.container,
            "field": site.field,
            "old": old,
            "new": old.replace(site.token, "", 1).strip() if site.token else old,
        }
    ]


def resolve_contamination(
    bundle: ProjectBundle,
    event: ContaminationEvent,
    action: str,
    *,
    proposal: InsightProposal | None = None,
    actor: str = "engine",
    timestamp: str | None = None,
) -> ProjectBundle:
    """Correct a flagged contamination event.

    quarantine isolates the contaminated component in place; reverse deletes
    the offending reference or declaration; extract_insight quarantines and
    appends the validated abstraction upward. Resolution demands complete
    documentation and appends exactly one audit event.
    """
    if action not in ("quarantine", "reverse", "extract_insight"):
        raise reject("E_UNDOCUMENTED", event.id, f"unknown corrective action {action!r}")
    diags: list[Diagnostic] = []
    if event.resolved:
        diags.append(error("E_UNDOCUMENTED", event.id, "event is already resolved"))
    if not event.risks_introduced.strip():
        diags.append(
            error(
                "E_UNDOCUMENTED",
                event.id,
                "downstream inferential risks must be documented before resolution",
            )
        )
    if not event.rule_violated or not event.direction or not event.nature:
        diags.append(error("E_UNDOCUMENTED", event.id, "violation record incomplete"))
    if diags:
        raise OperationRejected(diags)

    effects: list[dict]
    if action == "quarantine":
        if find_declaration(bundle, event.site.container) is None:
            raise reject("E_UNDOCUMENTED", event.site.container, "declaration not found")
        effects = [{"op": "quarantine", "target": event.site.container}]
    elif action == "reverse":
        effects = _reversal_effects(bundle, event)
    else:
        if proposal is None:
            raise reject("E_INSIGHT_REJECTED", event.id, "extract_insight needs a proposal")
        failures = validate_insight(proposal, bundle)
        if failures:
            raise OperationRejected(
                [error("E_INSIGHT_REJECTED", event.id, "insight failed validation")] + failures
            )
        target = bundle.layer_by_id(proposal.target_layer)
        effects = [{"op": "quarantine", "target": event.site.container}]
        for addition in proposal.proposed_additions:
            if addition["kind"] == "law":
                effects.append(
                    {
                        "op": "add_law",
                        "layer": target.id.render(),
                        "record": {
                            "id": addition["id"],
                            "text": addition.get("text", ""),
                            "immutable_core": False,
                        },
                    }
                )
            else:
                effects.append(
                    {
                        "op": "add_abstraction",
                        "layer": target.id.render(),
                        "record": {
                            "id": addition["id"],
                            "kind": addition.get("abstraction_kind", "construct"),
                            "definition": addition.get("definition", addition.get("text", "")),
                        },
                    }
                )

    action_label = {
        "quarantine": "quarantined",
        "reverse": "reversed",
        "extract_insight": "insight_extracted",
    }[action]
    stamp = timestamp or now_utc()
    sequence = bundle.next_sequence()
    event.corrective_action = action_label
    event.versioned_update = f"event:{sequence}"
    event.timestamp = stamp
    event.resolved = True
    try:
        commit(
            bundle,
            "contamination_resolved",
            {"contamination": _event_record(event), "action": action_label, "effects": effects},
            actor=actor,
            timestamp=stamp,
            affected=list(event.decisions_affected) or [event.site.container],
        )
    except OperationRejected:
        event.corrective_action = None
        event.versioned_update = None
        event.timestamp = ""
        event.resolved = False
        raise
    return bundle
