"""Append-only audit log and event replay.

Every accepted mutation appends exactly one event whose payload is rich
enough to reproduce the mutation. Live operations and :func:`replay` share
the same appliers, so replaying the log over the initial declarations
reproduces live state by construction. Rejected operations touch nothing.
"""

from __future__ import annotations

import copy
from datetime import datetime, timezone
from typing import Callable

from . import bundle as codec
from .diagnostics import Diagnostic, OperationRejected, error, reject
from .identifiers import parse_identifier
from .model import (
    AuditEvent,
    EVENT_KINDS,
    EVENT_PAYLOAD_SCHEMAS,
    ProjectBundle,
    ReTierEvent,
    RouteRevision,
    Tier,
)

PAYLOAD_SCHEMAS = EVENT_PAYLOAD_SCHEMAS


def now_utc() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# ---------------------------------------------------------------------------
# Declaration lookup shared by appliers
# ---------------------------------------------------------------------------


def find_declaration(bundle: ProjectBundle, canonical: str):
    """Locate any id-bearing declaration by its canonical rendered id."""
    ident = parse_identifier(canonical)
    if ident is None:
        return None
    for layer in bundle.layers:
        if layer.id == ident:
            return layer
        for law in layer.laws:
            if law.id == ident:
                return law
        for ab in layer.abstractions:
            if ab.id == ident:
                return ab
    for unit in bundle.units:
        if unit.study_id == ident:
            return unit
        for da in unit.explicit_assumptions:
            if da.id == ident:
                return da
    for route in bundle.routes:
        if route.id == ident:
            return route
        for assumption in route.assumptions:
            if assumption.id == ident:
                return assumption
    for flow in bundle.flows:
        if flow.id == ident:
            return flow
    for contract in bundle.contracts:
        if contract.id == ident:
            return contract
    for project in bundle.projects:
        if project.id == ident:
            return project
    return None


_EDITABLE_TEXT_FIELDS = {
    "text",
    "definition",
    "payload",
    "plausibility",
    "failure_modes",
    "consequences_for_inference",
    "tier_justification",
    "bias_considerations",
    "measurement_issues",
    "notes",
    "methods_summary",
    "strengths",
    "limitations",
}


def _apply_effects(bundle: ProjectBundle, effects: list[dict]) -> None:
    """Apply the recorded effects of a contamination resolution."""
    for effect in effects:
        op = effect.get("op")
        if op == "quarantine":
            decl = find_declaration(bundle, effect["target"])
            if decl is None or not hasattr(decl, "quarantined"):
                raise ValueError(f"quarantine target {effect['target']} not found")
            decl.quarantined = True
        elif op == "edit_text":
            decl = find_declaration(bundle, effect["container"])
            name = effect["field"]
            if decl is None or name not in _EDITABLE_TEXT_FIELDS or not hasattr(decl, name):
                raise ValueError(f"edit target {effect.get('container')}.{name} not found")
            decl_field = getattr(decl, name)
            if decl_field != effect["old"]:
                raise ValueError("edit target text diverged from the recorded state")
            setattr(decl, name, effect["new"])
        elif op == "edit_list_item":
            decl = find_declaration(bundle, effect["container"])
            name = effect["field"]
            seq = getattr(decl, name, None) if decl is not None else None
            index = effect["index"]
            if not isinstance(seq, list) or index >= len(seq):
                raise ValueError(f"edit target {effect.get('container')}.{name} not found")
            if seq[index] != effect["old"]:
                raise ValueError("edit target text diverged from the recorded state")
            seq[index] = effect["new"]
        elif op == "remove_ref":
            decl = find_declaration(bundle, effect["container"])
            name = effect["field"]
            seq = getattr(decl, name, None) if decl is not None else None
            if not isinstance(seq, list):
                raise ValueError(f"reference list {effect.get('container')}.{name} not found")
            kept = [r for r in seq if r.render() != effect["target"]]
            if len(kept) == len(seq):
                raise ValueError(f"reference {effect['target']} not present")
            setattr(decl, name, kept)
        elif op == "clear_ref":
            decl = find_declaration(bundle, effect["container"])
            if decl is None or not hasattr(decl, effect["field"]):
                raise ValueError(f"reference field {effect.get('container')} not found")
            setattr(decl, effect["field"], None)
        elif op == "remove_assignment":
            decl = find_declaration(bundle, effect["container"])
            if decl is None or not hasattr(decl, "assignments"):
                raise ValueError(f"project {effect.get('container')} not found")
            token = effect["token"]
            kept = [
                a
                for a in decl.assignments
                if token not in (a.unit_ref.render(), a.route_ref.render())
            ]
            if len(kept) == len(decl.assignments):
                raise ValueError(f"assignment citing {token} not present")
            decl.assignments = kept
        elif op == "remove_flow":
            before = len(bundle.flows)
            bundle.flows = [f for f in bundle.flows if f.id.render() != effect["target"]]
            if len(bundle.flows) == before:
                raise ValueError(f"flow {effect['target']} not found")
        elif op == "remove_declaration":
            _remove_declaration(bundle, effect["target"])
        elif op == "add_law":
            layer = _layer_or_raise(bundle, effect["layer"])
            layer.laws.append(codec.decode_law_dict(effect["record"]))
        elif op == "add_abstraction":
            layer = _layer_or_raise(bundle, effect["layer"])
            layer.abstractions.append(
                codec.decode_abstraction_dict(effect["record"], owner=layer.local_name)
            )
        else:
            raise ValueError(f"unknown resolution effect {op!r}")


def _layer_or_raise(bundle: ProjectBundle, canonical: str):
    ident = parse_identifier(canonical)
    layer = bundle.layer_by_id(ident) if ident else None
    if layer is None:
        raise ValueError(f"layer {canonical} not found")
    return layer


def _remove_declaration(bundle: ProjectBundle, canonical: str) -> None:
    ident = parse_identifier(canonical)
    if ident is None:
        raise ValueError(f"bad declaration id {canonical}")
    for layer in bundle.layers:
        for seq_name in ("laws", "abstractions"):
            seq = getattr(layer, seq_name)
            kept = [d for d in seq if d.id != ident]
            if len(kept) != len(seq):
                setattr(layer, seq_name, kept)
                return
    raise ValueError(f"declaration {canonical} not found")


# ---------------------------------------------------------------------------
# Event appliers
# ---------------------------------------------------------------------------


def _unit_or_raise(bundle: ProjectBundle, canonical: str):
    unit = find_declaration(bundle, canonical)
    if unit is None or not hasattr(unit, "study_id"):
        raise ValueError(f"unit {canonical} not found")
    return unit


def _route_or_raise(bundle: ProjectBundle, canonical: str):
    ident = parse_identifier(canonical)
    route = bundle.route_by_id(ident) if ident else None
    if route is None:
        raise ValueError(f"route {canonical} not found")
    return route


def _apply_tier_declared(bundle: ProjectBundle, payload: dict) -> None:
    unit = _unit_or_raise(bundle, payload["unit"])
    unit.declared_tier = Tier.from_label(payload["tier"])
    unit.tier_justification = payload["justification"]


def _apply_retier(bundle: ProjectBundle, payload: dict) -> None:
    unit = _unit_or_raise(bundle, payload["unit"])
    record = payload["event"]
    unit.retier_events.append(
        ReTierEvent(
            timestamp=record["timestamp"],
            source_of_information=record["source_of_information"],
            justification=record["justification"],
            implications_for_route=record["implications_for_route"],
            old_tier=Tier.from_label(record["old_tier"]),
            new_tier=Tier.from_label(record["new_tier"]),
        )
    )
    unit.declared_tier = Tier.from_label(record["new_tier"])
    if payload.get("justification"):
        unit.tier_justification = payload["justification"]
    if payload.get("interpretations") is not None:
        unit.interpretations = [
            codec.decode_assessment_dict(a) for a in payload["interpretations"]
        ]
    if payload.get("explicit_assumptions") is not None:
        unit.explicit_assumptions = [
            codec.decode_declared_assumption_dict(a, owner=unit.study_id.owner)
            for a in payload["explicit_assumptions"]
        ]


def _apply_route_declared(bundle: ProjectBundle, payload: dict) -> None:
    route = codec.decode_route_dict(payload["route"])
    if bundle.route_by_id(route.id) is None:
        bundle.routes.append(route)
    if payload["committed"]:
        project_ident = parse_identifier(payload["project"])
        project = bundle.project_by_id(project_ident) if project_ident else None
        if project is None:
            raise ValueError(f"project {payload['project']} not found")
        project.committed_route = route.id


def _apply_route_frozen(bundle: ProjectBundle, payload: dict) -> None:
    route = _route_or_raise(bundle, payload["route"])
    route.frozen_at = payload["frozen_at"]


def _apply_route_revised(bundle: ProjectBundle, payload: dict) -> None:
    route = _route_or_raise(bundle, payload["route"])
    body = payload["body"]
    replacement = codec.decode_route_dict(
        {
            **codec.encode_route_dict(route),
            "construct_ref": body["construct_ref"],
            "objective": body["objective"],
            "assumptions": body["assumptions"],
            "disconfirming_models": body["disconfirming_models"],
        }
    )
    route.construct_ref = replacement.construct_ref
    route.objective = replacement.objective
    route.assumptions = replacement.assumptions
    route.disconfirming_models = replacement.disconfirming_models
    record = payload["revision"]
    route.revisions.append(
        RouteRevision(
            timestamp=record["timestamp"],
            justification=record["justification"],
            downstream_implications=record["downstream_implications"],
            change_description=record["change_description"],
        )
    )


def _apply_flow_recorded(bundle: ProjectBundle, payload: dict) -> None:
    flow = codec.decode_flow_dict(payload["flow"])
    bundle.flows.append(flow)


def _apply_contamination_flagged(bundle: ProjectBundle, payload: dict) -> None:
    # Pure record: detection mutates nothing.
    return None


def _apply_contamination_resolved(bundle: ProjectBundle, payload: dict) -> None:
    _apply_effects(bundle, payload["effects"])


def _apply_version_bumped(bundle: ProjectBundle, payload: dict) -> None:
    gp = bundle.grandparent()
    gp.laws = [codec.decode_law_dict(obj) for obj in payload["laws"]]
    gp.version = payload["entry"]["to_version"]


def _apply_unit_split(bundle: ProjectBundle, payload: dict) -> None:
    source = _unit_or_raise(bundle, payload["source"])
    source.superseded = True
    new_units = [codec.decode_unit_dict(obj) for obj in payload["units"]]
    bundle.units.extend(new_units)
    for project in bundle.projects:
        if source.study_id in project.unit_refs:
            refs = [r for r in project.unit_refs if r != source.study_id]
            refs.extend(u.study_id for u in new_units)
            project.unit_refs = refs


def _apply_declaration_added(bundle: ProjectBundle, payload: dict) -> None:
    decl_kind = payload["decl_kind"]
    record = payload["record"]
    if decl_kind == "unit":
        unit = codec.decode_unit_dict(record)
        bundle.units.append(unit)
        project_id = payload.get("project")
        if project_id:
            project = bundle.project_by_id(parse_identifier(project_id))
            if project is None:
                raise ValueError(f"project {project_id} not found")
            project.unit_refs.append(unit.study_id)
    elif decl_kind == "law":
        _layer_or_raise(bundle, payload["layer"]).laws.append(codec.decode_law_dict(record))
    elif decl_kind == "abstraction":
        layer = _layer_or_raise(bundle, payload["layer"])
        layer.abstractions.append(
            codec.decode_abstraction_dict(record, owner=layer.local_name)
        )
    elif decl_kind == "contract":
        bundle.contracts.append(codec.decode_contract_dict(record))
    else:
        raise ValueError(f"unsupported declaration kind {decl_kind!r}")


def _apply_declaration_quarantined(bundle: ProjectBundle, payload: dict) -> None:
    decl = find_declaration(bundle, payload["target"])
    if decl is None or not hasattr(decl, "quarantined"):
        raise ValueError(f"quarantine target {payload['target']} not found")
    decl.quarantined = True


_APPLIERS: dict[str, Callable[[ProjectBundle, dict], None]] = {
    "tier_declared": _apply_tier_declared,
    "retier": _apply_retier,
    "route_declared": _apply_route_declared,
    "route_frozen": _apply_route_frozen,
    "route_revised": _apply_route_revised,
    "flow_recorded": _apply_flow_recorded,
    "contamination_flagged": _apply_contamination_flagged,
    "contamination_resolved": _apply_contamination_resolved,
    "version_bumped": _apply_version_bumped,
    "unit_split": _apply_unit_split,
    "declaration_added": _apply_declaration_added,
    "declaration_quarantined": _apply_declaration_quarantined,
}


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def validate_event(bundle: ProjectBundle, event: AuditEvent) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    expected = bundle.next_sequence()
    if event.sequence != expected:
        diags.append(
            error(
                "E_SEQUENCE_GAP",
                f"events[{len(bundle.events)}]",
                f"sequence {event.sequence}, expected {expected}",
            )
        )
    if bundle.events and event.timestamp < bundle.events[-1].timestamp:
        diags.append(
            error(
                "E_SEQUENCE_GAP",
                f"events[{len(bundle.events)}]",
                "event timestamp precedes the log head",
            )
        )
    if event.kind not in EVENT_KINDS:
        diags.append(error("E_PAYLOAD_SCHEMA", "event.kind", f"unknown kind {event.kind!r}"))
        return diags
    required = PAYLOAD_SCHEMAS[event.kind]
    if not isinstance(event.payload, dict):
        diags.append(error("E_PAYLOAD_SCHEMA", "event.payload", "payload must be an object"))
        return diags
    missing = sorted(required - set(event.payload))
    if missing:
        diags.append(
            error(
                "E_PAYLOAD_SCHEMA",
                "event.payload",
                f"{event.kind} payload missing keys: {', '.join(missing)}",
            )
        )
    return diags


def append_event(bundle: ProjectBundle, event: AuditEvent) -> ProjectBundle:
    """Append a pre-built event to the log. Storage only: appending does not
    re-run the event's effect. Operations use :func:`commit`."""
    diags = validate_event(bundle, event)
    if diags:
        raise OperationRejected(diags)
    bundle.events.append(event)
    return bundle


def commit(
    bundle: ProjectBundle,
    kind: str,
    payload: dict,
    *,
    actor: str,
    timestamp: str,
    affected: list[str] | None = None,
) -> AuditEvent:
    """Apply an operation's effect and append its event, as one step.

    The payload must already be complete; appliers consume exactly what
    replay will later consume.
    """
    from . import ENGINE_VERSION

    payload = dict(payload)
    payload.setdefault("engine_version", ENGINE_VERSION)
    event = AuditEvent(
        sequence=bundle.next_sequence(),
        timestamp=timestamp,
        actor=actor,
        kind=kind,
        payload=payload,
        affected=list(affected or []),
    )
    diags = validate_event(bundle, event)
    if diags:
        raise OperationRejected(diags)
    _APPLIERS[kind](bundle, payload)
    bundle.events.append(event)
    return event


def replay(initial: ProjectBundle, events: list[AuditEvent]) -> ProjectBundle:
    """Rebuild state by applying events to a copy of the initial bundle.

    The first event must continue the initial bundle's log. Raises with
    E_REPLAY_DIVERGENCE when an event cannot be applied cleanly; that is an
    engine bug, not an input error.
    """
    state = copy.deepcopy(initial)
    for event in events:
        if event.sequence != state.next_sequence():
            raise reject(
                "E_REPLAY_DIVERGENCE",
                f"events[{event.sequence}]",
                f"sequence {event.sequence} does not continue the log",
            )
        applier = _APPLIERS.get(event.kind)
        if applier is None:
            raise reject(
                "E_REPLAY_DIVERGENCE", f"events[{event.sequence}]", f"unknown kind {event.kind!r}"
            )
        try:
            applier(state, event.payload)
        except (ValueError, KeyError, LookupError) as exc:
            raise reject(
                "E_REPLAY_DIVERGENCE",
                f"events[{event.sequence}]",
                f"{event.kind} failed to apply: {exc}",
            ) from exc
        state.events.append(event)
    return state
