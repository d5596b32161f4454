"""Command-line frontend over bundle files.

Exit codes: 0 success or compliant, 1 violations found, 2 usage or parse
error. Reports go to stdout; diagnostics go to stderr. Mutating commands
write the bundle atomically behind an advisory lock file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .bundle import parse_bundle, serialize_bundle
from .diagnostics import Diagnostic, OperationRejected, Severity, explain_code
from .layers import bump_version
from .model import ChangelogEntry, ProjectBundle, ProjectDecl
from .reporting import (
    build_study_log,
    build_tier_table,
    compliance_verdict,
    render_report,
)
from .routing import check_route_coherence, freeze_route
from .contamination import scan_bundle
from .tiering import check_tier_declaration, tier_unit

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_USAGE = 2

_COLORS = {Severity.ERROR: "\033[31m", Severity.WARNING: "\033[33m", Severity.INFO: "\033[36m"}
_RESET = "\033[0m"


def _use_color() -> bool:
    return sys.stderr.isatty() and not os.environ.get("RECAP_NO_COLOR")


def _emit_diagnostics(diags: list[Diagnostic]) -> None:
    color = _use_color()
    for diag in diags:
        line = diag.render()
        if color:
            line = f"{_COLORS[diag.severity]}{line}{_RESET}"
        print(line, file=sys.stderr)


def _load(path: str) -> ProjectBundle | None:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"cannot read {path}: {exc}", file=sys.stderr)
        return None
    result = parse_bundle(text)
    _emit_diagnostics(result.diagnostics)
    return result.bundle


def _write_atomic(path: str, bundle: ProjectBundle) -> None:
    target = Path(path)
    tmp = target.with_name(f"{target.name}.tmp.{os.getpid()}")
    tmp.write_text(serialize_bundle(bundle), encoding="utf-8")
    os.replace(tmp, target)


class LockContention(Exception):
    """Another process holds the bundle's advisory lock."""


class _BundleLock:
    """Advisory lock file preventing concurrent mutators on one bundle."""

    def __init__(self, path: str):
        self.lock_path = Path(path + ".lock")

    def __enter__(self):
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockContention(str(self.lock_path))
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            self.lock_path.unlink()
        except OSError:
            pass
        return False


def _pick_project(bundle: ProjectBundle, name: str | None) -> ProjectDecl | None:
    if name is None:
        if len(bundle.projects) == 1:
            return bundle.projects[0]
        print(
            f"--project required: bundle has {len(bundle.projects)} projects",
            file=sys.stderr,
        )
        return None
    for project in bundle.projects:
        if project.id.render() == name or project.id.local_name == name:
            return project
    print(f"no project named {name!r}", file=sys.stderr)
    return None


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_validate(args) -> int:
    bundle = _load(args.bundle)
    if bundle is None:
        return EXIT_USAGE
    report = compliance_verdict(bundle)
    if args.format == "structured":
        print(render_report(report, "structured"))
    else:
        print(report.verdict)
        _emit_diagnostics(report.findings)
    return EXIT_OK if report.verdict == "compliant" else EXIT_VIOLATIONS


def _cmd_tier(args) -> int:
    bundle = _load(args.bundle)
    if bundle is None:
        return EXIT_USAGE
    units = [u for u in bundle.units if not u.superseded and not u.quarantined]
    if args.unit:
        units = [
            u
            for u in units
            if u.study_id.render() == args.unit or u.study_id.local_name == args.unit
        ]
        if not units:
            print(f"no unit named {args.unit!r}", file=sys.stderr)
            return EXIT_USAGE
    diags: list[Diagnostic] = []
    for unit in units:
        try:
            decision = tier_unit(unit)
        except OperationRejected as exc:
            diags.extend(exc.diagnostics)
            continue
        if args.unit:
            print(f"{decision.tier.label} ({decision.rule_id})")
        else:
            print(f"{unit.study_id.render()}  {decision.tier.label} ({decision.rule_id})")
        if unit.declared_tier is not None:
            diags.extend(check_tier_declaration(unit))
    _emit_diagnostics(diags)
    has_error = any(d.severity == Severity.ERROR for d in diags)
    return EXIT_VIOLATIONS if has_error else EXIT_OK


def _cmd_route(args) -> int:
    bundle = _load(args.bundle)
    if bundle is None:
        return EXIT_USAGE
    project = _pick_project(bundle, args.project)
    if project is None:
        return EXIT_USAGE
    if args.action == "check":
        diags = check_route_coherence(bundle, project.id)
        _emit_diagnostics(diags)
        has_error = any(d.severity == Severity.ERROR for d in diags)
        print("coherent" if not has_error else "incoherent")
        return EXIT_VIOLATIONS if has_error else EXIT_OK
    try:
        with _BundleLock(args.bundle):
            freeze_route(
                bundle, project.id, timestamp=args.timestamp, actor=args.actor
            )
            _write_atomic(args.bundle, bundle)
    except OperationRejected as exc:
        _emit_diagnostics(exc.diagnostics)
        return EXIT_VIOLATIONS
    route = bundle.route_by_id(project.committed_route)
    print(f"frozen {route.id.render()} at {route.frozen_at}")
    return EXIT_OK


def _cmd_scan(args) -> int:
    bundle = _load(args.bundle)
    if bundle is None:
        return EXIT_USAGE
    events = scan_bundle(bundle)
    if args.format == "structured":
        from .contamination import _event_record

        print(json.dumps({"events": [_event_record(e) for e in events]}, indent=2))
        return EXIT_VIOLATIONS if events else EXIT_OK
    for event in events:
        via = f" via {event.site.token}" if event.site.token else ""
        print(
            f"{event.id} {event.rule_violated} {event.direction} "
            f"at {event.site.container}{via} ({event.location})"
        )
    print(f"{len(events)} contamination event(s)")
    return EXIT_VIOLATIONS if events else EXIT_OK


def _cmd_report(args) -> int:
    bundle = _load(args.bundle)
    if bundle is None:
        return EXIT_USAGE
    project = _pick_project(bundle, args.project)
    if project is None:
        return EXIT_USAGE
    fmt = {"md": "markdown", "csv": "csv", "structured": "structured"}[args.format]
    try:
        if args.artifact == "study-log":
            artifact = build_study_log(bundle, project)
        elif args.artifact == "tier-table":
            artifact = build_tier_table(bundle, project)
        else:
            blocks = [b for b in bundle.reviewer_blocks if b.project_ref == project.id]
            if not blocks:
                print("no reviewer block for project", file=sys.stderr)
                return EXIT_VIOLATIONS
            artifact = blocks[0]
        print(render_report(artifact, fmt), end="")
    except OperationRejected as exc:
        _emit_diagnostics(exc.diagnostics)
        return EXIT_VIOLATIONS if any(
            d.code != "E_FORMAT_UNSUPPORTED" for d in exc.diagnostics
        ) else EXIT_USAGE
    return EXIT_OK


def _cmd_version(args) -> int:
    bundle = _load(args.bundle)
    if bundle is None:
        return EXIT_USAGE
    try:
        raw = json.loads(Path(args.changelog).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read changelog: {exc}", file=sys.stderr)
        return EXIT_USAGE
    entry = ChangelogEntry(
        from_version=raw.get("from_version", ""),
        to_version=raw.get("to_version", ""),
        motivating_insight=raw.get("motivating_insight", ""),
        boundary_affected=raw.get("boundary_affected", ""),
        generalizability_reasoning=raw.get("generalizability_reasoning", ""),
        timestamp=raw.get("timestamp", ""),
    )
    from .bundle import decode_law_dict, encode_law_dict

    gp = bundle.grandparent()
    if raw.get("new_laws") is not None:
        try:
            new_laws = [decode_law_dict(obj) for obj in raw["new_laws"]]
        except ValueError as exc:
            print(f"bad law record in changelog: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        new_laws = [decode_law_dict(encode_law_dict(law)) for law in gp.laws]
    try:
        with _BundleLock(args.bundle):
            bump_version(bundle, entry, new_laws, actor=args.actor)
            _write_atomic(args.bundle, bundle)
    except OperationRejected as exc:
        _emit_diagnostics(exc.diagnostics)
        return EXIT_VIOLATIONS
    print(f"version {gp.version}")
    return EXIT_OK


def _cmd_explain(args) -> int:
    text = explain_code(args.code)
    if text is None:
        print(f"unknown code {args.code!r}", file=sys.stderr)
        return EXIT_USAGE
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recap-engine",
        description="Validate, tier, route, scan, report, and version project bundles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="full compliance verdict")
    p.add_argument("bundle")
    p.add_argument("--format", choices=["text", "structured"], default="text")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("tier", help="tier decisions with fired rules")
    p.add_argument("bundle")
    p.add_argument("--unit")
    p.set_defaults(func=_cmd_tier)

    p = sub.add_parser("route", help="freeze or check the committed route")
    p.add_argument("bundle")
    p.add_argument("action", choices=["freeze", "check"])
    p.add_argument("--project")
    p.add_argument("--timestamp")
    p.add_argument("--actor", default="cli")
    p.set_defaults(func=_cmd_route)

    p = sub.add_parser("scan", help="contamination scan")
    p.add_argument("bundle")
    p.add_argument("--format", choices=["text", "structured"], default="text")
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("report", help="render a mandatory output")
    p.add_argument("bundle")
    p.add_argument("artifact", choices=["study-log", "tier-table", "reviewer-block"])
    p.add_argument("--format", choices=["md", "csv", "structured"], default="md")
    p.add_argument("--project")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("version", help="versioning governance")
    p.add_argument("bundle")
    p.add_argument("action", choices=["bump"])
    p.add_argument("--changelog", required=True)
    p.add_argument("--actor", default="cli")
    p.set_defaults(func=_cmd_version)

    p = sub.add_parser("explain", help="rule text for a diagnostic code")
    p.add_argument("code")
    p.set_defaults(func=_cmd_explain)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except LockContention as exc:
        print(f"bundle is locked by another process ({exc})", file=sys.stderr)
        return EXIT_USAGE
    except OperationRejected as exc:
        _emit_diagnostics(exc.diagnostics)
        return EXIT_VIOLATIONS


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
