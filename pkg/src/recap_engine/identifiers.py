"""Namespaced identifiers with layer provenance.

Every declaration in a bundle is named by an identifier whose namespace
records the kind of layer that owns it. Provenance is what makes
cross-layer reference scanning decidable: an identifier's namespace *is*
its origin.

Rendered forms:
    gp:<name>                grandparent-owned
    parent:<owner>:<name>    owned by parent layer <owner>
    child:<owner>:<name>     owned by child layer <owner>
"""

from __future__ import annotations

import re
from dataclasses import dataclass

NAMESPACES = ("gp", "parent", "child")

#: Maps a layer kind to the namespace its declarations live in.
KIND_TO_NAMESPACE = {"grandparent": "gp", "parent": "parent", "child": "child"}

_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_CANONICAL_RE = re.compile(
    rf"^(?:gp:(?P<gp_name>{_NAME})|(?P<ns>parent|child):(?P<owner>{_NAME}):(?P<name>{_NAME}))$"
)

#: Finds canonical identifier references embedded in narrative text.
EMBEDDED_REF_RE = re.compile(
    rf"\b(gp:{_NAME}|(?:parent|child):{_NAME}:{_NAME})\b"
)


@dataclass(frozen=True, order=True)
class Identifier:
    """A fully-qualified, case-sensitive name with layer provenance."""

    namespace: str
    owner: str  # local name of the owning layer; "" for the gp namespace
    local_name: str

    def render(self) -> str:
        if self.namespace == "gp":
            return f"gp:{self.local_name}"
        return f"{self.namespace}:{self.owner}:{self.local_name}"

    def __str__(self) -> str:  # pragma: no cover - convenience
        return self.render()


def parse_identifier(text: str) -> Identifier | None:
    """Parse a canonical rendered identifier; None if it is not one."""
    m = _CANONICAL_RE.match(text)
    if not m:
        return None
    if m.group("gp_name"):
        return Identifier("gp", "", m.group("gp_name"))
    return Identifier(m.group("ns"), m.group("owner"), m.group("name"))


def extract_references(text: str) -> list[Identifier]:
    """All canonical identifier references embedded in a text, in order.

    Duplicates are preserved; one injected reference is one occurrence.
    """
    out = []
    for token in EMBEDDED_REF_RE.findall(text or ""):
        ident = parse_identifier(token)
        if ident is not None:
            out.append(ident)
    return out


def is_bare_name(text: str) -> bool:
    """True when text is a plain local name without any namespace prefix."""
    return re.fullmatch(_NAME, text) is not None
