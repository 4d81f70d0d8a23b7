"""Prompt templates with bracketed option groups, e.g.
"A [photo | picture] of a Bengal cat, in a sunny garden".
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import InvalidTemplate

_TOKEN_RE = re.compile(r"[A-Za-z0-9']+")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    class_name: str
    text: str
    version: int = 0
    parent_version: int | None = None

    def __post_init__(self):
        validate_template(self.text)

    def with_text(self, text: str, bump: bool = True) -> "PromptTemplate":
        return PromptTemplate(id=self.id, class_name=self.class_name, text=text,
                              version=self.version + 1 if bump else self.version,
                              parent_version=self.version if bump else self.parent_version)

    def tokens(self) -> list[str]:
        return [t.lower() for t in _TOKEN_RE.findall(self.text)]

    def as_dict(self) -> dict:
        return {"id": self.id, "class_name": self.class_name, "text": self.text,
                "version": self.version, "parent_version": self.parent_version}


def validate_template(text: str) -> None:
    """Brackets must pair up without nesting and every group needs at least
    one non-empty option."""
    depth = 0
    start = None
    for i, ch in enumerate(text):
        if ch == "[":
            depth += 1
            if depth > 1:
                raise InvalidTemplate(f"nested '[' at position {i}")
            start = i
        elif ch == "]":
            depth -= 1
            if depth < 0:
                raise InvalidTemplate(f"unmatched ']' at position {i}")
            group = text[start + 1:i]
            options = [o.strip() for o in group.split("|")]
            if not options or any(not o for o in options):
                raise InvalidTemplate(f"empty option in group '[{group}]'")
    if depth != 0:
        raise InvalidTemplate("unmatched '['")


def parse_groups(text: str) -> list[list[str]]:
    """Option lists of each bracketed group, in order of appearance."""
    validate_template(text)
    return [[o.strip() for o in grp.split("|")]
            for grp in re.findall(r"\[([^\]]*)\]", text)]


def replace_group(text: str, group_index: int, options: list[str]) -> str:
    """Rewrite one option group, preserving everything else."""
    if not options or any(not o.strip() for o in options):
        raise InvalidTemplate("a group needs at least one non-empty option")
    spans = [m.span() for m in re.finditer(r"\[([^\]]*)\]", text)]
    lo, hi = spans[group_index]
    return text[:lo] + "[" + " | ".join(o.strip() for o in options) + "]" + text[hi:]
