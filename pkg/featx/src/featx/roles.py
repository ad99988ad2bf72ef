"""Class-role table: which of the 1000 recognizer classes are food or
food containers.

The network's vocabulary fixes only the class names; which ones count as
food is a curation decision, so it ships as an editable sidecar file of
"NAME<TAB>ROLE" lines (unlisted classes default to "other").  The bundled
sidecar marks 61 food and 6 container classes.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Sequence

VALID_ROLES = ("food", "container", "other")


def load_roles(
    class_names: Sequence[str], path: str | Path | None = None
) -> tuple[str, ...]:
    """Role per class, aligned with ``class_names``.

    ``path`` overrides the bundled sidecar.  Unknown class names in the
    sidecar are rejected so typos cannot silently drop a role.
    """
    if path is None:
        text = resources.files("featx.data").joinpath("imagenet_roles.tsv").read_text(
            encoding="utf-8"
        )
    else:
        text = Path(path).read_text(encoding="utf-8")

    by_name: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"roles line {lineno}: expected 'NAME<TAB>ROLE'")
        name, role = parts[0], parts[1].strip()
        if role not in VALID_ROLES:
            raise ValueError(f"roles line {lineno}: unknown role {role!r}")
        if name not in class_names:
            raise ValueError(f"roles line {lineno}: unknown class {name!r}")
        by_name[name] = role
    return tuple(by_name.get(name, "other") for name in class_names)
