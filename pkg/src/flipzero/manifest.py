"""Plain-text key-value run manifests: one `key = value` pair per line,
`#` comments allowed, keys flat and dotted.  The manifest is the single
source of effective configuration for a run; flags override it and the
merged result is echoed back to disk so artifacts are self-describing.
"""

from __future__ import annotations

from pathlib import Path


def dumps(entries: dict) -> str:
    lines = []
    for key in sorted(entries):
        value = entries[key]
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"manifest line {lineno} is not `key = value`: {raw!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def write_manifest(path: str | Path, entries: dict) -> None:
    Path(path).write_text(dumps(entries))


def read_manifest(path: str | Path) -> dict[str, str]:
    return loads(Path(path).read_text())
