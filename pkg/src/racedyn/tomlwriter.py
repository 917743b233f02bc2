"""Minimal TOML emission for the narrow document shapes this package
writes: tables of scalars and flat lists.  Reading uses the standard
parser; only writing needs a local implementation.
"""

from __future__ import annotations

import math


def _format_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"cannot emit non-finite float {value!r}")
        return repr(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    raise TypeError(f"cannot emit {type(value).__name__} as TOML")


def _format_value(value) -> str:
    if isinstance(value, (list, tuple)):
        inner = ", ".join(_format_scalar(v) for v in value)
        return f"[{inner}]"
    return _format_scalar(value)


def dumps(document: dict) -> str:
    """Serialize {key: scalar|list} and {table: {key: ...}} documents.

    Top-level scalars come first, then each nested dict as a [table];
    one level of nesting ([table.sub]) is supported because the bounds
    files use it.
    """
    lines = []

    def emit_table(table: dict, prefix: str) -> None:
        subtables = []
        for key, value in table.items():
            if isinstance(value, dict):
                subtables.append((key, value))
            else:
                lines.append(f"{key} = {_format_value(value)}")
        for key, sub in subtables:
            name = f"{prefix}.{key}" if prefix else key
            if lines:
                lines.append("")
            lines.append(f"[{name}]")
            emit_table(sub, name)

    emit_table(document, "")
    return "\n".join(lines) + "\n"


def dump(document: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(document))
