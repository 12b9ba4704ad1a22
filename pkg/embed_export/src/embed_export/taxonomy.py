"""Read class names (in order) from a taxonomy file.

The format is line-oriented `key = value` with `#` comments; the only key
this tool needs is `names`, a comma-separated ordered list.
"""

from __future__ import annotations

from pathlib import Path


def read_class_names(path: str | Path) -> list[str]:
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line or "=" not in line:
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "names":
            names = [n.strip() for n in value.split(",") if n.strip()]
            if not names:
                raise ValueError(f"{path}: empty names list")
            return names
    raise ValueError(f"{path}: no `names = ...` line")
