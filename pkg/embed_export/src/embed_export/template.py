"""Prompt templates: a pattern with exactly one slot for the class name."""

from __future__ import annotations

import string
from dataclasses import dataclass

DEFAULT_PATTERN = "a point cloud of {} in an outdoor scene"


@dataclass(frozen=True)
class PromptTemplate:
    pattern: str = DEFAULT_PATTERN

    def __post_init__(self):
        fields = [f for _, f, _, _ in string.Formatter().parse(self.pattern)
                  if f is not None]
        if len(fields) != 1 or fields[0] != "":
            raise ValueError(
                f"pattern needs exactly one {{}} placeholder: {self.pattern!r}")

    def fill(self, class_name: str) -> str:
        return self.pattern.format(class_name)
