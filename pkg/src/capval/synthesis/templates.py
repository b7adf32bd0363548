"""Prompt template loading, rendering, and drift-detection hashing.

Templates ship as text files with ${var} placeholders; each rendered
prompt's template hash is recorded in sample provenance so prompt drift is
detectable after the fact.
"""

import hashlib
import string
from dataclasses import dataclass
from importlib import resources

EXTRACTION = "extraction"
FILTERING = "filtering"
EXPANSION = "expansion"


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str
    sha256: str

    def render(self, **variables) -> str:
        return string.Template(self.text).substitute(**variables)


def load_template(name: str) -> PromptTemplate:
    text = (resources.files("capval.synthesis") / "prompts" / f"{name}.txt").read_text(
        encoding="utf-8")
    return PromptTemplate(
        name=name,
        text=text,
        sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
    )
