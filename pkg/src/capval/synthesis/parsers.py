"""Deterministic parsers for each pipeline prompt's output contract.

Each LLM stage demands a fixed plain-text layout; these parsers accept
exactly that layout (case-insensitively where harmless) and reject
anything else, carrying the raw completion for audit. The canonical
sample serialization round-trips losslessly through the expansion parser.
"""

import logging
import re
from dataclasses import dataclass

from capval.errors import EmptyExpansionError, OutputParseError

logger = logging.getLogger(__name__)

MAX_FACTORS_PER_SAMPLE = 6

_EXTRACTION_HEADER_RE = re.compile(r"extraction\s+of\s+key\s+knowledge\s+words\s*[:：]?",
                                   re.IGNORECASE)
_NUMBERED_ITEM_RE = re.compile(r"^\s*\d+\s*[.、)．]\s*(\S.*?)\s*$")
_PURE_NUMBER_RE = re.compile(r"^[+\-±]?[\d\s.,/:%°\-]+$")
_VERDICT_RE = re.compile(r"judgment\s+result\s*[:：]?\s*\[\s*([^\]]*?)\s*\]", re.IGNORECASE)
_BARE_VERDICT_RE = re.compile(r"^\s*\[\s*([^\]]*?)\s*\]\s*$")
_CONCEPTS_HEADER_RE = re.compile(r"^\s*key\s+knowledge\s+concepts\s*[:：]?\s*$", re.IGNORECASE)
_EXPANSION_HEADER_RE = re.compile(r"^\s*related\s+knowledge\s+expansion\s*[:：]?\s*$",
                                  re.IGNORECASE)
_QUESTION_BLOCK_RE = re.compile(r"<Question_(\d+)_Start>(.*?)<Question_\1_End>",
                                re.IGNORECASE | re.DOTALL)
_OPTION_LINE_RE = re.compile(r"^\s*([A-G])\.\s+(.*\S)\s*$")
_ANSWER_LINE_RE = re.compile(r"^\s*answer\s*[:：]\s*(.*\S)\s*$", re.IGNORECASE)
_ANALYSIS_LINE_RE = re.compile(r"^\s*analysis\s*[:：]\s*(.*)$", re.IGNORECASE)


def _is_prohibited_factor(item: str) -> bool:
    """Bare numbers and single characters are never valid knowledge factors."""
    if len(item) <= 1:
        return True
    return bool(_PURE_NUMBER_RE.fullmatch(item))


def parse_extraction_output(raw: str, max_items: int = MAX_FACTORS_PER_SAMPLE) -> list[str]:
    """Parse the numbered keyword list that follows the extraction header.

    Prohibited items (purely numeric, single character) are dropped; at
    most max_items survivors are kept even if the model overproduces.
    """
    m = _EXTRACTION_HEADER_RE.search(raw)
    if m is None:
        raise OutputParseError("extraction output lacks the keyword-list header", raw=raw)
    items: list[str] = []
    for line in raw[m.end():].splitlines():
        im = _NUMBERED_ITEM_RE.match(line)
        if im is None:
            continue
        item = im.group(1).strip()
        if not item or _is_prohibited_factor(item):
            logger.debug("dropping prohibited keyword %r", item)
            continue
        items.append(item)
    return items[:max_items]


def parse_filter_verdict(raw: str) -> str:
    """Extract the bracketed Yes/No after the judgment label; returns 'yes'/'no'."""
    m = _VERDICT_RE.search(raw)
    if m is None:
        m = _BARE_VERDICT_RE.match(raw.strip())
    if m is None:
        raise OutputParseError("no bracketed judgment found in verdict output", raw=raw)
    token = m.group(1).strip().lower()
    if token not in ("yes", "no"):
        raise OutputParseError(f"judgment token must be Yes or No, got {token!r}", raw=raw)
    return token


@dataclass(frozen=True)
class QuestionBlock:
    """One multiple-choice question with its answer and optional analysis."""

    text: str
    options: tuple[str, ...]
    answer: str
    analysis: str = ""


@dataclass(frozen=True)
class Expansion:
    """Structured form of one scenario-expansion completion."""

    concepts: tuple[str, ...] = ()
    expansions: tuple[str, ...] = ()
    questions: tuple[QuestionBlock, ...] = ()


def _parse_numbered_sections(body: str) -> tuple[list[str], list[str]]:
    """Collect the concept and expansion numbered lists from the body text."""
    concepts: list[str] = []
    expansions: list[str] = []
    current: list[str] | None = None
    for line in body.splitlines():
        if _CONCEPTS_HEADER_RE.match(line):
            current = concepts
            continue
        if _EXPANSION_HEADER_RE.match(line):
            current = expansions
            continue
        if current is None:
            continue
        im = _NUMBERED_ITEM_RE.match(line)
        if im is not None:
            current.append(im.group(1).strip())
        elif line.strip() and current:
            # wrapped continuation of the previous item
            current[-1] = current[-1] + " " + line.strip()
        elif not line.strip():
            continue
    return concepts, expansions


def _parse_question_block(body: str) -> QuestionBlock | None:
    text_lines: list[str] = []
    options: list[str] = []
    answer = ""
    analysis_lines: list[str] = []
    in_analysis = False
    for line in body.strip("\n").splitlines():
        if in_analysis:
            analysis_lines.append(line)
            continue
        am = _ANSWER_LINE_RE.match(line)
        if am is not None:
            answer = am.group(1).strip()
            continue
        nm = _ANALYSIS_LINE_RE.match(line)
        if nm is not None:
            in_analysis = True
            analysis_lines.append(nm.group(1))
            continue
        om = _OPTION_LINE_RE.match(line)
        if om is not None:
            options.append(f"{om.group(1)}. {om.group(2)}")
            continue
        if not options and line.strip():
            text_lines.append(line.rstrip())
    if not answer:
        return None
    return QuestionBlock(
        text="\n".join(text_lines).strip(),
        options=tuple(options),
        answer=answer,
        analysis="\n".join(analysis_lines).strip(),
    )


def parse_expansion_output(raw: str) -> Expansion:
    """Parse concepts, expansions, and delimited question blocks.

    Question blocks missing an answer line are dropped with a warning;
    zero surviving blocks is an error because a validation sample must
    carry at least one answered question.
    """
    first_block = raw.find("<Question")
    head = raw if first_block < 0 else raw[:first_block]
    concepts, expansions = _parse_numbered_sections(head)

    questions: list[QuestionBlock] = []
    for m in _QUESTION_BLOCK_RE.finditer(raw):
        block = _parse_question_block(m.group(2))
        if block is None:
            logger.warning("dropping question block %s: no answer line", m.group(1))
            continue
        questions.append(block)
    if not questions:
        raise EmptyExpansionError("expansion output contains no valid question blocks", raw=raw)
    return Expansion(
        concepts=tuple(concepts),
        expansions=tuple(expansions),
        questions=tuple(questions),
    )


def render_sample_text(expansion: Expansion) -> str:
    """Serialize an expansion into the canonical validation-sample layout.

    The layout is the parser's own input format, so
    parse_expansion_output(render_sample_text(e)) reproduces e.
    """
    parts: list[str] = []
    if expansion.concepts:
        parts.append("Key Knowledge Concepts:")
        parts.extend(f"{i}. {c}" for i, c in enumerate(expansion.concepts, start=1))
        parts.append("")
    if expansion.expansions:
        parts.append("Related Knowledge Expansion:")
        parts.extend(f"{i}. {c}" for i, c in enumerate(expansion.expansions, start=1))
        parts.append("")
    for i, q in enumerate(expansion.questions, start=1):
        parts.append(f"<Question_{i}_Start>")
        if q.text:
            parts.append(q.text)
        parts.extend(q.options)
        parts.append(f"Answer: {q.answer}")
        if q.analysis:
            parts.append(f"Analysis: {q.analysis}")
        parts.append(f"<Question_{i}_End>")
        parts.append("")
    return "\n".join(parts).strip() + "\n"
