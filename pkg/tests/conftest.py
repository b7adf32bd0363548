"""Shared fixtures: deterministic mock endpoints and toy corpora/benchmarks."""

import json
import re

import pytest

from capval.core import BenchmarkRef, DomainSpec
from capval.errors import TransientEndpointError
from capval.retrieval import IndexConfig, build_index

_CONCEPT_RE = re.compile(r"<Knowledge_Concept_Start>\n(.*?)\n<Knowledge_Concept_End>", re.S)
_CANDIDATE_RE = re.compile(
    r"<Candidate_Relevant_Text_Start>\n(.*?)\n<Candidate_Relevant_Text_End>", re.S)
_MATERIAL_RE = re.compile(r"<Knowledge_Material_Start>\n(.*?)\n<Knowledge_Material_End>", re.S)


class MockLlm:
    """Scripted chat endpoint: replies keyed off the prompt's variable text.

    extraction: callable(question_text) -> reply (or dict keyed by a
    substring of the question). verdict: callable(concept, passage) ->
    "yes"/"no". expansion: callable(material) -> reply.
    """

    def __init__(self, extraction=None, verdict=None, expansion=None,
                 model="mock-llm", max_attempts=3, fail_first=0):
        self.extraction = extraction
        self.verdict = verdict
        self.expansion = expansion
        self.model = model
        self.max_attempts = max_attempts
        self.fail_first = fail_first
        self.calls = []

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        if self.fail_first > 0:
            self.fail_first -= 1
            raise TransientEndpointError("scripted transient failure")
        m = _CONCEPT_RE.search(prompt)
        if m is not None:
            concept = m.group(1)
            passage = _CANDIDATE_RE.search(prompt).group(1)
            verdict = self.verdict(concept, passage) if self.verdict else "yes"
            return f"Judgment Result: [{verdict.capitalize()}]"
        m = _MATERIAL_RE.search(prompt)
        if m is not None:
            return self.expansion(m.group(1))
        # extraction prompt: the filled question follows the last header
        question = prompt.rsplit("Lesson Plan Question:", 1)[-1]
        question = question.rsplit("Output:", 1)[0].strip()
        if callable(self.extraction):
            return self.extraction(question)
        if isinstance(self.extraction, dict):
            for key, reply in self.extraction.items():
                if key in question:
                    return reply
        raise AssertionError(f"mock has no scripted reply for question {question[:60]!r}")


def extraction_reply(keywords) -> str:
    lines = ["Extraction of key knowledge words:"]
    lines += [f"{i}. {kw}" for i, kw in enumerate(keywords, start=1)]
    return "\n".join(lines)


def expansion_reply(material: str, n_questions: int = 2) -> str:
    """Canonical-format expansion derived deterministically from the material."""
    words = material.split()
    first_words = " ".join(words[4:8] if len(words) > 8 else words[:4])
    lines = [
        "Key Knowledge Concepts:",
        f"1. Core mechanism of {first_words}",
        "2. Typical presentation and terminology",
        "3. Common points of confusion",
        "",
        "Related Knowledge Expansion:",
        f"1. Broader context around {first_words}",
        "2. Related quantitative relationships",
        "",
    ]
    answers = ["B", "C", "A", "D"]
    for i in range(1, n_questions + 1):
        lines += [
            f"<Question_{i}_Start>",
            f"Which statement about {first_words} (variant {i}) is correct?",
            "A. The first distractor statement",
            "B. The statement matching the source material",
            "C. A plausible but wrong alternative",
            "D. An unrelated claim",
            f"Answer: {answers[(i - 1) % len(answers)]}",
            f"Analysis: Variant {i} follows directly from the source material.",
            f"<Question_{i}_End>",
            "",
        ]
    return "\n".join(lines)


def write_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path


TOY_INDEX_CONFIG = IndexConfig(target_chars=220, min_chars=30, max_chars=600)


@pytest.fixture
def toy_corpus(tmp_path):
    """Builds a 12-passage corpus; each passage is one line of a shard file.

    Passage topics are crafted so that factor keywords hit exactly the
    intended passages.
    """
    topics = [
        "sleep apnea",
        "fluoride toothpaste",
        "calcium carbonate",
        "newton second law",
        "photosynthesis reaction",
        "marginal utility",
        "glacier erosion",
        "binary search",
        "supply demand",
        "cell membrane",
        "roman aqueduct",
        "sonnet meter",
    ]
    lines = []
    for topic in topics:
        lines.append(
            f"This passage teaches about {topic} in depth. It explains how {topic} works, "
            f"why {topic} matters in practice, and where {topic} is typically observed."
        )
    shard_a = tmp_path / "corpus" / "shard_a.txt"
    shard_b = tmp_path / "corpus" / "shard_b.txt"
    shard_a.parent.mkdir(parents=True, exist_ok=True)
    shard_a.write_text("\n".join(lines[:6]) + "\n", encoding="utf-8")
    shard_b.write_text("\n".join(lines[6:]) + "\n", encoding="utf-8")
    index_dir = tmp_path / "index"
    index = build_index([shard_a, shard_b], index_dir, TOY_INDEX_CONFIG)
    assert index.passage_count == 12
    return {"index": index, "index_dir": index_dir, "shards": [shard_a, shard_b],
            "topics": topics}


@pytest.fixture
def toy_domain(tmp_path):
    """2 benchmarks x 2 samples with unique topic words for mock routing."""
    rows_a = [
        {"id": "qa1", "benchmark_id": "bench_a",
         "text": "Which condition involves pauses in breathing during sleep?\n"
                 "A. Narcolepsy\nB. Sleep apnea\nC. Insomnia\nAnswer: B",
         "answer": "B", "metadata": {}},
        {"id": "qa2", "benchmark_id": "bench_a",
         "text": "What ingredient in toothpaste helps prevent cavities?\n"
                 "A. Fluoride\nB. Sugar\nAnswer: A",
         "answer": "A", "metadata": {}},
    ]
    rows_b = [
        {"id": "qb1", "benchmark_id": "bench_b",
         "text": "Vinegar dissolves which compound found in lime scale?\n"
                 "A. Calcium carbonate\nB. Sodium chloride\nAnswer: A",
         "answer": "A", "metadata": {}},
        {"id": "qb2", "benchmark_id": "bench_b",
         "text": "Force equals mass times acceleration is which law?\n"
                 "A. First law\nB. Second law\nAnswer: B",
         "answer": "B", "metadata": {}},
    ]
    path_a = write_jsonl(tmp_path / "bench" / "bench_a.jsonl", rows_a)
    path_b = write_jsonl(tmp_path / "bench" / "bench_b.jsonl", rows_b)
    domain = DomainSpec(
        id="toy",
        name="Toy knowledge",
        benchmarks=(
            BenchmarkRef(id="bench_a", sample_path=str(path_a)),
            BenchmarkRef(id="bench_b", sample_path=str(path_b)),
        ),
        gamma=0.25,
        synthesis_mode="full",
    )
    # two factors per sample; factors chosen to hit exactly one corpus topic each
    extraction_map = {
        "pauses in breathing": extraction_reply(["sleep apnea", "glacier erosion"]),
        "toothpaste": extraction_reply(["fluoride toothpaste", "binary search"]),
        "lime scale": extraction_reply(["calcium carbonate", "supply demand"]),
        "mass times acceleration": extraction_reply(["newton second law", "sonnet meter"]),
    }
    return {"domain": domain, "extraction_map": extraction_map,
            "sample_rows": rows_a + rows_b}


def make_toy_endpoints(toy_domain_data, verdict=None, expansion=None, **kwargs):
    from capval.synthesis import EndpointSuite

    llm = MockLlm(
        extraction=toy_domain_data["extraction_map"],
        verdict=verdict or (lambda concept, passage: "yes" if concept.split()[0] in passage else "no"),
        expansion=expansion or expansion_reply,
        **kwargs,
    )
    return EndpointSuite(extractor=llm, judge=llm, generator=llm), llm
