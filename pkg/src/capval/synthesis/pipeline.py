"""Four-stage validation-set synthesis for one capability domain.

Stages: keyword extraction from benchmark samples, evidence retrieval per
knowledge factor, LLM relevance filtering, and scenario expansion into
knowledge-rich multiple-choice samples. Two ablation modes short-circuit
the pipeline: retrieval_only emits the filtered passages themselves;
blank_filling emits benchmark text with the correct answer substituted in.

Progress is journaled append-only so interrupted runs resume without
repeating completed LLM calls; with deterministic endpoints the final
sample set is identical either way.
"""

import hashlib
import json
import logging
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from capval.core import BenchmarkSample, DomainSpec, load_benchmark_samples
from capval.errors import CapvalError, ConfigError, OutputParseError
from capval.retrieval import CorpusPassage, EvidenceSet, retrieve
from capval.synthesis import parsers, templates
from capval.synthesis.client import llm_complete
from capval.synthesis.parsers import (
    Expansion,
    parse_expansion_output,
    parse_extraction_output,
    parse_filter_verdict,
    render_sample_text,
)

logger = logging.getLogger(__name__)


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class KnowledgeFactor:
    """A keyword/concept phrase distilled from one benchmark sample."""

    id: str
    text: str
    source_sample_id: str
    domain_id: str

    def __post_init__(self):
        if not self.text or self.text != self.text.strip():
            raise ValueError(f"factor {self.id!r}: text must be non-empty and trimmed")
        if parsers._is_prohibited_factor(self.text):
            raise ValueError(f"factor {self.id!r}: {self.text!r} is a prohibited keyword")


@dataclass(frozen=True)
class FilteredEvidence:
    """Judge verdicts over retrieved passages; kept = the yes-verdict ones."""

    factor: KnowledgeFactor
    kept: tuple[CorpusPassage, ...]
    verdicts: dict[str, str]

    def __post_init__(self):
        kept_ids = [p.passage_id for p in self.kept]
        yes_ids = [pid for pid, v in self.verdicts.items() if v == "yes"]
        if sorted(kept_ids) != sorted(yes_ids):
            raise ValueError("kept passages must be exactly the yes-verdict passages")


PROVENANCE_KEYS = ("mode", "llm_model_id", "prompt_hash", "timestamp")


@dataclass(frozen=True)
class ValidationSample:
    """One synthesized validation text with its full provenance chain."""

    id: str
    domain_id: str
    text: str
    factor_id: str
    evidence_ids: tuple[str, ...] = ()
    difficulty: str | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"sample {self.id!r}: text is empty")
        missing = [k for k in PROVENANCE_KEYS if k not in self.provenance]
        if missing:
            raise ValueError(f"sample {self.id!r}: provenance missing {missing}")
        if self.provenance["mode"] == "full" and "Answer:" not in self.text:
            raise ValueError(f"sample {self.id!r}: full-mode sample lacks an answered question")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "domain_id": self.domain_id,
            "text": self.text,
            "factor_id": self.factor_id,
            "evidence_ids": list(self.evidence_ids),
            "difficulty": self.difficulty,
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ValidationSample":
        return cls(
            id=obj["id"], domain_id=obj["domain_id"], text=obj["text"],
            factor_id=obj["factor_id"], evidence_ids=tuple(obj.get("evidence_ids", ())),
            difficulty=obj.get("difficulty"), provenance=dict(obj["provenance"]),
        )


@dataclass
class EndpointSuite:
    """The three LLM roles of the pipeline; any .complete(prompt) object fits."""

    extractor: object
    judge: object
    generator: object


@dataclass
class SynthesisConfig:
    hits_per_factor: int = 8
    sample_cap: int | None = None
    seed: int = 0
    split_questions: bool = False
    max_concurrency: int = 1
    journal_path: str | None = None
    clock: object = _utcnow
    retry_sleep: object = None  # injectable for tests; None = real sleep


@dataclass
class RunReport:
    domain_id: str
    mode: str
    samples_in: int = 0
    factors_total: int = 0
    factors_no_evidence: int = 0
    factors_all_filtered: int = 0
    factors_expanded: int = 0
    factors_failed: int = 0
    resumed_units: int = 0
    samples_out: int = 0
    failures: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SynthesisResult:
    samples: list[ValidationSample]
    report: RunReport


def samples_content_checksum(samples) -> str:
    """Checksum over the sample set with timestamps excluded.

    Timestamps live only in provenance and are the one permitted source of
    byte differences between otherwise identical runs.
    """
    h = hashlib.sha256()
    for s in samples:
        obj = s.to_json()
        obj["provenance"] = {k: v for k, v in obj["provenance"].items() if k != "timestamp"}
        h.update(json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def extract_knowledge(sample: BenchmarkSample, domain: DomainSpec, endpoint,
                      known: set[str] | None = None, template=None,
                      sleep=None, _raw: str | None = None) -> list[KnowledgeFactor]:
    """Distill a benchmark sample into knowledge factors via the extractor LLM.

    Factors already present in the domain-wide set (case-insensitive, via
    ``known``) are not re-added; ``known`` is updated in place.
    """
    template = template or templates.load_template(templates.EXTRACTION)
    raw = _raw if _raw is not None else llm_complete(
        endpoint, template.render(raw_exam=sample.text), sleep=sleep)
    texts = parse_extraction_output(raw)
    known = known if known is not None else set()
    factors: list[KnowledgeFactor] = []
    for text in texts:
        key = text.lower()
        if key in known:
            continue
        known.add(key)
        factors.append(KnowledgeFactor(
            id=f"{sample.id}.f{len(factors) + 1}",
            text=text,
            source_sample_id=sample.id,
            domain_id=domain.id,
        ))
    if not factors:
        logger.info("sample %s yielded no (new) knowledge factors; skipped", sample.id)
    return factors


def filter_relevance(evidence: EvidenceSet, factor: KnowledgeFactor, domain: DomainSpec,
                     endpoint, template=None, sleep=None) -> FilteredEvidence:
    """Judge each retrieved passage for strict relevance to the factor.

    One judge call per passage; an unparseable verdict gets one re-ask and
    then defaults to no (conservative: precision over recall). An empty
    kept set is legal and makes zero further LLM calls downstream.
    """
    template = template or templates.load_template(templates.FILTERING)
    verdicts: dict[str, str] = {}
    kept: list[CorpusPassage] = []
    for passage, _score in evidence.hits:
        prompt = template.render(knowledge_concept=factor.text,
                                 candidate_retrieved_content=passage.text)
        verdict = None
        for attempt in range(2):
            raw = llm_complete(endpoint, prompt, sleep=sleep)
            try:
                verdict = parse_filter_verdict(raw)
                break
            except OutputParseError as exc:
                logger.warning("unparseable verdict for passage %s (attempt %d): %s",
                               passage.passage_id, attempt + 1, exc)
        if verdict is None:
            verdict = "no"
        verdicts[passage.passage_id] = verdict
        if verdict == "yes":
            kept.append(passage)
    return FilteredEvidence(factor=factor, kept=tuple(kept), verdicts=verdicts)


def expand_scenarios(filtered: FilteredEvidence, factor: KnowledgeFactor, domain: DomainSpec,
                     endpoint, template=None, clock=None, split_questions: bool = False,
                     sleep=None, _raw: str | None = None) -> list[ValidationSample]:
    """Rewrite kept evidence into validation sample(s) via the generator LLM.

    By default all of a factor's questions aggregate into one sample so the
    evidence context stays attached; split_questions emits one per question.
    """
    if not filtered.kept:
        raise ValueError(f"factor {factor.id!r}: cannot expand an empty kept set")
    template = template or templates.load_template(templates.EXPANSION)
    clock = clock or _utcnow
    content = "\n\n".join(p.text for p in filtered.kept)
    raw = _raw if _raw is not None else llm_complete(
        endpoint, template.render(content=content), sleep=sleep)
    expansion = parse_expansion_output(raw)
    provenance = {
        "mode": "full",
        "llm_model_id": getattr(endpoint, "model", ""),
        "prompt_hash": template.sha256,
        "timestamp": clock(),
    }
    evidence_ids = tuple(p.passage_id for p in filtered.kept)
    if not split_questions:
        return [ValidationSample(
            id=f"{domain.id}.{factor.id}",
            domain_id=domain.id,
            text=render_sample_text(expansion),
            factor_id=factor.id,
            evidence_ids=evidence_ids,
            provenance=provenance,
        )]
    out = []
    for i, question in enumerate(expansion.questions, start=1):
        part = Expansion(concepts=expansion.concepts, expansions=expansion.expansions,
                         questions=(question,))
        out.append(ValidationSample(
            id=f"{domain.id}.{factor.id}.q{i}",
            domain_id=domain.id,
            text=render_sample_text(part),
            factor_id=factor.id,
            evidence_ids=evidence_ids,
            provenance=provenance,
        ))
    return out


def blank_fill_text(text: str, answer: str) -> str:
    """Substitute the correct answer into benchmark text.

    A bare option letter resolves to that option's content when the text
    carries matching option lines; the resolved answer then replaces a
    blank run, an existing answer line, or is appended.
    """
    resolved = answer.strip()
    m = re.fullmatch(r"([A-Za-z])\.?", resolved)
    if m:
        om = re.search(rf"^\s*{m.group(1).upper()}\.\s*(.+?)\s*$", text, re.MULTILINE)
        if om:
            resolved = om.group(1)
    if re.search(r"_{3,}", text):
        return re.sub(r"_{3,}", resolved, text, count=1)
    if re.search(r"(?im)^answer\s*[:：]", text):
        return re.sub(r"(?im)^(answer\s*[:：]\s*).*$", lambda mm: mm.group(1) + resolved,
                      text, count=1)
    return text.rstrip() + "\nAnswer: " + resolved


def _blank_fill_sample(sample: BenchmarkSample, domain: DomainSpec, clock) -> ValidationSample:
    return ValidationSample(
        id=f"{domain.id}.bf.{sample.id}",
        domain_id=domain.id,
        text=blank_fill_text(sample.text, sample.answer),
        factor_id=sample.id,
        evidence_ids=(),
        provenance={"mode": "blank_filling", "llm_model_id": "", "prompt_hash": "",
                    "timestamp": clock()},
    )


class _Journal:
    """Append-only JSONL progress journal; completed units are never redone."""

    def __init__(self, path: str | None):
        self.path = Path(path) if path else None
        self.begin: dict | None = None
        self.extracts: dict[str, list] = {}
        self.factors: dict[str, dict] = {}
        self.blanks: dict[str, dict] = {}
        self.ended = False
        if self.path and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    entry = json.loads(line)
                    kind = entry.get("kind")
                    if kind == "begin":
                        self.begin = entry
                    elif kind == "extract":
                        self.extracts[entry["sample_id"]] = entry["factors"]
                    elif kind == "factor":
                        self.factors[entry["factor_id"]] = entry
                    elif kind == "blank":
                        self.blanks[entry["sample_id"]] = entry["sample"]
                    elif kind == "end":
                        self.ended = True

    def append(self, entry: dict) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")


def _fingerprint(domain: DomainSpec, config: SynthesisConfig) -> str:
    obj = {
        "domain": domain.id,
        "mode": domain.synthesis_mode,
        "benchmarks": [b.id for b in domain.benchmarks],
        "hits_per_factor": config.hits_per_factor,
        "sample_cap": config.sample_cap,
        "seed": config.seed,
        "split_questions": config.split_questions,
    }
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


def _ordered_lazy_map(fn, items, workers: int):
    """Yield fn(item) in input order; parallel when workers > 1."""
    if workers <= 1 or len(items) <= 1:
        for item in items:
            yield fn(item)
        return
    with ThreadPoolExecutor(max_workers=workers) as ex:
        yield from ex.map(fn, items)


def synthesize_domain(domain: DomainSpec, index, endpoints: EndpointSuite | None,
                      config: SynthesisConfig | None = None) -> SynthesisResult:
    """Run the synthesis pipeline for one domain, resumably.

    full: extraction -> retrieval -> filtering -> expansion over the union
    of the domain's benchmark samples. retrieval_only: stop after
    filtering and emit the kept passages as samples (seeded cap applies).
    blank_filling: one sample per benchmark sample with the answer
    substituted in. Per-item failures are collected into the run report;
    only configuration errors abort.
    """
    config = config or SynthesisConfig()
    mode = domain.synthesis_mode
    report = RunReport(domain_id=domain.id, mode=mode)

    samples_in: list[BenchmarkSample] = []
    for ref in domain.benchmarks:
        samples_in.extend(load_benchmark_samples(ref))
    report.samples_in = len(samples_in)

    if mode in ("full", "retrieval_only"):
        if index is None:
            raise ConfigError(f"domain {domain.id!r}: mode {mode} requires a corpus index")
        if endpoints is None or endpoints.extractor is None or endpoints.judge is None:
            raise ConfigError(f"domain {domain.id!r}: mode {mode} requires LLM endpoints")
        if mode == "full" and endpoints.generator is None:
            raise ConfigError(f"domain {domain.id!r}: mode full requires a generator endpoint")

    journal = _Journal(config.journal_path)
    fingerprint = _fingerprint(domain, config)
    if journal.begin is not None:
        if journal.begin.get("fingerprint") != fingerprint:
            raise ConfigError(
                f"journal {config.journal_path} was written under a different "
                f"domain/config; refusing to resume")
    else:
        journal.append({"kind": "begin", "domain": domain.id, "mode": mode,
                        "fingerprint": fingerprint})

    if mode == "blank_filling":
        samples_out = _run_blank_filling(samples_in, domain, config, journal, report)
    else:
        samples_out = _run_llm_modes(samples_in, domain, index, endpoints, config,
                                     journal, report, mode)

    report.samples_out = len(samples_out)
    if not journal.ended:
        journal.append({"kind": "end", "samples_out": len(samples_out)})
    return SynthesisResult(samples=samples_out, report=report)


def _run_blank_filling(samples_in, domain, config, journal, report):
    out: list[ValidationSample] = []
    for sample in samples_in:
        if sample.id in journal.blanks:
            out.append(ValidationSample.from_json(journal.blanks[sample.id]))
            report.resumed_units += 1
            continue
        vs = _blank_fill_sample(sample, domain, config.clock)
        journal.append({"kind": "blank", "sample_id": sample.id, "sample": vs.to_json()})
        out.append(vs)
    return out


def _run_llm_modes(samples_in, domain, index, endpoints, config, journal, report, mode):
    extraction_template = templates.load_template(templates.EXTRACTION)
    filtering_template = templates.load_template(templates.FILTERING)
    expansion_template = templates.load_template(templates.EXPANSION)
    source_texts = {s.text for s in samples_in}

    # stage 1: extraction, fanned out over samples not yet journaled
    todo = [s for s in samples_in if s.id not in journal.extracts]
    report.resumed_units += len(samples_in) - len(todo)

    def complete_extraction(sample):
        try:
            return llm_complete(endpoints.extractor,
                                extraction_template.render(raw_exam=sample.text),
                                sleep=config.retry_sleep)
        except CapvalError as exc:
            return exc

    raw_by_id: dict[str, object] = {}
    for sample, raw in zip(todo, _ordered_lazy_map(complete_extraction, todo,
                                                   config.max_concurrency)):
        raw_by_id[sample.id] = raw

    known: set[str] = set()
    factors: list[KnowledgeFactor] = []
    for sample in samples_in:
        if sample.id in journal.extracts:
            for fid, text in journal.extracts[sample.id]:
                known.add(text.lower())
                factors.append(KnowledgeFactor(id=fid, text=text,
                                               source_sample_id=sample.id,
                                               domain_id=domain.id))
            continue
        raw = raw_by_id[sample.id]
        if isinstance(raw, Exception):
            report.failures.append(f"extract {sample.id}: {raw}")
            continue  # not journaled: retried on resume
        try:
            new = extract_knowledge(sample, domain, endpoints.extractor,
                                    known=known, template=extraction_template, _raw=raw)
        except OutputParseError as exc:
            report.failures.append(f"extract {sample.id}: {exc}")
            continue
        journal.append({"kind": "extract", "sample_id": sample.id,
                        "factors": [[f.id, f.text] for f in new]})
        factors.extend(new)
    report.factors_total = len(factors)

    # stages 2-4: retrieve / filter / expand, fanned out over factors
    def process_factor(factor: KnowledgeFactor) -> dict:
        try:
            evidence = retrieve(index, factor.text, k=config.hits_per_factor,
                                factor_id=factor.id)
            if not evidence.hits:
                return {"kind": "factor", "factor_id": factor.id, "status": "no_evidence",
                        "evidence_ids": [], "verdicts": {}, "samples": []}
            filtered = filter_relevance(evidence, factor, domain, endpoints.judge,
                                        template=filtering_template, sleep=config.retry_sleep)
            if not filtered.kept:
                return {"kind": "factor", "factor_id": factor.id, "status": "all_filtered",
                        "evidence_ids": [], "verdicts": dict(filtered.verdicts), "samples": []}
            if mode == "retrieval_only":
                samples = [_passage_sample(domain, factor, p, filtering_template,
                                           endpoints.judge, config.clock)
                           for p in filtered.kept]
            else:
                samples = expand_scenarios(filtered, factor, domain, endpoints.generator,
                                           template=expansion_template, clock=config.clock,
                                           split_questions=config.split_questions,
                                           sleep=config.retry_sleep)
                samples = [s for s in samples if s.text not in source_texts]
            return {"kind": "factor", "factor_id": factor.id, "status": "expanded",
                    "evidence_ids": [p.passage_id for p in filtered.kept],
                    "verdicts": dict(filtered.verdicts),
                    "samples": [s.to_json() for s in samples]}
        except CapvalError as exc:
            return {"kind": "factor", "factor_id": factor.id, "status": "failed",
                    "error": str(exc)}

    todo_factors = [f for f in factors if f.id not in journal.factors]
    report.resumed_units += len(factors) - len(todo_factors)
    fresh: dict[str, dict] = {}
    for factor, entry in zip(todo_factors,
                             _ordered_lazy_map(process_factor, todo_factors,
                                               config.max_concurrency)):
        if entry["status"] != "failed":
            journal.append(entry)  # failures are retried on resume
        fresh[factor.id] = entry

    out: list[ValidationSample] = []
    for factor in factors:
        entry = journal.factors.get(factor.id) or fresh[factor.id]
        status = entry["status"]
        if status == "no_evidence":
            report.factors_no_evidence += 1
        elif status == "all_filtered":
            report.factors_all_filtered += 1
        elif status == "failed":
            report.factors_failed += 1
            report.failures.append(f"factor {factor.id}: {entry.get('error')}")
            continue
        else:
            report.factors_expanded += 1
        out.extend(ValidationSample.from_json(s) for s in entry.get("samples", []))

    if mode == "retrieval_only":
        out = _dedup_and_cap(out, config)
    return out


def _passage_sample(domain, factor, passage, filtering_template, judge, clock):
    return ValidationSample(
        id=f"{domain.id}.ro.{factor.id}.{passage.passage_id}",
        domain_id=domain.id,
        text=passage.text,
        factor_id=factor.id,
        evidence_ids=(passage.passage_id,),
        provenance={"mode": "retrieval_only",
                    "llm_model_id": getattr(judge, "model", ""),
                    "prompt_hash": filtering_template.sha256,
                    "timestamp": clock()},
    )


def _dedup_and_cap(samples: list[ValidationSample], config: SynthesisConfig):
    """Drop repeat passages across factors, then apply the seeded sample cap."""
    seen: set[str] = set()
    unique: list[ValidationSample] = []
    for s in samples:
        key = s.evidence_ids[0] if s.evidence_ids else s.id
        if key in seen:
            continue
        seen.add(key)
        unique.append(s)
    if config.sample_cap is not None and len(unique) > config.sample_cap:
        rng = random.Random(config.seed)
        keep = sorted(rng.sample(range(len(unique)), config.sample_cap))
        unique = [unique[i] for i in keep]
    return unique


def write_validation_set(samples, path) -> None:
    """Write one domain's validation set as JSONL, one sample per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


def read_validation_set(path) -> list[ValidationSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(ValidationSample.from_json(json.loads(line)))
    return out
