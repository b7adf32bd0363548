"""Domain data model: capability domains, benchmarks, scores, observations.

A capability domain groups related benchmarks that share a latent skill
factor; the domain capability proxy is the mean of normalized benchmark
scores and the target of the loss-to-capability law. All types here are
immutable after construction and safe to share across threads.
"""

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from capval.errors import ConfigError, DuplicateIdError, RangeError, SampleParseError

logger = logging.getLogger(__name__)

SYNTHESIS_MODES = ("full", "retrieval_only", "blank_filling")


@dataclass(frozen=True)
class ScoreKind:
    """How a raw benchmark score maps onto [0, 1]."""

    name: str
    lo: float = 0.0
    hi: float = 1.0


ACCURACY_FRACTION = ScoreKind("accuracy_fraction")
ACCURACY_PERCENT = ScoreKind("accuracy_percent")


def raw_with_bounds(lo: float, hi: float) -> ScoreKind:
    """Score kind for a raw metric known to live in [lo, hi]."""
    if not lo < hi:
        raise ConfigError(f"raw_with_bounds requires min < max, got [{lo}, {hi}]")
    return ScoreKind("raw_with_bounds", lo, hi)


def score_kind_from_json(obj) -> ScoreKind:
    """Parse a score kind from its config representation.

    Either a bare string ("accuracy_fraction" / "accuracy_percent") or
    {"kind": "raw_with_bounds", "min": lo, "max": hi}.
    """
    if isinstance(obj, str):
        if obj == "accuracy_fraction":
            return ACCURACY_FRACTION
        if obj == "accuracy_percent":
            return ACCURACY_PERCENT
        raise ConfigError(f"unknown score kind {obj!r}")
    if isinstance(obj, dict) and obj.get("kind") == "raw_with_bounds":
        return raw_with_bounds(float(obj["min"]), float(obj["max"]))
    raise ConfigError(f"unparseable score kind {obj!r}")


@dataclass(frozen=True)
class BenchmarkRef:
    id: str
    sample_path: str
    score_kind: ScoreKind = ACCURACY_FRACTION


@dataclass(frozen=True)
class DomainSpec:
    """One capability domain: its benchmarks, chance floor, synthesis mode."""

    id: str
    name: str
    benchmarks: tuple[BenchmarkRef, ...]
    gamma: float
    synthesis_mode: str = "full"

    def __post_init__(self):
        if not self.benchmarks:
            raise ConfigError(f"domain {self.id!r} has no benchmarks")
        ids = [b.id for b in self.benchmarks]
        if len(set(ids)) != len(ids):
            raise DuplicateIdError(f"domain {self.id!r} has duplicate benchmark ids")
        if not 0.0 <= self.gamma < 1.0:
            raise RangeError(f"domain {self.id!r}: gamma must be in [0, 1), got {self.gamma}")
        if self.synthesis_mode not in SYNTHESIS_MODES:
            raise ConfigError(
                f"domain {self.id!r}: synthesis_mode must be one of {SYNTHESIS_MODES}"
            )


@dataclass(frozen=True)
class BenchmarkSample:
    """One original benchmark question (full text including options)."""

    id: str
    benchmark_id: str
    text: str
    answer: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.text:
            raise SampleParseError(f"sample {self.id!r}: text is empty")


@dataclass(frozen=True)
class ModelObservation:
    """One model's per-domain loss and (optionally) capability proxy."""

    model_id: str
    domain_id: str
    loss: float
    capability: float | None = None
    compute: float | None = None
    tokens_seen: int | None = None
    stage: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.loss) and self.loss > 0):
            raise RangeError(
                f"observation ({self.model_id}, {self.domain_id}): loss must be positive, "
                f"got {self.loss}"
            )


def normalize_score(raw: float, kind: ScoreKind, benchmark: str = "?") -> float:
    """Map a raw benchmark score onto [0, 1] according to its kind."""
    if not math.isfinite(raw):
        raise RangeError(f"benchmark {benchmark!r}: raw score is not finite")
    if kind.name == "accuracy_fraction":
        if not 0.0 <= raw <= 1.0:
            raise RangeError(f"benchmark {benchmark!r}: fraction score {raw} outside [0, 1]")
        return raw
    if kind.name == "accuracy_percent":
        if not 0.0 <= raw <= 100.0:
            raise RangeError(f"benchmark {benchmark!r}: percent score {raw} outside [0, 100]")
        return raw / 100.0
    if kind.name == "raw_with_bounds":
        if not kind.lo <= raw <= kind.hi:
            raise RangeError(
                f"benchmark {benchmark!r}: raw score {raw} outside [{kind.lo}, {kind.hi}]"
            )
        return (raw - kind.lo) / (kind.hi - kind.lo)
    raise ConfigError(f"unknown score kind {kind.name!r}")


def estimate_domain_capability(scores) -> float:
    """Domain capability proxy: unweighted mean of normalized benchmark scores.

    The average is macro over benchmarks, not sample-weighted.
    """
    scores = list(scores)
    if not scores:
        raise RangeError("cannot estimate capability from an empty score list")
    for s in scores:
        if not 0.0 <= s <= 1.0:
            raise RangeError(f"normalized score {s} outside [0, 1]")
    return sum(scores) / len(scores)


def clamp_capability(value: float, gamma: float, context: str = "") -> float:
    """Clamp a capability proxy into [gamma, 1], warning when it was outside.

    Sub-chance scores occur empirically on small models; they are clamped
    rather than rejected.
    """
    if value < gamma:
        logger.warning("capability %.6g below floor %.3g%s; clamped", value, gamma,
                       f" ({context})" if context else "")
        return gamma
    if value > 1.0:
        logger.warning("capability %.6g above 1%s; clamped", value,
                       f" ({context})" if context else "")
        return 1.0
    return value


_REQUIRED_SAMPLE_FIELDS = ("id", "benchmark_id", "text", "answer")


def load_benchmark_samples(ref: BenchmarkRef) -> list[BenchmarkSample]:
    """Load a benchmark's samples from its JSONL file, preserving file order."""
    path = Path(ref.sample_path)
    if not path.exists():
        raise ConfigError(f"benchmark {ref.id!r}: sample file {path} does not exist")
    samples: list[BenchmarkSample] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SampleParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            missing = [k for k in _REQUIRED_SAMPLE_FIELDS if k not in obj]
            if missing:
                raise SampleParseError(f"{path}:{lineno}: missing fields {missing}")
            sid = str(obj["id"])
            if sid in seen:
                raise DuplicateIdError(
                    f"{path}:{lineno}: duplicate sample id {sid!r} (first seen on line {seen[sid]})"
                )
            seen[sid] = lineno
            try:
                samples.append(
                    BenchmarkSample(
                        id=sid,
                        benchmark_id=str(obj["benchmark_id"]),
                        text=str(obj["text"]),
                        answer=str(obj["answer"]),
                        metadata=dict(obj.get("metadata") or {}),
                    )
                )
            except SampleParseError as exc:
                raise SampleParseError(f"{path}:{lineno}: {exc}") from exc
    if not samples:
        logger.warning("benchmark %s: sample file %s is empty", ref.id, path)
    return samples


def load_domain_specs(path) -> list[DomainSpec]:
    """Load domain specs from a JSON config document.

    Relative benchmark sample paths are resolved against the config file's
    directory.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read domain config {path}: {exc}") from exc
    domains_obj = doc.get("domains") if isinstance(doc, dict) else doc
    if not isinstance(domains_obj, list) or not domains_obj:
        raise ConfigError(f"{path}: expected a non-empty 'domains' list")
    base = path.parent
    specs = []
    for d in domains_obj:
        benchmarks = tuple(
            BenchmarkRef(
                id=str(b["id"]),
                sample_path=str((base / b["sample_path"]).resolve())
                if not Path(b["sample_path"]).is_absolute()
                else str(b["sample_path"]),
                score_kind=score_kind_from_json(b.get("score_kind", "accuracy_fraction")),
            )
            for b in d.get("benchmarks", [])
        )
        specs.append(
            DomainSpec(
                id=str(d["id"]),
                name=str(d.get("name", d["id"])),
                benchmarks=benchmarks,
                gamma=float(d.get("gamma", 0.0)),
                synthesis_mode=str(d.get("synthesis_mode", "full")),
            )
        )
    if len({s.id for s in specs}) != len(specs):
        raise DuplicateIdError(f"{path}: duplicate domain ids")
    return specs


_WORD_RE = re.compile(r"\w+")


def tokenize(text: str) -> list[str]:
    """Lowercased unicode-word unigrams; shared by indexing and queries."""
    return _WORD_RE.findall(text.lower())
