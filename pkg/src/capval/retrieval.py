"""Local corpus index: passage chunking, persistent inverted index, BM25 search.

Evidence retrieval maps a knowledge-factor phrase to ranked corpus
passages. Documents are split into roughly fixed-size passages at sentence
boundaries, indexed once (write-once, then immutable), and queried with
BM25 over lowercase unicode-word unigrams. Builds are deterministic for
fixed inputs and config: rebuilding yields byte-identical data files.
"""

import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from capval import kernels
from capval.core import tokenize
from capval.errors import ConfigError, IndexBuildError
from capval.kernels import bm25_scores

logger = logging.getLogger(__name__)

FORMAT_TAG = "capval-index-v1"

MANIFEST_FILE = "manifest.json"
VOCAB_FILE = "vocab.json"
PASSAGES_FILE = "passages.jsonl"
_ARRAY_FILES = ("postings_ids.npy", "postings_tfs.npy", "postings_offsets.npy", "passage_lens.npy")


@dataclass(frozen=True)
class IndexConfig:
    """Chunking bounds and BM25 parameters.

    Passages target ~1024 chars split at sentence boundaries, within
    [min_chars, max_chars]; fragments below min_chars merge into their
    neighbor or are dropped.
    """

    target_chars: int = 1024
    min_chars: int = 200
    max_chars: int = 2000
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if not 0 < self.min_chars <= self.target_chars <= self.max_chars:
            raise ConfigError(
                f"chunking bounds must satisfy 0 < min <= target <= max, got "
                f"({self.min_chars}, {self.target_chars}, {self.max_chars})"
            )

    def to_json(self) -> dict:
        return {
            "target_chars": self.target_chars,
            "min_chars": self.min_chars,
            "max_chars": self.max_chars,
            "k1": self.k1,
            "b": self.b,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "IndexConfig":
        return cls(**obj)


@dataclass(frozen=True)
class CorpusPassage:
    """One indexed passage with its provenance span in the shard document."""

    passage_id: str
    shard: str
    text: str
    char_span: tuple[int, int]


@dataclass(frozen=True)
class EvidenceSet:
    """Ranked retrieval hits for one query; scores strictly non-increasing."""

    query: str
    factor_id: str
    hits: tuple[tuple[CorpusPassage, float], ...]

    def __post_init__(self):
        scores = [s for _, s in self.hits]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise IndexBuildError("evidence hits are not sorted by score")
        ids = [p.passage_id for p, _ in self.hits]
        if len(set(ids)) != len(ids):
            raise IndexBuildError("evidence hits contain duplicate passage ids")

    def passages(self) -> list[CorpusPassage]:
        return [p for p, _ in self.hits]


_SENTENCE_END_RE = re.compile(r"[.!?。！？][\)\"'”’]*\s+|\n+")


def split_passages(text: str, config: IndexConfig) -> list[tuple[int, int]]:
    """Split a document into passage char spans at sentence boundaries.

    Greedy packing toward target_chars; spans never exceed max_chars
    (oversized sentences are hard-split); trailing fragments below
    min_chars merge into the previous span when that stays within bounds,
    otherwise they are dropped.
    """
    boundaries = [0]
    for m in _SENTENCE_END_RE.finditer(text):
        boundaries.append(m.end())
    if boundaries[-1] != len(text):
        boundaries.append(len(text))

    # sentence spans, hard-splitting any single sentence beyond max_chars
    sentences: list[tuple[int, int]] = []
    for a, b in zip(boundaries, boundaries[1:]):
        while b - a > config.max_chars:
            sentences.append((a, a + config.max_chars))
            a += config.max_chars
        if b > a:
            sentences.append((a, b))

    spans: list[tuple[int, int]] = []
    cur_start = None
    cur_end = None
    for a, b in sentences:
        if cur_start is None:
            cur_start, cur_end = a, b
            continue
        if b - cur_start > config.target_chars and cur_end - cur_start >= config.min_chars:
            spans.append((cur_start, cur_end))
            cur_start, cur_end = a, b
        elif b - cur_start > config.max_chars:
            spans.append((cur_start, cur_end))
            cur_start, cur_end = a, b
        else:
            cur_end = b
    if cur_start is not None:
        if cur_end - cur_start >= config.min_chars:
            spans.append((cur_start, cur_end))
        elif spans and cur_end - spans[-1][0] <= config.max_chars:
            spans[-1] = (spans[-1][0], cur_end)
        # else: fragment too small to stand alone or merge; dropped

    # trim spans to non-whitespace content
    trimmed = []
    for a, b in spans:
        seg = text[a:b]
        lead = len(seg) - len(seg.lstrip())
        trail = len(seg) - len(seg.rstrip())
        a2, b2 = a + lead, b - trail
        if b2 - a2 >= config.min_chars:
            trimmed.append((a2, b2))
    return trimmed


def _normalize_for_dedup(text: str) -> str:
    return " ".join(text.lower().split())


def _iter_shard_documents(path: Path):
    """Yield (doc_key, text) for a shard: one doc for .txt, one per JSONL line."""
    if path.suffix.lower() in (".jsonl", ".ndjson"):
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise IndexBuildError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
                if "text" not in obj:
                    raise IndexBuildError(f"{path}:{lineno}: missing 'text' field")
                yield f"{path.name}:{lineno}", str(obj["text"])
    else:
        yield path.name, path.read_text(encoding="utf-8")


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Index:
    """Write-once BM25 index over corpus passages; reads are thread-safe."""

    def __init__(self, config, passages, terms, postings_ids, postings_tfs,
                 postings_offsets, passage_lens, doc_count):
        self.config = config
        self.passages = passages
        self.terms = terms
        self.term_rank = {t: i for i, t in enumerate(terms)}
        self.postings_ids = postings_ids
        self.postings_tfs = postings_tfs
        self.postings_offsets = postings_offsets
        self.passage_lens = passage_lens
        self.doc_count = doc_count
        self.avgdl = float(passage_lens.mean()) if len(passage_lens) else 0.0

    @property
    def passage_count(self) -> int:
        return len(self.passages)

    @property
    def term_count(self) -> int:
        return len(self.terms)

    def idf(self, term: str) -> float:
        rank = self.term_rank.get(term)
        if rank is None:
            return 0.0
        df = int(self.postings_offsets[rank + 1] - self.postings_offsets[rank])
        return math.log((self.passage_count - df + 0.5) / (df + 0.5) + 1.0)


def build_index(shard_paths, out_dir, config: IndexConfig | None = None,
                force: bool = False) -> Index:
    """Chunk shards into passages, build the inverted index, persist it.

    Deterministic for fixed inputs and config; refuses to overwrite an
    existing index directory unless force is set.
    """
    config = config or IndexConfig()
    shard_paths = [Path(p) for p in shard_paths]
    if not shard_paths:
        raise ConfigError("no corpus shards given")
    for p in shard_paths:
        if not p.exists():
            raise ConfigError(f"corpus shard {p} does not exist")
    out_dir = Path(out_dir)
    if out_dir.exists() and (out_dir / MANIFEST_FILE).exists() and not force:
        raise ConfigError(f"index directory {out_dir} already exists; pass force to rebuild")
    out_dir.mkdir(parents=True, exist_ok=True)

    passages: list[CorpusPassage] = []
    seen_norm: set[str] = set()
    doc_count = 0
    counter = 0
    for shard in shard_paths:
        try:
            docs = list(_iter_shard_documents(shard))
        except OSError as exc:
            raise IndexBuildError(f"cannot read shard {shard}: {exc}") from exc
        for doc_key, text in docs:
            doc_count += 1
            for a, b in split_passages(text, config):
                counter += 1
                ptext = text[a:b]
                norm = _normalize_for_dedup(ptext)
                if norm in seen_norm:
                    continue
                seen_norm.add(norm)
                passages.append(
                    CorpusPassage(
                        passage_id=f"p{counter:08d}",
                        shard=doc_key,
                        text=ptext,
                        char_span=(a, b),
                    )
                )
    if not passages:
        raise IndexBuildError("corpus produced zero passages; nothing to index")

    postings: dict[str, list[tuple[int, int]]] = {}
    passage_lens = np.zeros(len(passages), dtype=np.int32)
    for idx, passage in enumerate(passages):
        tokens = tokenize(passage.text)
        passage_lens[idx] = len(tokens)
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((idx, tf))

    terms = sorted(postings)
    offsets = np.zeros(len(terms) + 1, dtype=np.int64)
    total = sum(len(postings[t]) for t in terms)
    ids = np.zeros(total, dtype=np.int32)
    tfs = np.zeros(total, dtype=np.int32)
    pos = 0
    for i, term in enumerate(terms):
        plist = postings[term]  # built in passage order, already sorted by id
        offsets[i] = pos
        for doc_idx, tf in plist:
            ids[pos] = doc_idx
            tfs[pos] = tf
            pos += 1
    offsets[len(terms)] = pos

    np.save(out_dir / "postings_ids.npy", ids)
    np.save(out_dir / "postings_tfs.npy", tfs)
    np.save(out_dir / "postings_offsets.npy", offsets)
    np.save(out_dir / "passage_lens.npy", passage_lens)
    with open(out_dir / VOCAB_FILE, "w", encoding="utf-8") as fh:
        json.dump({"terms": terms}, fh, ensure_ascii=False, separators=(",", ":"))
    with open(out_dir / PASSAGES_FILE, "w", encoding="utf-8") as fh:
        for p in passages:
            fh.write(json.dumps(
                {"id": p.passage_id, "shard": p.shard, "text": p.text,
                 "span": list(p.char_span)},
                ensure_ascii=False, sort_keys=True) + "\n")

    checksums = {name: _sha256_file(out_dir / name)
                 for name in _ARRAY_FILES + (VOCAB_FILE, PASSAGES_FILE)}
    manifest = {
        "format": FORMAT_TAG,
        "config": config.to_json(),
        "doc_count": doc_count,
        "passage_count": len(passages),
        "term_count": len(terms),
        "shards": [p.name for p in shard_paths],
        "files": checksums,
    }
    with open(out_dir / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")
    logger.info("indexed %d docs -> %d passages, %d terms (%s backend)",
                doc_count, len(passages), len(terms), kernels.BACKEND)
    return Index(config, passages, terms, ids, tfs, offsets, passage_lens, doc_count)


def load_index(index_dir) -> Index:
    index_dir = Path(index_dir)
    manifest_path = index_dir / MANIFEST_FILE
    if not manifest_path.exists():
        raise ConfigError(f"{index_dir} is not an index directory (no {MANIFEST_FILE})")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != FORMAT_TAG:
        raise ConfigError(f"unsupported index format {manifest.get('format')!r}")
    for name, want in manifest["files"].items():
        got = _sha256_file(index_dir / name)
        if got != want:
            raise ConfigError(f"index file {name} checksum mismatch; rebuild the index")
    config = IndexConfig.from_json(manifest["config"])
    terms = json.loads((index_dir / VOCAB_FILE).read_text(encoding="utf-8"))["terms"]
    passages = []
    with open(index_dir / PASSAGES_FILE, encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            passages.append(CorpusPassage(
                passage_id=obj["id"], shard=obj["shard"], text=obj["text"],
                char_span=tuple(obj["span"])))
    return Index(
        config,
        passages,
        terms,
        np.load(index_dir / "postings_ids.npy"),
        np.load(index_dir / "postings_tfs.npy"),
        np.load(index_dir / "postings_offsets.npy"),
        np.load(index_dir / "passage_lens.npy"),
        manifest["doc_count"],
    )


def retrieve(index: Index, query: str, k: int, factor_id: str = "") -> EvidenceSet:
    """Top-k passages by BM25 score; ties broken by passage_id ascending.

    Query tokens that repeat contribute once per occurrence, matching the
    exhaustive scoring oracle. Fewer than k hits (including zero) is legal.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    tokens = [t for t in tokenize(query) if t in index.term_rank]
    if not tokens or index.passage_count == 0:
        return EvidenceSet(query=query, factor_id=factor_id, hits=())

    ranks = [index.term_rank[t] for t in tokens]
    starts = index.postings_offsets[ranks]
    ends = index.postings_offsets[[r + 1 for r in ranks]]
    ids = np.concatenate([index.postings_ids[a:b] for a, b in zip(starts, ends)])
    tfs = np.concatenate([index.postings_tfs[a:b] for a, b in zip(starts, ends)]).astype(np.float64)
    offsets = np.zeros(len(tokens) + 1, dtype=np.int64)
    np.cumsum(ends - starts, out=offsets[1:])
    idfs = np.array([index.idf(t) for t in tokens], dtype=np.float64)

    scores = bm25_scores(
        ids, tfs, offsets, idfs,
        index.passage_lens.astype(np.float64),
        index.avgdl, index.config.k1, index.config.b, index.passage_count,
    )
    matched = np.flatnonzero(scores > 0.0)
    if matched.size == 0:
        return EvidenceSet(query=query, factor_id=factor_id, hits=())
    # stable sort on -score keeps passage_id order (= build order) among ties
    order = matched[np.argsort(-scores[matched], kind="stable")][:k]
    hits = tuple((index.passages[int(i)], float(scores[int(i)])) for i in order)
    return EvidenceSet(query=query, factor_id=factor_id, hits=hits)
