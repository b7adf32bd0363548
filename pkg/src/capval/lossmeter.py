"""Token-level cross-entropy scoring and domain loss aggregation.

The domain validation loss of a model is the macro average over samples of
each sample's mean per-token cross-entropy (nats/token). Token log
probabilities come from a scoring endpoint; tokenization is entirely the
endpoint's concern.
"""

import csv
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import requests

from capval.errors import (
    ConfigError,
    ConsistencyError,
    EndpointError,
    InsufficientDataError,
    OrderingError,
    RangeError,
    TransientEndpointError,
)
from capval.synthesis.client import retry_transient

logger = logging.getLogger(__name__)

LOSS_LOG_HEADER = ["model_id", "domain_id", "metric", "stage", "tokens_seen", "loss"]
LOSS_METRICS = ("iid", "supervalid")


@dataclass(frozen=True)
class SampleLoss:
    """Cross-entropy of one model on one validation sample."""

    sample_id: str
    model_id: str
    token_count: int
    mean_ce: float
    sum_ce: float
    truncated: bool = False

    def __post_init__(self):
        if self.token_count < 1:
            raise RangeError(f"sample {self.sample_id!r}: token_count must be positive")
        if self.mean_ce < 0:
            raise RangeError(f"sample {self.sample_id!r}: mean_ce must be >= 0")
        expected = self.mean_ce * self.token_count
        if abs(self.sum_ce - expected) > 1e-9 * max(1.0, abs(expected)):
            raise ConsistencyError(
                f"sample {self.sample_id!r}: sum_ce {self.sum_ce} != mean_ce*tokens {expected}")

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id, "model_id": self.model_id,
            "token_count": self.token_count, "mean_ce": self.mean_ce,
            "sum_ce": self.sum_ce, "truncated": self.truncated,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SampleLoss":
        return cls(**obj)


@dataclass(frozen=True)
class LossCurvePoint:
    """One point of a mid-training loss series."""

    model_id: str
    domain_id: str
    tokens_seen: int
    loss: float
    stage: str = ""


@dataclass(frozen=True)
class ScoringEndpointConfig:
    """Wire config for a log-probability scoring endpoint.

    max_chars approximates the model context limit in characters; longer
    sample text is tail-truncated and the loss flagged.
    """

    base_url: str
    model: str = ""
    auth_env: str = ""
    max_attempts: int = 3
    timeout: float = 120.0
    max_chars: int | None = None


class HttpScoringEndpoint:
    """POST {"text": ...} -> {"token_logprobs": [...]} scoring client."""

    def __init__(self, config: ScoringEndpointConfig):
        self.config = config
        self.model = config.model
        self.max_attempts = config.max_attempts
        self.max_chars = config.max_chars

    def score_text(self, text: str) -> list[float]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.auth_env, "") if self.config.auth_env else ""
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload = {"text": text}
        if self.config.model:
            payload["model"] = self.config.model
        try:
            resp = requests.post(self.config.base_url, json=payload,
                                 headers=headers, timeout=self.config.timeout)
        except requests.RequestException as exc:
            raise TransientEndpointError(f"scoring request failed: {exc}") from exc
        if resp.status_code >= 500:
            raise TransientEndpointError(f"scoring endpoint returned {resp.status_code}")
        if resp.status_code != 200:
            raise EndpointError(f"scoring endpoint returned {resp.status_code}: {resp.text[:200]}")
        try:
            logprobs = resp.json()["token_logprobs"]
        except (ValueError, KeyError) as exc:
            raise EndpointError(f"malformed scoring response: {exc}") from exc
        return [float(x) for x in logprobs]


def score_sample(endpoint, sample, model_id: str = "", retry_sleep=None) -> SampleLoss:
    """Score one validation sample: mean_ce = -(sum log p)/token_count.

    The endpoint must expose score_text(text) -> token log-probs under the
    model's own tokenization. Transient failures retry with exponential
    backoff up to the endpoint's max_attempts.
    """
    text = sample.text
    truncated = False
    max_chars = getattr(endpoint, "max_chars", None)
    if max_chars is not None and len(text) > max_chars:
        text = text[:max_chars]
        truncated = True
        logger.warning("sample %s exceeds context limit; tail truncated to %d chars",
                       sample.id, max_chars)
    logprobs = retry_transient(
        lambda: endpoint.score_text(text),
        max_attempts=getattr(endpoint, "max_attempts", 3),
        sleep=retry_sleep,
    )
    if not logprobs:
        raise EndpointError(f"scoring endpoint returned zero tokens for sample {sample.id!r}")
    total = -sum(logprobs)
    if total < 0:
        if total < -1e-9 * len(logprobs):
            raise EndpointError(
                f"sample {sample.id!r}: endpoint returned positive log-probabilities")
        total = 0.0
    n = len(logprobs)
    return SampleLoss(
        sample_id=sample.id,
        model_id=model_id or getattr(endpoint, "model", ""),
        token_count=n,
        mean_ce=total / n,
        sum_ce=total,
        truncated=truncated,
    )


def domain_loss(losses, mode: str = "macro") -> float:
    """Aggregate per-sample losses into the domain loss.

    macro (the default and the headline definition): unweighted mean of
    per-sample mean_ce. micro: token-weighted, sum_ce over total tokens —
    kept behind a flag for sensitivity analysis.
    """
    losses = list(losses)
    if not losses:
        raise InsufficientDataError("domain_loss requires at least one sample loss")
    models = {sl.model_id for sl in losses}
    if len(models) > 1:
        raise ConsistencyError(f"mixed models in one aggregation: {sorted(models)}")
    if mode == "macro":
        return sum(sl.mean_ce for sl in losses) / len(losses)
    if mode == "micro":
        total_tokens = sum(sl.token_count for sl in losses)
        return sum(sl.sum_ce for sl in losses) / total_tokens
    raise ValueError(f"unknown aggregation mode {mode!r}")


def ingest_loss_log(path) -> dict[tuple[str, str, str], list[LossCurvePoint]]:
    """Read a mid-training loss log CSV into per-series sorted point lists.

    Series key is (model_id, domain_id, metric); points are sorted by
    tokens_seen and must be strictly increasing within a series.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"loss log {path} does not exist")
    series: dict[tuple[str, str, str], list[tuple[int, LossCurvePoint]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in LOSS_LOG_HEADER if c not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError(f"{path}: loss log missing columns {missing}")
        for rownum, row in enumerate(reader, start=2):
            metric = row["metric"].strip()
            if metric not in LOSS_METRICS:
                raise ConfigError(f"{path}:{rownum}: metric must be one of {LOSS_METRICS}")
            try:
                point = LossCurvePoint(
                    model_id=row["model_id"].strip(),
                    domain_id=row["domain_id"].strip(),
                    tokens_seen=int(float(row["tokens_seen"])),
                    loss=float(row["loss"]),
                    stage=row["stage"].strip(),
                )
            except ValueError as exc:
                raise ConfigError(f"{path}:{rownum}: bad numeric value ({exc})") from exc
            key = (point.model_id, point.domain_id, metric)
            series.setdefault(key, []).append((rownum, point))

    out: dict[tuple[str, str, str], list[LossCurvePoint]] = {}
    for key, rows in series.items():
        rows.sort(key=lambda rp: rp[1].tokens_seen)
        for (_, prev), (rownum, cur) in zip(rows, rows[1:]):
            if cur.tokens_seen <= prev.tokens_seen:
                raise OrderingError(
                    f"{path}:{rownum}: tokens_seen {cur.tokens_seen} not strictly increasing "
                    f"in series {key}")
        out[key] = [p for _, p in rows]
    return out


def load_loss_cache(path) -> dict[tuple[str, str], SampleLoss]:
    """Load the incremental sample-loss cache keyed by (model_id, sample_id)."""
    path = Path(path)
    cache: dict[tuple[str, str], SampleLoss] = {}
    if not path.exists():
        return cache
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            sl = SampleLoss.from_json(json.loads(line))
            cache[(sl.model_id, sl.sample_id)] = sl
    return cache


def append_loss_cache(path, sample_loss: SampleLoss) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(sample_loss.to_json(), sort_keys=True) + "\n")
