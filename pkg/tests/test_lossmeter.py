"""Per-sample CE scoring, domain-loss aggregation, and loss-log ingestion."""

import numpy as np
import pytest

from capval.errors import (
    ConfigError,
    ConsistencyError,
    EndpointError,
    InsufficientDataError,
    OrderingError,
    RangeError,
    TransientEndpointError,
)
from capval.lossmeter import (
    SampleLoss,
    append_loss_cache,
    domain_loss,
    ingest_loss_log,
    load_loss_cache,
    score_sample,
)
from capval.synthesis import ValidationSample


class MockScoring:
    """Deterministic scorer: one log-prob per whitespace token."""

    model = "mock-scorer"
    max_attempts = 3
    max_chars = None

    def __init__(self, logprobs=None, per_token=-1.5, fail_first=0):
        self.logprobs = logprobs
        self.per_token = per_token
        self.fail_first = fail_first
        self.calls = 0

    def score_text(self, text):
        self.calls += 1
        if self.fail_first > 0:
            self.fail_first -= 1
            raise TransientEndpointError("scripted failure")
        if self.logprobs is not None:
            return list(self.logprobs)
        return [self.per_token] * len(text.split())


def _vsample(sid="v1", text="some scored text here"):
    return ValidationSample(id=sid, domain_id="dom", text=text, factor_id="f1",
                            provenance={"mode": "retrieval_only", "llm_model_id": "m",
                                        "prompt_hash": "h", "timestamp": "t"})


def _loss(sid, mean, tokens, model="m1"):
    return SampleLoss(sample_id=sid, model_id=model, token_count=tokens, mean_ce=mean,
                      sum_ce=mean * tokens)


class TestScoreSample:
    def test_mean_of_logprobs(self):
        sl = score_sample(MockScoring(logprobs=[-1.0, -2.0, -3.0]), _vsample())
        assert sl.mean_ce == pytest.approx(2.0)
        assert sl.token_count == 3
        assert sl.sum_ce == pytest.approx(6.0)

    def test_single_token(self):
        sl = score_sample(MockScoring(logprobs=[-0.5]), _vsample())
        assert sl.mean_ce == pytest.approx(0.5)

    def test_degenerate_perfect_prediction(self):
        sl = score_sample(MockScoring(logprobs=[0.0, 0.0]), _vsample())
        assert sl.mean_ce == 0.0

    def test_token_count_matches_endpoint_exactly(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            n = int(rng.integers(1, 200))
            lp = (-rng.exponential(1.0, size=n)).tolist()
            sl = score_sample(MockScoring(logprobs=lp), _vsample())
            assert sl.token_count == n
            assert sl.sum_ce == pytest.approx(-sum(lp))

    def test_truncation_flagged(self, caplog):
        ep = MockScoring(per_token=-1.0)
        ep.max_chars = 9
        with caplog.at_level("WARNING"):
            sl = score_sample(ep, _vsample(text="four words in here"))
        assert sl.truncated
        assert sl.token_count == 2  # "four word"
        assert "truncated" in caplog.text

    def test_retries_transient(self):
        ep = MockScoring(logprobs=[-1.0], fail_first=2)
        sl = score_sample(ep, _vsample(), retry_sleep=lambda _: None)
        assert sl.mean_ce == 1.0
        assert ep.calls == 3

    def test_positive_logprobs_rejected(self):
        with pytest.raises(EndpointError):
            score_sample(MockScoring(logprobs=[0.5, -0.1]), _vsample())

    def test_zero_tokens_rejected(self):
        with pytest.raises(EndpointError):
            score_sample(MockScoring(logprobs=[]), _vsample())


class TestSampleLossInvariants:
    def test_sum_mean_consistency_enforced(self):
        with pytest.raises(ConsistencyError):
            SampleLoss(sample_id="s", model_id="m", token_count=10, mean_ce=1.0, sum_ce=5.0)

    def test_negative_mean_rejected(self):
        with pytest.raises(RangeError):
            SampleLoss(sample_id="s", model_id="m", token_count=1, mean_ce=-0.1, sum_ce=-0.1)


class TestDomainLoss:
    def test_macro_mean(self):
        assert domain_loss([_loss("a", 2.0, 10), _loss("b", 3.0, 10)]) == pytest.approx(2.5)

    def test_single(self):
        assert domain_loss([_loss("a", 1.7, 5)]) == pytest.approx(1.7)

    def test_macro_vs_micro_distinguished(self):
        losses = [_loss("a", 1.0, 10), _loss("b", 3.0, 1000)]
        assert domain_loss(losses, mode="macro") == pytest.approx(2.0)
        # micro: (1*10 + 3*1000) / 1010 = 2.980198...
        assert domain_loss(losses, mode="micro") == pytest.approx(2.98019801980198, abs=1e-9)

    def test_permutation_invariant_and_bounded(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            n = int(rng.integers(1, 15))
            losses = [_loss(f"s{i}", float(rng.uniform(0.1, 5)), int(rng.integers(1, 500)))
                      for i in range(n)]
            shuffled = list(losses)
            rng.shuffle(shuffled)
            a = domain_loss(losses)
            assert a == pytest.approx(domain_loss(shuffled), abs=1e-12)
            means = [sl.mean_ce for sl in losses]
            assert min(means) - 1e-12 <= a <= max(means) + 1e-12

    def test_mixed_models_rejected(self):
        with pytest.raises(ConsistencyError):
            domain_loss([_loss("a", 2.0, 10, model="m1"), _loss("b", 2.0, 10, model="m2")])

    def test_empty_rejected(self):
        with pytest.raises(InsufficientDataError):
            domain_loss([])


LOG_HEADER = "model_id,domain_id,metric,stage,tokens_seen,loss\n"


class TestIngestLossLog:
    def _write(self, tmp_path, rows):
        path = tmp_path / "log.csv"
        path.write_text(LOG_HEADER + "".join(rows), encoding="utf-8")
        return path

    def test_four_rows_sorted(self, tmp_path):
        rows = [f"m1,dom,supervalid,s1,{t},{3.0 - i * 0.1}\n"
                for i, t in enumerate([75, 25, 100, 50])]
        path = self._write(tmp_path, rows)
        series = ingest_loss_log(path)
        pts = series[("m1", "dom", "supervalid")]
        assert [p.tokens_seen for p in pts] == [25, 50, 75, 100]

    def test_two_stages_grouped(self, tmp_path):
        rows = [f"m1,dom,supervalid,s1,{t},2.5\n" for t in (25, 50)]
        rows += [f"m1,dom,supervalid,s2,{t},2.2\n" for t in (75, 100)]
        path = self._write(tmp_path, rows)
        pts = ingest_loss_log(path)[("m1", "dom", "supervalid")]
        assert {p.stage for p in pts} == {"s1", "s2"}

    def test_metrics_are_separate_series(self, tmp_path):
        rows = [f"m1,dom,iid,s1,25,2.5\n", f"m1,dom,supervalid,s1,25,2.8\n"]
        series = ingest_loss_log(self._write(tmp_path, rows))
        assert set(series) == {("m1", "dom", "iid"), ("m1", "dom", "supervalid")}

    def test_duplicate_tokens_rejected(self, tmp_path):
        rows = ["m1,dom,iid,s1,25,2.5\n", "m1,dom,iid,s1,25,2.4\n"]
        with pytest.raises(OrderingError):
            ingest_loss_log(self._write(tmp_path, rows))

    def test_unknown_metric_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            ingest_loss_log(self._write(tmp_path, ["m1,dom,other,s1,25,2.5\n"]))

    def test_missing_columns_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("model_id,loss\nm1,2.0\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            ingest_loss_log(path)


class TestLossCache:
    def test_round_trip_and_keying(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        a = _loss("s1", 2.0, 10, model="m1")
        b = _loss("s1", 2.5, 12, model="m2")
        append_loss_cache(path, a)
        append_loss_cache(path, b)
        cache = load_loss_cache(path)
        assert cache[("m1", "s1")].mean_ce == 2.0
        assert cache[("m2", "s1")].mean_ce == 2.5

    def test_missing_file_empty(self, tmp_path):
        assert load_loss_cache(tmp_path / "none.jsonl") == {}
