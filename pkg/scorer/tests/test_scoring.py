import math

import numpy as np
import pytest

from trace_scorer.backends import TinyBigramBackend, TwoSymbolBackend, make_backend
from trace_scorer.scoring import (
    ScorerConfig,
    entropies_from_logits,
    iter_windows,
    ranks_from_logits,
    score_document,
    score_tokens,
)

SMOKE_CORPUS = [
    "The quick brown fox jumps over the lazy dog.",
    "Call me Ishmael. Some years ago, never mind how long precisely.",
    "It was the best of times, it was the worst of times.",
    "In a hole in the ground there lived a hobbit.",
    "All happy families are alike; each unhappy family is unhappy in its own way.",
    "It is a truth universally acknowledged, that a single man in possession...",
    "I am an invisible man.",
    "The sky above the port was the color of television, tuned to a dead channel.",
    "Mother died today. Or maybe, yesterday; I can't be sure.",
    "You don't know about me without you have read a book by the name of...",
]


class TestRankComputation:
    def test_argmax_token_always_ranks_first(self):
        backend = TinyBigramBackend()
        config = ScorerConfig(model=backend.name, context_window=64)
        for text in SMOKE_CORPUS:
            ids = backend.encode(text)
            for start, scored_from, end in iter_windows(len(ids), config.context_window, None):
                logits = backend.next_logits(ids[start:end])
                greedy = logits.argmax(axis=1)
                assert np.all(ranks_from_logits(logits, greedy) == 1)

    def test_rank_ties_break_by_ascending_token_id(self):
        logits = np.array([[0.5, 1.0, 1.0, 0.2]])
        assert ranks_from_logits(logits, np.array([1])) == [1]
        assert ranks_from_logits(logits, np.array([2])) == [2]
        assert ranks_from_logits(logits, np.array([0])) == [3]
        assert ranks_from_logits(logits, np.array([3])) == [4]

    def test_worst_token_rank_equals_vocab(self):
        logits = np.array([[3.0, 2.0, 1.0]])
        assert ranks_from_logits(logits, np.array([2])) == [3]


class TestEntropyComputation:
    def test_bounds_on_smoke_corpus(self):
        backend = TinyBigramBackend()
        config = ScorerConfig(model=backend.name, context_window=128)
        bound = math.log(backend.vocab_size)
        for text in SMOKE_CORPUS:
            _, ents, _ = score_document(text, backend, config)
            arr = ents.astype(np.float64)
            assert np.all(arr >= 0.0)
            assert np.all(arr <= bound + 1e-6)

    def test_uniform_distribution_hits_log_vocab(self):
        logits = np.zeros((1, 64))
        assert entropies_from_logits(logits)[0] == pytest.approx(math.log(64), abs=1e-12)

    def test_deterministic_distribution_near_zero(self):
        logits = np.array([[200.0, 0.0, 0.0]])
        assert entropies_from_logits(logits)[0] == pytest.approx(0.0, abs=1e-12)

    def test_two_symbol_model_closed_form(self):
        backend = TwoSymbolBackend()
        config = ScorerConfig(model=backend.name, context_window=16)
        ranks, ents, _ = score_document("ab" * 40, backend, config)
        expected = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1))
        assert expected == pytest.approx(0.3251, abs=1e-4)
        assert np.all(np.abs(ents.astype(np.float64) - expected) < 1e-4)
        # realized 'a' (p=0.9) ranks 1, realized 'b' ranks 2
        text = "ab" * 40
        realized = [text[i] for i in scored_positions(len(text), 16)]
        assert all(r == (1 if ch == "a" else 2) for r, ch in zip(ranks, realized))


def scored_positions(n, context, stride=None):
    out = []
    for _, scored_from, end in iter_windows(n, context, stride):
        out.extend(range(scored_from, end))
    return out


class TestChunking:
    def test_two_full_chunks_score_all_but_two(self):
        backend = TinyBigramBackend()
        ids = backend.encode("x" * 2048)
        assert len(ids) == 2048
        ranks, ents = score_tokens(ids, backend, ScorerConfig(model="t", context_window=1024))
        assert len(ranks) == 2046
        assert len(ents) == 2046

    def test_chunk_initial_positions_skipped(self):
        assert scored_positions(2048, 1024) == [p for p in range(1, 2048) if p != 1024]

    def test_short_document(self):
        backend = TinyBigramBackend()
        ranks, _ = score_tokens(backend.encode("hi"), backend, ScorerConfig(model="t", context_window=1024))
        assert len(ranks) == 1

    def test_single_token_document_scores_nothing(self):
        backend = TinyBigramBackend()
        ranks, ents = score_tokens(backend.encode("h"), backend, ScorerConfig(model="t", context_window=1024))
        assert len(ranks) == 0 and len(ents) == 0

    def test_sliding_mode_covers_every_position_once(self):
        positions = scored_positions(2048, 1024, stride=512)
        assert positions == list(range(1, 2048))

    def test_sliding_and_chunked_agree_on_first_window(self):
        backend = TinyBigramBackend()
        ids = backend.encode("abcdefgh" * 16)
        chunked, _ = score_tokens(ids, backend, ScorerConfig(model="t", context_window=1024))
        sliding, _ = score_tokens(ids, backend, ScorerConfig(model="t", context_window=1024, stride=512))
        assert np.array_equal(chunked, sliding)  # document fits one window

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ScorerConfig(model="t", context_window=1)
        with pytest.raises(ValueError):
            ScorerConfig(model="t", context_window=64, stride=64)

    def test_batched_and_serial_dispatch_agree(self):
        backend = TinyBigramBackend()
        ids = backend.encode("the rain in spain stays mainly on the plain. " * 40)
        serial = score_tokens(ids, backend, ScorerConfig(model="t", context_window=64, batch_size=1))
        batched = score_tokens(ids, backend, ScorerConfig(model="t", context_window=64, batch_size=8))
        assert np.array_equal(serial[0], batched[0])
        assert np.array_equal(serial[1], batched[1])

    def test_batch_hook_used_for_equal_length_chunks(self):
        backend = TinyBigramBackend()
        calls = {"batch": 0, "single": 0}

        class Spy:
            vocab_size = backend.vocab_size

            def encode(self, text):
                return backend.encode(text)

            def next_logits(self, chunk):
                calls["single"] += 1
                return backend.next_logits(chunk)

            def next_logits_batch(self, chunks):
                calls["batch"] += 1
                return [backend.next_logits(c) for c in chunks]

        ids = backend.encode("x" * 300)
        score_tokens(ids, Spy(), ScorerConfig(model="t", context_window=64, batch_size=4))
        assert calls["batch"] >= 1  # the four full 64-token windows batch together
        assert calls["single"] >= 1  # the ragged tail goes through alone


class TestBackends:
    def test_make_backend_specs(self):
        assert make_backend("tiny:bigram").vocab_size == 256
        assert make_backend("tiny:two-symbol").vocab_size == 2
        with pytest.raises(ValueError):
            make_backend("magic:model")

    def test_bigram_weights_are_pinned(self):
        a = TinyBigramBackend()
        b = TinyBigramBackend()
        assert np.array_equal(a.table, b.table)

    def test_two_symbol_rejects_foreign_characters(self):
        with pytest.raises(ValueError):
            TwoSymbolBackend().encode("abc")

    def test_perplexity_sanity(self):
        # mean exp(cross-entropy) must be finite and positive on a snippet
        backend = TinyBigramBackend()
        ids = backend.encode(SMOKE_CORPUS[0])
        logits = backend.next_logits(ids)
        m = logits.max(axis=1, keepdims=True)
        log_probs = logits - (m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True)))
        nll = -log_probs[np.arange(len(ids) - 1), ids[1:]]
        ppl = float(np.exp(nll.mean()))
        assert math.isfinite(ppl) and ppl > 0
