import json

import numpy as np
import pytest

from tracefp.scorestream import ScoreStream


def random_stream(rng, n_tokens, vocab_size=50257, doc_id="doc", evaluator="ev", context=1024):
    bound = np.log(vocab_size)
    return ScoreStream(
        doc_id=doc_id,
        evaluator_id=evaluator,
        vocab_size=vocab_size,
        context_window=context,
        ranks=rng.integers(1, vocab_size + 1, size=n_tokens),
        entropies=rng.uniform(0.0, bound * 0.999, size=n_tokens),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_manifest(path, records, vocab_size=50257):
    path.write_text(json.dumps({"vocab_size": vocab_size, "records": records}), encoding="utf-8")
    return path


def record(doc_id, author, role, genres=("LF",), family=None, text_path="unused.txt"):
    return {
        "doc_id": doc_id,
        "author_label": author,
        "family_label": family if family is not None else author,
        "genres": list(genres),
        "split_role": role,
        "text_path": text_path,
    }
