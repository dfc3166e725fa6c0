"""Acceptance gate: one test per release criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and timings.
"""

import math
import time

import numpy as np
import pytest

from tracefp import cli
from tracefp.attribution import ThresholdConfig, attribute, build_pool, calibrate_threshold, make_dev_results
from tracefp.baselines import cross_entropy_grad, cross_entropy_loss, gltr_features
from tracefp.entropy_fingerprint import entropy_fingerprint, kde_density, kde_grid
from tracefp.evaluation import confusion_matrix, macro_f1, run_protocol, SplitScores
from tracefp.fingerprint_io import fingerprint_from_bytes, fingerprint_to_bytes
from tracefp.labels import REJECT
from tracefp.rank_fingerprint import build_cluster_map, rank_fingerprint
from tracefp.scorestream import ScoreStream, stream_from_bytes, stream_to_bytes
from tracefp.similarity import js_distance, norm_mean
from tracefp.synthetic import make_author, sample_stream

from test_entropy_fingerprint import gaussian_mixture_oracle, scott_covariance
from test_rank_fingerprint import binning_oracle


def report(name, elapsed=None, detail=""):
    timing = f" [{elapsed:.2f}s]" if elapsed is not None else ""
    extra = f" ({detail})" if detail else ""
    print(f"\nACCEPTANCE PASS: {name}{timing}{extra}")


def test_algorithm1_oracle_suite():
    start = time.perf_counter()
    checked = 0
    for vocab in range(2, 13):
        for clusters in range(1, vocab + 1):
            for alpha in (0.5, 1.0, 1.5, 2.0):
                cmap = build_cluster_map(vocab, alpha, clusters)
                assignment, k = binning_oracle(vocab, alpha, clusters)
                assert list(cmap.assignment) == assignment, (vocab, clusters, alpha)
                assert cmap.used_clusters == k, (vocab, clusters, alpha)
                checked += 1
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    report("rank binning matches brute-force loop", elapsed, f"{checked} configurations, exact")


def test_fingerprint_normalization_on_randomized_streams():
    start = time.perf_counter()
    rng = np.random.default_rng(20_240_501)
    vocab = 50257
    bound = math.log(vocab)
    cmap = build_cluster_map(vocab, 1.5, 50)
    n_streams = 1000
    lengths = rng.integers(2, 10_001, size=n_streams)
    for i, n in enumerate(lengths):
        n = int(n)
        stream = ScoreStream(
            doc_id=f"r{i}",
            evaluator_id="rand",
            vocab_size=vocab,
            context_window=1024,
            ranks=rng.integers(1, vocab + 1, size=n),
            entropies=rng.uniform(0.0, bound * 0.999, size=n),
        )
        rank_fp = rank_fingerprint(stream.ranks, cmap)
        assert abs(rank_fp.grid.sum() - 1.0) <= 1e-9
        assert rank_fp.grid.min() >= 0.0
        ent_fp = entropy_fingerprint(stream, grid_size=50)
        assert abs(ent_fp.grid.sum() - 1.0) <= 1e-9
        assert ent_fp.grid.min() >= 0.0
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    report("both fingerprint variants normalize on 1000 random streams", elapsed, "sum 1 +/- 1e-9")


def test_js_metric_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(7)

    def random_dist(shape):
        g = rng.random(shape) + 1e-12
        return g / g.sum()

    g = random_dist((5, 5))
    assert js_distance(g, g) == 0.0
    assert js_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 1.0
    value = js_distance(np.array([0.5, 0.5]), np.array([1.0, 0.0]))
    assert value == pytest.approx(0.55794, abs=1e-4)

    triples = rng.random((10_000, 3, 8)) + 1e-12
    triples /= triples.sum(axis=2, keepdims=True)
    for a, b, c in triples:
        ab, bc, ac = js_distance(a, b), js_distance(b, c), js_distance(a, c)
        assert ac <= ab + bc + 1e-12
        assert ab == pytest.approx(js_distance(b, a), abs=1e-15)
        assert 0.0 <= ab <= 1.0
    elapsed = time.perf_counter() - start
    report("JS distance: identity, unit, analytic value, metric axioms", elapsed, "10000 random triples")


def test_norm_mean_analytic_plane_and_offset_invariance():
    start = time.perf_counter()
    n = 16
    flat = np.zeros((n, n))
    plane = np.tile(np.arange(n, dtype=np.float64), (n, 1))
    assert norm_mean(flat, plane, dx=1.0) == pytest.approx(math.pi / 4, abs=1e-6)

    rng = np.random.default_rng(11)
    for trial in range(1000):
        size = int(rng.integers(3, 10))
        # dyadic grids keep the offset addition exact, so equality is bitwise
        a = rng.integers(0, 2**20, size=(size, size)) / 2**20
        b = rng.integers(0, 2**20, size=(size, size)) / 2**20
        c = float(rng.integers(1, 16))
        assert norm_mean(a + c, b + c) == norm_mean(a, b)
    elapsed = time.perf_counter() - start
    report("norm-mean: flat-vs-slope plane pi/4, exact offset invariance", elapsed, "1000 random grids")


def test_kde_oracle_and_truncation_mass():
    start = time.perf_counter()
    rng = np.random.default_rng(23)
    range_max = math.log(50257)
    for _ in range(40):
        n = int(rng.integers(3, 21))
        g = int(rng.integers(2, 11))
        pts = rng.uniform(1.0, range_max - 1.0, size=(n, 2))
        density, rule = kde_density(pts, g, range_max)
        h = scott_covariance(pts) if rule.kind == "scott" else np.diag([rule.h**2] * 2)
        oracle = gaussian_mixture_oracle(pts, g, range_max, h)
        assert np.abs(density - oracle).max() <= 1e-12 * max(1.0, oracle.max())

    # mass check: points at least 3 bandwidths inside the range
    pts = rng.normal(range_max / 2, 0.7, size=(500, 2))
    density, _ = kde_density(pts, 50, range_max)
    cell = (range_max / 49) ** 2
    assert abs(float(density.sum()) * cell - 1.0) < 0.1
    elapsed = time.perf_counter() - start
    report("KDE node values match direct mixture evaluation", elapsed, "tolerance 1e-12, mass within 0.1")


def test_synthetic_end_to_end_open_set():
    start = time.perf_counter()
    vocab = 50257
    n_known, docs, unseen_docs, tokens = 5, 20, 10, 50_000

    streams = {}
    for a in range(n_known + 1):
        author = make_author(f"author-{a:02d}", vocab, seed=1000 + a)
        count = docs if a < n_known else unseen_docs
        streams[author.name] = [
            sample_stream(author, f"{author.name}/{d:03d}", tokens, vocab, seed=1_000_000 + a * 1000 + d)
            for d in range(count)
        ]
    fps = {name: [entropy_fingerprint(s, 50) for s in ss] for name, ss in streams.items()}

    known = [f"author-{a:02d}" for a in range(n_known)]
    unseen_author = f"author-{n_known:02d}"
    train = [(fps[n][d], n, f"{n}/{d}") for n in known for d in range(15)]
    dev = [(fps[n][d], n, f"{n}/{d}") for n in known for d in range(15, 17)]
    test = [(fps[n][d], n, f"{n}/{d}") for n in known for d in range(17, 20)]
    unseen = [(fps[unseen_author][d], unseen_author, f"{unseen_author}/{d}") for d in range(unseen_docs)]

    pool = build_pool(train, metric="js", variant="entropy")
    threshold = calibrate_threshold(make_dev_results(dev, pool), metric="js", variant="entropy")

    id_golds, id_preds = [], []
    for fp, gold, doc in test:
        id_golds.append(gold)
        id_preds.append(attribute(fp, pool, threshold, doc_id=doc).predicted_label)
    id_f1 = macro_f1(id_golds, id_preds, set(id_golds))
    assert id_f1 >= 0.95, f"ID macro-F1 {id_f1:.4f}"

    unseen_preds = [attribute(fp, pool, threshold, doc_id=doc).predicted_label for fp, _, doc in unseen]
    rejection_rate = sum(p == REJECT for p in unseen_preds) / len(unseen_preds)
    assert rejection_rate >= 0.80, f"rejection rate {rejection_rate:.2f}"
    assert id_f1 >= 0.90  # known-author macro-F1 under the same calibrated threshold

    elapsed = time.perf_counter() - start
    assert elapsed < 600.0
    report(
        "synthetic open-set pipeline",
        elapsed,
        f"ID F1 {id_f1:.3f}, rejected {rejection_rate:.0%} of unseen, threshold {threshold.threshold:.4f}",
    )


def test_configuration_fidelity(capsys):
    config = cli.RunConfig()
    assert config.alpha == 1.5
    assert config.clusters == 50
    assert config.grid == 50
    assert config.order == 2
    assert config.context_window == 1024
    assert cli.main(["config"]) == 0
    import json

    dumped = json.loads(capsys.readouterr().out)
    assert (dumped["alpha"], dumped["clusters"], dumped["grid"], dumped["order"], dumped["context_window"]) == (
        1.5,
        50,
        50,
        2,
        1024,
    )
    with capsys.disabled():
        report("defaults pinned: alpha=1.5 C=50 G=50 order=2 context=1024")


def test_evaluation_arithmetic():
    start = time.perf_counter()
    assert macro_f1(["A", "A", "B"], ["A", "B", "B"], {"A", "B"}) == 2 / 3

    rng = np.random.default_rng(3)
    authors = [f"m{i}" for i in range(6)]
    for _ in range(200):
        n = int(rng.integers(1, 60))
        golds = [authors[i] for i in rng.integers(0, 6, size=n)]
        preds = [authors[i] if rng.random() < 0.8 else REJECT for i in rng.integers(0, 6, size=n)]
        labels, counts = confusion_matrix(golds, preds, authors)
        for label, row in zip(labels, counts):
            assert row.sum() == golds.count(label)

    for _ in range(100):
        splits = [
            SplitScores(
                golds=["a", "b", "c"],
                preds=[x if rng.random() < 0.7 else REJECT for x in ("a", "b", "c")],
            )
            for _ in range(3)
        ]
        rep = run_protocol(splits, "ID")
        assert len(rep.per_split_f1) == 3
        assert abs(rep.mean_f1 - float(np.mean(rep.per_split_f1))) <= 1e-12
        assert abs(rep.std_f1 - float(np.std(rep.per_split_f1))) <= 1e-12
    elapsed = time.perf_counter() - start
    report("macro-F1 worked example, confusion row sums, mean/std recompute", elapsed)


def test_baseline_gradient_and_gltr_partition():
    start = time.perf_counter()
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(50):
        n, d, c = int(rng.integers(3, 15)), int(rng.integers(1, 5)), int(rng.integers(2, 6))
        x_aug = np.column_stack([rng.normal(size=(n, d)), np.ones(n)])
        y_hot = np.zeros((n, c))
        y_hot[np.arange(n), rng.integers(0, c, size=n)] = 1.0
        w = rng.normal(scale=0.7, size=(c, d + 1))
        l2 = float(rng.uniform(0, 0.2))
        analytic = cross_entropy_grad(w, x_aug, y_hot, l2)
        numeric = np.zeros_like(w)
        eps = 1e-6
        for i in range(c):
            for j in range(d + 1):
                wp, wm = w.copy(), w.copy()
                wp[i, j] += eps
                wm[i, j] -= eps
                numeric[i, j] = (
                    cross_entropy_loss(wp, x_aug, y_hot, l2) - cross_entropy_loss(wm, x_aug, y_hot, l2)
                ) / (2 * eps)
        rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic), np.linalg.norm(numeric))
        worst = max(worst, rel)
        assert rel <= 1e-5

    for _ in range(1000):
        ranks = rng.integers(1, 60_000, size=int(rng.integers(1, 200)))
        fv = gltr_features(ranks)
        assert sum(fv.values) == pytest.approx(1.0, abs=1e-12)
        assert all(v >= 0.0 for v in fv.values)
    elapsed = time.perf_counter() - start
    report("logistic gradient vs finite differences, GLTR partition", elapsed, f"worst rel err {worst:.2e}")


def test_serialization_round_trips_bit_exact():
    start = time.perf_counter()
    rng = np.random.default_rng(29)
    import zlib

    cmap = build_cluster_map(500, 1.5, 16)
    for i in range(500):
        n = int(rng.integers(0, 250))
        vocab = int(rng.integers(2, 100_000))
        stream = ScoreStream(
            doc_id=f"s{i}",
            evaluator_id=f"ev{i % 7}",
            vocab_size=vocab,
            context_window=int(rng.integers(1, 4096)),
            ranks=rng.integers(1, vocab + 1, size=n),
            entropies=rng.uniform(0, math.log(vocab) * 0.999, size=n),
        )
        blob = stream_to_bytes(stream)
        again = stream_from_bytes(blob)
        assert again == stream
        assert stream_to_bytes(again) == blob
        # CRC actually protects the payload
        assert zlib.crc32(blob[:-4]).to_bytes(4, "little") == blob[-4:]

    for i in range(500):
        if i % 2 == 0:
            fp = rank_fingerprint(rng.integers(1, 501, size=int(rng.integers(2, 300))), cmap, evaluator_id=f"e{i}")
        else:
            pts = rng.uniform(0, 9.9, size=(int(rng.integers(1, 60)), 2))
            fp = kde_grid(pts, int(rng.integers(2, 24)), 10.0, evaluator_id=f"e{i}")
        blob = fingerprint_to_bytes(fp)
        again = fingerprint_from_bytes(blob)
        assert again == fp
        assert fingerprint_to_bytes(again) == blob
    elapsed = time.perf_counter() - start
    report("stream and fingerprint containers round-trip bit-exact", elapsed, "1000 randomized instances")
