import numpy as np
import pytest

from tracefp.attribution import (
    ThresholdConfig,
    attribute,
    build_pool,
    calibrate_threshold,
    config_hash,
    load_pool,
    load_threshold,
    make_dev_results,
    pool_distances,
    save_pool,
    save_threshold,
)
from tracefp.entropy_fingerprint import kde_grid
from tracefp.evaluation import macro_f1
from tracefp.labels import REJECT, UNSEEN


def fp_at(center, rng, n=40, grid=12, range_max=10.0, spread=0.25):
    pts = rng.normal(center, spread, size=(n, 2))
    return kde_grid(np.clip(pts, 0, range_max), grid, range_max, evaluator_id="ev")


def small_pool(rng, centers=None, metric="js"):
    centers = centers or {"alice": 2.0, "bob": 5.0, "carol": 8.0}
    labeled = []
    for author, center in centers.items():
        for i in range(3):
            labeled.append((fp_at(center, rng), author, f"{author}-{i}"))
    return build_pool(labeled, metric=metric, variant="entropy")


class TestBuildPool:
    def test_one_entry_per_training_document(self, rng):
        labeled = [(fp_at(3.0, rng), f"a{i}", f"a{i}-{j}") for i in range(9) for j in range(5)]
        pool = build_pool(labeled, metric="js", variant="entropy")
        assert len(pool.entries) == 45
        assert len(pool.authors) == 9

    def test_heterogeneous_grid_sizes_rejected(self, rng):
        a = fp_at(3.0, rng, grid=12)
        b = fp_at(3.0, rng, grid=16)
        with pytest.raises(ValueError, match="shape|configuration"):
            build_pool([(a, "a", "a-0"), (b, "b", "b-0")], metric="js", variant="entropy")

    def test_high_resource_author_keeps_all_references(self, rng):
        labeled = [(fp_at(2.0, rng), "big", f"big-{i}") for i in range(31)]
        labeled += [(fp_at(7.0, rng), "small", "small-0")]
        pool = build_pool(labeled, metric="js", variant="entropy")
        assert sum(1 for e in pool.entries if e.author_label == "big") == 31

    def test_empty_pool_rejected(self):
        with pytest.raises(ValueError):
            build_pool([], metric="js", variant="entropy")

    def test_config_hash_separates_configurations(self, rng):
        a = fp_at(3.0, rng, grid=12)
        b = fp_at(3.0, rng, grid=16)
        assert config_hash(a) != config_hash(b)


class TestAttribute:
    def test_exact_match_attributes_at_distance_zero(self, rng):
        pool = small_pool(rng)
        target = pool.entries[0]
        result = attribute(target.fingerprint, pool, ThresholdConfig("js", "entropy", 0.0), doc_id="t")
        assert result.predicted_label == target.author_label
        assert result.best_distance == 0.0

    def test_rejects_above_threshold(self, rng):
        pool = small_pool(rng)
        probe = fp_at(0.3, rng, spread=0.05)
        per_author = pool_distances(probe, pool)
        best = min(per_author.values())
        res = attribute(probe, pool, ThresholdConfig("js", "entropy", best - 1e-6))
        assert res.predicted_label == REJECT
        res2 = attribute(probe, pool, ThresholdConfig("js", "entropy", best))
        assert res2.predicted_label != REJECT  # boundary equality attributes

    def test_tie_breaks_lexicographically(self, rng):
        fp = fp_at(4.0, rng)
        pool = build_pool(
            [(fp, "bravo", "bravo-0"), (fp, "alpha", "alpha-0")], metric="js", variant="entropy"
        )
        res = attribute(fp, pool, ThresholdConfig("js", "entropy", 1.0))
        assert res.predicted_label == "alpha"

    def test_invariant_under_pool_reordering(self, rng):
        labeled = [(fp_at(c, rng), a, f"{a}-{i}") for a, c in (("x", 2.0), ("y", 6.0)) for i, c in enumerate([c, c])]
        probe = fp_at(4.1, rng)
        thr = ThresholdConfig("js", "entropy", 1.0)
        r1 = attribute(probe, build_pool(labeled, "js", "entropy"), thr)
        r2 = attribute(probe, build_pool(labeled[::-1], "js", "entropy"), thr)
        assert r1.predicted_label == r2.predicted_label
        assert r1.best_distance == r2.best_distance

    def test_mismatched_threshold_config_rejected(self, rng):
        pool = small_pool(rng)
        with pytest.raises(ValueError):
            attribute(pool.entries[0].fingerprint, pool, ThresholdConfig("norm-mean", "entropy", 0.5))

    def test_result_invariants(self, rng):
        pool = small_pool(rng)
        probe = fp_at(3.0, rng)
        res = attribute(probe, pool, ThresholdConfig("js", "entropy", 0.4), doc_id="p")
        assert res.best_distance == min(res.per_author_best.values())
        assert (res.predicted_label == REJECT) == (res.best_distance > 0.4)


def sweep_oracle(dev_results, label_set):
    """Exhaustive sweep over midpoints of consecutive sorted distances."""
    pairs = []
    for _, gold, per_author in dev_results:
        best_author = min(per_author, key=lambda a: (per_author[a], a))
        pairs.append((REJECT if gold == UNSEEN else gold, best_author, per_author[best_author]))
    ds = sorted({d for _, _, d in pairs})
    candidates = [ds[0] - 1.0]
    candidates += [(a + b) / 2 for a, b in zip(ds, ds[1:])]
    candidates += [ds[-1]]
    best = -1.0
    for t in candidates:
        preds = [author if d <= t else REJECT for _, author, d in pairs]
        best = max(best, macro_f1([g for g, _, _ in pairs], preds, label_set))
    return best


class TestCalibration:
    def test_separable_case_picks_largest_candidate_below_gap(self):
        dev = []
        known = [0.10, 0.20, 0.30]
        unseen = [0.70, 0.80]
        for i, d in enumerate(known):
            dev.append((f"k{i}", "alice", {"alice": d, "bob": d + 0.05}))
        for i, d in enumerate(unseen):
            dev.append((f"u{i}", UNSEEN, {"alice": d, "bob": d + 0.05}))
        cfg = calibrate_threshold(dev, metric="js", variant="entropy")
        assert cfg.threshold == 0.30  # largest swept candidate below 0.70

    def test_no_unseen_never_rejects(self):
        dev = [(f"k{i}", "alice", {"alice": d}) for i, d in enumerate([0.1, 0.4, 0.9])]
        cfg = calibrate_threshold(dev, metric="js", variant="entropy")
        assert cfg.threshold == 0.9  # max observed best distance

    def test_optimum_matches_exhaustive_midpoint_sweep(self, rng):
        for trial in range(20):
            dev = []
            labels = ["a", "b", "c"]
            for i in range(int(rng.integers(5, 40))):
                gold = labels[int(rng.integers(3))] if rng.random() < 0.7 else UNSEEN
                per_author = {l: float(rng.uniform(0, 1)) for l in labels}
                dev.append((f"d{trial}-{i}", gold, per_author))
            if all(g == UNSEEN for _, g, _ in dev):
                continue
            cfg = calibrate_threshold(dev, metric="js", variant="entropy")
            golds, preds = [], []
            for _, gold, per_author in dev:
                best_author = min(per_author, key=lambda a: (per_author[a], a))
                golds.append(REJECT if gold == UNSEEN else gold)
                preds.append(best_author if per_author[best_author] <= cfg.threshold else REJECT)
            label_set = sorted(set(golds))
            achieved = macro_f1(golds, preds, label_set)
            assert achieved == pytest.approx(sweep_oracle(dev, label_set), abs=1e-12)

    def test_monotone_rejection_count(self, rng):
        dists = sorted(float(d) for d in rng.uniform(0, 1, size=30))
        rejected = [sum(1 for d in dists if d > t) for t in np.linspace(0, 1, 21)]
        assert rejected == sorted(rejected, reverse=True)

    def test_empty_dev_rejected(self):
        with pytest.raises(ValueError):
            calibrate_threshold([], metric="js", variant="entropy")

    def test_all_unseen_dev_rejected(self):
        dev = [("u", UNSEEN, {"a": 0.5})]
        with pytest.raises(ValueError):
            calibrate_threshold(dev, metric="js", variant="entropy")

    def test_make_dev_results_synthesizes_unseen(self, rng):
        pool = small_pool(rng)
        dev_fps = [(fp_at(2.0, rng), "alice", "dev-0"), (fp_at(5.0, rng), "bob", "dev-1")]
        results = make_dev_results(dev_fps, pool)
        golds = [g for _, g, _ in results]
        assert golds.count(UNSEEN) == 2
        assert golds.count("alice") == 1 and golds.count("bob") == 1
        for _, gold, per_author in results:
            if gold == UNSEEN:
                assert len(per_author) == 2  # own author removed


class TestPersistence:
    def test_pool_round_trip(self, rng, tmp_path):
        pool = small_pool(rng)
        save_pool(pool, tmp_path / "pool")
        loaded = load_pool(tmp_path / "pool")
        assert loaded.metric == pool.metric and loaded.variant == pool.variant
        assert loaded.config == pool.config
        assert [(e.author_label, e.doc_id) for e in loaded.entries] == [
            (e.author_label, e.doc_id) for e in pool.entries
        ]
        assert all(a.fingerprint == b.fingerprint for a, b in zip(loaded.entries, pool.entries))

    def test_threshold_round_trip(self, tmp_path):
        cfg = ThresholdConfig("js", "entropy", 0.9375)
        save_threshold(cfg, tmp_path / "t.json")
        assert load_threshold(tmp_path / "t.json") == cfg


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
