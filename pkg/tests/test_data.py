"""Tests for the interaction data pipeline."""

import numpy as np
import pytest

from dualrec import data
from dualrec.errors import ConfigError, IngestionError, VocabularyError


def make_records(per_user):
    """per_user: {user: [(item, rating), ...]}"""
    return [data.RatingRecord(u, i, r) for u, pairs in per_user.items() for i, r in pairs]


def ladder(user, n=10, base=0):
    """n items rated 1..5 cyclically, ids offset by `base`."""
    return [(f"i{base + k:03d}", float(k % 5 + 1)) for k in range(n)]


class TestParseRatings:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "r.tsv"
        path.write_text("")
        parsed = data.parse_ratings(path)
        assert parsed.records == [] and parsed.malformed == []

    def test_three_clean_lines(self, tmp_path):
        path = tmp_path / "r.tsv"
        path.write_text("u1\ti1\t5\nu1\ti2\t3\nu2\ti1\t4\t964982703\n")
        parsed = data.parse_ratings(path)
        assert len(parsed.records) == 3
        assert parsed.records[2] == data.RatingRecord("u2", "i1", 4.0)

    def test_malformed_line_counted_with_number(self, tmp_path):
        lines = [f"u1\ti{k}\t4" for k in range(200)]
        lines.insert(5, "u1\ti999\tnot_a_number")
        path = tmp_path / "r.tsv"
        path.write_text("\n".join(lines) + "\n")
        parsed = data.parse_ratings(path)
        assert len(parsed.records) == 200
        assert parsed.malformed == [(6, "non-numeric rating 'not_a_number'")]

    def test_too_many_malformed_lines_rejected(self, tmp_path):
        path = tmp_path / "r.tsv"
        path.write_text("u1\ti1\t5\nbroken line\nu2\ti2\toops\n")
        with pytest.raises(IngestionError, match="line numbers: 2, 3"):
            data.parse_ratings(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestionError):
            data.parse_ratings(tmp_path / "absent.tsv")

    def test_comma_delimiter_and_range(self, tmp_path):
        path = tmp_path / "r.csv"
        body = "\n".join([f"u1,i{k},{k % 5 + 1}" for k in range(100)]) + "\nu1,iX,9\n"
        path.write_text(body)
        parsed = data.parse_ratings(path, delimiter=",", rating_min=1, rating_max=5)
        assert len(parsed.records) == 100
        assert parsed.malformed[0][0] == 101


class TestBinarize:
    def test_mean_threshold_is_strict(self):
        pairs = [(f"i{k}", r) for k, r in enumerate([5, 4, 3, 2, 1, 5, 4, 3, 2, 1])]
        ds = data.binarize(make_records({"u1": pairs}))
        # mean is 3.0; only ratings 4 and 5 count as liked, a 3 does not
        for item_id, rating in pairs:
            label = ds.labels[(0, ds.item_index[item_id])]
            assert label == (1 if rating > 3.0 else 0)

    def test_short_history_users_dropped(self):
        ds = data.binarize(make_records({"short": ladder("short", 9), "long": ladder("long", 10)}))
        assert ds.user_ids == ["long"]

    def test_mean_example(self):
        ratings = [4, 5, 3, 3, 3, 3, 3, 3, 2, 2]
        pairs = [(f"i{k}", float(r)) for k, r in enumerate(ratings)]
        ds = data.binarize(make_records({"u": pairs}))
        assert ds.user_mean[0] == pytest.approx(3.1)
        liked = [k for k in range(10) if ds.labels[(0, ds.item_index[f"i{k}"])] == 1]
        assert liked == [0, 1]

    def test_random_users_obey_contract(self):
        rng = np.random.default_rng(42)
        per_user = {}
        for u in range(1000):
            n = int(rng.integers(3, 30))
            per_user[f"u{u:04d}"] = [(f"i{rng.integers(0, 500):04d}-{k}", float(rng.integers(1, 6)))
                                 for k in range(n)]
        ds = data.binarize(make_records(per_user))
        for u, pairs in per_user.items():
            if len({i for i, _ in pairs}) < 10:
                assert u not in ds.user_index
                continue
            u_idx = ds.user_index[u]
            ratings = dict(pairs)
            avg = sum(ratings.values()) / len(ratings)
            assert ds.user_mean[u_idx] == pytest.approx(avg)
            for item_id, rating in ratings.items():
                label = ds.labels[(u_idx, ds.item_index[item_id])]
                assert label == (1 if rating > avg else 0), (u, item_id)

    def test_counts_for_manifest(self):
        ds = data.binarize(make_records({"u1": ladder("u1", 10), "u2": ladder("u2", 10, base=5)}))
        c = ds.counts()
        assert c["users"] == 2 and c["ratings"] == 20
        assert c["positive"] + c["negative"] == 20
        assert c["sparsity"] == pytest.approx(20 / (2 * c["items"]))
        text = data.dataset_manifest(ds)
        assert text.startswith("users=2\n") and "sparsity=" in text


class TestSplit:
    def make_dataset(self, n_users=5, n_items=20):
        per_user = {f"u{u}": [(f"i{k:03d}", float((k + u) % 5 + 1)) for k in range(n_items)]
                for u in range(n_users)}
        return data.binarize(make_records(per_user))

    def test_ten_records_split_7_3_with_one_validation(self):
        ds = data.binarize(make_records({"u": ladder("u", 10)}))
        ds = data.split(ds, seed=3)
        tags = [ds.splits[(0, i)] for i in ds.items_of(0)]
        assert tags.count(data.TEST) == 3
        assert tags.count(data.VALIDATION) == 1
        assert tags.count(data.TRAIN) == 6

    def test_every_interaction_tagged_once(self):
        ds = data.split(self.make_dataset(), seed=0)
        assert set(ds.splits) == set(ds.labels)

    def test_deterministic_under_seed(self):
        base = self.make_dataset()
        a = data.split(base, seed=9).splits
        b = data.split(base, seed=9).splits
        c = data.split(base, seed=10).splits
        assert a == b
        assert a != c

    def test_test_sets_get_both_labels_when_possible(self):
        for seed in range(20):
            ds = data.split(self.make_dataset(n_users=8, n_items=25), seed=seed)
            for u in range(ds.n_users):
                overall = {ds.labels[(u, i)] for i in ds.items_of(u)}
                test_labels = {ds.labels[(u, i)] for i in ds.split_items(u, data.TEST)}
                if len(overall) == 2:
                    assert test_labels == overall, (seed, u)

    def test_fraction_validation(self):
        ds = self.make_dataset()
        with pytest.raises(ConfigError):
            data.split(ds, train_fraction=1.5)
        with pytest.raises(ConfigError):
            data.split(ds, validation_fraction=1.0)


class TestBuildHistory:
    def make_split_dataset(self):
        per_user = {"u0": [(f"i{k:03d}", 5.0 if k % 2 else 1.0) for k in range(60)],
                "u1": [(f"i{k:03d}", 5.0 if k < 4 else 1.0) for k in range(60)],
                "u2": [(f"i{k:03d}", 2.0) for k in range(60)]}
        return data.split(data.binarize(make_records(per_user)), seed=1)

    def test_large_pools_sample_without_replacement(self):
        ds = self.make_split_dataset()
        hist = data.build_history(ds, 0, 10, seed=5)
        assert len(hist.prefer_items) == len(hist.dislike_items) == 10
        assert len(set(hist.prefer_items)) == 10
        assert len(set(hist.dislike_items)) == 10
        for i in hist.prefer_items:
            assert ds.splits[(0, i)] == data.TRAIN and ds.labels[(0, i)] == 1
        for i in hist.dislike_items:
            assert ds.splits[(0, i)] == data.TRAIN and ds.labels[(0, i)] == 0

    def test_small_pool_oversamples_with_replacement(self):
        ds = self.make_split_dataset()
        pool = ds.split_items(1, data.TRAIN, label=1)
        assert 1 <= len(pool) < 10
        seen = set()
        for seed in range(40):
            hist = data.build_history(ds, 1, 10, seed=seed)
            assert len(hist.prefer_items) == 10
            assert set(hist.prefer_items) <= set(pool)
            seen |= set(hist.prefer_items)
        assert seen == set(pool)

    def test_missing_view_raises(self):
        ds = self.make_split_dataset()
        with pytest.raises(VocabularyError, match="u2"):
            data.build_history(ds, 2, 10, seed=0)

    def test_build_histories_excludes_and_keeps(self):
        ds = self.make_split_dataset()
        histories = data.build_histories(ds, 10, seed=0)
        assert set(histories) == {0, 1}

    def test_deterministic_under_seed(self):
        ds = self.make_split_dataset()
        a = data.build_history(ds, 0, 10, seed=7)
        b = data.build_history(ds, 0, 10, seed=7)
        assert a.prefer_items == b.prefer_items
        assert a.dislike_items == b.dislike_items

    def test_combined_history_draws_from_all_train_items(self):
        ds = self.make_split_dataset()
        combined = data.build_combined_history(ds, 0, 10, seed=3)
        train_items = set(ds.split_items(0, data.TRAIN))
        assert len(combined) == 10
        assert set(combined) <= train_items


class TestSampleTrainingBatches:
    def make_ds(self):
        per_user = {f"u{u}": [(f"i{k:03d}", 5.0 if (k + u) % 2 else 1.0) for k in range(20)]
                for u in range(4)}
        return data.split(data.binarize(make_records(per_user)), seed=2)

    def test_every_positive_appears_once_with_r_negatives(self):
        ds = self.make_ds()
        histories = data.build_histories(ds, 5, seed=0)
        batches = data.sample_training_batches(ds, histories, negatives=4, batch_size=16, seed=0)
        examples = [ex for batch in batches for ex in batch]
        for ex in examples:
            assert len(ex.negative_items) == 4
            u = ds.user_index[ex.user_id]
            assert ds.labels[(u, ex.positive_item)] == 1
            assert ds.splits[(u, ex.positive_item)] == data.TRAIN
            for n in ex.negative_items:
                assert ds.labels[(u, n)] == 0 and ds.splits[(u, n)] == data.TRAIN
        expected = sum(len(ds.split_items(u, data.TRAIN, label=1)) for u in histories)
        assert len(examples) == expected
        assert all(len(b) <= 16 for b in batches)

    def test_single_dislike_repeats(self):
        per_user = {"u": [(f"i{k:02d}", 5.0) for k in range(11)] + [("neg", 1.0)]}
        ds = data.binarize(make_records(per_user))
        splits = {(0, i): data.TRAIN for i in ds.items_of(0)}
        ds = ds.with_splits(splits)
        histories = data.build_histories(ds, 3, seed=0)
        batches = data.sample_training_batches(ds, histories, negatives=4, batch_size=8, seed=1)
        neg_idx = ds.item_index["neg"]
        for batch in batches:
            for ex in batch:
                assert ex.negative_items == [neg_idx] * 4

    def test_identical_seed_identical_stream(self):
        ds = self.make_ds()
        histories = data.build_histories(ds, 5, seed=0)
        a = data.sample_training_batches(ds, histories, 4, 8, seed=5)
        b = data.sample_training_batches(ds, histories, 4, 8, seed=5)
        assert a == b
        c = data.sample_training_batches(ds, histories, 4, 8, seed=6)
        assert a != c

    def test_no_test_items_leak(self):
        ds = self.make_ds()
        histories = data.build_histories(ds, 10, seed=4)
        test_pairs = {(u, i) for (u, i), s in ds.splits.items() if s == data.TEST}
        for u, hist in histories.items():
            for i in hist.prefer_items + hist.dislike_items:
                assert (u, i) not in test_pairs
        batches = data.sample_training_batches(ds, histories, 4, 8, seed=4)
        for batch in batches:
            for ex in batch:
                u = ds.user_index[ex.user_id]
                for i in [ex.positive_item] + ex.negative_items:
                    assert (u, i) not in test_pairs


class TestRoundTrip:
    def test_save_load_preserves_everything(self, tmp_path):
        per_user = {f"u{u}": ladder(f"u{u}", 12, base=3 * u) for u in range(3)}
        ds = data.split(data.binarize(make_records(per_user)), seed=8)
        path = tmp_path / "dataset.json"
        data.save_dataset(ds, path)
        loaded = data.load_dataset(path)
        assert loaded.user_ids == ds.user_ids
        assert loaded.item_ids == ds.item_ids
        assert loaded.labels == ds.labels
        assert loaded.splits == ds.splits
        assert loaded.user_mean == pytest.approx(ds.user_mean)

    def test_save_is_byte_deterministic(self, tmp_path):
        per_user = {"u": ladder("u", 10)}
        ds = data.split(data.binarize(make_records(per_user)), seed=1)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        data.save_dataset(ds, p1)
        data.save_dataset(ds, p2)
        assert p1.read_bytes() == p2.read_bytes()
