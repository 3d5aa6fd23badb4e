"""Weighted-sum fusion: hand-checked arithmetic, decisions, sweep, CSV round trips."""

import numpy as np
import pytest

from lesionfuse.fusion import (
    DEFAULT_WEIGHTS,
    FusionInputError,
    FusionWeights,
    ScoreRecord,
    decide,
    fuse_scores,
    merge_score_files,
    read_fused_csv,
    read_single_scores,
    weight_sweep,
    write_fused_csv,
    write_single_scores,
)


def record(scores, label=None):
    return ScoreRecord(sample_id="r", scores=tuple(scores), label=label)


class TestFusionWeights:
    def test_normalized_on_construction(self):
        w = FusionWeights((2.0, 3.0))
        assert w.values == (0.4, 0.6)
        assert abs(sum(w.values) - 1.0) <= 1e-9

    def test_default_weights(self):
        assert DEFAULT_WEIGHTS.values == (0.45, 0.55)

    def test_negative_rejected(self):
        with pytest.raises(FusionInputError, match="negative"):
            FusionWeights((0.5, -0.1))

    def test_all_zero_rejected(self):
        with pytest.raises(FusionInputError, match="zero"):
            FusionWeights((0.0, 0.0))

    def test_empty_rejected(self):
        with pytest.raises(FusionInputError, match="one weight"):
            FusionWeights(())

    def test_scaling_invariance(self):
        assert FusionWeights((0.45, 0.55)) == FusionWeights((45, 55))
        assert FusionWeights((1, 3)) == FusionWeights((0.25, 0.75))


class TestFuseScores:
    def test_hand_examples(self):
        assert fuse_scores(FusionWeights((0.5, 0.5)), record((0.8, 0.6))) == pytest.approx(0.7)
        assert fuse_scores(FusionWeights((1.0, 0.0)), record((0.33, 0.91))) == 0.33
        assert fuse_scores(FusionWeights((0.45, 0.55)), record((0.9, 0.7))) == pytest.approx(
            0.790, abs=1e-12
        )

    def test_matches_hand_arithmetic_randomized(self):
        rng = np.random.default_rng(55)
        for _ in range(300):
            n = int(rng.integers(2, 5))
            raw = rng.random(n) + 1e-3
            xs = rng.random(n)
            weights = FusionWeights(raw)
            fused = fuse_scores(weights, record(xs))
            hand = sum(w * x for w, x in zip(weights.values, xs))
            assert abs(fused - hand) <= 1e-9
            assert min(xs) <= fused <= max(xs)

    def test_single_model_passthrough(self):
        rng = np.random.default_rng(56)
        for _ in range(50):
            xs = rng.random(3)
            pick = int(rng.integers(0, 3))
            w = [0.0, 0.0, 0.0]
            w[pick] = 1.0
            assert fuse_scores(FusionWeights(w), record(xs)) == xs[pick]

    def test_monotone_in_each_score(self):
        weights = FusionWeights((0.3, 0.7))
        low = fuse_scores(weights, record((0.2, 0.5)))
        high = fuse_scores(weights, record((0.4, 0.5)))
        assert high > low

    def test_arity_mismatch(self):
        with pytest.raises(FusionInputError, match="2 scores"):
            fuse_scores(FusionWeights((0.5, 0.5, 0.0)), record((0.1, 0.2)))

    def test_score_out_of_range(self):
        with pytest.raises(FusionInputError, match="out of"):
            fuse_scores(FusionWeights((0.5, 0.5)), record((1.2, 0.2)))


class TestDecide:
    def test_basic_and_tie(self):
        assert decide(0.7) == 1
        assert decide(0.3) == 0
        assert decide(0.5) == 1  # tie goes to malignant

    def test_matches_argmax_over_complement_grid(self):
        """decide(s) equals argmax over (1-s, s) with ties to class 1."""
        for s in np.linspace(0.0, 1.0, 201):
            s = float(s)
            argmax = 1 if s >= 1.0 - s else 0
            assert decide(s) == argmax

    def test_custom_threshold(self):
        assert decide(0.3, threshold=0.25) == 1
        assert decide(0.2, threshold=0.25) == 0

    def test_bad_threshold(self):
        with pytest.raises(FusionInputError, match="threshold"):
            decide(0.5, threshold=0.0)


class TestWeightSweep:
    def test_better_model_gets_heavier_weight(self):
        """Model 2 perfect, model 1 coin-flip: best w2 must be >= 0.5."""
        rng = np.random.default_rng(57)
        records = []
        for i in range(80):
            label = i % 2
            perfect = 0.9 if label else 0.1
            noise = float(rng.random())
            records.append(ScoreRecord(f"s{i}", (noise, perfect), label))
        best, table = weight_sweep(records, step=0.05)
        assert best[1] >= 0.5
        assert len(table) == 21
        best_acc = max(acc for _, _, acc in table)
        assert any(w2 >= 0.5 and acc == best_acc for _, w2, acc in table)

    def test_identical_models_tie_to_lowest_w1(self):
        records = [ScoreRecord(f"s{i}", (0.8, 0.8), 1) for i in range(5)]
        best, table = weight_sweep(records, step=0.25)
        accs = {acc for _, _, acc in table}
        assert accs == {1.0}
        assert best[0] == 0.0

    def test_single_record_flat_table(self):
        best, table = weight_sweep([ScoreRecord("a", (0.9, 0.9), 1)], step=0.5)
        assert [acc for _, _, acc in table] == [1.0, 1.0, 1.0]

    def test_unlabeled_rejected(self):
        with pytest.raises(FusionInputError, match="no label"):
            weight_sweep([ScoreRecord("a", (0.9, 0.9), None)])

    def test_empty_rejected(self):
        with pytest.raises(FusionInputError, match="zero records"):
            weight_sweep([])

    def test_bad_step_rejected(self):
        with pytest.raises(FusionInputError, match="step"):
            weight_sweep([ScoreRecord("a", (0.9, 0.9), 1)], step=0.3)


class TestScoreFiles:
    def test_single_scores_round_trip(self, tmp_path):
        path = tmp_path / "scores.csv"
        rows = [("a", 0.123456789123456789, 1), ("b", 0.5, 0), ("c", 1.0, None)]
        write_single_scores(path, rows)
        back = read_single_scores(path)
        assert back[0][0] == "a"
        assert back[0][1] == rows[0][1]  # repr round trip is exact
        assert back[2][2] is None

    def test_merge_matches_ids_in_first_file_order(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_single_scores(a, [("s2", 0.2, 1), ("s1", 0.6, 0)])
        write_single_scores(b, [("s1", 0.5, None), ("s2", 0.9, 1)])
        records = merge_score_files([a, b])
        assert [r.sample_id for r in records] == ["s2", "s1"]
        assert records[0].scores == (0.2, 0.9)
        assert records[0].label == 1
        assert records[1].label == 0

    def test_merge_id_mismatch_names_divergence(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_single_scores(a, [("s1", 0.2, None), ("s2", 0.3, None)])
        write_single_scores(b, [("s1", 0.5, None), ("s3", 0.9, None)])
        with pytest.raises(FusionInputError, match="'s2'"):
            merge_score_files([a, b])

    def test_merge_label_conflict_rejected(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_single_scores(a, [("s1", 0.2, 0)])
        write_single_scores(b, [("s1", 0.5, 1)])
        with pytest.raises(FusionInputError, match="label mismatch"):
            merge_score_files([a, b])

    def test_fused_csv_round_trip(self, tmp_path):
        path = tmp_path / "fused.csv"
        rows = [("a", 0.790, 1, 1), ("b", 0.25, 0, None)]
        write_fused_csv(path, rows)
        back = read_fused_csv(path)
        assert back[0] == ("a", 0.790, 1, 1)
        assert back[1][3] is None

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(FusionInputError, match="not found"):
            read_single_scores(tmp_path / "missing.csv")

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,value\na,0.5\n")
        with pytest.raises(FusionInputError, match="header"):
            read_single_scores(path)
