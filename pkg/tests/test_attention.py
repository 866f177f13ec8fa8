import numpy as np
import pytest

from deoverlap.attention import AttentionReweighter, aggregate_attention, logit, reweight, sigmoid
from deoverlap.errors import InvalidInputError
from deoverlap.gridio import read_feature_grid, write_feature_grid
from deoverlap.masks import BBox


class TestSigmoidLogit:
    def test_round_trip(self):
        x = np.linspace(-10, 10, 101)
        assert np.allclose(logit(sigmoid(x)), x, atol=1e-8)

    def test_sigmoid_zero(self):
        assert sigmoid(np.zeros((2, 2)))[0, 0] == 0.5

    def test_logit_clamps(self):
        assert np.isfinite(logit(np.array([0.0, 1.0]))).all()


class TestAggregateAttention:
    def test_no_predictions_is_uniform_half(self):
        attn = aggregate_attention([], width=8, height=6)
        assert attn.shape == (6, 8)
        assert np.max(np.abs(attn - 0.5)) < 1e-9

    def test_confident_prediction_saturates_inside_box(self):
        grid = np.full((4, 4), 1.0)
        attn = aggregate_attention([(grid, BBox(2, 2, 6, 6))], width=8, height=8)
        assert attn[2:6, 2:6].min() > 0.999
        outside = np.ones((8, 8), dtype=bool)
        outside[2:6, 2:6] = False
        assert np.max(np.abs(attn[outside] - 0.5)) < 1e-9

    def test_stacked_unit_logits_sum(self):
        p = sigmoid(np.array(1.0))  # probability whose logit is exactly 1
        grid = np.full((4, 4), float(p))
        preds = [(grid, BBox(0, 0, 4, 4)), (grid, BBox(2, 2, 6, 6), 0.9)]
        attn = aggregate_attention(preds, width=8, height=8)
        expected_overlap = float(sigmoid(np.array(2.0)))
        assert abs(attn[3, 3] - expected_overlap) < 1e-6
        assert abs(attn[3, 3] - 0.8807970779778823) < 1e-6
        assert abs(attn[0, 0] - float(sigmoid(np.array(1.0)))) < 1e-6
        assert abs(attn[7, 7] - 0.5) < 1e-9

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        preds = [
            (rng.random((3, 3)), BBox(0, 0, 3, 3)),
            (rng.random((2, 2)), BBox(1, 1, 4, 4)),
            (rng.random((4, 4)), BBox(2, 0, 5, 5)),
        ]
        a = aggregate_attention(preds, width=6, height=6)
        b = aggregate_attention(preds[::-1], width=6, height=6)
        assert np.array_equal(a, b)

    def test_monotone_in_probabilities(self):
        rng = np.random.default_rng(8)
        grid = np.clip(rng.random((3, 3)), 0.05, 0.9)
        base = aggregate_attention([(grid, BBox(0, 0, 3, 3))], width=4, height=4)
        bumped = grid.copy()
        bumped[1, 1] = min(1.0, bumped[1, 1] + 0.05)
        after = aggregate_attention([(bumped, BBox(0, 0, 3, 3))], width=4, height=4)
        assert (after >= base - 1e-12).all()

    def test_box_outside_image_rejected(self):
        with pytest.raises(InvalidInputError):
            aggregate_attention([(np.full((2, 2), 0.5), BBox(3, 3, 6, 6))], width=4, height=4)

    def test_values_strictly_inside_unit_interval(self):
        grid = np.array([[0.0, 1.0], [1.0, 0.0]])
        attn = aggregate_attention([(grid, BBox(0, 0, 2, 2))], width=2, height=2)
        assert (attn > 0.0).all() and (attn < 1.0).all()


class TestReweight:
    def test_near_unit_attention_preserves_features(self):
        rng = np.random.default_rng(3)
        features = rng.standard_normal((4, 5, 6))
        attn = np.full((5, 6), 1.0 - 1e-9)
        out = reweight(features, attn)
        assert np.allclose(out, features, rtol=1e-6)

    def test_unit_features_reproduce_attention(self):
        rng = np.random.default_rng(5)
        attn = np.clip(rng.random((4, 4)), 1e-6, 1 - 1e-6)
        out = reweight(np.ones((3, 4, 4)), attn)
        for c in range(3):
            assert np.array_equal(out[c], attn)

    def test_suppression_ratio(self):
        features = np.full((1, 2, 2), 2.0)
        attn = np.array([[0.8, 0.4], [0.8, 0.4]])
        out = reweight(features, attn)
        assert np.allclose(out[0, :, 0] / out[0, :, 1], 0.8 / 0.4)

    def test_sign_preserved_and_magnitude_shrinks(self):
        rng = np.random.default_rng(6)
        features = rng.standard_normal((2, 8, 8))
        attn = np.clip(rng.random((8, 8)), 0.01, 0.99)
        out = reweight(features, attn)
        assert (np.sign(out) == np.sign(features)).all() or np.allclose(out[features == 0], 0)
        assert (np.abs(out) <= np.abs(features) + 1e-15).all()

    def test_attention_resampled_to_feature_resolution(self):
        attn = np.array([[0.25, 0.75]])  # 1x2 map onto 1x4 features
        out = reweight(np.ones((1, 1, 4)), attn)
        assert np.array_equal(out[0, 0], np.array([0.25, 0.25, 0.75, 0.75]))


class TestFeatureGridIO(object):
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(12)
        features = rng.standard_normal((3, 4, 5)).astype(np.float32).astype(np.float64)
        path = tmp_path / "grid.bin"
        write_feature_grid(features, path)
        back = read_feature_grid(path)
        assert back.shape == (3, 4, 5)
        assert np.array_equal(back, features)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "grid.bin"
        write_feature_grid(np.zeros((2, 3, 4)), path)
        raw = path.read_bytes()
        width, height, channels = np.frombuffer(raw[:12], dtype="<i4")
        assert (width, height, channels) == (4, 3, 2)
        assert len(raw) == 12 + 4 * 2 * 3 * 4


class TestAttentionReweighter:
    def test_fit_transform(self):
        rng = np.random.default_rng(7)
        preds = [(rng.random((3, 3)), BBox(0, 0, 3, 3))]
        est = AttentionReweighter(width=4, height=4).fit(preds)
        assert est.attention_map_.shape == (4, 4)
        feats = [rng.standard_normal((2, 4, 4))]
        (out,) = est.transform(feats)
        assert np.array_equal(out, reweight(feats[0], est.attention_map_))

    def test_transform_before_fit_raises(self):
        with pytest.raises(InvalidInputError):
            AttentionReweighter(width=2, height=2).transform([np.ones((1, 2, 2))])

    def test_clone_compatible_params(self):
        from sklearn.base import clone

        est = AttentionReweighter(width=8, height=6)
        cloned = clone(est)
        assert cloned.get_params() == {"width": 8, "height": 6}
