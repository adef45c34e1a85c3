import numpy as np
import pytest

from sedlab.errors import InvalidInputError, NumericError
from sedlab.events import EventInterval, extract_intervals, rasterize_intervals
from sedlab.postprocess import (
    ClasswisePostprocParams,
    alpha_grid,
    beta_grid,
    binarize,
    classwise_postproc,
    collect_logit_samples,
    estimate_filter_len,
    fit_classwise_params,
    global_filter_len,
    global_params,
    global_postproc,
    logit,
    mean_run_length,
    median_smooth,
    round_to_odd,
)


class TestRounding:
    def test_exact_odd_stays(self):
        assert round_to_odd(25.0) == 25
        assert round_to_odd(31.0) == 31

    def test_tie_resolves_downward(self):
        assert round_to_odd(50.0) == 49

    def test_general_nearest(self):
        assert round_to_odd(27.92) == 27
        assert round_to_odd(28.2) == 29

    def test_minimum_is_one(self):
        assert round_to_odd(0.1) == 1

    def test_global_filter_at_config_rate(self):
        # 445 ms at 16000/255 fps -> 27 frames
        assert global_filter_len(16000 / 255) == 27


class TestMedianSmooth:
    def test_length_one_identity(self, rng):
        seq = (rng.random(30) < 0.5).astype(float)
        np.testing.assert_array_equal(median_smooth(seq, 1), seq)

    def test_constant_unchanged(self):
        np.testing.assert_array_equal(median_smooth(np.ones(20), 5), np.ones(20))

    def test_isolated_one_removed(self):
        seq = np.zeros(15)
        seq[7] = 1.0
        assert median_smooth(seq, 3).sum() == 0

    def test_short_gap_filled(self):
        seq = np.ones(15)
        seq[7] = 0.0
        assert median_smooth(seq, 3).sum() == 15

    def test_even_length_rejected(self):
        with pytest.raises(InvalidInputError):
            median_smooth(np.zeros(10), 4)

    def test_matches_direct_median(self, rng):
        seq = (rng.random(50) < 0.4).astype(float)
        out = median_smooth(seq, 5)
        padded = np.concatenate([np.full(2, seq[0]), seq, np.full(2, seq[-1])])
        for i in range(50):
            assert out[i] == np.median(padded[i:i + 5])

    def test_locality(self, rng):
        # Changing a frame never affects outputs more than half a window away.
        seq = (rng.random(40) < 0.5).astype(float)
        out = median_smooth(seq, 7)
        seq2 = seq.copy()
        seq2[20] = 1.0 - seq2[20]
        out2 = median_smooth(seq2, 7)
        changed = np.flatnonzero(out != out2)
        assert np.all(np.abs(changed - 20) <= 3)


class TestFilterLength:
    def make_grids(self, run_len, n=4):
        grid = np.zeros((run_len * 3, 1))
        grid[run_len:2 * run_len, 0] = 1.0
        return [grid] * n

    def test_quarter_of_hundred(self):
        assert estimate_filter_len(self.make_grids(100), 0, 25.0, fps=10.0) == 25

    def test_half_of_hundred_ties_down(self):
        assert estimate_filter_len(self.make_grids(100), 0, 50.0, fps=10.0) == 49

    def test_full_single_run(self):
        grid = np.zeros((100, 1))
        grid[10:41, 0] = 1.0
        assert estimate_filter_len([grid], 0, 100.0, fps=10.0) == 31

    def test_no_runs_raises(self):
        with pytest.raises(NumericError):
            estimate_filter_len([np.zeros((20, 2))], 1, 25.0, fps=10.0)

    def test_mean_run_length(self):
        grid = np.zeros((30, 1))
        grid[0:4, 0] = 1.0
        grid[10:18, 0] = 1.0
        assert mean_run_length([grid], 0) == 6.0


class TestBinarize:
    def test_strict_comparison(self):
        grid = np.array([[0.5, 0.500001], [0.4999, 0.7]])
        out = binarize(grid, 0.5)
        np.testing.assert_array_equal(out, [[0, 1], [0, 1]])

    def test_per_class_thresholds(self):
        grid = np.array([[0.3, 0.3]])
        out = binarize(grid, [0.2, 0.4])
        np.testing.assert_array_equal(out, [[1, 0]])


class TestGlobalAndClasswise:
    def test_global_empty_grid(self):
        assert global_postproc(np.zeros((40, 3)), fps=10.0) == []

    def test_classwise_with_global_params_identical(self, rng):
        posts = rng.random((200, 4))
        fps = 12.5
        a = global_postproc(posts, fps)
        b = classwise_postproc(posts, global_params(4, fps), fps)
        assert a == b

    def test_missing_class_params_rejected(self, rng):
        posts = rng.random((50, 3))
        params = global_params(2, 10.0)
        with pytest.raises(InvalidInputError):
            classwise_postproc(posts, params, 10.0)

    def test_detects_a_clear_event(self):
        posts = np.full((60, 2), 0.05)
        posts[20:40, 1] = 0.95
        events = global_postproc(posts, fps=10.0)
        assert events == [EventInterval(1, 2.0, 4.0)]

    def test_threshold_monotonicity(self, rng):
        posts = rng.random((100, 2))
        low = binarize(posts, 0.3).sum()
        high = binarize(posts, 0.7).sum()
        assert high <= low


class TestGrids:
    def test_alpha_grid_shape_and_range(self):
        grid = alpha_grid()
        assert grid.size == 10
        assert grid[0] == pytest.approx(0.0002)
        assert grid[-1] == pytest.approx(0.1)
        ratios = grid[1:] / grid[:-1]
        np.testing.assert_allclose(ratios, ratios[0])  # log spacing

    def test_beta_grid_shape_and_range(self):
        grid = beta_grid()
        assert grid.size == 20
        assert grid[0] == pytest.approx(5.0)
        assert grid[-1] == pytest.approx(100.0)
        np.testing.assert_allclose(np.diff(grid), np.diff(grid)[0])  # linear


class TestLogitSamples:
    def test_logit_values(self):
        assert logit(0.5) == pytest.approx(0.0, abs=1e-12)
        assert logit(0.9) == pytest.approx(2.1972, abs=1e-4)

    def test_selection_rule(self):
        posts = [np.full((10, 2), 0.6), np.full((10, 2), 0.2)]
        weak = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        samples = collect_logit_samples(posts, weak, class_id=0)
        assert samples.size == 10  # only the first clip qualifies
        np.testing.assert_allclose(samples, logit(0.6))

    def test_no_qualifying_clips(self):
        posts = [np.full((10, 2), 0.6)]
        weak = [np.array([0.0, 1.0])]
        with pytest.raises(NumericError):
            collect_logit_samples(posts, weak, class_id=0)


class TestFitClasswiseParams:
    def test_fallbacks_for_hopeless_classes(self, rng):
        # Class 1 never appears in the weak labels -> threshold fallback.
        posts = [rng.random((50, 2)) for _ in range(5)]
        weak = [np.array([1.0, 0.0])] * 5
        params = fit_classwise_params(posts, weak, 2, alpha=0.01, beta_pct=25.0, fps=10.0)
        assert params.n_classes == 2
        assert params.thresholds[1] == 0.5
        assert any("fallback" in note for note in params.diagnostics[1])

    def test_round_trip_dict(self, rng):
        params = global_params(3, 12.5)
        back = ClasswisePostprocParams.from_dict(params.to_dict())
        np.testing.assert_array_equal(back.thresholds, params.thresholds)
        np.testing.assert_array_equal(back.filter_lens, params.filter_lens)


class TestExtractIntervals:
    def test_empty(self):
        assert extract_intervals(np.zeros((30, 2)), fps=10.0) == []

    def test_index_arithmetic(self):
        grid = np.zeros((30, 1))
        grid[10:20, 0] = 1.0
        assert extract_intervals(grid, fps=50.0) == [EventInterval(0, 0.2, 0.4)]

    def test_round_trip(self, rng):
        grid = (rng.random((40, 3)) < 0.3).astype(float)
        events = extract_intervals(grid, fps=10.0)
        back = rasterize_intervals(events, 40, 3, fps=10.0)
        np.testing.assert_array_equal(back, grid)
