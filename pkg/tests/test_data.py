import numpy as np
import pytest

from avmil.data import Dataset, VideoBag, check_labels, segment_windows


class TestSegmentWindows:
    def test_ten_second_recording_yields_20_segments(self):
        # 10 s at 10 ms hop = 1000 frames; 960 ms window / 480 ms stride.
        windows = segment_windows(1000, 96, 48)
        assert len(windows) == 20
        assert windows[0] == (0, 96)
        assert windows[-1] == (912, 1008)

    def test_exactly_one_full_window(self):
        assert segment_windows(96, 96, 48) == [(0, 96)]

    def test_partial_final_window_included(self):
        assert segment_windows(200, 96, 48) == [(0, 96), (48, 144), (96, 192), (144, 240)]

    def test_input_shorter_than_window(self):
        assert segment_windows(50, 96, 48) == [(0, 96)]

    @pytest.mark.parametrize("args", [(0, 96, 48), (100, 0, 48), (100, 96, 0), (-5, 96, 48)])
    def test_non_positive_arguments_rejected(self, args):
        with pytest.raises(ValueError):
            segment_windows(*args)

    def test_coverage_and_stride_properties(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            window = int(rng.integers(1, 50))
            stride = int(rng.integers(1, window + 1))  # stride <= window: no gaps
            total = int(rng.integers(1, 300))
            windows = segment_windows(total, window, stride)
            starts = [s for s, _ in windows]
            assert starts[0] == 0
            assert all(b - a == stride for a, b in zip(starts, starts[1:]))
            covered = set()
            for s, e in windows:
                covered.update(range(s, e))
            assert covered >= set(range(total))


class TestLabelAndBagValidation:
    def test_labels_must_be_plus_minus_one(self):
        with pytest.raises(ValueError):
            check_labels(np.array([1, 0, -1]))
        out = check_labels(np.array([1, -1]))
        assert out.dtype == np.int8

    def test_bag_rejects_non_finite_features(self):
        with pytest.raises(ValueError, match="non-finite"):
            VideoBag(
                id="x",
                visual=np.array([[np.nan]]),
                audio=np.zeros((1, 1)),
                labels=np.array([1]),
            )

    def test_bag_rejects_empty_modality(self):
        with pytest.raises(ValueError):
            VideoBag(
                id="x",
                visual=np.zeros((0, 3)),
                audio=np.zeros((2, 2)),
                labels=np.array([1]),
            )

    def test_paper_scale_bag_dimensions_accepted(self):
        # 10 frames x 10 proposals, 9216-dim visual, 20 segments, 128-dim audio.
        bag = VideoBag(
            id="big",
            visual=np.zeros((100, 9216), dtype=np.float32),
            audio=np.zeros((20, 128), dtype=np.float32),
            labels=np.array([1] + [-1] * 16),
        )
        assert bag.num_visual == 100
        assert bag.num_audio == 20


def _bag(bag_id, d_v=4, d_a=3, C=2, labels=(1, -1)):
    return VideoBag(
        id=bag_id,
        visual=np.ones((2, d_v)),
        audio=np.ones((2, d_a)),
        labels=np.array(labels),
    )


class TestDataset:
    def test_mixed_visual_dims_rejected_naming_bag(self):
        with pytest.raises(ValueError, match="b2"):
            Dataset(bags=[_bag("b1"), _bag("b2", d_v=8)], class_names=["a", "b"])

    def test_training_bag_without_positive_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            Dataset(bags=[_bag("b1", labels=(-1, -1))], class_names=["a", "b"], split="train")
        # The same bag is fine in a test split.
        ds = Dataset(bags=[_bag("b1", labels=(-1, -1))], class_names=["a", "b"], split="test")
        assert len(ds) == 1

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            Dataset(bags=[], class_names=["a"])

    def test_labels_matrix_order(self):
        ds = Dataset(
            bags=[_bag("b1", labels=(1, -1)), _bag("b2", labels=(-1, 1))],
            class_names=["a", "b"],
        )
        np.testing.assert_array_equal(ds.labels_matrix(), [[1, -1], [-1, 1]])
