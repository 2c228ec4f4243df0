import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kedformer.data import (
    Scaler, SeriesFrame, SplitSpec, chronological_split, load_csv, save_csv, split_bounds, standardize,
    synth_generate, window_arrays, window_count, windows,
)
from kedformer.errors import ConfigurationError, IngestionError, InsufficientDataError, OrderingError

from oracles import correlation_loops

ETT_HEADER = "date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT"


def write(tmp_path, text, name="s.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_toy_file(self, tmp_path):
        path = write(tmp_path, "date,a,b\n2020-01-01 00:00:00,1,2\n2020-01-01 01:00:00,3,4\n"
                               "2020-01-01 02:00:00,5,6\n")
        frame = load_csv(path)
        assert len(frame) == 3 and frame.n_features == 2 and frame.names == ("a", "b")
        assert np.array_equal(frame.values, [[1, 2], [3, 4], [5, 6]])
        assert np.array_equal(np.diff(frame.timestamps), [3600, 3600])

    def test_ett_header(self, tmp_path):
        rows = [f"2016-07-01 00:{15 * i:02d}:00," + ",".join(str(i + j) for j in range(7)) for i in range(4)]
        frame = load_csv(write(tmp_path, ETT_HEADER + "\n" + "\n".join(rows) + "\n"))
        assert frame.n_features == 7 and frame.names[-1] == "OT"

    def test_epoch_timestamps(self, tmp_path):
        frame = load_csv(write(tmp_path, "t,x\n10,1.5\n20,2.5\n"))
        assert np.array_equal(frame.timestamps, [10, 20])

    def test_shuffled_row_names_line(self, tmp_path):
        path = write(tmp_path, "t,x\n1,0\n3,0\n2,0\n4,0\n")
        with pytest.raises(OrderingError, match=r"s\.csv:4"):
            load_csv(path)

    @pytest.mark.parametrize("body, line", [
        ("1,0\nnot-a-date,1\n", 3),
        ("1,0\n2,abc\n", 3),
        ("1,0\n2\n", 3),
        ("1,nan\n", 2),
    ])
    def test_bad_rows_name_line(self, tmp_path, body, line):
        with pytest.raises(IngestionError, match=f":{line}:"):
            load_csv(write(tmp_path, "t,x\n" + body))

    def test_missing_value(self, tmp_path):
        path = write(tmp_path, "t,x,y\n1,1,2\n2,,3\n")
        with pytest.raises(IngestionError, match="missing"):
            load_csv(path)
        assert np.array_equal(load_csv(path, forward_fill=True).values, [[1, 2], [1, 3]])

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestionError, match="nope.csv"):
            load_csv(tmp_path / "nope.csv")

    @pytest.mark.parametrize("text", ["", "t\n1\n", "t,x\n"])
    def test_empty_or_headerless(self, tmp_path, text):
        with pytest.raises(IngestionError):
            load_csv(write(tmp_path, text))

    def test_save_round_trip(self, tmp_path, rng):
        frame = SeriesFrame(np.arange(5.0), rng.standard_normal((5, 3)), ("a", "b", "c"))
        save_csv(frame, tmp_path / "o.csv")
        back = load_csv(tmp_path / "o.csv")
        assert np.array_equal(back.values, frame.values) and np.array_equal(back.timestamps, frame.timestamps)

    def test_save_round_trip_datetimes(self, tmp_path):
        frame = load_csv(write(tmp_path, "date,x\n2021-03-01 00:00:00,1\n2021-03-01 01:00:00,2\n"))
        save_csv(frame, tmp_path / "o.csv")
        assert np.array_equal(load_csv(tmp_path / "o.csv").timestamps, frame.timestamps)


class TestSplit:
    @pytest.mark.parametrize("ratios, lengths", [((0.6, 0.2, 0.2), (6, 2, 2)), ((0.7, 0.1, 0.2), (7, 1, 2))])
    def test_examples(self, ratios, lengths):
        frame = SeriesFrame(np.arange(10.0), np.arange(10.0)[:, None])
        parts = chronological_split(frame, SplitSpec(*ratios))
        assert tuple(len(p) for p in parts) == lengths

    def test_train_only(self):
        frame = SeriesFrame(np.arange(10.0), np.zeros((10, 1)))
        with pytest.raises(InsufficientDataError, match="val"):
            chronological_split(frame, SplitSpec(1.0, 0.0, 0.0))

    def test_min_len(self):
        frame = SeriesFrame(np.arange(100.0), np.zeros((100, 1)))
        with pytest.raises(InsufficientDataError):
            chronological_split(frame, SplitSpec(), min_len=20)

    @pytest.mark.parametrize("ratios", [(0.5, 0.5, 0.5), (-0.1, 0.6, 0.5)])
    def test_bad_ratios(self, ratios):
        with pytest.raises(ConfigurationError):
            SplitSpec(*ratios)

    @given(st.integers(100, 5000), st.floats(0.1, 0.8), st.floats(0.05, 0.15))
    def test_segments_tile(self, T, train, val):
        spec = SplitSpec(train, val, 1 - train - val)
        frame = SeriesFrame(np.arange(float(T)), np.arange(float(T))[:, None])
        _, a, b, _ = split_bounds(T, spec)
        assert a == math.floor(train * T + 1e-9)
        parts = chronological_split(frame, spec)
        assert np.array_equal(np.concatenate([p.values for p in parts]), frame.values)


class TestScaling:
    def test_fixed_point(self, rng):
        x = rng.standard_normal((500, 3))
        x = (x - x.mean(0)) / x.std(0)
        (out,), _ = standardize(SeriesFrame(np.arange(500.0), x))
        assert np.abs(out.values - x).max() < 1e-9

    def test_constant_feature(self):
        frame = SeriesFrame(np.arange(4.0), np.array([[1.0, 5], [2, 5], [3, 5], [4, 5]]))
        (out,), scaler = standardize(frame)
        assert np.all(np.isfinite(out.values)) and not out.values[:, 1].any()
        assert scaler.std[1] == Scaler.STD_FLOOR

    @given(st.integers(0, 2 ** 31 - 1), st.floats(-1e3, 1e3), st.floats(1e-3, 1e3))
    def test_inverse_round_trip(self, seed, loc, scale):
        x = loc + scale * np.random.default_rng(seed).standard_normal((50, 2))
        s = Scaler.fit(x)
        assert np.abs(s.inverse(s.transform(x)) - x).max() <= 1e-10 * max(1.0, abs(loc) + scale)

    def test_uses_train_statistics_only(self, rng):
        x = rng.standard_normal((100, 1))
        train, test = SeriesFrame(np.arange(60.0), x[:60]), SeriesFrame(np.arange(60.0, 100), x[60:])
        (_, t1), _ = standardize(train, test)
        (_, t3), _ = standardize(train.with_values(train.values + 1), test)
        assert not np.array_equal(t1.values, t3.values)
        _, s_a = standardize(train, test)
        _, s_b = standardize(train, test.with_values(test.values * 100))
        assert np.array_equal(s_a.mean, s_b.mean) and np.array_equal(s_a.std, s_b.std)

    def test_dict_round_trip(self, rng):
        s = Scaler.fit(rng.standard_normal((10, 3)))
        back = Scaler.from_dict(s.to_dict())
        assert np.array_equal(back.mean, s.mean) and np.array_equal(back.std, s.std)


class TestWindows:
    @pytest.mark.parametrize("T, I, O, count", [(28, 24, 4, 1), (100, 96, 4, 1), (200, 96, 24, 81)])
    def test_counts(self, T, I, O, count):
        frame = SeriesFrame(np.arange(float(T)), np.arange(float(T))[:, None])
        samples = windows(frame, I, O)
        assert len(samples) == count == window_count(T, I, O)

    def test_target_follows_input(self):
        frame = SeriesFrame(np.arange(50.0), np.arange(50.0)[:, None])
        for s in windows(frame, 10, 5, stride=3):
            assert s.y[0, 0] == s.x[-1, 0] + 1 == s.origin + 10
        X, Y = window_arrays(frame, 10, 5)
        assert X.shape == (36, 10, 1) and Y.shape == (36, 5, 1)

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            windows(SeriesFrame(np.arange(5.0), np.zeros((5, 1))), 4, 2)

    def test_bad_stride(self):
        with pytest.raises(ConfigurationError):
            windows(SeriesFrame(np.arange(5.0), np.zeros((5, 1))), 2, 1, stride=0)

    @given(st.integers(1, 200), st.integers(1, 40), st.integers(1, 20), st.integers(1, 7))
    @settings(max_examples=50)
    def test_count_matches_enumeration(self, T, I, O, stride):
        explicit = sum(1 for t in range(0, T, stride) if t + I + O <= T)
        assert window_count(T, I, O, stride) == explicit


class TestSynthetic:
    def test_noiseless_sine_trend_is_periodic(self):
        frame = synth_generate("sine_trend", 240, D=2, noise=0.0)
        t = np.arange(240.0)[:, None]
        residual = frame.values - t / 240
        assert np.abs(residual[24:] - residual[:-24]).max() < 1e-12

    @pytest.mark.parametrize("kind", ["sine_trend", "multi_period", "random_walk"])
    def test_deterministic(self, kind):
        a, b = synth_generate(kind, 100, D=3, seed=5), synth_generate(kind, 100, D=3, seed=5)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, synth_generate(kind, 100, D=3, seed=6).values)

    def test_multi_period_correlation_peaks(self):
        frame = synth_generate("multi_period", 168 * 4, noise=0.0)
        r = correlation_loops(frame.values, frame.values)
        # short period is a local peak, the long one (where both align) the global peak past lag 0
        assert r[24] > r[23] and r[24] > r[25]
        assert np.argmax(r[1:300]) + 1 == 168

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            synth_generate("chaos", 10)
