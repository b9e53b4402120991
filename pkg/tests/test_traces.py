import numpy as np
import pytest

from vrslice import (
    FrameTrace,
    TraceMeta,
    load_trace,
    moving_average_rate,
    normalize,
    surrogate_trace,
    synthesize_trace,
    write_trace,
)
from vrslice.errors import (
    EmptyTraceError,
    MalformedRowError,
    UnstableProcessError,
    WindowTooLargeError,
)
from vrslice.stats import autocorrelation
from vrslice.traces import load_meta, write_meta

META = TraceMeta(content="arcade", rate_bps=30e6, fps=60.0, source="synthetic")


def constant_trace(n=100, size=62500):
    return FrameTrace(META, np.full(n, size, dtype=np.int64))


class TestMeta:
    def test_expected_frame_size(self):
        # 30 Mb/s at 60 fps -> 500000 bits -> 62500 bytes per frame
        assert META.expected_frame_bytes == 62500.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            TraceMeta("x", rate_bps=0, fps=60)
        with pytest.raises(ValueError):
            TraceMeta("x", rate_bps=1e6, fps=-1)
        with pytest.raises(ValueError):
            TraceMeta("x", rate_bps=1e6, fps=60, source="other")

    def test_sidecar_round_trip(self, tmp_path):
        p = tmp_path / "m.json"
        write_meta(META, p)
        back = load_meta(p)
        assert back == META


class TestLoadTrace:
    def test_constant_rows(self, tmp_path):
        p = tmp_path / "t.csv"
        rows = "".join(f"{i},{i / 60:.4f},62500\n" for i in range(1, 4))
        p.write_text("frame_index,timestamp_s,size_bytes\n" + rows)
        tr = load_trace(p, META)
        assert len(tr) == 3
        assert (tr.sizes == 62500).all()

    def test_negative_size_rejected(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("frame_index,timestamp_s,size_bytes\n1,0.0167,100\n2,0.0333,-5\n")
        with pytest.raises(MalformedRowError) as exc:
            load_trace(p, META)
        assert exc.value.line_no == 3

    def test_bad_field_count(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("frame_index,timestamp_s,size_bytes\n1,0.0167\n")
        with pytest.raises(MalformedRowError):
            load_trace(p, META)

    def test_non_integer_size(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("frame_index,timestamp_s,size_bytes\n1,0.0167,62500.5\n")
        with pytest.raises(MalformedRowError):
            load_trace(p, META)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("a,b,c\n1,0.0167,100\n")
        with pytest.raises(MalformedRowError):
            load_trace(p, META)

    def test_empty(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("frame_index,timestamp_s,size_bytes\n")
        with pytest.raises(EmptyTraceError):
            load_trace(p, META)

    def test_round_trip_byte_identical(self, tmp_path):
        trace = surrogate_trace(META, 500, seed=3)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_trace(trace, p1)
        write_trace(load_trace(p1, META), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_timestamp_validation(self):
        with pytest.raises(ValueError):
            FrameTrace(META, [1, 2, 3], timestamps=[0.1, 0.1, 0.2])
        with pytest.raises(ValueError):
            # inter-arrival 0.1 s at 60 fps is way off 1/fps
            FrameTrace(META, [1, 2, 3], timestamps=[0.1, 0.2, 0.3])


class TestMovingAverageRate:
    def test_constant_is_nominal(self):
        rates = moving_average_rate(constant_trace(), 6)
        assert np.allclose(rates, 30e6, rtol=0, atol=0)
        assert rates.size == 100 - 6 + 1

    def test_s1_has_max_spread(self):
        tr = surrogate_trace(META, 2000, seed=5)
        r1 = moving_average_rate(tr, 1)
        r6 = moving_average_rate(tr, 6)
        assert r1.max() >= r6.max()
        assert r1.min() <= r6.min()

    def test_matches_brute_force(self):
        tr = synthesize_trace(META, 400, [0.3, -0.1], 5000.0, seed=9)
        for window in (1, 5, 17, 400):
            got = moving_average_rate(tr, window)
            expect = np.array([
                8.0 * META.fps / window * int(tr.sizes[k:k + window].sum())
                for k in range(len(tr) - window + 1)
            ])
            assert np.array_equal(got, expect)

    def test_full_window_is_whole_trace_mean(self):
        tr = surrogate_trace(META, 700, seed=4)
        rates = moving_average_rate(tr, len(tr))
        assert rates.shape == (1,)
        assert rates[0] == pytest.approx(tr.mean_rate_bps(), rel=1e-12)

    def test_window_too_large(self):
        with pytest.raises(WindowTooLargeError):
            moving_average_rate(constant_trace(10), 11)


class TestNormalize:
    def test_constant_is_one(self):
        nt = normalize(constant_trace())
        assert np.all(nt.values == 1.0)

    def test_surrogate_mean_near_one(self, surrogate50k):
        nt = normalize(surrogate50k)
        assert nt.values.mean() == pytest.approx(1.0, abs=0.02)

    def test_round_trip_within_one_ulp(self):
        tr = surrogate_trace(META, 3000, seed=12)
        back = normalize(tr).to_bytes()
        sizes = tr.sizes.astype(float)
        ulp = np.spacing(sizes)
        assert np.all(np.abs(back - sizes) <= ulp)


class TestSynthesize:
    def test_zero_process_is_constant(self):
        tr = synthesize_trace(META, 50, [0.0], 0.0, seed=1)
        assert np.all(tr.sizes == 62500)
        assert tr.meta.source == "synthetic"

    def test_deterministic(self):
        a = synthesize_trace(META, 1000, [0.4], 3000.0, seed=42)
        b = synthesize_trace(META, 1000, [0.4], 3000.0, seed=42)
        assert np.array_equal(a.sizes, b.sizes)
        c = synthesize_trace(META, 1000, [0.4], 3000.0, seed=43)
        assert not np.array_equal(a.sizes, c.sizes)

    def test_prefix_stability(self):
        a = synthesize_trace(META, 500, [0.4], 3000.0, seed=42)
        b = synthesize_trace(META, 1500, [0.4], 3000.0, seed=42)
        assert np.array_equal(a.sizes, b.sizes[:500])

    def test_unstable_rejected(self):
        with pytest.raises(UnstableProcessError):
            synthesize_trace(META, 100, [1.01], 1000.0, seed=1)
        with pytest.raises(UnstableProcessError):
            synthesize_trace(META, 100, [0.6, 0.5], 1000.0, seed=1)

    def test_stationary_mean(self):
        tr = synthesize_trace(META, 50_000, [0.22], 6800.0, seed=7)
        assert tr.sizes.mean() == pytest.approx(62500, rel=0.02)

    def test_delta_autocorr_matches_target(self):
        # AR(1) with a = 0.22 has lag-1 difference autocorrelation
        # -(1 - a)/2 = -0.39; check the sample estimator agrees.
        tr = synthesize_trace(META, 50_000, [0.22], 6800.0, seed=7)
        rho = autocorrelation(np.diff(tr.sizes.astype(float)), 1).values[1]
        assert rho == pytest.approx(-0.39, abs=0.05)


class TestSurrogate:
    def test_deterministic(self, meta30):
        a = surrogate_trace(meta30, 800, seed=5)
        b = surrogate_trace(meta30, 800, seed=5)
        assert np.array_equal(a.sizes, b.sizes)

    def test_mean_rate_close_to_nominal(self, surrogate50k):
        assert surrogate50k.mean_rate_bps() == pytest.approx(30e6, rel=0.02)

    def test_delta_autocorr(self, surrogate50k):
        rho = autocorrelation(np.diff(surrogate50k.sizes.astype(float)), 1).values[1]
        assert rho == pytest.approx(-0.39, abs=0.05)

    def test_profiles_differ(self, meta30):
        a = surrogate_trace(meta30, 500, seed=5, profile="arcade")
        b = surrogate_trace(meta30, 500, seed=5, profile="sandbox")
        assert not np.array_equal(a.sizes, b.sizes)
