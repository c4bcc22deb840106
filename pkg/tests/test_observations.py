import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from canhmm.codec import Channel, PidSample
from canhmm.observations import (
    ObservationAlphabet,
    ObservationError,
    Quantizer,
    decode_joint,
    encode_joint,
    encode_runs,
    encode_sequence,
    fit_alphabet,
    fit_quantizer,
    gradients,
    quantize,
    resample,
)


def alphabet(*bins, dt=1.0):
    qs = [Quantizer(f"c{i}", tuple(float(e) for e in range(b - 1))) for i, b in enumerate(bins)]
    return ObservationAlphabet(tuple(qs), dt)


class TestResample:
    def test_grid_coincides(self):
        assert resample([(0, 10), (1, 20), (2, 30)]).tolist() == [10, 20, 30]

    def test_tie_goes_to_earlier(self):
        assert resample([(0, 10), (2, 30)], 1.0, gap_limit=3).tolist() == [10, 10, 30]

    def test_single_sample_within_gap_limit(self):
        out = resample([(5.0, 1.0)], 1.0, 0.0, 10.0, gap_limit=3)
        assert np.isnan(out[:2]).all() and (out[2:9] == 1.0).all() and np.isnan(out[9:]).all()

    def test_gap_marks_missing(self):
        out = resample(([0, 1, 10, 11], [1, 2, 3, 4]), 1.0, gap_limit=2)
        assert out[:4].tolist() == [1, 2, 2, 2]
        assert np.isnan(out[4:8]).all()
        assert out[8:].tolist() == [3, 3, 3, 4]

    def test_pid_samples(self):
        s = [PidSample(Channel.SPEED, v, t) for t, v in [(0.2, 5.0), (1.1, 6.0)]]
        assert resample(s, 0.5, 0.0, 1.0).tolist() == [5.0, 5.0, 6.0]

    def test_errors(self):
        with pytest.raises(ObservationError):
            resample([])
        with pytest.raises(ObservationError):
            resample([(0, 1)], 1.0, 5.0, 1.0)
        with pytest.raises(ObservationError):
            resample([(0, 1)], 0.0)


class TestGradients:
    def test_constant_slope(self):
        assert gradients([0, 5, 10]).tolist() == [5, 5]

    def test_zero(self):
        assert gradients([7, 7, 7, 7]).tolist() == [0, 0, 0]

    def test_sudden_jump(self):
        assert gradients([15, 100]).tolist() == [85]

    def test_too_short(self):
        with pytest.raises(ObservationError):
            gradients([1.0])


class TestQuantizer:
    q = Quantizer("speed", (-10, -2, 2, 10))

    def test_fixed_passthrough(self):
        q = fit_quantizer([], scheme="fixed", edges=[-10, -2, 2, 10])
        assert q.bin_count == 5 and q.edges == (-10, -2, 2, 10)

    @pytest.mark.parametrize("g,b", [(0, 2), (85, 4), (-85, 0), (-10, 1), (2, 3), (-2.0001, 1), (-10.0001, 0)])
    def test_lookup(self, g, b):
        assert quantize(self.q, g) == b

    def test_vectorized(self):
        assert quantize(self.q, [0, 85, -85]).tolist() == [2, 4, 0]

    @pytest.mark.parametrize("g", [np.nan, np.inf, -np.inf])
    def test_non_finite(self, g):
        with pytest.raises(ObservationError):
            quantize(self.q, g)

    def test_edges_must_increase(self):
        with pytest.raises(ObservationError):
            Quantizer("x", (1, 1))
        with pytest.raises(ObservationError):
            Quantizer("x", ())

    def test_quantile_two_bins_symmetric(self):
        g = np.concatenate([np.arange(1, 101), -np.arange(1, 101)]).astype(float)
        assert fit_quantizer(g, 2).edges == (0.0,)

    def test_quantile_four_bins(self):
        g = np.repeat([-3.0, -1.0, 1.0, 3.0], 25)
        assert fit_quantizer(g, 4).edges == pytest.approx((-2.0, 0.0, 2.0))

    def test_too_few_distinct_values(self):
        with pytest.raises(ObservationError, match="reduce bin_count"):
            fit_quantizer(np.zeros(100), 5)

    def test_envelope_adds_outlier_bins(self):
        g = np.linspace(-3, 3, 1001)
        q = fit_quantizer(g, 5, envelope=2.0)
        assert q.bin_count == 7 and q.edges[0] == -6.0 and q.edges[-1] == 6.0

    def test_quantile_mass_per_bin(self, rng):
        g = rng.standard_normal(100_000)
        for k in (2, 5, 8):
            q = fit_quantizer(g, k)
            share = np.bincount(quantize(q, g), minlength=q.bin_count) / g.size
            assert ((share >= 0.5 / k) & (share <= 2 / k)).all()


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=8, unique=True),
       st.floats(-2e6, 2e6), st.floats(-2e6, 2e6))
def test_quantize_monotone(edges, g1, g2):
    q = Quantizer("x", tuple(sorted(edges)))
    lo, hi = sorted((g1, g2))
    assert quantize(q, lo) <= quantize(q, hi)
    b = quantize(q, g1)
    assert 0 <= b < q.bin_count
    ext = (-np.inf, *q.edges, np.inf)
    assert ext[b] <= g1 < ext[b + 1]


class TestJoint:
    def test_mixed_radix(self):
        a = alphabet(5, 5)
        assert encode_joint(a, (2, 3)) == 13
        assert encode_joint(a, (0, 0)) == 0
        assert decode_joint(a, 13) == (2, 3)

    def test_symbol_count(self):
        assert alphabet(3, 4, 5).n_symbols == 60

    def test_out_of_range(self):
        a = alphabet(5, 5)
        with pytest.raises(ObservationError):
            encode_joint(a, (5, 0))
        with pytest.raises(ObservationError):
            decode_joint(a, 25)

    @pytest.mark.parametrize("bins", [(2,), (10, 10), (7, 7), (4, 5, 6), (10, 10, 10, 10)])
    def test_bijective_exhaustive(self, bins):
        a = alphabet(*bins)
        s = np.arange(a.n_symbols)
        parts = decode_joint(a, s)
        assert np.array_equal(encode_joint(a, parts), s)
        stacked = np.stack(parts, axis=1)
        assert len({tuple(r) for r in stacked}) == a.n_symbols

    def test_dict_round_trip(self):
        a = alphabet(3, 4, dt=0.5)
        assert ObservationAlphabet.from_dict(a.to_dict()) == a


class TestEncodeSequence:
    def test_single_channel(self):
        a = ObservationAlphabet((Quantizer("speed", (-2, 2)),))
        assert encode_sequence(a, {"speed": np.array([0.0, 5, 10])})[0].tolist() == [2, 2]

    def test_constant_is_centre(self):
        a = ObservationAlphabet((Quantizer("speed", (-1, 1)), Quantizer("rpm", (-1, 1))))
        seq = encode_sequence(a, {"speed": np.full(6, 3.0), "rpm": np.full(6, 900.0)})[0]
        assert (seq == encode_joint(a, (1, 1))).all() and seq.size == 5

    def test_missing_point_splits(self):
        a = ObservationAlphabet((Quantizer("speed", (0.5,)),))
        L = 12
        v = np.arange(L, dtype=float)
        assert sum(s.size for s in encode_sequence(a, {"speed": v})) == L - 1
        for k in range(L):
            w = v.copy()
            w[k] = np.nan
            runs = encode_runs(a, {"speed": w})
            assert sum(s.size for _, s in runs) == L - 2 - (k not in (0, L - 1))
        w = v.copy()
        w[5] = np.nan
        assert [(start, s.size) for start, s in encode_runs(a, {"speed": w})] == [(0, 4), (6, 5)]

    def test_mismatched_grids(self):
        a = ObservationAlphabet((Quantizer("speed", (0.0,)), Quantizer("rpm", (0.0,))))
        with pytest.raises(ObservationError):
            encode_sequence(a, {"speed": np.zeros(4), "rpm": np.zeros(5)})
        with pytest.raises(ObservationError):
            encode_sequence(a, {"speed": np.zeros(4)})

    def test_fit_alphabet(self, rng):
        s = {"speed": np.cumsum(rng.normal(size=500)), "rpm": np.cumsum(rng.normal(size=500))}
        a = fit_alphabet(s, ["speed", "rpm"], bin_count=5)
        assert a.channels == ("speed", "rpm") and a.n_symbols == 49


@given(st.lists(st.one_of(st.floats(-50, 50), st.just(float("nan"))), min_size=0, max_size=40))
def test_encoded_length_matches_runs(values):
    a = ObservationAlphabet((Quantizer("speed", (-1.0, 1.0)),))
    v = np.array(values, dtype=float)
    total = sum(s.size for s in encode_sequence(a, {"speed": v}))
    runs, length = [], 0
    for x in values:
        if np.isnan(x):
            runs.append(length)
            length = 0
        else:
            length += 1
    runs.append(length)
    assert total == sum(r - 1 for r in runs if r >= 2)
