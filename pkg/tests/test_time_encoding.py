import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from motiftgn.gradcheck import check_gradients
from motiftgn import autodiff as ad
from motiftgn.time_encoding import TimeEncoder, default_frequencies, encode


def test_zero_gap_encoding():
    enc = TimeEncoder(5)
    np.testing.assert_allclose(encode(0.0, enc), np.sqrt(1 / 5) * np.tile([1.0, 0.0], 5),
                               atol=1e-15)


def test_quarter_turn():
    np.testing.assert_allclose(encode(np.pi / 2, TimeEncoder(1, omegas=[1.0])), [0.0, 1.0],
                               atol=1e-15)


def test_interleaved_cos_sin():
    w = np.array([0.3, 2.0])
    out = encode(1.7, TimeEncoder(2, omegas=w))
    expected = np.sqrt(0.5) * np.array([np.cos(0.51), np.sin(0.51), np.cos(3.4), np.sin(3.4)])
    np.testing.assert_allclose(out, expected, atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(dt=st.floats(0, 1e7), d=st.integers(1, 40), seed=st.integers(0, 1000))
def test_unit_norm(dt, d, seed):
    w = np.random.default_rng(seed).uniform(-3, 3, size=d)
    assert abs(np.linalg.norm(encode(dt, TimeEncoder(d, omegas=w))) - 1.0) <= 1e-12


def test_default_frequencies_span_four_decades():
    w = default_frequencies(4)
    np.testing.assert_allclose(w, [1.0, 0.1, 0.01, 0.001])
    assert TimeEncoder(86).out_dim == 172


def test_negative_gap_and_bad_shapes():
    with pytest.raises(ValueError, match="negative"):
        TimeEncoder(3).encode([1.0, -0.5])
    with pytest.raises(ValueError):
        TimeEncoder(0)
    with pytest.raises(ValueError):
        TimeEncoder(3, omegas=[1.0, 2.0])


@pytest.mark.parametrize("seed", range(5))
def test_frequency_gradient(seed):
    rng = np.random.default_rng(seed)
    enc = TimeEncoder(6, omegas=rng.uniform(0.1, 2.0, size=6))
    dt = rng.uniform(0, 4, size=5)
    r = rng.normal(size=(5, 12))
    errs = check_gradients(lambda: ad.reduce_sum(ad.mul(enc.encode(dt), r)), enc.parameters())
    assert errs["omegas"] <= 1e-4
