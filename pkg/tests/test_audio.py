import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.io import wavfile

from peaqlab.audio import AlignedPair, Signal, align_pair, condition, estimate_lag, load_wav, save_wav
from peaqlab.errors import CorruptHeader, LagOutOfRange, SilentInput, UnsupportedFormat

FS = 48000


def _rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def test_load_16bit_mono(tmp_path):
    x = 0.3 * np.sin(2 * np.pi * 440 * np.arange(10 * FS) / FS)
    save_wav(tmp_path / "a.wav", Signal(x, FS))
    sig = load_wav(tmp_path / "a.wav")
    assert sig.samples.shape == (480000,)
    assert sig.sample_rate == FS and sig.channel_count == 1
    np.testing.assert_allclose(sig.samples, x, atol=1 / 32767)


def test_load_keeps_native_rate(tmp_path):
    save_wav(tmp_path / "b.wav", Signal(np.zeros(441), 44100), subtype="float32")
    assert load_wav(tmp_path / "b.wav").sample_rate == 44100


def test_load_24bit(tmp_path):
    x = np.linspace(-0.5, 0.5, 1000)
    # 24-bit content the way scipy returns it: left-justified in int32
    wavfile.write(tmp_path / "c.wav", FS, (np.round(x * 2**23).astype(np.int32) << 8))
    np.testing.assert_allclose(load_wav(tmp_path / "c.wav").samples, x, atol=2**-22)


def test_stereo_downmix_warns(tmp_path):
    data = np.stack([np.full(100, 0.5), np.full(100, -0.25)], axis=1).astype(np.float32)
    wavfile.write(tmp_path / "s.wav", FS, data)
    with pytest.warns(UserWarning, match="downmixed"):
        sig = load_wav(tmp_path / "s.wav")
    np.testing.assert_allclose(sig.samples, 0.125)


def test_truncated_file(tmp_path):
    save_wav(tmp_path / "t.wav", Signal(np.zeros(4000), FS))
    raw = (tmp_path / "t.wav").read_bytes()
    (tmp_path / "t.wav").write_bytes(raw[:30])
    with pytest.raises(CorruptHeader):
        load_wav(tmp_path / "t.wav")


def test_not_a_wav(tmp_path):
    (tmp_path / "x.wav").write_bytes(b"hello world, definitely not RIFF data")
    with pytest.raises((CorruptHeader, UnsupportedFormat)):
        load_wav(tmp_path / "x.wav")


def test_condition_passthrough(rng):
    t = np.arange(FS) / FS
    x = 0.2 * np.sin(2 * np.pi * 1000 * t) + 0.1 * np.sin(2 * np.pi * 3100 * t + 1)
    out = condition(Signal(x, FS))
    assert out.sample_rate == FS
    np.testing.assert_allclose(out.samples, x, atol=1e-12)


def test_condition_resamples_sine():
    t = np.arange(2 * 44100) / 44100
    out = condition(Signal(0.5 * np.sin(2 * np.pi * 1000 * t), 44100))
    assert out.sample_rate == FS and out.samples.shape == (2 * FS,)
    y = out.samples[FS // 10 : -FS // 10]
    tt = np.arange(FS // 10, 2 * FS - FS // 10) / FS
    # least-squares amplitude of a 1 kHz sinusoid
    basis = np.stack([np.sin(2 * np.pi * 1000 * tt), np.cos(2 * np.pi * 1000 * tt)], axis=1)
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    assert abs(20 * np.log10(np.hypot(*coef) / 0.5)) < 0.1
    spec = np.abs(np.fft.rfft(out.samples))
    freqs = np.fft.rfftfreq(out.samples.shape[0], 1 / FS)
    assert abs(freqs[np.argmax(spec)] - 1000.0) <= freqs[1]


def test_condition_removes_dc():
    out = condition(Signal(np.full(FS, 0.25), FS))
    assert _rms(out.samples) < 1e-3


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-0.5, 0.5))
def test_condition_idempotent(seed, offset):
    x = np.random.default_rng(seed).standard_normal(FS // 2) * 0.1 + offset
    once = condition(Signal(x, FS))
    twice = condition(once)
    assert _rms(once.samples - twice.samples) < 1e-9


def test_align_delay_480(rng):
    x = rng.standard_normal(FS)
    delayed = np.concatenate([np.zeros(480), x])[: x.shape[0]]
    pair = align_pair(Signal(x, FS), Signal(delayed, FS))
    assert pair.lag_samples == 480
    assert pair.reference.samples.shape == pair.test.samples.shape
    np.testing.assert_array_equal(pair.reference.samples, pair.test.samples)


def test_align_identity(rng):
    x = rng.standard_normal(FS // 2)
    pair = align_pair(Signal(x, FS), Signal(x, FS))
    assert pair.lag_samples == 0 and pair.gain_applied == 1.0


def test_align_silent(rng):
    with pytest.raises(SilentInput):
        align_pair(Signal(rng.standard_normal(1000), FS), Signal(np.zeros(1000), FS))


def test_lag_out_of_range(rng):
    x = rng.standard_normal(FS)
    delayed = np.concatenate([np.zeros(4800), x])[: x.shape[0]]
    with pytest.raises(LagOutOfRange):
        align_pair(Signal(x, FS), Signal(delayed, FS), max_lag_ms=50)


def test_match_level_option(rng):
    x = rng.standard_normal(FS // 4)
    pair = align_pair(Signal(x, FS), Signal(0.5 * x, FS), match_level=True)
    assert pair.gain_applied == pytest.approx(2.0)
    np.testing.assert_allclose(pair.test.samples, x)


@settings(max_examples=30, deadline=None)
@given(st.integers(-1200, 1200), st.integers(0, 1000))
def test_lag_recovered_for_white_noise(k, seed):
    x = np.random.default_rng(seed).standard_normal(12000)
    y = np.roll(x, k)
    assert estimate_lag(x, y, 1200) == k


def test_from_arrays_trims():
    pair = AlignedPair.from_arrays(np.ones(10), np.ones(7))
    assert pair.reference.samples.shape == pair.test.samples.shape == (7,)


def test_non_finite_rejected():
    with pytest.raises(UnsupportedFormat):
        Signal(np.array([0.0, np.nan]), FS)


def test_truncated_data_chunk(tmp_path):
    save_wav(tmp_path / "t.wav", Signal(np.zeros(4000), FS))
    raw = (tmp_path / "t.wav").read_bytes()
    (tmp_path / "t.wav").write_bytes(raw[:3001])
    with pytest.raises(CorruptHeader, match="EOF"):
        load_wav(tmp_path / "t.wav")
