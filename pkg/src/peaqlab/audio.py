"""WAV input, signal conditioning and global reference/test alignment."""

from __future__ import annotations

import logging
import struct
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import fft as sfft
from scipy import signal as sps
from scipy.io import wavfile

from .errors import CorruptHeader, LagOutOfRange, SilentInput, UnsupportedFormat

log = logging.getLogger(__name__)

TARGET_RATE = 48000
DC_CUTOFF_HZ = 20.0
DEFAULT_LEVEL_DBSPL = 92.0
DEFAULT_MAX_LAG_MS = 250.0


@dataclass(frozen=True)
class Signal:
    samples: np.ndarray
    sample_rate: int
    channel_count: int = 1

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if not np.all(np.isfinite(samples)):
            raise UnsupportedFormat("signal contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.samples.shape[0] / self.sample_rate


@dataclass(frozen=True)
class AlignedPair:
    reference: Signal
    test: Signal
    lag_samples: int = 0
    gain_applied: float = 1.0
    playback_level: float = DEFAULT_LEVEL_DBSPL

    @classmethod
    def from_arrays(cls, ref, test, sample_rate=TARGET_RATE, playback_level=DEFAULT_LEVEL_DBSPL):
        """Wrap two equal-length, already conditioned arrays without alignment."""
        ref = np.asarray(ref, dtype=float)
        test = np.asarray(test, dtype=float)
        n = min(ref.shape[0], test.shape[0])
        return cls(Signal(ref[:n], sample_rate), Signal(test[:n], sample_rate), 0, 1.0, playback_level)


_INT_SCALE = {np.dtype("int16"): 32768.0, np.dtype("int32"): 2147483648.0}


def load_wav(path) -> Signal:
    """Read a RIFF/WAVE file as float samples in [-1, 1].

    Accepts 16- and 24-bit PCM and 32-bit IEEE float. Multichannel input is
    averaged down to mono with a warning.
    """
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except wavfile.WavFileWarning as exc:
        raise CorruptHeader(f"{path}: {exc}") from None
    except ValueError as exc:
        msg = str(exc)
        if "Unknown wave file format" in msg or "Unsupported bit depth" in msg:
            raise UnsupportedFormat(f"{path}: {msg}") from None
        raise CorruptHeader(f"{path}: {msg}") from None
    except (EOFError, struct.error) as exc:
        raise CorruptHeader(f"{path}: truncated file ({exc})") from None

    if data.dtype in _INT_SCALE:
        # 24-bit PCM arrives left-justified in int32
        samples = data.astype(float) / _INT_SCALE[data.dtype]
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(float)
    else:
        raise UnsupportedFormat(f"{path}: sample format {data.dtype} not supported")

    channels = 1 if samples.ndim == 1 else samples.shape[1]
    if channels > 1:
        warnings.warn(f"{path}: {channels} channels downmixed to mono", stacklevel=2)
        samples = samples.mean(axis=1)
    return Signal(samples, int(rate), 1)


def save_wav(path, sig: Signal, subtype: str = "int16") -> None:
    """Write a mono signal; used by tests and fixture generators."""
    x = np.clip(sig.samples, -1.0, 1.0)
    if subtype == "int16":
        data = np.round(x * 32767.0).astype(np.int16)
    elif subtype == "float32":
        data = x.astype(np.float32)
    else:
        raise UnsupportedFormat(subtype)
    wavfile.write(path, sig.sample_rate, data)


def resample(x: np.ndarray, rate_in: int, rate_out: int = TARGET_RATE) -> np.ndarray:
    if rate_in == rate_out:
        return x
    ratio = Fraction(rate_out, rate_in)
    return sps.resample_poly(x, ratio.numerator, ratio.denominator)


def remove_subsonic(x: np.ndarray, cutoff: float = DC_CUTOFF_HZ, rate: int = TARGET_RATE) -> np.ndarray:
    """Zero every spectral component below ``cutoff`` (DC included).

    A projection rather than a recursive filter: it has no settling
    transient and applying it twice changes nothing.
    """
    n = x.shape[0]
    if n < 2:
        return np.zeros_like(x)
    spec = sfft.rfft(x)
    spec[np.fft.rfftfreq(n, 1.0 / rate) < cutoff] = 0.0
    return sfft.irfft(spec, n)


def condition(sig: Signal) -> Signal:
    """Bring a signal to the ear model's operating point.

    Downmixes to mono, resamples to 48 kHz with a polyphase filter and
    removes DC and subsonic content below 20 Hz.
    """
    x = sig.samples
    if x.ndim > 1:
        x = x.mean(axis=1)
    x = resample(x, sig.sample_rate)
    return Signal(remove_subsonic(x), TARGET_RATE, 1)


def estimate_lag(ref: np.ndarray, test: np.ndarray, max_lag: int) -> int:
    """Delay of ``test`` relative to ``ref`` in samples (positive = test late).

    Uses the peak of the normalized cross-correlation over all lags and
    raises if it lies outside ``[-max_lag, max_lag]``.
    """
    xc = sps.correlate(test, ref, mode="full", method="fft")
    lags = sps.correlation_lags(test.shape[0], ref.shape[0], mode="full")
    nr, nt = ref.shape[0], test.shape[0]
    cr = np.concatenate(([0.0], np.cumsum(ref**2)))
    ct = np.concatenate(([0.0], np.cumsum(test**2)))
    # overlapping segments: test[t0:t0+m] against ref[r0:r0+m]
    t0 = np.maximum(lags, 0)
    r0 = np.maximum(-lags, 0)
    m = np.minimum(nt - t0, nr - r0)
    energy = (cr[r0 + m] - cr[r0]) * (ct[t0 + m] - ct[t0])
    score = np.where(energy > 0, xc / np.sqrt(np.maximum(energy, 1e-300)), 0.0)
    # tiny overlaps give meaningless unit correlations
    score[m < min(nr, nt) // 2] = -np.inf
    best = int(lags[int(np.argmax(score))])
    if abs(best) > max_lag:
        raise LagOutOfRange(f"estimated lag {best} samples exceeds the allowed {max_lag}")
    return best


def align_pair(
    ref: Signal,
    test: Signal,
    max_lag_ms: float = DEFAULT_MAX_LAG_MS,
    level_dbspl: float = DEFAULT_LEVEL_DBSPL,
    match_level: bool = False,
) -> AlignedPair:
    """Estimate a single global lag and trim both signals to their overlap.

    With ``match_level`` the test is scaled to the reference RMS; otherwise the
    test keeps its own level (gain 1) since level differences are part of what
    the ear model measures.
    """
    if ref.sample_rate != test.sample_rate:
        raise UnsupportedFormat("reference and test must share a sample rate; run condition() first")
    for name, s in (("reference", ref), ("test", test)):
        if s.samples.size == 0 or not np.any(s.samples):
            raise SilentInput(f"{name} signal is silent")
    max_lag = int(round(max_lag_ms * 1e-3 * ref.sample_rate))
    lag = estimate_lag(ref.samples, test.samples, max_lag)
    r, t = ref.samples, test.samples
    if lag > 0:
        t = t[lag:]
    elif lag < 0:
        r = r[-lag:]
    n = min(r.shape[0], t.shape[0])
    r, t = r[:n], t[:n]
    gain = 1.0
    if match_level:
        gain = float(np.sqrt(np.mean(r**2) / np.mean(t**2)))
        t = t * gain
    log.debug("aligned pair: lag=%d gain=%.6f length=%d", lag, gain, n)
    return AlignedPair(Signal(r, ref.sample_rate), Signal(t, test.sample_rate), lag, gain, level_dbspl)
