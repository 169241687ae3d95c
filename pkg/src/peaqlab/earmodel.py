"""Filterbank ear model: excitation, modulation and adapted patterns.

The front end follows the filterbank (advanced) ear model layout: a bank of
complex band-pass filters spaced uniformly on a Bark scale, outer and middle
ear weighting, level-dependent spreading across bands, backward-masking
smearing with decimation to the frame rate, internal noise and a recursive
forward-masking stage.  Every constant lives in :class:`EarModelConfig`,
loaded from a versioned, checksummed JSON table.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy import signal as sps

from .audio import AlignedPair
from .errors import ConfigMismatch, ShapeMismatch

CONFIG_SCHEMA = "peaqlab.earmodel/1"
DEFAULT_CONFIG_FILE = "ear_model_filterbank_v1.json"


def hz_to_bark(f):
    return 7.0 * np.arcsinh(np.asarray(f, dtype=float) / 650.0)


def bark_to_hz(z):
    return 650.0 * np.sinh(np.asarray(z, dtype=float) / 7.0)


def outer_middle_ear_db(f_hz):
    f = np.asarray(f_hz, dtype=float) / 1000.0
    return -0.6 * 3.64 * f**-0.8 + 6.5 * np.exp(-0.6 * (f - 3.3) ** 2) - 1e-3 * f**3.6


def internal_noise_energy(f_hz):
    f = np.asarray(f_hz, dtype=float) / 1000.0
    return 10.0 ** (0.4 * 0.364 * f**-0.8)


def band_time_constants(centers, tau_min: float, tau_100: float):
    return tau_min + (100.0 / np.asarray(centers, dtype=float)) * (tau_100 - tau_min)


@dataclass(frozen=True)
class NoiseLoudnessParams:
    """Constants of one partial-loudness comparison."""

    alpha: float
    threshold_factor: float
    s0: float
    nl_min: float = 0.0


@dataclass(frozen=True)
class EarModelConfig:
    version: str
    sample_rate: int
    band_centers: np.ndarray
    filter_lengths: np.ndarray
    outer_middle_ear_weights: np.ndarray
    internal_noise: np.ndarray
    tau_forward: np.ndarray
    tau_modulation: np.ndarray
    tau_adaptation: np.ndarray
    subsample: int = 32
    frame_decimation: int = 6
    backward_taps: int = 12
    lower_slope: float = 31.0
    upper_slope_base: float = 24.0
    upper_slope_freq: float = 230.0
    upper_slope_level: float = 0.2
    pattern_average: tuple[int, int] = (1, 1)
    loudness_exponent: float = 0.23
    noise: NoiseLoudnessParams = NoiseLoudnessParams(2.5, 0.3, 1.0, 0.1)
    missing: NoiseLoudnessParams = NoiseLoudnessParams(1.5, 0.15, 1.0, 0.0)
    lin_dist: NoiseLoudnessParams = NoiseLoudnessParams(1.5, 0.15, 1.0, 0.0)
    asym_weight: float = 0.5
    warmup_seconds: float = 0.5
    checksum: str = field(default="", compare=False)

    def __post_init__(self):
        for name in (
            "band_centers",
            "filter_lengths",
            "outer_middle_ear_weights",
            "internal_noise",
            "tau_forward",
            "tau_modulation",
            "tau_adaptation",
        ):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "filter_lengths", self.filter_lengths.astype(int))
        object.__setattr__(self, "pattern_average", tuple(int(v) for v in self.pattern_average))
        nb = self.band_count
        for name in ("filter_lengths", "outer_middle_ear_weights", "internal_noise", "tau_forward",
                     "tau_modulation", "tau_adaptation"):
            if getattr(self, name).shape != (nb,):
                raise ConfigMismatch(f"{name} has {getattr(self, name).shape[0]} entries, expected {nb}")
        if np.any(np.diff(self.band_centers) <= 0):
            raise ConfigMismatch("band_centers must be strictly increasing")
        for name in ("tau_forward", "tau_modulation", "tau_adaptation", "internal_noise"):
            if np.any(getattr(self, name) <= 0):
                raise ConfigMismatch(f"{name} must be positive")
        if np.any(self.filter_lengths % 2 == 0) or np.any(self.filter_lengths < 3):
            raise ConfigMismatch("filter lengths must be odd and >= 3")
        if np.any(self.band_centers >= self.sample_rate / 2):
            raise ConfigMismatch("band centers must lie below the Nyquist frequency")

    @property
    def band_count(self) -> int:
        return int(self.band_centers.shape[0])

    @property
    def frame_hop(self) -> int:
        return self.subsample * self.frame_decimation

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.frame_hop

    @property
    def band_barks(self) -> np.ndarray:
        return hz_to_bark(self.band_centers)

    @property
    def warmup_frames(self) -> int:
        return int(round(self.warmup_seconds * self.frame_rate))

    @property
    def settling_frames(self) -> int:
        """Frames after which adaptation of a stationary input has settled in every band.

        The adaptation chains two one-pole smoothers; twelve of the slowest
        time constants bring their transient below 1e-4 relative change.
        """
        return int(math.ceil(12.0 * float(np.max(self.tau_adaptation)) * self.frame_rate))

    def to_dict(self) -> dict:
        out = {"schema": CONFIG_SCHEMA}
        for name in self.__dataclass_fields__:
            if name == "checksum":
                continue
            value = getattr(self, name)
            if isinstance(value, np.ndarray):
                value = value.tolist()
            elif isinstance(value, NoiseLoudnessParams):
                value = value.__dict__.copy()
            elif isinstance(value, tuple):
                value = list(value)
            out[name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict, verify: bool = True) -> "EarModelConfig":
        data = dict(data)
        schema = data.pop("schema", CONFIG_SCHEMA)
        if schema != CONFIG_SCHEMA:
            raise ConfigMismatch(f"unsupported ear model schema {schema!r}")
        stored = data.pop("checksum", "")
        if verify and stored and stored != config_checksum(data):
            raise ConfigMismatch("ear model config checksum does not match its contents")
        for key in ("noise", "missing", "lin_dist"):
            if key in data:
                data[key] = NoiseLoudnessParams(**data[key])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigMismatch(f"unknown ear model config keys {sorted(unknown)}")
        cfg = cls(**data)
        object.__setattr__(cfg, "checksum", config_checksum(cfg.to_dict()))
        return cfg

    def replace(self, **changes) -> "EarModelConfig":
        data = self.to_dict()
        for key, value in changes.items():
            data[key] = value.__dict__.copy() if isinstance(value, NoiseLoudnessParams) else value
        return EarModelConfig.from_dict(data, verify=False)


def config_checksum(data: dict) -> str:
    body = {k: v for k, v in data.items() if k not in ("checksum", "schema")}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def build_default_tables(sample_rate: int = 48000, band_count: int = 40, length_factor: float = 2.0) -> dict:
    """Derive the default band tables from the filterbank design rules.

    Centers are uniform in Bark between 50 Hz and 18 kHz. Each filter's
    null-to-null bandwidth spans two Bark, which puts neighbouring responses
    at their half-power crossing.
    """
    z = np.linspace(hz_to_bark(50.0), hz_to_bark(18000.0), band_count)
    centers = bark_to_hz(z)
    bw = bark_to_hz(z + 0.5) - bark_to_hz(z - 0.5)
    lengths = np.round(length_factor * sample_rate / bw).astype(int)
    lengths += 1 - lengths % 2
    return {
        "schema": CONFIG_SCHEMA,
        "version": "filterbank-1.0",
        "sample_rate": sample_rate,
        "band_centers": [round(float(c), 6) for c in centers],
        "filter_lengths": [int(n) for n in lengths],
        "outer_middle_ear_weights": [round(float(w), 6) for w in outer_middle_ear_db(centers)],
        "internal_noise": [round(float(e), 6) for e in internal_noise_energy(centers)],
        "tau_forward": [round(float(t), 8) for t in band_time_constants(centers, 0.004, 0.020)],
        "tau_modulation": [round(float(t), 8) for t in band_time_constants(centers, 0.008, 0.050)],
        "tau_adaptation": [round(float(t), 8) for t in band_time_constants(centers, 0.008, 0.050)],
    }


def write_config(cfg: EarModelConfig, path) -> None:
    data = cfg.to_dict()
    data["checksum"] = config_checksum(data)
    Path(path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


def load_config(path=None) -> EarModelConfig:
    """Load an ear model table; ``None`` selects the packaged default."""
    if path is None:
        text = resources.files("peaqlab.data").joinpath(DEFAULT_CONFIG_FILE).read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return EarModelConfig.from_dict(json.loads(text))


@lru_cache(maxsize=1)
def default_config() -> EarModelConfig:
    return load_config()


# --------------------------------------------------------------------------
# front end


@dataclass(frozen=True)
class PatternSequence:
    E_ref: np.ndarray
    E_test: np.ndarray
    Mod_ref: np.ndarray
    Mod_test: np.ndarray
    E_ref_adapted: np.ndarray
    E_test_adapted: np.ndarray
    correction_factors: np.ndarray
    E_ref_level: np.ndarray
    level_correction: np.ndarray
    frame_times: np.ndarray

    @property
    def frames(self) -> int:
        return int(self.E_ref.shape[0])

    @property
    def bands(self) -> int:
        return int(self.E_ref.shape[1])


def _filter_spectrum(center: float, length: int, nfft: int, fs: int) -> np.ndarray:
    half = (length - 1) // 2
    n = np.arange(-half, half + 1)
    window = np.cos(np.pi * n / length) ** 2
    h = window / window.sum() * np.exp(2j * np.pi * center * n / fs)
    buf = np.zeros(nfft, dtype=complex)
    buf[: half + 1] = h[half:]
    buf[nfft - half :] = h[:half]
    return sfft.fft(buf)


def filterbank_outputs(x: np.ndarray, cfg: EarModelConfig, level_dbspl: float) -> np.ndarray:
    """Complex band outputs at the subsampled rate, shape (samples / subsample, bands).

    Each band is a zero-phase Hann-windowed complex exponential with unit gain
    at its center. Outputs are calibrated so that a full-scale sine at a band
    center has energy ``level_dbspl`` (dB re 1) in that band.
    """
    d = cfg.subsample
    n_out = -(-x.shape[0] // d)
    pad = int(cfg.filter_lengths.max())
    nfft = d * sfft.next_fast_len(-(-(x.shape[0] + pad) // d))
    spectrum = sfft.fft(x, nfft)
    calib = 2.0 * 10.0 ** (level_dbspl / 20.0)
    out = np.empty((n_out, cfg.band_count), dtype=complex)
    for k in range(cfg.band_count):
        y = spectrum * _filter_spectrum(cfg.band_centers[k], int(cfg.filter_lengths[k]), nfft, cfg.sample_rate)
        # time-domain decimation by d == frequency-domain folding
        folded = y.reshape(d, nfft // d).sum(axis=0)
        out[:, k] = sfft.ifft(folded)[:n_out] / d
    return out * calib


def spread(outputs: np.ndarray, cfg: EarModelConfig, chunk: int = 2048) -> np.ndarray:
    """Level-dependent spreading across bands applied to the complex outputs.

    Band j leaks into higher bands with an upper slope that flattens as the
    level of band j rises, and into lower bands with a fixed slope. Weights
    are normalized so an incoherent flat spectrum at 0 dB stays flat.
    """
    z = cfg.band_barks
    dz = z[None, :] - z[:, None]  # [source j, target k]
    up_dist = np.maximum(dz, 0.0)
    below = dz < 0
    lower = 10.0 ** (-cfg.lower_slope * np.maximum(-dz, 0.0) / 20.0)
    base_upper = cfg.upper_slope_base + cfg.upper_slope_freq / cfg.band_centers
    ref_weights = np.where(below, lower, 10.0 ** (-base_upper[:, None] * up_dist / 20.0))
    norm = np.sqrt(np.sum(ref_weights**2, axis=0))
    out = np.empty_like(outputs)
    for start in range(0, outputs.shape[0], chunk):
        x = outputs[start : start + chunk]
        level = 10.0 * np.log10(np.maximum(x.real**2 + x.imag**2, 1e-30))
        slope = np.maximum(base_upper[None, :] - cfg.upper_slope_level * level, 0.0)  # (t, j)
        upper = 10.0 ** (-slope[:, :, None] * up_dist[None, :, :] / 20.0)
        weights = np.where(below[None], lower[None], upper)
        out[start : start + chunk] = np.einsum("tj,tjk->tk", x, weights) / norm
    return out


def backward_smear(energy: np.ndarray, cfg: EarModelConfig) -> np.ndarray:
    """Backward-masking FIR (raised-cosine) combined with decimation to the frame rate."""
    taps = cfg.backward_taps
    i = np.arange(taps)
    h = np.cos(np.pi * (i - (taps - 1) / 2.0) / taps) ** 2
    h /= h.sum()
    step = cfg.frame_decimation
    n = energy.shape[0]
    if n < taps:
        energy = np.vstack([energy, np.zeros((taps - n, energy.shape[1]))])
        n = taps
    frames = (n - taps) // step + 1
    idx = np.arange(frames)[:, None] * step + i[None, :]
    return np.einsum("fi,fik->fk", np.broadcast_to(h, idx.shape), energy[idx])


def _smoothing_coeff(tau: np.ndarray, rate: float) -> np.ndarray:
    return np.exp(-1.0 / (rate * tau))


def forward_smear(e2: np.ndarray, cfg: EarModelConfig) -> np.ndarray:
    a = _smoothing_coeff(cfg.tau_forward, cfg.frame_rate)
    out = np.empty_like(e2)
    state = np.zeros(e2.shape[1])
    for n in range(e2.shape[0]):
        state = a * state + (1.0 - a) * e2[n]
        out[n] = np.maximum(state, e2[n])
    return out


def _smooth(x: np.ndarray, a: np.ndarray, gain=None, initial=None) -> np.ndarray:
    """First-order recursive smoothing along frames, per band coefficient ``a``."""
    out = np.empty_like(x)
    for k in range(x.shape[1]):
        b = [1.0 - a[k]] if gain is None else [gain]
        zi = None if initial is None else [a[k] * initial]
        if zi is None:
            out[:, k] = sps.lfilter(b, [1.0, -a[k]], x[:, k])
        else:
            out[:, k] = sps.lfilter(b, [1.0, -a[k]], x[:, k], zi=zi)[0]
    return out


def modulation(e2: np.ndarray, cfg: EarModelConfig) -> np.ndarray:
    """Smoothed envelope-derivative modulation measure per band."""
    a = _smoothing_coeff(cfg.tau_modulation, cfg.frame_rate)
    loud = e2**0.3
    prev = np.vstack([loud[:1], loud[:-1]])
    deriv = cfg.frame_rate * np.abs(loud - prev)
    deriv_s = _smooth(deriv, a)
    loud_s = _smooth(loud, a)
    return deriv_s / (1.0 + loud_s / 0.3)


def _single_excitation(x: np.ndarray, cfg: EarModelConfig, level_dbspl: float):
    bands = filterbank_outputs(x, cfg, level_dbspl)
    bands *= 10.0 ** (cfg.outer_middle_ear_weights / 20.0)
    bands = spread(bands, cfg)
    energy = bands.real**2 + bands.imag**2
    e2 = backward_smear(energy, cfg) + cfg.internal_noise
    return forward_smear(e2, cfg), modulation(e2, cfg)


def excitation_stage(pair: AlignedPair, cfg: EarModelConfig | None = None):
    """Excitation and modulation patterns for both signals of ``pair``.

    Returns ``(E_ref, E_test, Mod_ref, Mod_test)``, each shaped
    (frames, bands). Reference and test are processed independently.
    """
    cfg = cfg or default_config()
    for sig in (pair.reference, pair.test):
        if sig.sample_rate != cfg.sample_rate:
            raise ConfigMismatch(
                f"signal sample rate {sig.sample_rate} Hz does not match the filterbank design "
                f"({cfg.sample_rate} Hz)"
            )
    if pair.reference.samples.shape != pair.test.samples.shape:
        raise ShapeMismatch("reference and test must have equal length")
    E_ref, Mod_ref = _single_excitation(pair.reference.samples, cfg, pair.playback_level)
    E_test, Mod_test = _single_excitation(pair.test.samples, cfg, pair.playback_level)
    return E_ref, E_test, Mod_ref, Mod_test


def adapt_patterns(E_ref: np.ndarray, E_test: np.ndarray, cfg: EarModelConfig | None = None, full: bool = False):
    """Level and pattern adaptation of a reference/test excitation pair.

    Returns ``(E_ref_adapted, E_test_adapted, correction_factors)``. The
    correction factors are the smoothed per-band test/reference gain seen by
    the adaptation (a static band gain of 4 settles at 4). With ``full`` the
    level-adapted reference and the per-frame level correction are appended.
    """
    cfg = cfg or default_config()
    E_ref = np.asarray(E_ref, dtype=float)
    E_test = np.asarray(E_test, dtype=float)
    if E_ref.shape != E_test.shape or E_ref.ndim != 2:
        raise ShapeMismatch(f"pattern shapes differ: {E_ref.shape} vs {E_test.shape}")
    nb = E_ref.shape[1]
    if nb == cfg.band_count:
        tau = cfg.tau_adaptation
    else:
        tau = np.full(nb, float(np.median(cfg.tau_adaptation)))
    a = _smoothing_coeff(tau, cfg.frame_rate)

    p_ref = _smooth(E_ref, a)
    p_test = _smooth(E_test, a)
    num = np.sum(np.sqrt(p_test * p_ref), axis=1)
    den = np.sum(p_test, axis=1)
    lev = np.where(den > 0, (num / np.where(den > 0, den, 1.0)) ** 2, 1.0)
    lev_col = lev[:, None]
    el_ref = np.where(lev_col > 1.0, E_ref / lev_col, E_ref)
    el_test = np.where(lev_col > 1.0, E_test, E_test * lev_col)

    r_num = _smooth(el_test * el_ref, a, gain=1.0)
    r_den = _smooth(el_ref * el_ref, a, gain=1.0)
    ratio = r_num / r_den
    r_test = np.where(ratio >= 1.0, 1.0 / ratio, 1.0)
    r_ref = np.where(ratio >= 1.0, 1.0, ratio)
    m1, m2 = cfg.pattern_average
    if m1 or m2:
        r_test = _band_average(r_test, m1, m2)
        r_ref = _band_average(r_ref, m1, m2)
    corr_test = _smooth(r_test, a, initial=1.0)
    corr_ref = _smooth(r_ref, a, initial=1.0)

    out = (el_ref * corr_ref, el_test * corr_test, ratio / lev_col)
    if full:
        return out + (el_ref, lev)
    return out


def _band_average(r: np.ndarray, below: int, above: int) -> np.ndarray:
    nb = r.shape[1]
    c = np.concatenate([np.zeros((r.shape[0], 1)), np.cumsum(r, axis=1)], axis=1)
    lo = np.clip(np.arange(nb) - below, 0, nb)
    hi = np.clip(np.arange(nb) + above + 1, 0, nb)
    return (c[:, hi] - c[:, lo]) / (hi - lo)


def pattern_sequence(pair: AlignedPair, cfg: EarModelConfig | None = None) -> PatternSequence:
    """Run the full front end (excitation plus adaptation) on an aligned pair."""
    cfg = cfg or default_config()
    E_ref, E_test, Mod_ref, Mod_test = excitation_stage(pair, cfg)
    ea_ref, ea_test, corr, el_ref, lev = adapt_patterns(E_ref, E_test, cfg, full=True)
    times = np.arange(E_ref.shape[0]) * cfg.frame_hop / cfg.sample_rate
    return PatternSequence(E_ref, E_test, Mod_ref, Mod_test, ea_ref, ea_test, corr, el_ref, lev, times)
