"""Synthetic listening-test tables shaped like a 27-item x 12-condition database.

Used for fixtures, smoke tests and the rank-order sanity checks; the values
carry no perceptual meaning.
"""

from __future__ import annotations

import numpy as np

from .dataset import ContentType, Dataset, FeatureRecord, ScoreRecord, join_features
from .mov import MOV_NAMES

CONTENT_ORDER = (ContentType.MUSIC, ContentType.SPEECH, ContentType.MIXED)


def synthetic_scores(n_items: int = 27, n_conditions: int = 12, seed: int = 0) -> list[ScoreRecord]:
    rng = np.random.default_rng(seed)
    per_type = n_items // 3
    condition_quality = np.linspace(15.0, 90.0, n_conditions)
    records = []
    for i in range(n_items):
        ctype = CONTENT_ORDER[min(i // max(per_type, 1), 2)]
        item_offset = rng.normal(0.0, 6.0)
        for c in range(n_conditions):
            mean = float(np.clip(condition_quality[c] + item_offset + rng.normal(0.0, 5.0), 0.0, 100.0))
            ci = float(rng.uniform(3.0, 8.0))
            records.append(ScoreRecord(f"item{i:02d}", f"cond{c:02d}", ctype, round(mean, 4), round(ci, 4), 62))
    return records


def synthetic_dataset(
    n_items: int = 27,
    n_conditions: int = 12,
    seed: int = 0,
    informative_noise: float = 5.0,
) -> Dataset:
    """Scores plus feature columns.

    ``informative`` is the subjective score plus Gaussian noise, ``noise`` is
    independent of the score, and the four MOV-named columns are decreasing
    functions of the score with varying amounts of noise.
    """
    rng = np.random.default_rng(seed + 1)
    scores = synthetic_scores(n_items, n_conditions, seed)
    features = []
    for s in scores:
        q = s.mushra_mean
        degradation = (100.0 - q) / 20.0
        feats = {
            "informative": q + rng.normal(0.0, informative_noise),
            "noise": rng.normal(50.0, 20.0),
        }
        noise_loud = max(0.0, degradation * (1.0 + 0.3 * rng.normal()))
        missing = max(0.0, degradation * (0.6 + 0.4 * rng.normal()))
        feats[MOV_NAMES[0]] = noise_loud
        feats[MOV_NAMES[1]] = missing
        feats[MOV_NAMES[2]] = max(0.0, degradation**1.5 * (1.0 + 0.25 * rng.normal()))
        feats[MOV_NAMES[3]] = noise_loud + 0.5 * missing
        features.append(FeatureRecord(s.item_id, s.condition_id, feats))
    return join_features(scores, features)


def pink_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance noise with a 1/f power spectrum."""
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n)
    spec[1:] /= np.sqrt(freqs[1:])
    spec[0] = 0.0
    x = np.fft.irfft(spec, n)
    return x / np.std(x)


def music_like_reference(duration: float = 4.0, seed: int = 0, sample_rate: int = 48000) -> np.ndarray:
    """Slowly modulated pink noise plus a 196 Hz harmonic series with 1/h amplitudes.

    Broadband, with energy up to the Nyquist band, so that band limiting
    removes progressively more of it.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    x = 0.05 * pink_noise(n, rng) * (1.0 + 0.5 * np.sin(2 * np.pi * 2.3 * t))
    tremolo = 1.0 + 0.3 * np.sin(2 * np.pi * 1.1 * t)
    for h in range(1, 30):
        x += 0.05 / h * np.sin(2 * np.pi * 196.0 * h * t + h) * tremolo
    return x


def tonal_reference(duration: float = 4.0, seed: int = 0, sample_rate: int = 48000) -> np.ndarray:
    """Ten steady tones spread over 200 Hz - 14 kHz over a quiet white-noise bed."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    freqs = np.geomspace(200.0, 14000.0, 10)
    x = sum(0.03 * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi)) for f in freqs)
    return x + 0.003 * rng.standard_normal(n)
