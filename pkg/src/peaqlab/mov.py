"""Disturbance-loudness comparisons and their pooled model output values."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .earmodel import EarModelConfig, NoiseLoudnessParams, PatternSequence, default_config
from .errors import EmptyAfterWarmup, ShapeMismatch

MOV_NAMES = ("RmsNoiseLoudness_A", "RmsMissingComponents", "AvgLinDist_A", "RmsNoiseLoudAsym_A")


@dataclass(frozen=True)
class FrameLoudness:
    """Per-frame loudness of the three comparisons, each shaped (frames,)."""

    noise_loudness: np.ndarray
    missing_loudness: np.ndarray
    lin_dist_loudness: np.ndarray

    def __post_init__(self):
        for name in ("noise_loudness", "missing_loudness", "lin_dist_loudness"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite and non-negative")
            object.__setattr__(self, name, arr)
        if not (self.noise_loudness.shape == self.missing_loudness.shape == self.lin_dist_loudness.shape):
            raise ShapeMismatch("frame loudness sequences differ in length")

    def __len__(self) -> int:
        return int(self.noise_loudness.shape[0])


@dataclass(frozen=True)
class MovVector:
    RmsNoiseLoudness_A: float
    RmsMissingComponents: float
    AvgLinDist_A: float
    RmsNoiseLoudAsym_A: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def partial_noise_loudness(
    E_a,
    E_b,
    Mod_a,
    Mod_b,
    params: NoiseLoudnessParams,
    internal_noise,
    exponent: float = 0.23,
) -> np.ndarray:
    """Loudness of the part of pattern ``b`` that rises above masker ``a``.

    All pattern arguments are (frames, bands) arrays. Per band the
    disturbance ``max(s_b*E_b - s_a*E_a, 0)`` is compared against the masker
    ``E_thr + s_a*E_a*beta`` through a compressive power law, and the result
    is summed over bands and scaled by 24/bands. Frames below
    ``params.nl_min`` are set to zero.
    """
    E_a, E_b, Mod_a, Mod_b = (np.asarray(v, dtype=float) for v in (E_a, E_b, Mod_a, Mod_b))
    if not (E_a.shape == E_b.shape == Mod_a.shape == Mod_b.shape):
        raise ShapeMismatch(
            f"pattern shapes differ: {E_a.shape}, {E_b.shape}, {Mod_a.shape}, {Mod_b.shape}"
        )
    if E_a.ndim == 1:
        E_a, E_b, Mod_a, Mod_b = (v[None, :] for v in (E_a, E_b, Mod_a, Mod_b))
    thr = np.broadcast_to(np.asarray(internal_noise, dtype=float), E_a.shape[-1:])
    bands = E_a.shape[1]
    s_a = params.threshold_factor * Mod_a + params.s0
    s_b = params.threshold_factor * Mod_b + params.s0
    beta = np.exp(-params.alpha * (E_b - E_a) / E_a)
    excess = np.maximum(s_b * E_b - s_a * E_a, 0.0)
    term = (thr / s_b) ** exponent * ((1.0 + excess / (thr + s_a * E_a * beta)) ** exponent - 1.0)
    nl = (24.0 / bands) * term.sum(axis=1)
    nl = np.maximum(nl, 0.0)
    nl[nl < params.nl_min] = 0.0
    return nl


def frame_loudness(seq: PatternSequence, cfg: EarModelConfig | None = None) -> FrameLoudness:
    """The three per-frame comparisons of a pattern sequence.

    * noise: adapted test above adapted reference (added components)
    * missing: the same measure with the roles exchanged
    * linear distortion: level-adapted reference above its pattern-adapted
      version, i.e. the loudness of what pattern adaptation removed
    """
    cfg = cfg or default_config()
    e = cfg.loudness_exponent
    thr = cfg.internal_noise
    noise = partial_noise_loudness(
        seq.E_ref_adapted, seq.E_test_adapted, seq.Mod_ref, seq.Mod_test, cfg.noise, thr, e
    )
    missing = partial_noise_loudness(
        seq.E_test_adapted, seq.E_ref_adapted, seq.Mod_test, seq.Mod_ref, cfg.missing, thr, e
    )
    lin = partial_noise_loudness(
        seq.E_ref_adapted, seq.E_ref_level, seq.Mod_ref, seq.Mod_ref, cfg.lin_dist, thr, e
    )
    return FrameLoudness(noise, missing, lin)


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def pool(seq: FrameLoudness, warmup: int = 0, asym_weight: float = 0.5) -> MovVector:
    """Pool per-frame loudness into MOVs, skipping ``warmup`` leading frames.

    ``Rms`` MOVs are root-mean-square over frames, ``Avg`` MOVs the linear
    mean; the asymmetric noise loudness is ``noise + asym_weight * missing``.
    """
    if warmup < 0:
        raise ValueError("warmup must be >= 0")
    if len(seq) - warmup < 1:
        raise EmptyAfterWarmup(f"{len(seq)} frames leave nothing after a warmup of {warmup}")
    noise = _rms(seq.noise_loudness[warmup:])
    missing = _rms(seq.missing_loudness[warmup:])
    lin = float(np.mean(seq.lin_dist_loudness[warmup:]))
    return MovVector(noise, missing, lin, noise + asym_weight * missing)
