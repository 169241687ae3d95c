"""Reference/test pair to MOV vector, end to end."""

from __future__ import annotations

from . import audio, earmodel, mov


def extract_signals(
    ref: audio.Signal,
    test: audio.Signal,
    cfg: earmodel.EarModelConfig | None = None,
    level_dbspl: float = audio.DEFAULT_LEVEL_DBSPL,
    max_lag_ms: float = audio.DEFAULT_MAX_LAG_MS,
) -> mov.MovVector:
    cfg = cfg or earmodel.default_config()
    pair = audio.align_pair(audio.condition(ref), audio.condition(test), max_lag_ms, level_dbspl)
    return extract_pair(pair, cfg)


def extract_pair(pair: audio.AlignedPair, cfg: earmodel.EarModelConfig | None = None) -> mov.MovVector:
    cfg = cfg or earmodel.default_config()
    seq = earmodel.pattern_sequence(pair, cfg)
    frames = mov.frame_loudness(seq, cfg)
    return mov.pool(frames, warmup=min(cfg.warmup_frames, len(frames) - 1), asym_weight=cfg.asym_weight)


def extract_files(ref_path, test_path, cfg=None, level_dbspl=audio.DEFAULT_LEVEL_DBSPL,
                  max_lag_ms=audio.DEFAULT_MAX_LAG_MS) -> mov.MovVector:
    return extract_signals(audio.load_wav(ref_path), audio.load_wav(test_path), cfg, level_dbspl, max_lag_ms)
