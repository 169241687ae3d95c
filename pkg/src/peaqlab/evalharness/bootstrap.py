"""Monte Carlo train/test resampling of the MOV-to-score mapping."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..dataset import Dataset, filter_content
from ..errors import ConstantInput, DegenerateSplit, InputError, TooFewRows
from ..regression.mars import MarsConfig, mars_fit, mars_predict
from .metrics import aes, aggregate_ci, pearson, spearman

log = logging.getLogger(__name__)

METRICS = ("R_p", "R_s", "AES")
MAX_RESAMPLES = 1000


@dataclass(frozen=True)
class BootstrapConfig:
    iterations: int = 2000
    train_fraction: float = 0.8
    seed: int = 0
    features: tuple[str, ...] = ()
    content: str = "all"
    resample_train: bool = False
    split_by_item: bool = False
    ci_method: str = "normal"
    keep_raw: bool = False
    keep_predictions: bool = False

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InputError("train_fraction must lie strictly between 0 and 1")
        if self.iterations < 1:
            raise InputError("iterations must be >= 1")
        object.__setattr__(self, "features", tuple(self.features))


@dataclass
class Split:
    train: np.ndarray
    test: np.ndarray
    attempts: int


@dataclass
class BootstrapReport:
    feature_set: tuple[str, ...]
    content: str
    n_rows: int
    n_train: int
    n_test: int
    iterations: int
    means: dict
    ci95: dict
    degenerate_resamples: int = 0
    constant_predictions: int = 0
    config: dict = field(default_factory=dict)
    raw: dict | None = None
    predictions: list | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["feature_set"] = list(self.feature_set)
        for key in ("raw", "predictions"):
            if out[key] is None:
                out.pop(key)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "BootstrapReport":
        data = dict(data)
        data["feature_set"] = tuple(data["feature_set"])
        data.setdefault("raw", None)
        data.setdefault("predictions", None)
        return cls(**data)


def train_size(n: int, fraction: float) -> int:
    """Rows in the training block: ``fraction * n`` rounded half-up."""
    return int(math.floor(fraction * n + 0.5))


def iteration_rng(seed: int, iteration: int, attempt: int = 0) -> np.random.Generator:
    """Generator for one iteration, independent of scheduling order."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(iteration, attempt)))


def draw_split(rng, n: int, cfg: BootstrapConfig, item_ids=None) -> tuple[np.ndarray, np.ndarray]:
    if cfg.split_by_item:
        items = np.unique(item_ids)
        chosen = rng.permutation(items)[: train_size(items.shape[0], cfg.train_fraction)]
        in_train = np.isin(item_ids, chosen)
        train = np.flatnonzero(in_train)
        test = np.flatnonzero(~in_train)
    else:
        perm = rng.permutation(n)
        k = train_size(n, cfg.train_fraction)
        train, test = np.sort(perm[:k]), np.sort(perm[k:])
    if cfg.resample_train:
        train = np.sort(rng.choice(train, size=train.shape[0], replace=True))
    return train, test


def make_split(n, y, cfg: BootstrapConfig, iteration: int, item_ids=None) -> Split:
    """Split for one iteration; redraws while the test targets are constant."""
    for attempt in range(MAX_RESAMPLES):
        train, test = draw_split(iteration_rng(cfg.seed, iteration, attempt), n, cfg, item_ids)
        if test.shape[0] >= 2 and np.ptp(y[test]) > 0 and train.shape[0] > 0:
            return Split(train, test, attempt)
    raise DegenerateSplit(f"no usable split after {MAX_RESAMPLES} draws (test targets constant)")


def evaluate_split(X, y, ci, split: Split, mars_cfg: MarsConfig, names, out_pred=None):
    """Fit on the training rows and return ``(R_p, R_s, AES, constant_prediction)`` on the test rows."""
    model = mars_fit(X[split.train], y[split.train], mars_cfg, names)
    pred = np.asarray(mars_predict(model, X[split.test]), dtype=float)
    if out_pred is not None:
        out_pred.append((split.test, pred))
    yt = y[split.test]
    try:
        rp, rs, flat = pearson(pred, yt), spearman(pred, yt), False
    except ConstantInput:
        # a constant prediction carries no ranking information
        rp, rs, flat = 0.0, 0.0, True
    return rp, rs, aes(pred, yt, ci[split.test]), flat


def _run_chunk(args):
    X, y, ci, items, cfg, mars_cfg, names, start, stop = args
    out = []
    sums = np.zeros(y.shape[0])
    counts = np.zeros(y.shape[0], dtype=int)
    for i in range(start, stop):
        split = make_split(y.shape[0], y, cfg, i, items)
        preds = [] if cfg.keep_predictions else None
        rp, rs, err, flat = evaluate_split(X, y, ci, split, mars_cfg, names, preds)
        if preds:
            idx, p = preds[0]
            sums[idx] += p
            counts[idx] += 1
        out.append((rp, rs, err, split.attempts, flat))
    return out, sums, counts


def bootstrap_run(
    ds: Dataset,
    cfg: BootstrapConfig,
    mars_cfg: MarsConfig | None = None,
    workers: int = 1,
) -> BootstrapReport:
    """Repeated random train/test evaluation of a MARS mapping on ``ds``.

    Each iteration draws a disjoint split (``train_fraction`` of the rows for
    fitting, the rest for testing) from a generator seeded by
    ``(cfg.seed, iteration)``, fits MARS on the training rows and scores the
    test predictions only. Results do not depend on ``workers``.
    """
    mars_cfg = mars_cfg or MarsConfig()
    sub = filter_content(ds, cfg.content)
    n = len(sub)
    if n < 10:
        raise TooFewRows(f"bootstrap needs at least 10 rows after content filtering, got {n}")
    names = cfg.features or sub.feature_names
    X = sub.matrix(names)
    y = sub.scores
    ci = sub.ci95
    items = sub.item_ids if cfg.split_by_item else None

    bounds = np.linspace(0, cfg.iterations, max(1, min(workers, cfg.iterations)) + 1).astype(int)
    jobs = [(X, y, ci, items, cfg, mars_cfg, tuple(names), int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_chunk, jobs))
    else:
        chunks = [_run_chunk(job) for job in jobs]
    rows = [r for chunk, _, _ in chunks for r in chunk]
    pred_sum = np.sum([c[1] for c in chunks], axis=0)
    pred_count = np.sum([c[2] for c in chunks], axis=0)
    raw = {m: [r[k] for r in rows] for k, m in enumerate(METRICS)}
    resamples = int(sum(r[3] for r in rows))
    flat = int(sum(r[4] for r in rows))
    if resamples:
        log.info("%d degenerate splits redrawn", resamples)

    means, halves = {}, {}
    for m in METRICS:
        if cfg.iterations >= 2:
            means[m], halves[m] = aggregate_ci(raw[m], cfg.ci_method)
        else:
            means[m], halves[m] = float(raw[m][0]), 0.0

    predictions = None
    if cfg.keep_predictions:
        predictions = [
            {
                "item_id": r.item_id,
                "condition_id": r.condition_id,
                "content_type": r.content_type.value,
                "subjective": r.mushra_mean,
                "ci95": r.ci95,
                "mean_prediction": float(pred_sum[i] / pred_count[i]) if pred_count[i] else None,
                "test_count": int(pred_count[i]),
            }
            for i, r in enumerate(sub.records)
        ]

    first = make_split(n, y, cfg, 0, items)
    echo = asdict(cfg)
    echo["features"] = list(names)
    echo["mars"] = asdict(mars_cfg)
    return BootstrapReport(
        feature_set=tuple(names),
        content=cfg.content,
        n_rows=n,
        n_train=int(first.train.shape[0]),
        n_test=int(first.test.shape[0]),
        iterations=cfg.iterations,
        means=means,
        ci95=halves,
        degenerate_resamples=resamples,
        constant_predictions=flat,
        config=echo,
        raw=raw if cfg.keep_raw else None,
        predictions=predictions,
    )
