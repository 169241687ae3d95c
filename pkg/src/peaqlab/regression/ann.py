"""Reference single-hidden-layer network producing the distortion index and ODG.

Weights are never bundled; they come from a JSON file (schema
``peaqlab.ann/1``) that the user fills in from the standard's tables.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..errors import DimensionMismatch, InputError

ANN_FORMAT = "peaqlab.ann/1"


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class AnnMapping:
    input_names: tuple[str, ...]
    input_min: np.ndarray
    input_max: np.ndarray
    hidden_weights: np.ndarray  # (inputs, hidden)
    hidden_bias: np.ndarray  # (hidden,)
    output_weight: np.ndarray  # (hidden,)
    output_bias: float
    output_min: float = -3.98
    output_max: float = 0.22

    def __post_init__(self):
        for name in ("input_min", "input_max", "hidden_weights", "hidden_bias", "output_weight"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n_in = len(self.input_names)
        if self.input_min.shape != (n_in,) or self.input_max.shape != (n_in,):
            raise DimensionMismatch("input scaling must have one min/max per input")
        if self.hidden_weights.ndim != 2 or self.hidden_weights.shape[0] != n_in:
            raise DimensionMismatch(f"hidden_weights must be ({n_in}, hidden)")
        n_hidden = self.hidden_weights.shape[1]
        if self.hidden_bias.shape != (n_hidden,) or self.output_weight.shape != (n_hidden,):
            raise DimensionMismatch(f"hidden_bias and output_weight need {n_hidden} entries")
        if np.any(self.input_max <= self.input_min):
            raise InputError("input scaling ranges must satisfy max > min")
        if not self.output_max > self.output_min:
            raise InputError("output scaling range must satisfy max > min")

    @property
    def n_inputs(self) -> int:
        return len(self.input_names)

    def to_dict(self) -> dict:
        body = {
            "format": ANN_FORMAT,
            "input_names": list(self.input_names),
            "input_min": self.input_min.tolist(),
            "input_max": self.input_max.tolist(),
            "hidden_weights": self.hidden_weights.tolist(),
            "hidden_bias": self.hidden_bias.tolist(),
            "output_weight": self.output_weight.tolist(),
            "output_bias": float(self.output_bias),
            "output_min": float(self.output_min),
            "output_max": float(self.output_max),
        }
        body["sha256"] = ann_checksum(body)
        return body


def ann_checksum(body: dict) -> str:
    payload = {k: v for k, v in body.items() if k != "sha256"}
    return hashlib.sha256(json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def load_ann(path) -> AnnMapping:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("format") != ANN_FORMAT:
        raise InputError(f"{path}: not an ANN weight file (format={data.get('format')!r})")
    if "sha256" in data and data["sha256"] != ann_checksum(data):
        raise InputError(f"{path}: checksum mismatch")
    return AnnMapping(
        tuple(data["input_names"]),
        data["input_min"],
        data["input_max"],
        data["hidden_weights"],
        data["hidden_bias"],
        data["output_weight"],
        float(data["output_bias"]),
        float(data.get("output_min", -3.98)),
        float(data.get("output_max", 0.22)),
    )


def apply_reference_ann(movs, ann: AnnMapping) -> tuple[float, float]:
    """Return ``(DI, ODG)`` for one MOV vector.

    ``movs`` is a sequence in ``ann.input_names`` order or a mapping by name.
    DI is the output-layer activation before its sigmoid; ODG rescales
    ``sigmoid(DI)`` onto ``[output_min, output_max]``.
    """
    if isinstance(movs, Mapping):
        missing = [n for n in ann.input_names if n not in movs]
        if missing:
            raise DimensionMismatch(f"missing MOVs {missing}")
        x = np.array([movs[n] for n in ann.input_names], dtype=float)
    else:
        x = np.asarray(movs, dtype=float).ravel()
    if x.shape[0] != ann.n_inputs:
        raise DimensionMismatch(f"ANN expects {ann.n_inputs} inputs, got {x.shape[0]}")
    scaled = (x - ann.input_min) / (ann.input_max - ann.input_min)
    hidden = sigmoid(ann.hidden_bias + scaled @ ann.hidden_weights)
    di = float(ann.output_bias + hidden @ ann.output_weight)
    return di, odg_from_di(di, ann)


def odg_from_di(di, ann: AnnMapping):
    return ann.output_min + (ann.output_max - ann.output_min) * sigmoid(di)


def synthetic_ann(input_names: Sequence[str], hidden: int = 3, seed: int = 0) -> AnnMapping:
    """Random weights for tests and schema examples; not a quality model."""
    rng = np.random.default_rng(seed)
    n = len(input_names)
    return AnnMapping(
        tuple(input_names),
        np.zeros(n),
        np.ones(n),
        rng.normal(size=(n, hidden)),
        rng.normal(size=hidden),
        rng.normal(size=hidden),
        float(rng.normal()),
    )
