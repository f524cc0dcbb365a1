"""Plug-in estimators of policy information capacity (PIC) and
policy-optimal information capacity (POIC) from a return matrix.

All entropies are in nats.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import xlogy

from .errors import ConfigError, DegenerateWarning
from .rwg import ReturnMatrix, matrix_hash, min_max_scale


@dataclass(frozen=True)
class PicConfig:
    bins: int = 100_000
    log_base: str = "natural"

    def __post_init__(self):
        if int(self.bins) < 2:
            raise ConfigError("PIC needs at least two bins")
        if self.log_base != "natural":
            raise ConfigError("only natural-log entropies are supported")


@dataclass(frozen=True)
class PoicConfig:
    temperature: float = 1.0
    optimal_return: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise ConfigError("temperature must be > 0")
        if not np.isfinite(self.optimal_return):
            raise ConfigError("optimal return must be finite")


class PicResult(NamedTuple):
    pic: float
    h_R: float
    mean_h_R_given_theta: float


class PoicResult(NamedTuple):
    poic: float
    h_O: float
    mean_h_O_given_theta: float
    p1_hat: float


def _matrix(S) -> np.ndarray:
    S = S.S if isinstance(S, ReturnMatrix) else np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.size == 0:
        raise ConfigError("expected a non-empty N x M return matrix")
    return S


def bin_indices(S: np.ndarray, bins: int, lo: float, hi: float) -> np.ndarray:
    """Equal-width bins over [lo, hi]; half-open except the last, which is closed."""
    idx = np.floor((S - lo) / (hi - lo) * bins).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    return idx


def row_entropies(idx: np.ndarray, bins: int) -> np.ndarray:
    """Plug-in entropy of the bin distribution of each row."""
    N, M = idx.shape
    keys = (np.arange(N, dtype=np.int64)[:, None] * bins + idx).ravel()
    uniq, counts = np.unique(keys, return_counts=True)
    p = counts / M
    return -np.bincount(uniq // bins, weights=p * np.log(p), minlength=N)


def _entropy_from_counts(counts: np.ndarray) -> float:
    counts = counts[counts > 0]
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def pic(S, cfg: PicConfig = PicConfig()) -> PicResult:
    """Empirical mutual information between policy parameters and binned return.

    Bin limits are the minimum and maximum of all returns. A matrix whose
    entries are all equal has zero entropy everywhere and yields 0 with a
    :class:`DegenerateWarning`.
    """
    S = _matrix(S)
    lo, hi = float(S.min()), float(S.max())
    if lo == hi:
        warnings.warn("all returns are identical; PIC is zero", DegenerateWarning, stacklevel=2)
        return PicResult(0.0, 0.0, 0.0)
    idx = bin_indices(S, cfg.bins, lo, hi)
    h_r = _entropy_from_counts(np.bincount(idx.ravel(), minlength=cfg.bins))
    h_cond = float(np.mean(row_entropies(idx, cfg.bins)))
    return PicResult(h_r - h_cond, h_r, h_cond)


def binary_entropy(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return -(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p))


def optimality_probabilities(S, cfg: PoicConfig = PoicConfig()) -> np.ndarray:
    """Per-policy soft probability of optimal behaviour."""
    S = _matrix(S)
    s_max = max(float(S.max()), float(cfg.optimal_return))
    return np.mean(np.exp((S - s_max) / cfg.temperature), axis=1)


def poic(S, cfg: PoicConfig = PoicConfig()) -> PoicResult:
    p1n = optimality_probabilities(S, cfg)
    p1 = float(np.mean(p1n))
    h_o = float(binary_entropy(p1))
    h_cond = float(np.mean(binary_entropy(p1n)))
    return PoicResult(h_o - h_cond, h_o, h_cond, p1)


@dataclass(frozen=True)
class MetricReport:
    pic: float
    poic: float
    h_R: float
    mean_h_R_given_theta: float
    h_O: float
    mean_h_O_given_theta: float
    p1_hat: float
    pic_config: PicConfig = field(default_factory=PicConfig)
    poic_config: PoicConfig = field(default_factory=PoicConfig)
    matrix_hash: str = ""
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        d = dict(d)
        d["pic_config"] = PicConfig(**d.get("pic_config", {}))
        d["poic_config"] = PoicConfig(**d.get("poic_config", {}))
        return cls(**d)


def metric_report(S, pic_cfg: PicConfig = PicConfig(), poic_cfg: PoicConfig = PoicConfig(),
                  provenance: dict | None = None) -> MetricReport:
    M = _matrix(S)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        r = pic(M, pic_cfg)
    degenerate = float(M.min()) == float(M.max())
    if degenerate:
        warnings.warn("all returns are identical; PIC is zero", DegenerateWarning, stacklevel=2)
    o = poic(M, poic_cfg)
    prov = dict(provenance or {})
    prov["degenerate"] = degenerate
    return MetricReport(pic=r.pic, poic=o.poic, h_R=r.h_R, mean_h_R_given_theta=r.mean_h_R_given_theta,
                        h_O=o.h_O, mean_h_O_given_theta=o.mean_h_O_given_theta, p1_hat=o.p1_hat,
                        pic_config=pic_cfg, poic_config=poic_cfg, matrix_hash=matrix_hash(M),
                        provenance=prov)


def pearson_r(x, y) -> float:
    """Pearson correlation; NaN with fewer than 3 points or a constant column."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 3 or x.size != y.size:
        return float("nan")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(np.sum(dx * dx)), np.sqrt(np.sum(dy * dy))
    if sx == 0 or sy == 0:
        return float("nan")
    return float(np.clip(np.sum(dx * dy) / (sx * sy), -1.0, 1.0))


SCATTER_COLUMNS = ("pic", "poic", "h_R", "mean_h_R_given_theta", "h_O",
                   "mean_h_O_given_theta", "return_variance")


@dataclass(frozen=True)
class ScoreScatter:
    rows: list
    correlations: dict

    def to_dict(self) -> dict:
        return {"rows": self.rows,
                "correlations": {k: (None if np.isnan(v) else v) for k, v in self.correlations.items()}}


def score_scatter(entries) -> ScoreScatter:
    """Cross-task table of normalised scores against metric values.

    ``entries`` is a sequence of ``(label, S, MetricReport)``. The score of a
    task is the mean of its min-max scaled returns. Correlations are the
    Pearson r between score and each metric column across tasks.
    """
    entries = list(entries)
    if not entries:
        raise ConfigError("score scatter needs at least one task")
    rows = []
    for label, S, report in entries:
        M = _matrix(S)
        scaled = min_max_scale(M)
        rows.append({
            "task": label,
            "score_mean": float(scaled.mean()),
            "score_median": float(np.median(scaled)),
            "pic": report.pic,
            "poic": report.poic,
            "h_R": report.h_R,
            "mean_h_R_given_theta": report.mean_h_R_given_theta,
            "h_O": report.h_O,
            "mean_h_O_given_theta": report.mean_h_O_given_theta,
            "return_variance": float(M.var(ddof=1)) if M.size > 1 else 0.0,
        })
    score = [r["score_mean"] for r in rows]
    correlations = {c: pearson_r(score, [r[c] for r in rows]) for c in SCATTER_COLUMNS}
    return ScoreScatter(rows, correlations)
