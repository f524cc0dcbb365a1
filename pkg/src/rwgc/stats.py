"""Bootstrap confidence intervals for PIC/POIC and Welch's t-test between
bootstrap distributions."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import betainc

from . import metrics
from .errors import ConfigError, DegenerateWarning, UsageError
from .metrics import PicConfig, PoicConfig, binary_entropy, bin_indices, row_entropies

BOOTSTRAP_STREAM = 2


@dataclass(frozen=True)
class BootstrapResult:
    metric: str
    point: float
    resamples: np.ndarray = field(repr=False)
    mean: float
    std: float
    ci_low: float
    ci_high: float
    seed: int = 0

    @property
    def k(self) -> int:
        return int(self.resamples.shape[0])

    @property
    def relative_half_width(self) -> float:
        if self.point == 0:
            return float("inf") if self.ci_high > self.ci_low else 0.0
        return 0.5 * (self.ci_high - self.ci_low) / abs(self.point)

    def to_dict(self, include_resamples: bool = True) -> dict:
        d = {"metric": self.metric, "point": self.point, "mean": self.mean, "std": self.std,
             "ci_low": self.ci_low, "ci_high": self.ci_high, "k": self.k, "seed": self.seed}
        if include_resamples:
            d["resamples"] = [float(v) for v in self.resamples]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BootstrapResult":
        if "resamples" not in d:
            raise UsageError("bootstrap result has no stored resamples")
        return cls(metric=d["metric"], point=float(d["point"]),
                   resamples=np.asarray(d["resamples"], dtype=np.float64), mean=float(d["mean"]),
                   std=float(d["std"]), ci_low=float(d["ci_low"]), ci_high=float(d["ci_high"]),
                   seed=int(d.get("seed", 0)))


def resample_rows(n_rows: int, k: int, seed: int) -> np.ndarray:
    """Row indices of resample ``k``, drawn from its own derived stream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(BOOTSTRAP_STREAM, int(k)))
    return np.random.Generator(np.random.Philox(ss)).integers(0, n_rows, n_rows)


class _PicResampler:
    """PIC on row-resampled matrices, reusing binning for repeated limits.

    Every resample has its own min/max; those always come from row
    extremes of the original matrix, so only a handful of distinct
    limit pairs occur and each is binned once.
    """

    def __init__(self, S: np.ndarray, cfg: PicConfig):
        self.S = S
        self.cfg = cfg
        self.row_min = S.min(axis=1)
        self.row_max = S.max(axis=1)
        self._cache: dict = {}

    def __call__(self, rows: np.ndarray) -> float:
        lo = float(self.row_min[rows].min())
        hi = float(self.row_max[rows].max())
        if lo == hi:
            return 0.0
        key = (lo, hi)
        if key not in self._cache:
            idx = bin_indices(self.S, self.cfg.bins, lo, hi)
            self._cache[key] = (idx, row_entropies(idx, self.cfg.bins))
        idx, ent = self._cache[key]
        counts = np.bincount(idx[rows].ravel(), minlength=self.cfg.bins)
        counts = counts[counts > 0]
        p = counts / counts.sum()
        return float(-np.sum(p * np.log(p))) - float(np.mean(ent[rows]))


class _PoicResampler:
    def __init__(self, S: np.ndarray, cfg: PoicConfig):
        self.S = S
        self.cfg = cfg
        self.row_max = S.max(axis=1)
        self._cache: dict = {}

    def __call__(self, rows: np.ndarray) -> float:
        s_max = max(float(self.row_max[rows].max()), float(self.cfg.optimal_return))
        if s_max not in self._cache:
            p1n = np.mean(np.exp((self.S - s_max) / self.cfg.temperature), axis=1)
            self._cache[s_max] = (p1n, binary_entropy(p1n))
        p1n, h = self._cache[s_max]
        p1 = float(np.mean(p1n[rows]))
        return float(binary_entropy(p1)) - float(np.mean(h[rows]))


def bootstrap_metric(S, metric: str = "pic", cfg=None, k: int = 1000, seed: int = 0) -> BootstrapResult:
    """Percentile bootstrap over policy rows.

    Each resample draws N rows with replacement and recomputes the metric,
    bin limits included, on the resampled matrix.
    """
    S = metrics._matrix(S)
    if k < 100:
        raise ConfigError("bootstrap needs at least 100 resamples")
    if metric == "pic":
        cfg = cfg or PicConfig()
        point = metrics.pic(S, cfg).pic
        fn = _PicResampler(S, cfg)
    elif metric == "poic":
        cfg = cfg or PoicConfig()
        point = metrics.poic(S, cfg).poic
        fn = _PoicResampler(S, cfg)
    else:
        raise ConfigError(f"unknown metric {metric!r}")
    N = S.shape[0]
    resamples = np.empty(k)
    for i in range(k):
        resamples[i] = fn(resample_rows(N, i, seed))
    lo, hi = np.percentile(resamples, [2.5, 97.5])
    return BootstrapResult(metric=metric, point=float(point), resamples=resamples,
                           mean=float(np.mean(resamples)), std=float(np.std(resamples, ddof=1)),
                           ci_low=float(lo), ci_high=float(hi), seed=int(seed))


class WelchResult(NamedTuple):
    t: float
    df: float
    p: float
    degenerate: bool = False


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t via the regularized incomplete beta."""
    if np.isinf(t):
        return 0.0
    return float(betainc(0.5 * df, 0.5, df / (df + t * t)))


def t_cdf(t: float, df: float) -> float:
    tail = 0.5 * t_sf_two_sided(t, df)
    return 1.0 - tail if t >= 0 else tail


def welch_test(a, b) -> WelchResult:
    """Two-sided unequal-variance t-test.

    Two constant samples give t = 0, p = 1 when equal, and an infinite
    statistic with p = 0 (flagged degenerate) when not.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ConfigError("Welch's test needs at least two observations per sample")
    ma, mb = float(np.mean(a)), float(np.mean(b))
    qa = float(np.var(a, ddof=1)) / na
    qb = float(np.var(b, ddof=1)) / nb
    se2 = qa + qb
    if se2 == 0.0:
        if ma == mb:
            return WelchResult(0.0, float(na + nb - 2), 1.0)
        warnings.warn("both samples are constant and differ", DegenerateWarning, stacklevel=2)
        return WelchResult(float(np.copysign(np.inf, ma - mb)), float(na + nb - 2), 0.0, True)
    t = (ma - mb) / np.sqrt(se2)
    df = se2 * se2 / (qa * qa / (na - 1) + qb * qb / (nb - 1))
    return WelchResult(float(t), float(df), t_sf_two_sided(float(t), float(df)))


@dataclass(frozen=True)
class PairwiseTable:
    metric: str
    labels: list
    results: dict  # (label_a, label_b) -> WelchResult

    def cell(self, a: str, b: str) -> WelchResult:
        return self.results[(a, b)]

    def rows(self) -> list[dict]:
        return [{"task_a": a, "task_b": b, "metric": self.metric, "t": r.t, "df": r.df, "p": r.p}
                for a in self.labels for b in self.labels for r in [self.results[(a, b)]]]

    def to_dict(self) -> dict:
        cells = [{k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in r.items()}
                 for r in self.rows()]
        return {"metric": self.metric, "labels": list(self.labels), "cells": cells}


def compare_tasks(reports: Sequence[tuple[str, BootstrapResult]], metric: Optional[str] = None) -> PairwiseTable:
    """Welch's t-test between every pair of bootstrap distributions."""
    reports = list(reports)
    if len(reports) < 2:
        raise ConfigError("comparison needs at least two tasks")
    labels = [lab for lab, _ in reports]
    if len(set(labels)) != len(labels):
        raise ConfigError("task labels must be unique")
    for lab, br in reports:
        if br is None or getattr(br, "resamples", None) is None or len(br.resamples) < 2:
            raise UsageError(f"{lab}: bootstrap resamples are missing")
    metric = metric or reports[0][1].metric
    results = {}
    for i, (la, ra) in enumerate(reports):
        for j, (lb, rb) in enumerate(reports):
            if i == j:
                results[(la, lb)] = WelchResult(0.0, float(2 * ra.k - 2), 1.0)
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", DegenerateWarning)
                    results[(la, lb)] = welch_test(ra.resamples, rb.resamples)
    return PairwiseTable(metric, labels, results)


def write_pairwise_csv(tables: Sequence[PairwiseTable], path) -> None:
    lines = ["task_a,task_b,metric,t,df,p"]
    for table in tables:
        for r in table.rows():
            lines.append(f"{r['task_a']},{r['task_b']},{r['metric']},{r['t']!r},{r['df']!r},{r['p']!r}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_pairwise_json(tables: Sequence[PairwiseTable], path) -> None:
    with open(path, "w") as fh:
        json.dump([t.to_dict() for t in tables], fh, indent=2, sort_keys=True)
        fh.write("\n")
