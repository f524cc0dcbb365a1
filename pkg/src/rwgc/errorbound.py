"""Worst-case end-effector error of a planar serial chain under bounded
joint errors, and a Monte-Carlo check of that bound."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .dynamics import ArmTask
from .errors import ConfigError


def _lengths(task_or_lengths) -> np.ndarray:
    if isinstance(task_or_lengths, ArmTask):
        return np.array(task_or_lengths.link_lengths)
    lengths = np.atleast_1d(np.asarray(task_or_lengths, dtype=np.float64))
    if lengths.ndim != 1 or lengths.size == 0 or np.any(lengths <= 0):
        raise ConfigError("link lengths must be a non-empty list of positive numbers")
    return lengths


def jacobian(task, q) -> np.ndarray:
    """2 x n positional Jacobian; column k is the tip velocity per unit rate of joint k."""
    lengths = _lengths(task)
    q = np.asarray(q, dtype=np.float64)
    if q.shape != lengths.shape:
        raise ConfigError(f"expected {lengths.size} joint angles")
    ang = np.cumsum(q)
    # suffix sums over links i >= k
    jx = -np.cumsum((lengths * np.sin(ang))[::-1])[::-1]
    jy = np.cumsum((lengths * np.cos(ang))[::-1])[::-1]
    return np.vstack([jx, jy])


def _jacobian_batch(lengths: np.ndarray, q: np.ndarray) -> np.ndarray:
    ang = np.cumsum(q, axis=1)
    jx = -np.cumsum((lengths * np.sin(ang))[:, ::-1], axis=1)[:, ::-1]
    jy = np.cumsum((lengths * np.cos(ang))[:, ::-1], axis=1)[:, ::-1]
    return np.stack([jx, jy], axis=1)  # (S, 2, n)


def _tip_batch(lengths: np.ndarray, q: np.ndarray) -> np.ndarray:
    ang = np.cumsum(q, axis=1)
    return np.stack([(lengths * np.cos(ang)).sum(axis=1), (lengths * np.sin(ang)).sum(axis=1)], axis=1)


def bound_constant(task) -> float:
    """sum_i i * l_i."""
    lengths = _lengths(task)
    return float(np.sum(np.arange(1, lengths.size + 1) * lengths))


def error_bound(task, epsilon: float) -> float:
    if not epsilon > 0:
        raise ConfigError("epsilon must be > 0")
    return float(epsilon) * bound_constant(task)


@dataclass(frozen=True)
class BoundReport:
    n: int
    lengths: list
    epsilon: float
    bound: float
    samples: int
    max_observed: float          # largest first-order error
    max_observed_exact: float    # largest finite-difference error
    max_ratio: float             # max first-order / bound
    violations: int              # first-order samples above bound
    exact_violations: int        # exact samples above bound + slack
    triangle_violations: int     # samples breaking the column-wise triangle step
    slack: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def verify_bound(task, epsilon: float = 1e-3, samples: int = 100_000, seed: int = 0) -> BoundReport:
    """Sample configurations and joint errors with |dq_k| <= epsilon and check
    both the linearised and the exact tip displacement against the bound.

    The exact displacement may exceed the first-order bound by at most the
    second-order slack ``n * sum(l) * epsilon**2 / 2``.
    """
    lengths = _lengths(task)
    if not epsilon > 0:
        raise ConfigError("epsilon must be > 0")
    if samples < 1:
        raise ConfigError("samples must be >= 1")
    n = lengths.size
    bound = error_bound(lengths, epsilon)
    slack = n * float(lengths.sum()) * epsilon ** 2 / 2.0
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    q = rng.uniform(-np.pi, np.pi, (samples, n))
    dq = rng.uniform(-epsilon, epsilon, (samples, n))
    # a tenth of the samples sit on corners of the error box, where the bound is tightest
    corners = samples // 10
    dq[:corners] = epsilon * rng.choice([-1.0, 1.0], (corners, n))

    J = _jacobian_batch(lengths, q)
    dx_lin = np.einsum("sij,sj->si", J, dq)
    lin = np.linalg.norm(dx_lin, axis=1)
    tri = (np.linalg.norm(J, axis=1) * np.abs(dq)).sum(axis=1)
    exact = np.linalg.norm(_tip_batch(lengths, q + dq) - _tip_batch(lengths, q), axis=1)
    tol = 1e-12 * max(bound, 1.0)
    return BoundReport(
        n=int(n),
        lengths=[float(v) for v in lengths],
        epsilon=float(epsilon),
        bound=bound,
        samples=int(samples),
        max_observed=float(lin.max()),
        max_observed_exact=float(exact.max()),
        max_ratio=float(lin.max() / bound),
        violations=int(np.sum(lin > bound + tol)),
        exact_violations=int(np.sum(exact > bound + slack + tol)),
        triangle_violations=int(np.sum(lin > tri + tol)),
        slack=slack,
    )
