"""Random Weight Guessing: evaluate N random policies for M episodes each.

The return matrix ``S[n, e]`` is the undiscounted episodic return of policy
``n`` on episode ``e``. Policy ``n`` draws its weights from its own
counter-based stream keyed by ``(master_seed, n)``; episode ``e`` of that
policy takes the ``e``-th fixed-size block of a second stream keyed the
same way. Any cell can therefore be recomputed in isolation, and the
matrix does not depend on the number of worker threads.
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numba
import numpy as np

from . import dynamics as dyn
from .dynamics import ArmState, ArmTask
from .errors import ConfigError
from .policy import (EPISODE_STREAM, ParameterVector, PolicySpec, _mlp_forward,
                     kernel_args, sample_parameters)

_BLOCKS_PER_EPISODE = dyn.RESET_UNIFORMS // 4  # Philox emits 4 words per block


@dataclass(frozen=True)
class RwgConfig:
    n_policies: int
    n_episodes: int
    master_seed: int
    policy: PolicySpec
    task: ArmTask

    def __post_init__(self):
        if int(self.n_policies) < 1:
            raise ConfigError("need at least one policy")
        if int(self.n_episodes) < 2:
            raise ConfigError("need at least two episodes per policy")
        if int(self.master_seed) < 0:
            raise ConfigError("master seed must be non-negative")
        if self.policy.input_dim != dyn.observation_dim(self.task):
            raise ConfigError(
                f"policy input_dim {self.policy.input_dim} != observation size "
                f"{dyn.observation_dim(self.task)}")
        if self.policy.output_dim != dyn.action_dim(self.task):
            raise ConfigError(
                f"policy output_dim {self.policy.output_dim} != action size {dyn.action_dim(self.task)}")


def matrix_hash(S: np.ndarray) -> str:
    """Git-blob style SHA-1 over the little-endian float64 bytes of ``S``."""
    data = np.ascontiguousarray(S, dtype="<f8").tobytes()
    header = f"blob {len(data)}\0".encode()
    return hashlib.sha1(header + data).hexdigest()


@dataclass(frozen=True)
class ReturnMatrix:
    S: np.ndarray
    meta: dict

    def __post_init__(self):
        S = np.array(self.S, dtype=np.float64)
        if S.ndim != 2:
            raise ConfigError("return matrix must be two-dimensional")
        if not np.all(np.isfinite(S)):
            raise ConfigError("return matrix has non-finite entries")
        S.flags.writeable = False
        object.__setattr__(self, "S", S)

    @property
    def n_policies(self) -> int:
        return self.S.shape[0]

    @property
    def n_episodes(self) -> int:
        return self.S.shape[1]

    @property
    def content_hash(self) -> str:
        return matrix_hash(self.S)

    def to_csv(self, path) -> None:
        N, M = self.S.shape
        lines = ["policy_index,episode_index,return"]
        for n in range(N):
            row = self.S[n]
            lines.extend(f"{n},{e},{float(row[e])!r}" for e in range(M))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    def write_sidecar(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({**self.meta, "shape": list(self.S.shape), "matrix_hash": self.content_hash},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_csv(cls, path, meta: Optional[dict] = None) -> "ReturnMatrix":
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "policy_index,episode_index,return":
                raise ConfigError(f"{path}: unexpected header {header!r}")
            raw = np.loadtxt(fh, delimiter=",", ndmin=2)
        if raw.size == 0:
            raise ConfigError(f"{path}: no data rows")
        idx_n = raw[:, 0].astype(np.int64)
        idx_e = raw[:, 1].astype(np.int64)
        N, M = int(idx_n.max()) + 1, int(idx_e.max()) + 1
        if raw.shape[0] != N * M:
            raise ConfigError(f"{path}: expected {N * M} cells, found {raw.shape[0]}")
        S = np.full((N, M), np.nan)
        S[idx_n, idx_e] = raw[:, 2]
        if np.isnan(S).any():
            raise ConfigError(f"{path}: missing cells")
        return cls(S, dict(meta or {}))


@dataclass(frozen=True)
class AggregateStats:
    mean: np.ndarray
    variance: np.ndarray
    rank: np.ndarray

    def to_csv(self, path) -> None:
        lines = ["policy_index,mean,variance,rank"]
        for n in range(self.mean.shape[0]):
            lines.append(f"{n},{float(self.mean[n])!r},{float(self.variance[n])!r},{int(self.rank[n])}")
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


# ------------------------------------------------------------------ seeding


def episode_stream(master_seed: int, n: int) -> np.random.Philox:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(EPISODE_STREAM, int(n)))
    return np.random.Philox(ss)


def episode_uniforms(master_seed: int, n: int, n_episodes: int) -> np.ndarray:
    """Reset uniforms for episodes ``0..n_episodes-1`` of policy ``n``."""
    return np.random.Generator(episode_stream(master_seed, n)).random((n_episodes, dyn.RESET_UNIFORMS))


def cell_uniforms(master_seed: int, n: int, e: int) -> np.ndarray:
    """Reset uniforms of the single cell ``(n, e)``, without drawing earlier episodes."""
    bg = episode_stream(master_seed, n)
    bg.advance(_BLOCKS_PER_EPISODE * int(e))
    return np.random.Generator(bg).random(dyn.RESET_UNIFORMS)


def cell_initial_state(config: RwgConfig, n: int, e: int) -> ArmState:
    return dyn.reset_from_uniforms(config.task, cell_uniforms(config.master_seed, n, e))


# ------------------------------------------------------------------ kernels


@numba.njit(cache=True, nogil=True)
def _reset_batch(lengths, fp, ip, U, Q0, G0):
    n = lengths.shape[0]
    qd = np.empty(n)
    pts = np.empty((n + 1, 2))
    for e in range(U.shape[0]):
        dyn._reset_kernel(lengths, fp, ip, U[e], Q0[e], qd, G0[e], pts)


@numba.njit(cache=True, nogil=True)
def _rollout_batch(theta, dims, use_bias, act, width, lengths, masses, fp, ip, Q, QD, G,
                   start_step, out):
    """Run episodes in lockstep from states (Q, QD, G) until each terminates.

    Q and QD are updated in place; accumulated returns go to ``out``. Per
    episode the arithmetic is the same as a lone replay through ``step``.
    """
    n = lengths.shape[0]
    B = Q.shape[0]
    X = np.zeros((3 * n + 2, B))
    A = np.empty((n, B))
    buf_a = np.empty((width, B))
    buf_b = np.empty((width, B))
    pts = np.empty((n + 1, 2))
    tau = np.empty(n)
    qdd = np.empty(n)
    active = np.ones(B, dtype=np.bool_)
    remaining = B
    for e in range(B):
        out[e] = 0.0
    for _ in range(start_step, ip[dyn._MAXSTEPS]):
        if remaining == 0:
            break
        for e in range(B):
            if active[e]:
                dyn._observe_kernel(lengths, fp, Q[e], QD[e], G[e], X[:, e])
        _mlp_forward(theta, dims, use_bias, act, X, buf_a, buf_b, A)
        for e in range(B):
            if not active[e]:
                continue
            r, cause = dyn._step_kernel(lengths, masses, fp, ip, Q[e], QD[e], G[e], A[:, e],
                                        pts, tau, qdd)
            out[e] += r
            if cause != 0:
                active[e] = False
                remaining -= 1


# ---------------------------------------------------------------- evaluation


def rollout(spec: PolicySpec, params, task: ArmTask, state: ArmState) -> float:
    """Return of one policy run from ``state`` until the episode terminates."""
    theta = params.values if isinstance(params, ParameterVector) else np.ascontiguousarray(params, dtype=np.float64)
    if theta.shape != (spec.dim,):
        raise ConfigError(f"expected {spec.dim} parameters")
    if state.terminated:
        return 0.0
    dims, use_bias, act, width = kernel_args(spec)
    lengths, masses, fp, ip = task.packed()
    out = np.empty(1)
    _rollout_batch(theta, dims, use_bias, act, width, lengths, masses, fp, ip,
                   np.array([state.q], dtype=np.float64), np.array([state.qdot], dtype=np.float64),
                   np.array([state.goal], dtype=np.float64), int(state.steps_taken), out)
    return float(out[0])


def evaluate_cell(config: RwgConfig, n: int, e: int) -> float:
    """Recompute ``S[n, e]`` alone."""
    params = sample_parameters(config.policy, config.master_seed, n)
    return rollout(config.policy, params, config.task, cell_initial_state(config, n, e))


def resolve_threads(threads: Optional[int] = None) -> int:
    env = os.environ.get("RWGC_THREADS")
    if env:
        threads = int(env)
    if threads is None:
        threads = 1
    if threads < 1:
        raise ConfigError("thread count must be >= 1")
    return threads


def evaluate(config: RwgConfig,
             progress_sink: Optional[Callable[[int, int], None]] = None,
             threads: int = 1,
             parameters: Optional[Callable[[int], np.ndarray]] = None,
             initial_states: Optional[Callable[[int, int], ArmState]] = None) -> ReturnMatrix:
    """Run Random Weight Guessing and return the ``N x M`` return matrix.

    ``parameters`` and ``initial_states`` override the seeded policy weights
    and episode resets; they exist for controlled experiments and tests.
    """
    N, M = int(config.n_policies), int(config.n_episodes)
    spec, task = config.policy, config.task
    dims, use_bias, act, width = kernel_args(spec)
    lengths, masses, fp, ip = task.packed()
    S = np.empty((N, M))

    def run_row(n: int) -> None:
        if parameters is None:
            theta = sample_parameters(spec, config.master_seed, n).values
        else:
            theta = ParameterVector(parameters(n), n).values
            if theta.shape != (spec.dim,):
                raise ConfigError(f"injected parameters for policy {n} have wrong length")
        if initial_states is None:
            U = episode_uniforms(config.master_seed, n, M)
            Q0 = np.empty((M, task.n_links))
            G0 = np.empty((M, 2))
            _reset_batch(lengths, fp, ip, U, Q0, G0)
        else:
            states = [initial_states(n, e) for e in range(M)]
            Q0 = np.array([s.q for s in states], dtype=np.float64)
            G0 = np.array([s.goal for s in states], dtype=np.float64)
        row = np.empty(M)
        _rollout_batch(theta, dims, use_bias, act, width, lengths, masses, fp, ip,
                       Q0, np.zeros_like(Q0), G0, 0, row)
        S[n] = row

    threads = resolve_threads(threads)
    done = 0
    if threads == 1:
        for n in range(N):
            run_row(n)
            done += 1
            if progress_sink is not None:
                progress_sink(done, N)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for _ in pool.map(run_row, range(N)):
                done += 1
                if progress_sink is not None:
                    progress_sink(done, N)

    meta = {
        "n_policies": N,
        "n_episodes": M,
        "master_seed": int(config.master_seed),
        "policy": spec.to_dict(),
        "task": task_summary(task),
    }
    return ReturnMatrix(S, meta)


def task_summary(task: ArmTask) -> dict:
    r = task.reward
    out = {
        "links": list(task.link_lengths),
        "masses": list(task.link_masses),
        "reward": r.kind,
        "weights": reward_weights(task),
        "max_steps": int(task.max_steps),
        "goal_threshold": task.goal_threshold,
        "dt": task.dt,
        "torque_limit": task.torque_limit,
        "velocity_limit": task.velocity_limit,
        "integrator": task.integrator,
        "substeps": int(task.substeps),
    }
    if task.obstacle is not None:
        ob = task.obstacle
        out["obstacle"] = {"center": list(ob.center), "radius": ob.radius,
                           "thickness": ob.thickness, "points": int(ob.points)}
    return out


def reward_weights(task: ArmTask) -> dict:
    r = task.reward
    if r.kind == "sparse":
        return {}
    w = {"distance": r.w_distance, "control": r.w_control}
    if r.kind == "obstacle":
        w.update(collision=r.beta_collision, proximity=r.beta_proximity, alpha=r.alpha)
    return w


# ----------------------------------------------------------------- aggregation


def _as_array(S) -> np.ndarray:
    return S.S if isinstance(S, ReturnMatrix) else np.asarray(S, dtype=np.float64)


def aggregate(S) -> AggregateStats:
    """Per-policy mean, unbiased variance and rank (1 = lowest mean)."""
    S = _as_array(S)
    if S.ndim != 2 or S.shape[1] < 2:
        raise ConfigError("aggregation needs at least two episodes per policy")
    mean = S.mean(axis=1)
    variance = ((S - mean[:, None]) ** 2).sum(axis=1) / (S.shape[1] - 1)
    order = np.argsort(mean, kind="stable")
    rank = np.empty(S.shape[0], dtype=np.int64)
    rank[order] = np.arange(1, S.shape[0] + 1)
    return AggregateStats(mean, variance, rank)


def min_max_scale(values) -> np.ndarray:
    """Scale to [0, 1]; a constant input maps to all zeros."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ConfigError("cannot scale an empty array")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


@dataclass(frozen=True)
class DistributionArtifacts:
    histogram: np.ndarray          # (bins, 3): left edge, right edge, count
    performance_curve: np.ndarray  # (N, 3): rank, mean, scaled mean
    scatter: np.ndarray            # (N*M, 3): rank, return, scaled return
    variance_cloud: np.ndarray     # (N, 4): mean, std, normalised mean, normalised std

    def write_csvs(self, prefix) -> list[str]:
        tables = {
            "histogram": ("bin_low,bin_high,count", self.histogram, ("{!r}", "{!r}", "{:d}")),
            "performance_curve": ("rank,mean,scaled_mean", self.performance_curve, ("{:d}", "{!r}", "{!r}")),
            "scatter": ("rank,return,scaled_return", self.scatter, ("{:d}", "{!r}", "{!r}")),
            "variance_cloud": ("mean,std,normalized_mean,normalized_std", self.variance_cloud,
                               ("{!r}",) * 4),
        }
        paths = []
        for name, (header, table, fmts) in tables.items():
            path = f"{prefix}{name}.csv"
            lines = [header]
            for row in table:
                lines.append(",".join(f.format(int(v) if f == "{:d}" else float(v)) for f, v in zip(fmts, row)))
            with open(path, "w", newline="\n") as fh:
                fh.write("\n".join(lines) + "\n")
            paths.append(path)
        return paths


def distribution_artifacts(stats: AggregateStats, S, bins: int = 50) -> DistributionArtifacts:
    """Tabular data behind the histogram, performance curve and variance cloud.

    The histogram and performance curve use min-max scaled means. The
    variance cloud divides by the range of all returns, i.e. it is the
    mean/std of the min-max scaled return matrix.
    """
    if bins < 1:
        raise ConfigError("bins must be >= 1")
    S = _as_array(S)
    N, M = S.shape
    scaled_mean = min_max_scale(stats.mean)
    counts, edges = np.histogram(scaled_mean, bins=bins, range=(0.0, 1.0))
    histogram = np.column_stack([edges[:-1], edges[1:], counts])

    order = np.argsort(stats.rank)
    curve = np.column_stack([stats.rank[order], stats.mean[order], scaled_mean[order]])

    scaled_S = min_max_scale(S)
    scatter = np.column_stack([np.repeat(stats.rank[order], M), S[order].ravel(),
                               scaled_S[order].ravel()])

    span = S.max() - S.min()
    std = np.sqrt(stats.variance)
    if span > 0:
        cloud = np.column_stack([stats.mean, std, (stats.mean - S.min()) / span, std / span])
    else:
        cloud = np.column_stack([stats.mean, std, np.zeros(N), np.zeros(N)])
    return DistributionArtifacts(histogram, curve, scatter, cloud)
