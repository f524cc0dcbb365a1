"""Random MLP policies: architecture, parameter priors, seeded sampling and
the deterministic observation -> action forward pass.

Weights are stored as one flat vector. Layer ``k`` occupies a row-major
``(fan_in, fan_out)`` block followed, when biases are enabled, by a
``fan_out`` bias block.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigError

ACTIVATIONS = ("tanh", "relu")

# spawn-key stream tags; policy and episode randomness never share a stream
POLICY_STREAM = 0
EPISODE_STREAM = 1


@dataclass(frozen=True)
class PriorSpec:
    kind: str = "normal"
    std: float = 1.0
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind == "normal":
            if not (np.isfinite(self.std) and self.std > 0):
                raise ConfigError(f"normal prior needs std > 0, got {self.std}")
        elif self.kind == "uniform":
            if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo < self.hi):
                raise ConfigError(f"uniform prior needs lo < hi, got ({self.lo}, {self.hi})")
        else:
            raise ConfigError(f"unknown prior kind {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "normal":
            return {"kind": "normal", "std": float(self.std)}
        return {"kind": "uniform", "lo": float(self.lo), "hi": float(self.hi)}

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        kind = d.get("kind", "normal")
        if kind == "normal":
            return cls(kind="normal", std=float(d.get("std", 1.0)))
        if kind == "uniform":
            return cls(kind="uniform", lo=float(d.get("lo", -1.0)), hi=float(d.get("hi", 1.0)))
        raise ConfigError(f"unknown prior kind {kind!r}")


@dataclass(frozen=True)
class PolicySpec:
    """Fully connected tanh-output policy network.

    ``input_dim`` and ``output_dim`` are fixed by the task the policy is
    paired with; see :func:`rwgc.dynamics.observation_dim`.
    """

    input_dim: int
    output_dim: int
    hidden_layers: int = 2
    hidden_units: int = 32
    use_bias: bool = False
    hidden_activation: str = "tanh"
    output_activation: str = "tanh"
    prior: PriorSpec = field(default_factory=PriorSpec)

    def __post_init__(self):
        for name in ("input_dim", "output_dim", "hidden_units"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if int(self.hidden_layers) < 0:
            raise ConfigError("hidden_layers must be >= 0")
        if self.hidden_activation not in ACTIVATIONS:
            raise ConfigError(f"hidden_activation must be one of {ACTIVATIONS}")
        if self.output_activation != "tanh":
            raise ConfigError("output_activation must be 'tanh'")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim,) + (self.hidden_units,) * self.hidden_layers + (self.output_dim,)

    @property
    def dim(self) -> int:
        dims = self.layer_dims
        d = sum(a * b for a, b in zip(dims[:-1], dims[1:]))
        if self.use_bias:
            d += sum(dims[1:])
        return d

    def with_io(self, input_dim: int, output_dim: int) -> "PolicySpec":
        return PolicySpec(input_dim, output_dim, self.hidden_layers, self.hidden_units,
                          self.use_bias, self.hidden_activation, self.output_activation,
                          self.prior)

    def to_dict(self) -> dict:
        return {
            "hidden_layers": int(self.hidden_layers),
            "hidden_units": int(self.hidden_units),
            "use_bias": bool(self.use_bias),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
            "prior": self.prior.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, input_dim: int, output_dim: int) -> "PolicySpec":
        allowed = {"hidden_layers", "hidden_units", "use_bias", "hidden_activation",
                   "output_activation", "prior"}
        extra = set(d) - allowed
        if extra:
            raise ConfigError(f"unknown policy fields: {sorted(extra)}")
        return cls(
            input_dim=input_dim,
            output_dim=output_dim,
            hidden_layers=int(d.get("hidden_layers", 2)),
            hidden_units=int(d.get("hidden_units", 32)),
            use_bias=bool(d.get("use_bias", False)),
            hidden_activation=d.get("hidden_activation", "tanh"),
            output_activation=d.get("output_activation", "tanh"),
            prior=PriorSpec.from_dict(d.get("prior", {})),
        )


@dataclass(frozen=True)
class ParameterVector:
    values: np.ndarray
    policy_index: int

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ConfigError("parameter vector must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ConfigError("parameter vector has non-finite entries")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]


def _check_seed(master_seed: int) -> int:
    master_seed = int(master_seed)
    if master_seed < 0:
        raise ConfigError("master seed must be a non-negative integer")
    return master_seed


def policy_rng(master_seed: int, n: int) -> np.random.Generator:
    """Counter-based generator owned by policy ``n`` alone."""
    ss = np.random.SeedSequence(_check_seed(master_seed), spawn_key=(POLICY_STREAM, int(n)))
    return np.random.Generator(np.random.Philox(ss))


def sample_parameters(spec: PolicySpec, master_seed: int, n: int) -> ParameterVector:
    """Parameters of the ``n``-th random policy.

    The draw depends only on ``(spec, master_seed, n)``, never on how many
    other policies were sampled or in which order.
    """
    if n < 0:
        raise ConfigError("policy index must be >= 0")
    rng = policy_rng(master_seed, n)
    prior = spec.prior
    if prior.kind == "normal":
        values = rng.normal(0.0, prior.std, spec.dim)
    else:
        values = rng.uniform(prior.lo, prior.hi, spec.dim)
    return ParameterVector(values, int(n))


def kernel_args(spec: PolicySpec):
    """Flattened architecture description consumed by the jitted kernels."""
    dims = np.asarray(spec.layer_dims, dtype=np.int64)
    act = 1 if spec.hidden_activation == "relu" else 0
    return dims, bool(spec.use_bias), act, int(dims.max())


@numba.njit(cache=True, nogil=True, inline="always")
def _tanh(v):
    # exp-based tanh within 2 ulp of libm and ~3x cheaper; expm1 near 0
    a = abs(v)
    if a < 0.25:
        e = math.expm1(-2.0 * a)
        r = -e / (2.0 + e)
    else:
        e = math.exp(-2.0 * a)
        r = (1.0 - e) / (1.0 + e)
    return r if v >= 0.0 else -r


@numba.njit(cache=True, nogil=True)
def _mlp_forward(theta, dims, use_bias, act, X, buf_a, buf_b, out):
    """Batched forward pass: X is (in, B), out is (out, B).

    buf_a/buf_b are (max width, B) scratch. Every column is computed with
    the same sequence of operations, so results do not depend on B.
    """
    nl = dims.shape[0] - 1
    B = X.shape[1]
    for i in range(dims[0]):
        for e in range(B):
            buf_a[i, e] = X[i, e]
    off = 0
    for layer in range(nl):
        fin = dims[layer]
        fout = dims[layer + 1]
        for j in range(fout):
            for e in range(B):
                buf_b[j, e] = 0.0
        for i in range(fin):
            base = off + i * fout
            for j in range(fout):
                w = theta[base + j]
                for e in range(B):
                    buf_b[j, e] += buf_a[i, e] * w
        off += fin * fout
        if use_bias:
            for j in range(fout):
                for e in range(B):
                    buf_b[j, e] += theta[off + j]
            off += fout
        last = layer == nl - 1
        for j in range(fout):
            for e in range(B):
                v = buf_b[j, e]
                if last or act == 0:
                    buf_a[j, e] = _tanh(v)
                else:
                    buf_a[j, e] = v if v > 0.0 else 0.0
    for j in range(dims[nl]):
        for e in range(B):
            out[j, e] = buf_a[j, e]


def forward(spec: PolicySpec, params: ParameterVector | np.ndarray, observation) -> np.ndarray:
    """Deterministic action for one observation; every component lies in [-1, 1]."""
    theta = params.values if isinstance(params, ParameterVector) else np.ascontiguousarray(params, dtype=np.float64)
    obs = np.ascontiguousarray(observation, dtype=np.float64)
    if theta.shape != (spec.dim,):
        raise ConfigError(f"expected {spec.dim} parameters, got {theta.shape}")
    if obs.shape != (spec.input_dim,):
        raise ConfigError(f"expected observation of length {spec.input_dim}, got {obs.shape}")
    dims, use_bias, act, width = kernel_args(spec)
    out = np.empty((spec.output_dim, 1))
    _mlp_forward(theta, dims, use_bias, act, obs.reshape(-1, 1), np.empty((width, 1)),
                 np.empty((width, 1)), out)
    return out[:, 0]
