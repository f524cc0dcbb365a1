"""Brute-force references for the estimators.

Nothing here imports from :mod:`rwgc.metrics` or :mod:`rwgc.stats`; the
equivalence checks are only meaningful if the two sides are written
independently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ConfigError


@dataclass(frozen=True)
class DiscreteJoint:
    """Joint distribution over (policy symbol, return symbol)."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=np.float64)
        if p.ndim != 2 or p.size == 0:
            raise ConfigError("joint must be a non-empty matrix")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ConfigError("joint probabilities must be finite and non-negative")
        if abs(math.fsum(p.ravel()) - 1.0) > 1e-12:
            raise ConfigError("joint probabilities must sum to 1")
        p.flags.writeable = False
        object.__setattr__(self, "probabilities", p)

    @property
    def shape(self):
        return self.probabilities.shape

    def marginal_x(self) -> list[float]:
        return [math.fsum(row) for row in self.probabilities]

    def marginal_y(self) -> list[float]:
        return [math.fsum(col) for col in self.probabilities.T]


def entropy(probs) -> float:
    """Shannon entropy in nats of a discrete distribution."""
    return -math.fsum(p * math.log(p) for p in np.ravel(probs) if p > 0)


def exact_mi(joint: DiscreteJoint) -> float:
    px = joint.marginal_x()
    py = joint.marginal_y()
    terms = []
    for i, row in enumerate(joint.probabilities):
        for j, pxy in enumerate(row):
            if pxy > 0:
                terms.append(pxy * math.log(pxy / (px[i] * py[j])))
    return max(math.fsum(terms), 0.0)


def mi_from_entropies(joint: DiscreteJoint) -> float:
    """H(X) + H(Y) - H(X, Y); cross-check for :func:`exact_mi`."""
    return entropy(joint.marginal_x()) + entropy(joint.marginal_y()) - entropy(joint.probabilities)


def independent_joint(px, py) -> DiscreteJoint:
    p = np.outer(np.asarray(px, dtype=np.float64), np.asarray(py, dtype=np.float64))
    return DiscreteJoint(p / p.sum())


def sample_matrix(joint: DiscreteJoint, n_policies: int, n_episodes: int, seed: int = 0) -> np.ndarray:
    """Synthetic return matrix whose rows are policies drawn from the joint.

    Each row picks a policy symbol x from p(x); its entries are return
    symbols y ~ p(y | x), stored as the float value y. Binning the matrix
    with at least as many bins as return symbols keeps symbols apart, so
    the plug-in PIC converges to :func:`exact_mi`.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    p = joint.probabilities
    px = np.asarray(joint.marginal_x())
    xs = rng.choice(p.shape[0], size=n_policies, p=px / px.sum())
    out = np.empty((n_policies, n_episodes))
    for n, x in enumerate(xs):
        cond = p[x] / p[x].sum()
        out[n] = rng.choice(p.shape[1], size=n_episodes, p=cond)
    return out


def _t_density(x: float, df: float) -> float:
    logc = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    return math.exp(logc - (df + 1) / 2 * math.log1p(x * x / df))


def _t_body(a: float, df: float) -> float:
    # quad chokes on near-empty intervals; the linear term is exact to O(a^3) there
    if a < 1e-8:
        return a * _t_density(0.0, df)
    return integrate.quad(_t_density, 0.0, a, args=(df,), epsabs=1e-14, epsrel=1e-12, limit=200)[0]


def t_cdf_numeric(t: float, df: float) -> float:
    """Student-t CDF by adaptive quadrature of the density."""
    if not df > 0:
        raise ConfigError("degrees of freedom must be > 0")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    a = abs(t)
    if a <= 1.0:
        body = _t_body(a, df)
        upper = 0.5 + body
    else:
        tail, _ = integrate.quad(_t_density, a, math.inf, args=(df,), epsabs=1e-14, epsrel=1e-12, limit=200)
        upper = 1.0 - tail
    return upper if t >= 0 else 1.0 - upper


def t_two_sided_p_numeric(t: float, df: float) -> float:
    a = abs(t)
    if math.isinf(a):
        return 0.0
    if a <= 1.0:
        body = _t_body(a, df)
        return 1.0 - 2.0 * body
    tail, _ = integrate.quad(_t_density, a, math.inf, args=(df,), epsabs=1e-14, epsrel=1e-12, limit=200)
    return 2.0 * tail


def naive_welch(a, b) -> tuple[float, float]:
    """(t, df) with explicit loops."""
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    ma, mb = math.fsum(a) / len(a), math.fsum(b) / len(b)
    va = math.fsum((v - ma) ** 2 for v in a) / (len(a) - 1)
    vb = math.fsum((v - mb) ** 2 for v in b) / (len(b) - 1)
    sa, sb = va / len(a), vb / len(b)
    t = (ma - mb) / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa ** 2 / (len(a) - 1) + sb ** 2 / (len(b) - 1))
    return t, df


def synthesize_sample(n: int, mean: float, std: float) -> np.ndarray:
    """Sample of size n with exactly the requested mean and (ddof=1) std."""
    z = np.linspace(-1.0, 1.0, n)
    z = (z - z.mean()) / z.std(ddof=1)
    return mean + std * z
