"""Torque-controlled planar 1-link and 2-link arms on a frictionless
horizontal plane, with dense, sparse and obstacle reward formulations.

The equations of motion are ``M(q) qdd + C(q, qd) qd + G(q) + F(qd) = tau``
with gravity, friction and external wrench identically zero. Links are
uniform thin rods. The torque is held over each control period and the
state is advanced with classical RK4 (semi-implicit Euler is available
as an option), optionally split into substeps.

Python-facing functions wrap small jitted kernels; the batch evaluator in
:mod:`rwgc.rwg` calls the same kernels, so a single episode replayed through
:func:`reset_from_uniforms` / :func:`step` reproduces its cell bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .errors import ConfigError, UsageError

REWARD_KINDS = ("dense", "sparse", "obstacle")
INTEGRATORS = ("rk4", "semi_implicit_euler")
TERMINATION_CAUSES = ("none", "collision", "goal_reached", "step_limit")

# uniforms consumed by one reset: 8 joint-angle candidates (2 slots each)
# followed by 8 goal candidates (radius, angle)
RESET_TRIES = 8
RESET_UNIFORMS = 4 * RESET_TRIES

# indices into the packed float parameter vector
_DT, _TAU, _VLIM, _THRESH, _W1, _W2, _B1, _B2, _ALPHA, _OX, _OY, _RO, _TO = range(13)
# indices into the packed int parameter vector
_NLINK, _KIND, _MAXSTEPS, _NPTS, _SUBSTEPS, _INTEG = range(6)


@dataclass(frozen=True)
class RewardSpec:
    kind: str = "dense"
    w_distance: float = 1.0
    w_control: float = 1.0
    beta_collision: float = 1e3
    beta_proximity: float = 5.0
    alpha: float = 2.5

    def __post_init__(self):
        if self.kind not in REWARD_KINDS:
            raise ConfigError(f"reward kind must be one of {REWARD_KINDS}")
        for name in ("w_distance", "w_control", "beta_collision", "beta_proximity", "alpha"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"reward weight {name} must be > 0")


@dataclass(frozen=True)
class ObstacleSpec:
    center: tuple[float, float] = (0.5, 0.5)
    radius: float = 0.02
    thickness: float = 0.05
    points: int = 50

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.radius > 0 or not self.thickness > 0:
            raise ConfigError("obstacle radius and link thickness must be > 0")
        if int(self.points) < 2:
            raise ConfigError("obstacle discretisation needs >= 2 points")

    @property
    def clearance(self) -> float:
        return self.radius + 0.5 * self.thickness


@dataclass(frozen=True)
class ArmTask:
    link_lengths: tuple[float, ...]
    reward: RewardSpec = field(default_factory=RewardSpec)
    link_masses: tuple[float, ...] | None = None
    max_steps: int = 50
    goal_threshold: float = 0.05
    dt: float = 0.05
    torque_limit: float = 1.0
    velocity_limit: float = 8.0
    obstacle: ObstacleSpec | None = None
    substeps: int = 1
    integrator: str = "rk4"

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.link_lengths)
        # rods of unit linear density unless masses are given
        masses = lengths if self.link_masses is None else tuple(float(v) for v in self.link_masses)
        object.__setattr__(self, "link_lengths", lengths)
        object.__setattr__(self, "link_masses", masses)
        if len(lengths) not in (1, 2):
            raise ConfigError("only 1-link and 2-link arms are supported")
        if len(masses) != len(lengths):
            raise ConfigError("link_masses must match link_lengths")
        if min(lengths) <= 0 or min(masses) <= 0:
            raise ConfigError("link lengths and masses must be > 0")
        if int(self.max_steps) < 1:
            raise ConfigError("max_steps must be >= 1")
        if int(self.substeps) < 1:
            raise ConfigError("substeps must be >= 1")
        if self.integrator not in INTEGRATORS:
            raise ConfigError(f"integrator must be one of {INTEGRATORS}")
        for name in ("goal_threshold", "dt", "torque_limit", "velocity_limit"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be > 0")
        if (self.obstacle is not None) != (self.reward.kind == "obstacle"):
            raise ConfigError("an obstacle is required exactly when the reward kind is 'obstacle'")

    @property
    def n_links(self) -> int:
        return len(self.link_lengths)

    @property
    def reach(self) -> float:
        return float(sum(self.link_lengths))

    def packed(self):
        """Arrays handed to the jitted kernels."""
        r, ob = self.reward, self.obstacle
        fp = np.array([
            self.dt, self.torque_limit, self.velocity_limit, self.goal_threshold,
            r.w_distance, r.w_control, r.beta_collision, r.beta_proximity, r.alpha,
            ob.center[0] if ob else 0.0, ob.center[1] if ob else 0.0,
            ob.radius if ob else 0.0, ob.thickness if ob else 0.0,
        ])
        ip = np.array([self.n_links, REWARD_KINDS.index(r.kind), self.max_steps,
                       ob.points if ob else 0, self.substeps,
                       INTEGRATORS.index(self.integrator)], dtype=np.int64)
        return np.array(self.link_lengths), np.array(self.link_masses), fp, ip


@dataclass
class ArmState:
    q: np.ndarray
    qdot: np.ndarray
    goal: np.ndarray
    steps_taken: int = 0
    terminated: bool = False
    termination_cause: str = "none"

    def copy(self) -> "ArmState":
        return replace(self, q=self.q.copy(), qdot=self.qdot.copy(), goal=self.goal.copy())


def observation_dim(task: ArmTask) -> int:
    return 3 * task.n_links + 2


def action_dim(task: ArmTask) -> int:
    return task.n_links


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True, nogil=True)
def _fk_joints(lengths, q, pts):
    """Base, intermediate joints and end-effector into ``pts`` (n+1, 2)."""
    pts[0, 0] = 0.0
    pts[0, 1] = 0.0
    ang = 0.0
    for i in range(lengths.shape[0]):
        ang += q[i]
        pts[i + 1, 0] = pts[i, 0] + lengths[i] * math.cos(ang)
        pts[i + 1, 1] = pts[i, 1] + lengths[i] * math.sin(ang)


@numba.njit(cache=True, nogil=True)
def _mass_matrix(lengths, masses, q):
    if lengths.shape[0] == 1:
        return masses[0] * lengths[0] ** 2 / 3.0, 0.0, 0.0, 0.0
    l1, l2 = lengths[0], lengths[1]
    m1, m2 = masses[0], masses[1]
    c1, c2 = 0.5 * l1, 0.5 * l2
    i1, i2 = m1 * l1 * l1 / 12.0, m2 * l2 * l2 / 12.0
    cq = math.cos(q[1])
    m22 = m2 * c2 * c2 + i2
    m12 = m22 + m2 * l1 * c2 * cq
    m11 = m1 * c1 * c1 + i1 + m2 * (l1 * l1 + c2 * c2 + 2.0 * l1 * c2 * cq) + i2
    return m11, m12, m12, m22


@numba.njit(cache=True, nogil=True, inline="always")
def _accel2(lengths, masses, n, q1, v0, v1, t0, t1):
    """Joint accelerations from scalars; for n = 1 only the first is used."""
    if n == 1:
        return t0 / (masses[0] * lengths[0] ** 2 / 3.0), 0.0
    l1, l2 = lengths[0], lengths[1]
    m1, m2 = masses[0], masses[1]
    c1, c2 = 0.5 * l1, 0.5 * l2
    i1, i2 = m1 * l1 * l1 / 12.0, m2 * l2 * l2 / 12.0
    cq = math.cos(q1)
    m22 = m2 * c2 * c2 + i2
    m12 = m22 + m2 * l1 * c2 * cq
    m11 = m1 * c1 * c1 + i1 + m2 * (l1 * l1 + c2 * c2 + 2.0 * l1 * c2 * cq) + i2
    h = m2 * l1 * c2 * math.sin(q1)
    # C(q, qd) qd for the planar 2R chain; G = F = 0
    r0 = t0 + h * v1 * (2.0 * v0 + v1)
    r1 = t1 - h * v0 * v0
    det = m11 * m22 - m12 * m12
    return (m22 * r0 - m12 * r1) / det, (m11 * r1 - m12 * r0) / det


@numba.njit(cache=True, nogil=True)
def _accel(lengths, masses, q, qd, tau, qdd):
    n = lengths.shape[0]
    if n == 1:
        qdd[0], _ = _accel2(lengths, masses, 1, 0.0, qd[0], 0.0, tau[0], 0.0)
    else:
        qdd[0], qdd[1] = _accel2(lengths, masses, 2, q[1], qd[0], qd[1], tau[0], tau[1])


@numba.njit(cache=True, nogil=True)
def _link_distance(ax, ay, bx, by, ox, oy, clearance, npts):
    best = np.inf
    for k in range(npts + 1):
        s = k / npts
        px = ax + s * (bx - ax)
        py = ay + s * (by - ay)
        dist = math.sqrt((px - ox) ** 2 + (py - oy) ** 2) - clearance
        if dist < best:
            best = dist
    return best if best > 0.0 else 0.0


@numba.njit(cache=True, nogil=True)
def _dense_reward(eex, eey, gx, gy, action, w1, w2):
    a2 = 0.0
    for i in range(action.shape[0]):
        a2 += action[i] * action[i]
    return -w1 * ((eex - gx) ** 2 + (eey - gy) ** 2) - w2 * a2


@numba.njit(cache=True, nogil=True)
def _sparse_reward(eex, eey, gx, gy, threshold):
    return 0.0 if math.sqrt((eex - gx) ** 2 + (eey - gy) ** 2) < threshold else -1.0


@numba.njit(cache=True, nogil=True)
def _obstacle_terms(pts, fp, npts):
    """(collided, sum_i exp(-alpha d_i)) over all links."""
    clearance = fp[_RO] + 0.5 * fp[_TO]
    collided = False
    prox = 0.0
    for i in range(pts.shape[0] - 1):
        d = _link_distance(pts[i, 0], pts[i, 1], pts[i + 1, 0], pts[i + 1, 1],
                           fp[_OX], fp[_OY], clearance, npts)
        if d == 0.0:
            collided = True
        prox += math.exp(-fp[_ALPHA] * d)
    return collided, prox


@numba.njit(cache=True, nogil=True)
def _reward_and_events(fp, ip, pts, goal, action):
    """Reward of the current configuration plus (collided, goal distance)."""
    n = ip[_NLINK]
    eex, eey = pts[n, 0], pts[n, 1]
    kind = ip[_KIND]
    dist = math.sqrt((eex - goal[0]) ** 2 + (eey - goal[1]) ** 2)
    if kind == 1:
        return _sparse_reward(eex, eey, goal[0], goal[1], fp[_THRESH]), False, dist
    r = _dense_reward(eex, eey, goal[0], goal[1], action, fp[_W1], fp[_W2])
    if kind == 2:
        collided, prox = _obstacle_terms(pts, fp, ip[_NPTS])
        if collided:
            r -= fp[_B1]
        r -= fp[_B2] * prox
        return r, collided, dist
    return r, False, dist


@numba.njit(cache=True, nogil=True)
def _integrate(lengths, masses, fp, ip, q, qd, action, tau, qdd):
    """Advance one control period with the torque held constant.

    rk4: classical Runge-Kutta per substep. semi_implicit_euler: velocity
    then position per substep. Velocities are clamped after each substep.
    """
    n = lengths.shape[0]
    for i in range(n):
        tau[i] = action[i] * fp[_TAU]
    t0 = tau[0]
    t1 = tau[1] if n > 1 else 0.0
    vlim = fp[_VLIM]
    k = ip[_SUBSTEPS]
    h = fp[_DT] / k
    p0 = q[0]
    p1 = q[1] if n > 1 else 0.0
    v0 = qd[0]
    v1 = qd[1] if n > 1 else 0.0
    for _ in range(k):
        if ip[_INTEG] == 0:
            a0, a1 = _accel2(lengths, masses, n, p1, v0, v1, t0, t1)
            b0, b1 = _accel2(lengths, masses, n, p1 + 0.5 * h * v1, v0 + 0.5 * h * a0,
                             v1 + 0.5 * h * a1, t0, t1)
            c0, c1 = _accel2(lengths, masses, n, p1 + 0.5 * h * (v1 + 0.5 * h * a1),
                             v0 + 0.5 * h * b0, v1 + 0.5 * h * b1, t0, t1)
            d0, d1 = _accel2(lengths, masses, n, p1 + h * (v1 + 0.5 * h * b1),
                             v0 + h * c0, v1 + h * c1, t0, t1)
            # position increments use the stage velocities
            p0 += h / 6.0 * (v0 + 2.0 * (v0 + 0.5 * h * a0) + 2.0 * (v0 + 0.5 * h * b0) + (v0 + h * c0))
            p1 += h / 6.0 * (v1 + 2.0 * (v1 + 0.5 * h * a1) + 2.0 * (v1 + 0.5 * h * b1) + (v1 + h * c1))
            v0 += h / 6.0 * (a0 + 2.0 * b0 + 2.0 * c0 + d0)
            v1 += h / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
            v0 = min(max(v0, -vlim), vlim)
            v1 = min(max(v1, -vlim), vlim)
        else:
            a0, a1 = _accel2(lengths, masses, n, p1, v0, v1, t0, t1)
            v0 = min(max(v0 + a0 * h, -vlim), vlim)
            v1 = min(max(v1 + a1 * h, -vlim), vlim)
            p0 += v0 * h
            p1 += v1 * h
    q[0] = p0
    qd[0] = v0
    if n > 1:
        q[1] = p1
        qd[1] = v1


@numba.njit(cache=True, nogil=True)
def _step_kernel(lengths, masses, fp, ip, q, qd, goal, action, pts, tau, qdd):
    """Advance one step in place; returns (reward, cause) with cause an index
    into TERMINATION_CAUSES evaluated before the step limit."""
    _integrate(lengths, masses, fp, ip, q, qd, action, tau, qdd)
    _fk_joints(lengths, q, pts)
    r, collided, dist = _reward_and_events(fp, ip, pts, goal, action)
    cause = 0
    if ip[_KIND] == 2:
        if collided:
            cause = 1
        elif dist <= fp[_THRESH]:
            cause = 2
    return r, cause


@numba.njit(cache=True, nogil=True)
def _observe_kernel(lengths, fp, q, qd, goal, out):
    n = lengths.shape[0]
    reach = 0.0
    for i in range(n):
        reach += lengths[i]
    for i in range(n):
        out[i] = math.cos(q[i])
        out[n + i] = math.sin(q[i])
        out[2 * n + i] = qd[i] / fp[_VLIM]
    out[3 * n] = goal[0] / reach
    out[3 * n + 1] = goal[1] / reach


@numba.njit(cache=True, nogil=True)
def _reset_kernel(lengths, fp, ip, u, q, qd, goal, pts):
    """Initial state from RESET_UNIFORMS uniforms in [0, 1)."""
    n = lengths.shape[0]
    tries = u.shape[0] // 4
    for t in range(tries):
        for i in range(n):
            q[i] = -math.pi + 2.0 * math.pi * u[2 * t + i]
        if ip[_KIND] != 2:
            break
        _fk_joints(lengths, q, pts)
        collided, _ = _obstacle_terms(pts, fp, ip[_NPTS])
        if not collided:
            break
    for i in range(n):
        qd[i] = 0.0
    _fk_joints(lengths, q, pts)
    if n == 1:
        r_in = lengths[0]
        r_out = lengths[0]
    else:
        r_in = abs(lengths[0] - lengths[1])
        r_out = lengths[0] + lengths[1]
    base = 2 * tries
    for t in range(tries):
        rad = math.sqrt(r_in * r_in + u[base + 2 * t] * (r_out * r_out - r_in * r_in))
        ang = -math.pi + 2.0 * math.pi * u[base + 2 * t + 1]
        goal[0] = rad * math.cos(ang)
        goal[1] = rad * math.sin(ang)
        if math.sqrt((goal[0] - pts[n, 0]) ** 2 + (goal[1] - pts[n, 1]) ** 2) >= fp[_THRESH]:
            break


# ---------------------------------------------------------- python surface


def reset_from_uniforms(task: ArmTask, u) -> ArmState:
    u = np.ascontiguousarray(u, dtype=np.float64)
    if u.shape != (RESET_UNIFORMS,):
        raise ConfigError(f"reset needs {RESET_UNIFORMS} uniforms")
    lengths, _, fp, ip = task.packed()
    n = task.n_links
    q, qd, goal = np.empty(n), np.empty(n), np.empty(2)
    _reset_kernel(lengths, fp, ip, u, q, qd, goal, np.empty((n + 1, 2)))
    return ArmState(q=q, qdot=qd, goal=goal)


def reset(task: ArmTask, episode_seed: int) -> ArmState:
    """Random initial joint angles, zero velocity and a reachable goal.

    Deterministic in ``(task, episode_seed)``.
    """
    seed = int(episode_seed)
    if seed < 0:
        raise ConfigError("episode seed must be non-negative")
    u = np.random.Generator(np.random.Philox(key=seed)).random(RESET_UNIFORMS)
    return reset_from_uniforms(task, u)


def forward_kinematics(task: ArmTask, q) -> np.ndarray:
    q = np.ascontiguousarray(q, dtype=np.float64)
    if q.shape != (task.n_links,):
        raise ConfigError(f"expected {task.n_links} joint angles")
    pts = np.empty((task.n_links + 1, 2))
    _fk_joints(np.array(task.link_lengths), q, pts)
    return pts[-1].copy()


def joint_positions(task: ArmTask, q) -> np.ndarray:
    """Base, joints and end-effector, shape ``(n + 1, 2)``."""
    q = np.ascontiguousarray(q, dtype=np.float64)
    pts = np.empty((task.n_links + 1, 2))
    _fk_joints(np.array(task.link_lengths), q, pts)
    return pts


def mass_matrix(task: ArmTask, q) -> np.ndarray:
    lengths, masses, _, _ = task.packed()
    m11, m12, m21, m22 = _mass_matrix(lengths, masses, np.ascontiguousarray(q, dtype=np.float64))
    if task.n_links == 1:
        return np.array([[m11]])
    return np.array([[m11, m12], [m21, m22]])


def kinetic_energy(task: ArmTask, q, qdot) -> float:
    qdot = np.asarray(qdot, dtype=np.float64)
    return 0.5 * float(qdot @ mass_matrix(task, q) @ qdot)


def joint_acceleration(task: ArmTask, q, qdot, tau) -> np.ndarray:
    lengths, masses, _, _ = task.packed()
    out = np.empty(task.n_links)
    _accel(lengths, masses, np.ascontiguousarray(q, dtype=np.float64),
           np.ascontiguousarray(qdot, dtype=np.float64),
           np.ascontiguousarray(tau, dtype=np.float64), out)
    return out


def step(task: ArmTask, state: ArmState, action) -> tuple[ArmState, float]:
    """One control step; returns the successor state and its reward."""
    if state.terminated:
        raise UsageError("cannot step a terminated episode; call reset first")
    action = np.ascontiguousarray(action, dtype=np.float64)
    n = task.n_links
    if action.shape != (n,):
        raise ConfigError(f"expected action of length {n}")
    lengths, masses, fp, ip = task.packed()
    nxt = state.copy()
    r, cause = _step_kernel(lengths, masses, fp, ip, nxt.q, nxt.qdot, nxt.goal, action,
                            np.empty((n + 1, 2)), np.empty(n), np.empty(n))
    nxt.steps_taken += 1
    if cause == 0 and nxt.steps_taken >= task.max_steps:
        cause = 3
    if cause:
        nxt.terminated = True
        nxt.termination_cause = TERMINATION_CAUSES[cause]
    return nxt, float(r)


def observe(task: ArmTask, state: ArmState) -> np.ndarray:
    """``[cos q, sin q, qdot / v_lim, goal / reach]``, length ``3n + 2``."""
    lengths, _, fp, _ = task.packed()
    out = np.empty(observation_dim(task))
    _observe_kernel(lengths, fp, np.ascontiguousarray(state.q, dtype=np.float64),
                    np.ascontiguousarray(state.qdot, dtype=np.float64),
                    np.ascontiguousarray(state.goal, dtype=np.float64), out)
    return out


def reward_dense(ee, goal, action, w_distance: float = 1.0, w_control: float = 1.0) -> float:
    action = np.atleast_1d(np.asarray(action, dtype=np.float64))
    return float(_dense_reward(float(ee[0]), float(ee[1]), float(goal[0]), float(goal[1]),
                               action, w_distance, w_control))


def reward_sparse(ee, goal, threshold: float = 0.05) -> float:
    if not threshold > 0:
        raise ConfigError("threshold must be > 0")
    return float(_sparse_reward(float(ee[0]), float(ee[1]), float(goal[0]), float(goal[1]), threshold))


def link_obstacle_distance(task: ArmTask, q, link_index: int) -> float:
    """Clearance between link ``link_index`` (1-based) and the obstacle, clamped at 0."""
    ob = task.obstacle
    if ob is None:
        raise UsageError("task has no obstacle")
    if not 1 <= link_index <= task.n_links:
        raise ConfigError(f"link index must be in [1, {task.n_links}]")
    pts = joint_positions(task, q)
    a, b = pts[link_index - 1], pts[link_index]
    return float(_link_distance(a[0], a[1], b[0], b[1], ob.center[0], ob.center[1],
                                ob.clearance, int(ob.points)))


def segment_obstacle_distance(a, b, obstacle: ObstacleSpec) -> float:
    return float(_link_distance(float(a[0]), float(a[1]), float(b[0]), float(b[1]),
                                obstacle.center[0], obstacle.center[1],
                                obstacle.clearance, int(obstacle.points)))


def in_collision(task: ArmTask, q) -> bool:
    return any(link_obstacle_distance(task, q, i) == 0.0 for i in range(1, task.n_links + 1))


def reward_obstacle(ee, goal, action, q, task: ArmTask) -> float:
    if task.obstacle is None:
        raise UsageError("task has no obstacle")
    lengths, _, fp, ip = task.packed()
    pts = joint_positions(task, q)
    action = np.atleast_1d(np.asarray(action, dtype=np.float64))
    r = _dense_reward(float(ee[0]), float(ee[1]), float(goal[0]), float(goal[1]),
                      action, fp[_W1], fp[_W2])
    collided, prox = _obstacle_terms(pts, fp, ip[_NPTS])
    if collided:
        r -= fp[_B1]
    return float(r - fp[_B2] * prox)
