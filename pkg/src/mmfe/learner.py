"""Model-free equilibrium learning: random-horizon Q estimates, the score-function
policy-gradient inner loop and finite-population updates.

Everything here touches the game only through :class:`PopulationSimulator`,
which hands out next states and rewards. :func:`exact_gradient` is the one
exception: it is an oracle for tests and needs the full model.
"""

from __future__ import annotations

import logging
import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import (
    PolicyParams,
    PopulationDistribution,
    check_discount,
    feature_map,
    joint_w1,
    policy_table,
    score_table,
)
from .envs import GameModel, as_populations
from .exact import EquilibriumProfile, evaluate_policy, states_to_indices
from .trace import RunTrace

logger = logging.getLogger(__name__)

# substream tags for SeedSequence spawn keys
_INNER, _POPULATION = 0, 1


class PopulationSimulator:
    """Sampling-only access to a game.

    States and actions are addressed by their grid and action-set indices.
    Grids, action sets, the discount factor and the reward bound are public;
    kernels and reward tables are not.
    """

    def __init__(self, model: GameModel):
        self._model = model
        self.grids = model.grids
        self.action_sets = model.action_sets
        self.gamma = model.gamma
        self.reward_bound = model.reward_bound
        self.type_names = model.type_names
        self.features = model.features

    @property
    def n_types(self) -> int:
        return len(self.grids)

    def bind(self, zs) -> "BoundSimulator":
        """Freeze the populations; the result samples transitions cheaply."""
        return BoundSimulator(self._model, as_populations(self._model, zs))

    def sample_next(self, j: int, x, a, zs, rng):
        """Next state index and reward of type-``j`` agents at ``(x, a)``.

        ``x`` and ``a`` may be scalars or equal-length integer arrays.
        """
        return self.bind(zs).sample(j, x, a, rng)


class BoundSimulator:
    """Simulator with populations fixed, as used inside one inner loop."""

    def __init__(self, model: GameModel, zs):
        self.populations = zs
        self._cum, self._rew, self._cum_lists, self._rew_lists = [], [], [], []
        for j in range(model.n_types):
            cum = np.cumsum(model.kernel(j, zs), axis=-1)
            cum[..., -1] = np.inf
            rew = np.asarray(model.rewards(j, zs), dtype=float)
            self._cum.append(cum)
            self._rew.append(rew)
            self._cum_lists.append(cum.tolist())
            self._rew_lists.append(rew.tolist())

    def step(self, j: int, x: int, a: int, u: float):
        """Scalar transition driven by the uniform variate ``u``."""
        return bisect_right(self._cum_lists[j][x][a], u), self._rew_lists[j][x][a]

    def sample(self, j: int, x, a, rng):
        x = np.asarray(x, dtype=np.intp)
        a = np.asarray(a, dtype=np.intp)
        u = rng.random(np.shape(x))
        cum = self._cum[j][x, a]
        nxt = (u[..., None] < cum).argmax(axis=-1)
        return nxt, self._rew[j][x, a]


class _Uniforms:
    """Buffered uniform variates from one generator (cheap scalar draws)."""

    __slots__ = ("_rng", "_buf", "_i", "_size")

    def __init__(self, rng, size=4096):
        self._rng = rng
        self._size = size
        self._buf = []
        self._i = 0

    def __call__(self) -> float:
        if self._i >= len(self._buf):
            self._buf = self._rng.random(self._size).tolist()
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return u


def _geometric(u: float, q: float) -> int:
    """Inverse-CDF draw of ``T >= 0`` with ``P(T >= t) = q**t``."""
    if q <= 0.0:
        return 0
    return int(math.floor(math.log1p(-u) / math.log(q)))


def _draw_action(cum_probs, u: float) -> int:
    return bisect_right(cum_probs, u)


def _cum_policy(probs: np.ndarray) -> list:
    cum = np.cumsum(probs, axis=1)
    cum[:, -1] = np.inf
    return cum.tolist()


@dataclass(frozen=True)
class StepSchedule:
    """Robbins-Monro steps ``alpha_k = scale * k**(-a_exponent)``."""

    a_exponent: float = 0.7
    scale: float = 1.0

    def __post_init__(self):
        if not 0.5 < self.a_exponent < 1.0:
            raise ValueError("a_exponent must lie in (1/2, 1)")
        if not self.scale > 0:
            raise ValueError("step scale must be positive")

    def __call__(self, k: int) -> float:
        if k < 1:
            raise ValueError("step index starts at 1")
        return self.scale * k ** (-self.a_exponent)


@dataclass(frozen=True)
class LearnerConfig:
    """Settings of the random-horizon policy-gradient learner.

    ``n_agents`` is one count per type (an int applies to all types).
    ``gamma`` overrides the simulator's discount when set. ``features`` names
    a catalog feature map per type. ``warm_start`` carries parameters across
    outer iterations and ``damping`` mixes the old population into the new one;
    both are off by default.
    """

    seed: int = 0
    n_agents: tuple | int = 100
    inner_tol: float = 1e-3
    inner_patience: int = 50
    max_inner: int = 5000
    outer_tol: float = 0.02
    outer_patience: int = 2
    max_outer: int = 50
    gamma: float | None = None
    schedule: StepSchedule = field(default_factory=StepSchedule)
    features: tuple | None = None
    warm_start: bool = False
    damping: float = 0.0
    trace_every: int = 100
    n_jobs: int | None = None

    def __post_init__(self):
        counts = (self.n_agents,) if isinstance(self.n_agents, (int, np.integer)) else tuple(self.n_agents)
        if any(int(c) != c or c < 1 for c in counts):
            raise ValueError("n_agents must be positive integers")
        for key in ("inner_tol", "outer_tol"):
            if not getattr(self, key) > 0:
                raise ValueError(f"{key} must be positive")
        for key in ("inner_patience", "outer_patience", "max_inner", "max_outer", "trace_every"):
            if int(getattr(self, key)) < 1:
                raise ValueError(f"{key} must be a positive integer")
        if self.gamma is not None:
            check_discount(self.gamma)
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")

    def agents(self, n_types: int) -> tuple:
        if isinstance(self.n_agents, (int, np.integer)):
            return (int(self.n_agents),) * n_types
        if len(self.n_agents) != n_types:
            raise ValueError(f"n_agents needs {n_types} entries")
        return tuple(int(c) for c in self.n_agents)


def _resolve_fmap(sim, j, fmap):
    if fmap is None:
        return feature_map(sim.features[j], sim.grids[j], sim.action_sets[j])
    if isinstance(fmap, str):
        return feature_map(fmap, sim.grids[j], sim.action_sets[j])
    return fmap


def _theta(theta) -> np.ndarray:
    return theta.theta if isinstance(theta, PolicyParams) else np.asarray(theta, dtype=float)


def _bound(sim, zs) -> BoundSimulator:
    return zs if isinstance(zs, BoundSimulator) else sim.bind(zs)


def _q_rollout(bound, j, x, a, pcum, root_gamma, uni) -> float:
    horizon = _geometric(uni(), root_gamma)
    q, w = 0.0, 1.0
    for _ in range(horizon):
        x, r = bound.step(j, x, a, uni())
        q += w * r
        w *= root_gamma
        a = _draw_action(pcum[x], uni())
    _, r = bound.step(j, x, a, uni())
    return q + w * r


def est_q(sim: PopulationSimulator, j: int, x0: int, a0: int, theta, zs, rng,
          fmap=None, gamma=None) -> float:
    """Unbiased random-horizon estimate of ``Q(x0, a0)`` under ``pi_theta``.

    Draws ``T`` with ``P(T = t) = (1 - sqrt(g)) g**(t/2)``, follows the policy
    for ``T`` steps and returns ``sum_{t<=T} g**(t/2) r_t``.
    """
    fmap = _resolve_fmap(sim, j, fmap)
    gamma = sim.gamma if gamma is None else check_discount(gamma)
    probs = policy_table(theta, fmap, sim.grids[j], sim.action_sets[j])
    uni = rng if isinstance(rng, _Uniforms) else _Uniforms(rng, 64)
    return _q_rollout(_bound(sim, zs), j, int(x0), int(a0), _cum_policy(probs),
                      math.sqrt(gamma), uni)


def est_q_batch(sim: PopulationSimulator, j: int, x0, a0, theta, zs, rng, size: int,
                fmap=None, gamma=None) -> np.ndarray:
    """``size`` independent EST-Q draws, simulated in lockstep."""
    fmap = _resolve_fmap(sim, j, fmap)
    gamma = sim.gamma if gamma is None else check_discount(gamma)
    probs = policy_table(theta, fmap, sim.grids[j], sim.action_sets[j])
    return _q_batch(_bound(sim, zs), j, np.full(size, x0, dtype=np.intp),
                    np.full(size, a0, dtype=np.intp), probs, gamma, rng)


def _q_batch(bound, j, x, a, probs, gamma, rng) -> np.ndarray:
    root = math.sqrt(gamma)
    horizon = rng.geometric(1.0 - root, size=x.shape[0]) - 1
    cum_p = np.cumsum(probs, axis=1)
    cum_p[:, -1] = np.inf
    q = np.zeros(x.shape[0])
    w = np.ones(x.shape[0])
    x, a = x.copy(), a.copy()
    live = np.arange(x.shape[0])
    t = 0
    while live.size:
        # agents whose horizon is reached collect their last reward and stop
        done = horizon[live] == t
        nxt, r = bound.sample(j, x[live], a[live], rng)
        q[live] += w[live] * r
        live_next = live[~done]
        nxt = nxt[~done]
        if live_next.size:
            u = rng.random(live_next.size)
            x[live_next] = nxt
            a[live_next] = (u[:, None] < cum_p[nxt]).argmax(axis=1)
            w[live_next] *= root
        live = live_next
        t += 1
    return q


def _pg_sample(bound, j, pcum, z_cum, gamma, uni):
    """One trajectory of the gradient estimator: returns ``(x_T, a_T, Q_hat)``."""
    x = bisect_right(z_cum, uni())
    a = _draw_action(pcum[x], uni())
    for _ in range(_geometric(uni(), gamma)):
        x, _r = bound.step(j, x, a, uni())
        a = _draw_action(pcum[x], uni())
    return x, a, _q_rollout(bound, j, x, a, pcum, math.sqrt(gamma), uni)


def _z_cum(z: PopulationDistribution) -> list:
    cum = np.cumsum(z.mass)
    cum[-1] = np.inf
    return cum.tolist()


def pg_step(sim: PopulationSimulator, j: int, theta_k, zs, k: int, config: LearnerConfig,
            rng, fmap=None) -> PolicyParams:
    """One stochastic policy-gradient step

    ``theta + alpha_k * Q_hat(x_T, a_T) * grad log pi(a_T | x_T) / (1 - gamma)``

    where ``x_0 ~ z_j``, ``T ~ Geometric(1 - gamma)`` on ``{0, 1, ...}`` and
    ``Q_hat`` comes from :func:`est_q`.
    """
    fmap = _resolve_fmap(sim, j, fmap)
    gamma = sim.gamma if config.gamma is None else config.gamma
    bound = _bound(sim, zs)
    theta = _theta(theta_k)
    feats = fmap.table(sim.grids[j], sim.action_sets[j])
    probs = policy_table(theta, fmap, sim.grids[j], sim.action_sets[j], feats)
    uni = rng if isinstance(rng, _Uniforms) else _Uniforms(rng, 64)
    x, a, q = _pg_sample(bound, j, _cum_policy(probs), _z_cum(bound.populations[j]), gamma, uni)
    score = feats[x, a] - probs[x] @ feats[x]
    return PolicyParams(theta + config.schedule(k) * q * score / (1.0 - gamma), j)


def gradient_estimates(sim: PopulationSimulator, j: int, theta, zs, rng, size: int,
                       fmap=None, gamma=None) -> np.ndarray:
    """``size`` independent single-trajectory gradient estimates, shape ``(size, dim)``."""
    fmap = _resolve_fmap(sim, j, fmap)
    gamma = sim.gamma if gamma is None else check_discount(gamma)
    bound = _bound(sim, zs)
    feats = fmap.table(sim.grids[j], sim.action_sets[j])
    probs = policy_table(theta, fmap, sim.grids[j], sim.action_sets[j], feats)
    cum_p = np.cumsum(probs, axis=1)
    cum_p[:, -1] = np.inf
    z = bound.populations[j].mass
    x = rng.choice(z.shape[0], size=size, p=z)
    a = (rng.random(size)[:, None] < cum_p[x]).argmax(axis=1)
    horizon = rng.geometric(1.0 - gamma, size=size) - 1
    for t in range(int(horizon.max()) if size else 0):
        live = np.flatnonzero(horizon > t)
        nxt, _ = bound.sample(j, x[live], a[live], rng)
        x[live] = nxt
        a[live] = (rng.random(live.size)[:, None] < cum_p[nxt]).argmax(axis=1)
    q = _q_batch(bound, j, x, a, probs, gamma, rng)
    scores = score_table(probs, feats)[x, a]
    return q[:, None] * scores / (1.0 - gamma)


def exact_gradient(model, j: int, theta, zs, fmap=None, horizon_truncation=None) -> np.ndarray:
    """Policy gradient of ``J(theta) = E_{x~z_j} V(x)`` from the full model.

    The discounted occupancy is propagated for ``H`` steps with
    ``gamma**H * R_max / (1 - gamma) < 1e-8`` unless ``horizon_truncation``
    is given; ``Q`` comes from exact policy evaluation.
    """
    if not isinstance(model, GameModel):
        raise ValueError("oracle requires full model")
    zs = as_populations(model, zs)
    if fmap is None or isinstance(fmap, str):
        fmap = feature_map(fmap or model.features[j], model.grids[j], model.action_sets[j])
    gamma = model.gamma
    feats = fmap.table(model.grids[j], model.action_sets[j])
    probs = policy_table(theta, fmap, model.grids[j], model.action_sets[j], feats)
    q = evaluate_policy(model, j, probs, zs).qvalues
    if horizon_truncation is None:
        if model.reward_bound == 0:
            horizon_truncation = 0
        else:
            target = 1e-8 * (1.0 - gamma) / model.reward_bound
            horizon_truncation = max(0, math.ceil(math.log(target) / math.log(gamma)))
    p_pi = np.einsum("sa,sat->st", probs, model.kernel(j, zs))
    rho = zs[j].mass.copy()
    occupancy = np.zeros_like(rho)
    weight = 1.0
    for _ in range(horizon_truncation + 1):
        occupancy += weight * rho
        rho = rho @ p_pi
        weight *= gamma
    scores = score_table(probs, feats)
    return np.einsum("s,sa,sad,sa->d", occupancy, probs, scores, q)


def policy_value(model: GameModel, j: int, theta, zs, fmap=None) -> float:
    """``J(theta) = E_{x ~ z_j} V(x)`` by exact policy evaluation."""
    zs = as_populations(model, zs)
    if fmap is None or isinstance(fmap, str):
        fmap = feature_map(fmap or model.features[j], model.grids[j], model.action_sets[j])
    probs = policy_table(theta, fmap, model.grids[j], model.action_sets[j])
    return float(zs[j].mass @ evaluate_policy(model, j, probs, zs).values)


def _update_one(bound, j, probs, z, n, rng) -> PopulationDistribution:
    x = rng.choice(z.mass.shape[0], size=n, p=z.mass)
    cum_p = np.cumsum(probs, axis=1)
    cum_p[:, -1] = np.inf
    a = (rng.random(n)[:, None] < cum_p[x]).argmax(axis=1)
    nxt, _ = bound.sample(j, x, a, rng)
    return PopulationDistribution.from_indices(z.grid, nxt)


def empirical_population_update(sim: PopulationSimulator, policies, zs, n_agents, rng,
                                fmaps=None) -> tuple:
    """Move ``N_j`` agents drawn from each ``z_j`` one step and return the
    empirical distributions of their next states.

    ``policies`` holds one :class:`PolicyParams` (or probability table) per
    type; ``rng`` is split into one child stream per type.
    """
    bound = _bound(sim, zs)
    counts = (n_agents,) * sim.n_types if np.isscalar(n_agents) else tuple(n_agents)
    streams = rng.spawn(sim.n_types)
    out = []
    for j in range(sim.n_types):
        probs = _policy_probs(sim, j, policies[j], None if fmaps is None else fmaps[j])
        out.append(_update_one(bound, j, probs, bound.populations[j], int(counts[j]), streams[j]))
    return tuple(out)


def _policy_probs(sim, j, policy, fmap):
    if isinstance(policy, PolicyParams):
        fmap = _resolve_fmap(sim, j, fmap)
        return policy_table(policy, fmap, sim.grids[j], sim.action_sets[j])
    return np.asarray(policy, dtype=float)


def _stream(seed, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def rhpg_trace(sim, dims) -> RunTrace:
    cols = ["m", "k", "type"] + [f"theta_{i}" for i in range(max(dims))] + ["q_hat", "residual"]
    cols += [f"mean_{n}" for n in sim.type_names]
    return RunTrace(cols)


def _inner_loop(bound, j, fmap, feats, grid, actions, theta0, config, gamma, rng):
    """Policy-gradient iterations for one type with populations frozen.

    Returns ``(theta, k, capped, records)``; ``records`` are ``(k, theta, q)``
    snapshots every ``trace_every`` steps plus the final step.
    """
    uni = _Uniforms(rng)
    z_cum = _z_cum(bound.populations[j])
    theta = theta0.copy()
    calm, records, q = 0, [], 0.0
    scale = 1.0 / (1.0 - gamma)
    k = 0
    for k in range(1, config.max_inner + 1):
        probs = policy_table(theta, fmap, grid, actions, feats)
        x, a, q = _pg_sample(bound, j, _cum_policy(probs), z_cum, gamma, uni)
        step = config.schedule(k) * q * scale * (feats[x, a] - probs[x] @ feats[x])
        theta = theta + step
        if not np.all(np.isfinite(theta)):
            raise FloatingPointError(f"type {j}: policy parameters diverged at step {k}")
        calm = calm + 1 if np.linalg.norm(step) < config.inner_tol else 0
        if k % config.trace_every == 0:
            records.append((k, theta.copy(), q))
        if calm >= config.inner_patience:
            break
    else:
        if records and records[-1][0] == k:
            records.pop()
        records.append((k, theta.copy(), q))
        return theta, k, True, records
    if not records or records[-1][0] != k:
        records.append((k, theta.copy(), q))
    return theta, k, False, records


def rhpg_mmfe(sim, config: LearnerConfig = LearnerConfig()):
    """Random-horizon policy-gradient search for a stationary equilibrium.

    Each outer iteration resets the parameters to zero (unless
    ``warm_start``), runs the inner policy-gradient loop of every type against
    the frozen populations, then moves ``N_j`` sampled agents per type one
    step to form the next populations. The run stops once the joint W1 change
    of the populations stays below ``outer_tol`` for ``outer_patience``
    consecutive outer iterations.

    Returns ``(profile, trace)``.
    """
    if isinstance(sim, GameModel):
        sim = PopulationSimulator(sim)
    n_types = sim.n_types
    gamma = sim.gamma if config.gamma is None else config.gamma
    counts = config.agents(n_types)
    names = config.features or sim.features
    fmaps = [_resolve_fmap(sim, j, names[j]) for j in range(n_types)]
    feats = [f.table(sim.grids[j], sim.action_sets[j]) for j, f in enumerate(fmaps)]
    dims = [f.dim for f in fmaps]
    trace = rhpg_trace(sim, dims)
    trace.metadata.update(seed=config.seed)

    def row(m, k, j, theta, q, residual, zs):
        padded = {f"theta_{i}": float(theta[i]) for i in range(len(theta))}
        trace.append(m=m, k=k, type=j, q_hat=q, residual=residual, **padded,
                     **{f"mean_{n}": z.mean() for n, z in zip(sim.type_names, zs)})

    zs = tuple(PopulationDistribution.uniform(g) for g in sim.grids)
    thetas = [np.zeros(d) for d in dims]
    calm, residual, status, capped = 0, math.nan, "cap_exhausted", 0
    m = 0
    for m in range(config.max_outer):
        bound = sim.bind(zs)
        starts = thetas if config.warm_start else [np.zeros(d) for d in dims]
        tasks = [
            (_inner_loop, (bound, j, fmaps[j], feats[j], sim.grids[j], sim.action_sets[j],
                           starts[j], config, gamma, _stream(config.seed, m, j, _INNER)))
            for j in range(n_types)
        ]
        if config.n_jobs in (None, 1):
            results = [f(*args) for f, args in tasks]
        else:
            results = Parallel(n_jobs=config.n_jobs, prefer="threads")(
                delayed(f)(*args) for f, args in tasks)
        last_q = []
        for j, (theta, k, was_capped, records) in enumerate(results):
            thetas[j] = theta
            capped += was_capped
            for kk, th, q in records:
                row(m, kk, j, th, q, None, zs)
            last_q.append((k, records[-1][2]))
        new = []
        for j in range(n_types):
            probs = policy_table(thetas[j], fmaps[j], sim.grids[j], sim.action_sets[j], feats[j])
            z_new = _update_one(bound, j, probs, zs[j], counts[j],
                                _stream(config.seed, m, j, _POPULATION))
            if config.damping:
                z_new = PopulationDistribution.from_unnormalized(
                    (1 - config.damping) * z_new.mass + config.damping * zs[j].mass, zs[j].grid)
            new.append(z_new)
        new = tuple(new)
        residual = joint_w1(new, zs)
        zs = new
        for j in range(n_types):
            row(m, last_q[j][0], j, thetas[j], last_q[j][1], residual, zs)
        logger.info("outer %d: residual %.4f, means %s", m, residual,
                    [round(z.mean(), 4) for z in zs])
        calm = calm + 1 if residual < config.outer_tol else 0
        if calm >= config.outer_patience:
            status = "converged"
            break
    params = tuple(PolicyParams(t, j) for j, t in enumerate(thetas))
    tables = tuple(policy_table(p, fmaps[j], sim.grids[j], sim.action_sets[j], feats[j])
                   for j, p in enumerate(params))
    profile = EquilibriumProfile(tables, zs, residual, m + 1, status, thetas=params,
                                 inner_capped=capped, trace=trace)
    return profile, trace


class RHPGMMFE(BaseEstimator):
    """Model-free stationary equilibrium via random-horizon policy gradient.

    Parameters mirror :class:`LearnerConfig`; ``step_scale`` and
    ``a_exponent`` define the step schedule and ``random_state`` is the seed.

    Attributes
    ----------
    profile_ : EquilibriumProfile
    thetas_ : tuple of PolicyParams
    populations_ : tuple of PopulationDistribution
    trace_ : RunTrace
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, n_agents=100, a_exponent=0.7, step_scale=1.0, inner_tol=1e-3,
                 inner_patience=50, max_inner=5000, outer_tol=0.02, outer_patience=2,
                 max_outer=50, features=None, warm_start=False, damping=0.0,
                 trace_every=100, random_state=0, n_jobs=None):
        self.n_agents = n_agents
        self.a_exponent = a_exponent
        self.step_scale = step_scale
        self.inner_tol = inner_tol
        self.inner_patience = inner_patience
        self.max_inner = max_inner
        self.outer_tol = outer_tol
        self.outer_patience = outer_patience
        self.max_outer = max_outer
        self.features = features
        self.warm_start = warm_start
        self.damping = damping
        self.trace_every = trace_every
        self.random_state = random_state
        self.n_jobs = n_jobs

    def to_config(self) -> LearnerConfig:
        return LearnerConfig(
            seed=self.random_state, n_agents=self.n_agents, inner_tol=self.inner_tol,
            inner_patience=self.inner_patience, max_inner=self.max_inner,
            outer_tol=self.outer_tol, outer_patience=self.outer_patience,
            max_outer=self.max_outer, schedule=StepSchedule(self.a_exponent, self.step_scale),
            features=None if self.features is None else tuple(self.features),
            warm_start=self.warm_start, damping=self.damping, trace_every=self.trace_every,
            n_jobs=self.n_jobs,
        )

    def fit(self, env):
        """Learn from a :class:`GameModel` or a :class:`PopulationSimulator`."""
        sim = env if isinstance(env, PopulationSimulator) else PopulationSimulator(env)
        profile, trace = rhpg_mmfe(sim, self.to_config())
        self.simulator_ = sim
        self.profile_ = profile
        self.thetas_ = profile.thetas
        self.populations_ = profile.populations
        self.trace_ = trace
        self.n_iter_ = profile.iterations
        self.converged_ = profile.converged
        return self

    def predict_proba(self, X, type_index=0):
        check_is_fitted(self, "profile_")
        idx = states_to_indices(X, self.simulator_.grids[type_index])
        return self.profile_.policies[type_index][idx]

    def predict(self, X, type_index=0):
        proba = self.predict_proba(X, type_index)
        return np.asarray(self.simulator_.action_sets[type_index].actions)[proba.argmax(axis=1)]


__all__ = [
    "BoundSimulator", "LearnerConfig", "PopulationSimulator", "RHPGMMFE", "StepSchedule",
    "empirical_population_update", "est_q", "est_q_batch", "exact_gradient",
    "gradient_estimates", "pg_step", "policy_value", "rhpg_mmfe",
]
