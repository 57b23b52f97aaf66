"""Known-dynamics solver: per-type best responses for frozen populations, the
population-consistency update, fixed-point iteration over populations and
empirical contraction diagnostics."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .core import PopulationDistribution, joint_w1, policy_distance, softmax
from .envs import GameModel, as_populations
from .trace import RunTrace

logger = logging.getLogger(__name__)

TIE_TOL = 1e-9


@dataclass
class ValueTable:
    type_index: int
    values: np.ndarray
    qvalues: np.ndarray


@dataclass
class ContractionReport:
    """Contraction constants. ``d1_hat``, ``c1_hat`` and ``c2_hat`` are
    estimates over sampled populations; ``d2`` and ``d3`` follow in closed form
    from them. ``gamma_lip_hat`` is the sampled Lipschitz ratio of the full
    population map, reported for diagnosis only."""

    d1_hat: float
    d2: float
    d3: float
    c1_hat: float
    c2_hat: float
    contracts: bool
    gamma_lip_hat: float = math.nan

    @property
    def d(self) -> float:
        return self.d1_hat * self.d2 + self.d3

    def to_dict(self) -> dict:
        return {**asdict(self), "d": self.d}


@dataclass
class EquilibriumProfile:
    """Per-type policies (probability tables) and populations of a candidate
    stationary equilibrium."""

    policies: tuple
    populations: tuple
    residual: float
    iterations: int
    status: str = "converged"
    thetas: tuple | None = None
    values: tuple | None = None
    inner_capped: int = 0
    trace: RunTrace | None = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def means(self) -> list:
        return [z.mean() for z in self.populations]


def _check_kernel(kernel: np.ndarray) -> None:
    if np.any(kernel < -1e-12) or np.any(np.abs(kernel.sum(axis=-1) - 1.0) > 1e-9):
        raise ValueError("transition kernel is not stochastic")


def value_iteration(kernel, reward, gamma, tol):
    """Optimal values of a finite MDP.

    Stops once the sup-norm change falls below ``tol * (1 - gamma) / (2 gamma)``,
    which leaves a Bellman residual below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    _check_kernel(kernel)
    stop = tol * (1.0 - gamma) / (2.0 * gamma)
    v = np.zeros(kernel.shape[0])
    while True:
        q = reward + gamma * (kernel @ v)
        v_new = q.max(axis=1)
        delta = np.abs(v_new - v).max()
        v = v_new
        if delta < stop:
            break
    q = reward + gamma * (kernel @ v)
    return q.max(axis=1), q


def greedy_policy(q: np.ndarray, soften_tau: float = 0.0) -> np.ndarray:
    """Greedy table with lowest-index tie-breaking, or ``softmax(Q / tau)``."""
    if soften_tau > 0:
        return softmax(q / soften_tau, axis=1)
    ties = q >= q.max(axis=1, keepdims=True) - TIE_TOL
    pick = ties.argmax(axis=1)
    table = np.zeros_like(q)
    table[np.arange(q.shape[0]), pick] = 1.0
    return table


def best_response(model: GameModel, j: int, zs, tol: float = 1e-10, soften_tau: float = 0.0):
    """Optimal values and policy of a type-``j`` agent facing frozen populations."""
    zs = as_populations(model, zs)
    v, q = value_iteration(model.kernel(j, zs), model.rewards(j, zs), model.gamma, tol)
    return ValueTable(j, v, q), greedy_policy(q, soften_tau)


def _policy_matrix(kernel, reward, policy):
    p = np.einsum("sa,sat->st", policy, kernel)
    r = np.einsum("sa,sa->s", policy, reward)
    return p, r


def evaluate_policy(model: GameModel, j: int, policy, zs) -> ValueTable:
    """Values of a fixed policy table by a direct linear solve."""
    zs = as_populations(model, zs)
    kernel, reward = model.kernel(j, zs), model.rewards(j, zs)
    policy = np.asarray(policy, dtype=float)
    p, r = _policy_matrix(kernel, reward, policy)
    v = np.linalg.solve(np.eye(p.shape[0]) - model.gamma * p, r)
    return ValueTable(j, v, reward + model.gamma * (kernel @ v))


def policy_objective(model: GameModel, j: int, policy, zs) -> float:
    """Expected value ``E_{x ~ z_j} V(x)`` of a policy table."""
    zs = as_populations(model, zs)
    return float(zs[j].mass @ evaluate_policy(model, j, policy, zs).values)


def population_step(model: GameModel, j: int, policy, zs) -> PopulationDistribution:
    """One step of type ``j``'s population under ``policy`` and frozen ``zs``."""
    zs = as_populations(model, zs)
    kernel = model.kernel(j, zs)
    policy = np.asarray(policy, dtype=float)
    if policy.shape != kernel.shape[:2]:
        raise ValueError(f"policy table must have shape {kernel.shape[:2]}, got {policy.shape}")
    mass = np.einsum("s,sa,sat->t", zs[j].mass, policy, kernel)
    return PopulationDistribution.from_unnormalized(mass, model.grids[j])


def _parallel(n_jobs, tasks):
    if n_jobs in (None, 1):
        return [f(*args) for f, args in tasks]
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(f)(*args) for f, args in tasks)


def gamma_map(model: GameModel, zs, tol: float = 1e-10, soften_tau: float = 0.0, n_jobs=None):
    """Best responses to ``zs`` followed by one population step of every type.

    The population step uses the pre-response populations ``zs`` in both the
    kernel and the propagated mass. Returns ``(new_populations, policies)``.
    """
    zs = as_populations(model, zs)
    responses = _parallel(
        n_jobs, [(best_response, (model, j, zs, tol, soften_tau)) for j in range(model.n_types)]
    )
    policies = tuple(pi for _, pi in responses)
    new = tuple(population_step(model, j, policies[j], zs) for j in range(model.n_types))
    return new, policies


def fixed_point_trace(model: GameModel) -> RunTrace:
    return RunTrace(["outer_iter", "residual"] + [f"mean_{n}" for n in model.type_names])


def solve_fixed_point(model: GameModel, z0=None, eps: float = 1e-8, max_outer: int = 200,
                      tol: float = 1e-10, soften_tau: float = 0.0, n_jobs=None) -> EquilibriumProfile:
    """Iterate ``z <- Gamma(z)`` until ``joint_w1(z, Gamma(z)) < eps``.

    The returned profile pairs the populations ``z`` with their best responses
    and residual ``joint_w1(z, Gamma(z))``. If ``max_outer`` iterations pass
    without convergence, the iterate with the smallest residual is returned
    with ``status="cap_exhausted"``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    zs = as_populations(model, z0 if z0 is not None else model.uniform_populations())
    trace = fixed_point_trace(model)
    best = None
    for m in range(1, max_outer + 1):
        new, policies = gamma_map(model, zs, tol, soften_tau, n_jobs)
        residual = joint_w1(zs, new)
        trace.append(outer_iter=m, residual=residual,
                     **{f"mean_{n}": z.mean() for n, z in zip(model.type_names, zs)})
        logger.debug("outer %d residual %.3e", m, residual)
        if best is None or residual < best[0]:
            best = (residual, zs, policies, m)
        if residual < eps:
            return EquilibriumProfile(policies, zs, residual, m, "converged", trace=trace)
        zs = new
    residual, zs, policies, _ = best
    return EquilibriumProfile(policies, zs, residual, max_outer, "cap_exhausted", trace=trace)


def lemma1_constants(model: GameModel, zsamples, tol: float = 1e-10,
                     soften_tau: float = 0.0) -> ContractionReport:
    """Estimate the contraction constants from sampled population tuples.

    ``c1_hat`` is the largest kernel entry seen, ``c2_hat`` the largest ratio
    of a kernel-entry change to the joint W1 change, and ``d1_hat`` the largest
    ratio of best-response policy distance to joint W1 change. ``d2`` and
    ``d3`` use unit state diameters (states live on [0, 1]).
    """
    samples = [as_populations(model, zs) for zs in zsamples]
    if not samples:
        raise ValueError("degenerate sample")
    kernels = [[model.kernel(j, zs) for j in range(model.n_types)] for zs in samples]
    images = [gamma_map(model, zs, tol, soften_tau) for zs in samples]
    c1 = max(float(k.max()) for ks in kernels for k in ks)
    c2 = d1 = lip = 0.0
    pairs = 0
    for a, b in itertools.combinations(range(len(samples)), 2):
        dist = joint_w1(samples[a], samples[b])
        if dist <= 0:
            continue
        pairs += 1
        for j in range(model.n_types):
            c2 = max(c2, float(np.abs(kernels[a][j] - kernels[b][j]).max()) / dist)
            pd = policy_distance(images[a][1][j], images[b][1][j],
                                 model.grids[j], model.action_sets[j])
            d1 = max(d1, pd / dist)
        lip = max(lip, joint_w1(images[a][0], images[b][0]) / dist)
    if pairs == 0:
        raise ValueError("degenerate sample")
    diam = 1.0
    size = max(g.size for g in model.grids)
    d_min = min(a.d_min for a in model.action_sets)
    d2 = 0.0 if math.isinf(d_min) else diam * size * c1 / d_min
    d3 = diam * c2 / 2.0
    return ContractionReport(d1, d2, d3, c1, c2, bool(d1 * d2 + d3 < 1.0), lip)


def sample_populations(model: GameModel, count: int, rng) -> list:
    """Random population tuples for :func:`lemma1_constants`.

    Draws Dirichlet(1) populations and adds, for every draw, copies in which a
    single type is redrawn, so one-type perturbations are represented.
    """
    rng = np.random.default_rng(rng)
    out = []
    for _ in range(count):
        base = [rng.dirichlet(np.ones(g.size)) for g in model.grids]
        out.append(tuple(PopulationDistribution.from_unnormalized(m, g)
                         for m, g in zip(base, model.grids)))
        for j, g in enumerate(model.grids):
            alt = list(base)
            alt[j] = rng.dirichlet(np.ones(g.size))
            out.append(tuple(PopulationDistribution.from_unnormalized(m, gg)
                             for m, gg in zip(alt, model.grids)))
    return out


def states_to_indices(X, grid) -> np.ndarray:
    X = check_array(np.atleast_1d(np.asarray(X, dtype=float)), ensure_2d=False)
    if X.ndim != 1:
        raise ValueError("states must be a 1-d array of grid values")
    return np.array([grid.index(x) for x in X], dtype=np.intp)


class FixedPointMMFE(BaseEstimator):
    """Stationary equilibrium of a known game by best-response fixed-point
    iteration.

    Parameters
    ----------
    eps : float
        Stop once ``joint_w1(z, Gamma(z)) < eps``.
    max_outer : int
        Cap on population updates.
    bellman_tol : float
        Bellman-residual target of the per-type value iteration.
    soften_tau : float
        If positive, best responses are ``softmax(Q / soften_tau)`` instead of
        greedy.
    n_jobs : int or None
        Threads for the per-type best responses. Results do not depend on it.

    Attributes
    ----------
    profile_ : EquilibriumProfile
    populations_ : tuple of PopulationDistribution
    policies_ : tuple of ndarray
    trace_ : RunTrace
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, eps=1e-8, max_outer=200, bellman_tol=1e-10, soften_tau=0.0, n_jobs=None):
        self.eps = eps
        self.max_outer = max_outer
        self.bellman_tol = bellman_tol
        self.soften_tau = soften_tau
        self.n_jobs = n_jobs

    def fit(self, model: GameModel, z0=None):
        if not isinstance(model, GameModel):
            raise TypeError("FixedPointMMFE.fit expects a GameModel")
        if self.eps <= 0 or self.bellman_tol <= 0 or self.max_outer < 1:
            raise ValueError("eps, bellman_tol and max_outer must be positive")
        profile = solve_fixed_point(model, z0, self.eps, self.max_outer, self.bellman_tol,
                                    self.soften_tau, self.n_jobs)
        self.model_ = model
        self.profile_ = profile
        self.populations_ = profile.populations
        self.policies_ = profile.policies
        self.trace_ = profile.trace
        self.n_iter_ = profile.iterations
        self.converged_ = profile.converged
        return self

    def predict_proba(self, X, type_index=0):
        """Action probabilities at the given state values."""
        check_is_fitted(self, "profile_")
        idx = states_to_indices(X, self.model_.grids[type_index])
        return self.policies_[type_index][idx]

    def predict(self, X, type_index=0):
        proba = self.predict_proba(X, type_index)
        return np.asarray(self.model_.action_sets[type_index].actions)[proba.argmax(axis=1)]

    def contraction_report(self, zsamples) -> ContractionReport:
        check_is_fitted(self, "profile_")
        return lemma1_constants(self.model_, zsamples, self.bellman_tol, self.soften_tau)
