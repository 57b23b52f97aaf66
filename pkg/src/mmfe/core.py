"""Shared types: state grids, population distributions, Boltzmann policies and
Wasserstein metrics on the line."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SIMPLEX_TOL = 1e-12
_GRID_TOL = 1e-9


def check_discount(gamma) -> float:
    """Validate a discount factor and return it as a float."""
    gamma = float(gamma)
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"discount factor must lie in (0, 1), got {gamma}")
    return gamma


@dataclass(frozen=True)
class StateGrid:
    """Uniform grid ``{0, 1/n, ..., 1}`` on the unit interval."""

    n: int

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise ValueError(f"grid size must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def size(self) -> int:
        return self.n + 1

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    def index(self, x) -> int:
        """Grid index of state value ``x``; raises if ``x`` is off the grid."""
        x = float(x)
        i = int(round(x * self.n))
        if not 0 <= i <= self.n or abs(x - i / self.n) > _GRID_TOL:
            raise ValueError(f"state {x} is not on the grid with n={self.n}")
        return i


class PopulationDistribution:
    """Probability vector over the states of a :class:`StateGrid`.

    The mass vector is copied and made read-only, so instances can be shared
    freely between workers.
    """

    __slots__ = ("mass", "grid")

    def __init__(self, mass, grid: StateGrid):
        mass = np.array(mass, dtype=float)
        if mass.ndim != 1 or mass.shape[0] != grid.size:
            raise ValueError(
                f"population needs {grid.size} entries for n={grid.n}, got shape {mass.shape}"
            )
        if not np.all(np.isfinite(mass)) or mass.min() < 0.0:
            raise ValueError("population entries must be finite and non-negative")
        if abs(mass.sum() - 1.0) > SIMPLEX_TOL * grid.size:
            raise ValueError(f"population must sum to 1, got {mass.sum()!r}")
        mass.setflags(write=False)
        self.mass = mass
        self.grid = grid

    @classmethod
    def uniform(cls, grid: StateGrid) -> "PopulationDistribution":
        return cls(np.full(grid.size, 1.0 / grid.size), grid)

    @classmethod
    def point_mass(cls, grid: StateGrid, x) -> "PopulationDistribution":
        mass = np.zeros(grid.size)
        mass[grid.index(x)] = 1.0
        return cls(mass, grid)

    @classmethod
    def from_indices(cls, grid: StateGrid, indices) -> "PopulationDistribution":
        """Empirical distribution of a sample of state indices."""
        indices = np.asarray(indices, dtype=np.intp)
        if indices.size == 0:
            raise ValueError("cannot build an empirical distribution from no samples")
        counts = np.bincount(indices, minlength=grid.size)
        return cls(counts / indices.size, grid)

    @classmethod
    def from_unnormalized(cls, mass, grid: StateGrid) -> "PopulationDistribution":
        """Clip round-off negatives and renormalise before validating."""
        mass = np.clip(np.asarray(mass, dtype=float), 0.0, None)
        return cls(mass / mass.sum(), grid)

    def mean(self) -> float:
        return float(self.mass @ self.grid.points)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.mass)

    def __repr__(self):
        return f"PopulationDistribution({np.array2string(self.mass, precision=4)}, n={self.grid.n})"


@dataclass(frozen=True)
class ActionSet:
    """Ordered, distinct, integer-coded actions."""

    actions: tuple

    def __post_init__(self):
        acts = tuple(int(a) for a in self.actions)
        if not acts:
            raise ValueError("action set must be non-empty")
        if len(set(acts)) != len(acts):
            raise ValueError(f"actions must be distinct, got {acts}")
        object.__setattr__(self, "actions", acts)

    def __len__(self):
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.actions, dtype=float)

    @property
    def d_min(self) -> float:
        """Smallest gap between two distinct actions (``inf`` for one action)."""
        if len(self.actions) == 1:
            return math.inf
        v = np.sort(self.values)
        return float(np.diff(v).min())

    def index(self, a) -> int:
        try:
            return self.actions.index(int(a))
        except ValueError:
            raise ValueError(f"action {a!r} not in action set {self.actions}") from None


@dataclass(frozen=True)
class PolicyParams:
    """Feature weights of a Boltzmann policy for agent type ``type_index``."""

    theta: np.ndarray
    type_index: int = 0

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).reshape(-1)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def dim(self) -> int:
        return self.theta.shape[0]

    @classmethod
    def zeros(cls, dim: int, type_index: int = 0) -> "PolicyParams":
        return cls(np.zeros(dim), type_index)


@dataclass(frozen=True)
class FeatureMap:
    """Named list of features ``f_i(x, a)`` defining ``h = sum_i theta_i f_i``.

    ``table`` precomputes all features on a grid so policy tables can be built
    with one tensor contraction.
    """

    name: str
    features: tuple
    labels: tuple = field(default=())

    @property
    def dim(self) -> int:
        return len(self.features)

    def evaluate(self, x, a) -> np.ndarray:
        return np.array([f(x, a) for f in self.features], dtype=float)

    def table(self, grid: StateGrid, actions: ActionSet) -> np.ndarray:
        """Feature tensor of shape ``(n_states, n_actions, dim)``."""
        out = np.empty((grid.size, len(actions), self.dim))
        for i, x in enumerate(grid.points):
            for k, a in enumerate(actions):
                out[i, k] = self.evaluate(x, a)
        if not np.all(np.isfinite(out)):
            raise ValueError(f"feature map {self.name!r} is not bounded on the grid")
        return out


def _cyber2() -> FeatureMap:
    return FeatureMap(
        "cyber2",
        (lambda x, a: x * (a == 1), lambda x, a: (1.0 - x) * (a == 1)),
        ("x*[a=1]", "(1-x)*[a=1]"),
    )


def _bias(actions: ActionSet) -> FeatureMap:
    alt = actions.actions[1:]
    feats = tuple((lambda b: (lambda x, a: float(a == b)))(b) for b in alt)
    return FeatureMap("bias", feats, tuple(f"[a={b}]" for b in alt))


def _tabular(grid: StateGrid, actions: ActionSet) -> FeatureMap:
    # one logit per (state, non-reference action); the first action is the reference
    feats, labels = [], []
    for i in range(grid.size):
        for b in actions.actions[1:]:
            feats.append((lambda i, b: (lambda x, a: float(a == b and grid.index(x) == i)))(i, b))
            labels.append(f"[x={i}/{grid.n},a={b}]")
    return FeatureMap("tabular", tuple(feats), tuple(labels))


FEATURE_CATALOG = {
    "cyber2": "x*[a=1] and (1-x)*[a=1]; P(a=0|x) = 1/(1+exp(t1*x + t2*(1-x)))",
    "bias": "one indicator per non-reference action, shared by all states",
    "tabular": "one indicator per (state, non-reference action)",
}


def feature_map(name: str, grid: StateGrid | None = None,
                actions: ActionSet | None = None) -> FeatureMap:
    """Look up a feature map in the catalog."""
    if name == "cyber2":
        return _cyber2()
    if name == "bias":
        if actions is None:
            raise ValueError("the 'bias' feature map needs an action set")
        return _bias(actions)
    if name == "tabular":
        if grid is None or actions is None:
            raise ValueError("the 'tabular' feature map needs a grid and an action set")
        return _tabular(grid, actions)
    raise ValueError(f"unknown feature map {name!r}; choose from {sorted(FEATURE_CATALOG)}")


def _check_theta(theta, fmap: FeatureMap) -> np.ndarray:
    th = theta.theta if isinstance(theta, PolicyParams) else np.asarray(theta, dtype=float)
    if th.shape != (fmap.dim,) or not np.all(np.isfinite(th)):
        raise ValueError("invalid policy parameters")
    return th


def softmax(h, axis=-1):
    h = np.asarray(h, dtype=float)
    e = np.exp(h - h.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def boltzmann_probs(theta, fmap: FeatureMap, x, actions: ActionSet) -> np.ndarray:
    """Action probabilities ``softmax_a(theta . f(x, a))`` at state ``x``."""
    th = _check_theta(theta, fmap)
    h = np.array([fmap.evaluate(x, a) @ th for a in actions])
    return softmax(h)


def grad_log_policy(theta, fmap: FeatureMap, x, a, actions: ActionSet) -> np.ndarray:
    """Score function ``f(x, a) - E_{b ~ pi}[f(x, b)]`` of the Boltzmann policy."""
    th = _check_theta(theta, fmap)
    actions.index(a)
    feats = np.array([fmap.evaluate(x, b) for b in actions])
    probs = softmax(feats @ th)
    return fmap.evaluate(x, a) - probs @ feats


def policy_table(theta, fmap: FeatureMap, grid: StateGrid, actions: ActionSet,
                 features: np.ndarray | None = None) -> np.ndarray:
    """Boltzmann probabilities on every grid state, shape ``(n_states, n_actions)``."""
    th = _check_theta(theta, fmap)
    if features is None:
        features = fmap.table(grid, actions)
    return softmax(features @ th, axis=1)


def score_table(probs: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Score function for every (state, action): shape ``(S, A, dim)``."""
    mean_f = np.einsum("sa,sad->sd", probs, features)
    return features - mean_f[:, None, :]


def _same_grid(p: PopulationDistribution, q: PopulationDistribution):
    if p.grid.n != q.grid.n:
        raise ValueError(f"grid mismatch: n={p.grid.n} vs n={q.grid.n}")


def w1_distance(p: PopulationDistribution, q: PopulationDistribution) -> float:
    """Wasserstein-1 distance on the grid via the CDF formula."""
    _same_grid(p, q)
    return float(np.abs(np.cumsum(p.mass - q.mass)[:-1]).sum() / p.grid.n)


def joint_w1(zs: Sequence[PopulationDistribution], zs_other: Sequence[PopulationDistribution]) -> float:
    """Sum of per-type W1 distances."""
    if len(zs) != len(zs_other):
        raise ValueError(f"type count mismatch: {len(zs)} vs {len(zs_other)}")
    return float(sum(w1_distance(p, q) for p, q in zip(zs, zs_other)))


def action_w1(p: np.ndarray, q: np.ndarray, actions: ActionSet) -> np.ndarray:
    """W1 between action distributions (last axis) under ``|a - a'|``."""
    order = np.argsort(actions.values)
    gaps = np.diff(actions.values[order])
    diff = np.cumsum(np.take(p, order, axis=-1) - np.take(q, order, axis=-1), axis=-1)[..., :-1]
    return np.abs(diff) @ gaps if gaps.size else np.zeros(np.shape(p)[:-1])


def _as_table(pi, grid: StateGrid, actions: ActionSet) -> np.ndarray:
    if isinstance(pi, tuple) and len(pi) == 2 and isinstance(pi[1], FeatureMap):
        return policy_table(pi[0], pi[1], grid, actions)
    table = np.asarray(pi, dtype=float)
    if table.shape != (grid.size, len(actions)):
        raise ValueError(
            f"policy table must have shape {(grid.size, len(actions))}, got {table.shape}"
        )
    if np.any(table < -SIMPLEX_TOL) or np.any(np.abs(table.sum(axis=1) - 1) > 1e-9):
        raise ValueError("policy table rows must be probability vectors")
    return table


def policy_distance(pi, pi_other, grid: StateGrid, actions: ActionSet) -> float:
    """``sup_x W1(pi(.|x), pi'(.|x))``.

    Each policy is either a ``(theta, feature_map)`` pair or a probability
    table of shape ``(n_states, n_actions)``.
    """
    a = _as_table(pi, grid, actions)
    b = _as_table(pi_other, grid, actions)
    return float(np.max(action_w1(a, b, actions)))


__all__ = [
    "ActionSet", "FeatureMap", "FEATURE_CATALOG", "PolicyParams", "PopulationDistribution",
    "StateGrid", "action_w1", "boltzmann_probs", "check_discount", "feature_map",
    "grad_log_policy", "joint_w1", "policy_distance", "policy_table", "score_table",
    "softmax", "w1_distance",
]
