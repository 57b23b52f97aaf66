"""Finite multi-type game models: the defender/attacker cyber model, small
hand-checkable tabular games and the environment registry."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .core import (
    ActionSet,
    FeatureMap,
    PopulationDistribution,
    StateGrid,
    check_discount,
    feature_map,
)

ROW_TOL = 1e-12


class GameModel:
    """Base class for a game with ``J >= 2`` agent types on finite grids.

    Subclasses implement :meth:`kernel` and :meth:`rewards`, which return the
    full transition tensor ``(S, A, S)`` and reward table ``(S, A)`` of one type
    for frozen populations. Point evaluations (:meth:`transition`,
    :meth:`reward`) are derived from them.
    """

    name = "game"

    def __init__(self, grids, action_sets, gamma, reward_bound, type_names=None,
                 features=None):
        if len(grids) != len(action_sets):
            raise ValueError("one grid and one action set per type")
        if len(grids) < 2:
            raise ValueError("a game model needs at least two agent types")
        self.grids = tuple(grids)
        self.action_sets = tuple(action_sets)
        self.gamma = check_discount(gamma)
        if not reward_bound >= 0:
            raise ValueError("reward bound must be non-negative")
        self.reward_bound = float(reward_bound)
        self.type_names = tuple(type_names or (f"type{j}" for j in range(len(grids))))
        self.features = tuple(features or ("tabular",) * len(grids))

    @property
    def n_types(self) -> int:
        return len(self.grids)

    def kernel(self, j: int, zs) -> np.ndarray:
        raise NotImplementedError

    def rewards(self, j: int, zs) -> np.ndarray:
        raise NotImplementedError

    def transition(self, j: int, x, a, zs) -> np.ndarray:
        """Next-state distribution of a type-``j`` agent at state value ``x``."""
        zs = as_populations(self, zs)
        return self.kernel(j, zs)[self.grids[j].index(x), self.action_sets[j].index(a)].copy()

    def reward(self, j: int, x, a, zs) -> float:
        zs = as_populations(self, zs)
        return float(self.rewards(j, zs)[self.grids[j].index(x), self.action_sets[j].index(a)])

    def feature_map(self, j: int) -> FeatureMap:
        return feature_map(self.features[j], self.grids[j], self.action_sets[j])

    def uniform_populations(self):
        return tuple(PopulationDistribution.uniform(g) for g in self.grids)

    def describe(self) -> dict:
        return {"name": self.name, "n_types": self.n_types, "gamma": self.gamma}


def as_populations(model: GameModel, zs) -> tuple:
    """Coerce ``zs`` to one :class:`PopulationDistribution` per type."""
    if zs is None:
        raise ValueError("populations are required")
    zs = list(zs)
    if len(zs) != model.n_types:
        raise ValueError(f"expected {model.n_types} populations, got {len(zs)}")
    out = []
    for z, grid in zip(zs, model.grids):
        if isinstance(z, PopulationDistribution):
            if z.grid.n != grid.n:
                raise ValueError(f"grid mismatch: n={z.grid.n} vs n={grid.n}")
            out.append(z)
        else:
            out.append(PopulationDistribution(z, grid))
    return tuple(out)


def check_model(model: GameModel, zs_samples=None) -> None:
    """Raise if any transition row is not a probability vector or a reward
    exceeds the declared bound, on the given (or uniform) populations."""
    samples = list(zs_samples) if zs_samples is not None else [model.uniform_populations()]
    for zs in samples:
        zs = as_populations(model, zs)
        for j in range(model.n_types):
            _check_rows(model.kernel(j, zs), f"type {j}")
            r = model.rewards(j, zs)
            if np.any(np.abs(r) > model.reward_bound + 1e-12):
                raise ValueError(f"type {j} reward exceeds declared bound {model.reward_bound}")


def _check_rows(kernel: np.ndarray, what: str) -> None:
    if np.any(kernel < -ROW_TOL) or np.any(np.abs(kernel.sum(axis=-1) - 1.0) > ROW_TOL):
        raise ValueError(f"{what}: transition rows must be probability vectors")


# ---------------------------------------------------------------------------
# cyber-attack model

@dataclass(frozen=True)
class CyberParams:
    n: int = 10
    g1: float = 0.2
    g2: float = 0.1
    lambda1: float = 0.5
    lambda2: float = 0.5
    gamma: float = 0.9

    def __post_init__(self):
        StateGrid(self.n)
        check_discount(self.gamma)
        for key in ("g1", "g2", "lambda1", "lambda2"):
            if not getattr(self, key) >= 0:
                raise ValueError(f"cyber parameter {key} must be non-negative")

    @property
    def reward_bound(self) -> float:
        return self.g1 + self.g2 + max(self.lambda1, self.lambda2)


def _cyber_kernel(n: int) -> np.ndarray:
    # action 0 resets to state 0; action 1 moves uniformly onto {x, ..., 1}
    k = np.zeros((n + 1, 2, n + 1))
    k[:, 0, 0] = 1.0
    for i in range(n + 1):
        k[i, 1, i:] = 1.0 / (n + 1 - i)
    return k


def _type_check(type_index: int):
    if type_index not in (0, 1):
        raise ValueError(f"cyber model has types 0 (defender) and 1 (attacker), got {type_index}")


def cyber_transition(type_index: int, x, a, zs=None, params: CyberParams = CyberParams()) -> np.ndarray:
    """Next-state distribution; identical for both types and independent of ``zs``."""
    _type_check(type_index)
    grid = StateGrid(params.n)
    return _cyber_kernel(params.n)[grid.index(x), ActionSet((0, 1)).index(a)].copy()


def cyber_reward(type_index: int, x, a, zs, params: CyberParams = CyberParams()) -> float:
    """Per-step reward of a defender (type 0) or attacker (type 1).

    ``-g1 x - g2 x max(E[z_own] - E[z_other], 0) - (1 - a) lambda``
    """
    _type_check(type_index)
    grid = StateGrid(params.n)
    x = grid.points[grid.index(x)]
    a = ActionSet((0, 1)).actions[ActionSet((0, 1)).index(a)]
    own, other = zs[type_index].mean(), zs[1 - type_index].mean()
    lam = params.lambda1 if type_index == 0 else params.lambda2
    return -params.g1 * x - params.g2 * x * max(own - other, 0.0) - (1 - a) * lam


class CyberGame(GameModel):
    name = "cyber"

    def __init__(self, params: CyberParams = CyberParams()):
        self.params = params
        grid = StateGrid(params.n)
        super().__init__(
            (grid, grid), (ActionSet((0, 1)),) * 2, params.gamma, params.reward_bound,
            type_names=("defender", "attacker"), features=("cyber2", "cyber2"),
        )
        self._kernel = _cyber_kernel(params.n)
        self._kernel.setflags(write=False)

    def kernel(self, j, zs):
        _type_check(j)
        return self._kernel

    def rewards(self, j, zs):
        _type_check(j)
        p = self.params
        zs = as_populations(self, zs)
        x = self.grids[j].points
        gap = max(zs[j].mean() - zs[1 - j].mean(), 0.0)
        lam = p.lambda1 if j == 0 else p.lambda2
        base = -p.g1 * x - p.g2 * x * gap
        return np.stack([base - lam, base], axis=1)

    def describe(self):
        return {"name": self.name, **asdict(self.params)}


# ---------------------------------------------------------------------------
# small tabular games

class TabularGame(GameModel):
    """Game given by explicit per-type kernel and reward tables.

    An optional linear coupling makes the kernel depend on the populations:
    with ``c(z) = sum_k w_k (E[z_k] - 1/2)``, the probability of moving to the
    last state rises by ``slope * c(z)`` and that of the first state drops by
    the same amount. Each kernel entry is then ``slope * max|w|``-Lipschitz in
    the joint W1 distance. ``reward_coupling`` adds ``slope * c(z)`` to every
    reward in the same way.
    """

    name = "tabular"

    def __init__(self, kernels, rewards, gamma, actions=None, couplings=None,
                 reward_couplings=None, type_names=None, name=None):
        kernels = [np.array(k, dtype=float) for k in kernels]
        rewards = [np.array(r, dtype=float) for r in rewards]
        if len(kernels) != len(rewards):
            raise ValueError("need one reward table per kernel")
        grids, action_sets = [], []
        for j, (k, r) in enumerate(zip(kernels, rewards)):
            if k.ndim != 3 or k.shape[0] != k.shape[2] or k.shape[0] < 2:
                raise ValueError(f"type {j}: kernel must have shape (S, A, S) with S >= 2")
            if r.shape != k.shape[:2]:
                raise ValueError(f"type {j}: reward table must have shape {k.shape[:2]}")
            _check_rows(k, f"type {j}")
            grids.append(StateGrid(k.shape[0] - 1))
            acts = actions[j] if actions is not None else range(k.shape[1])
            action_sets.append(ActionSet(tuple(acts)))
            if len(action_sets[-1]) != k.shape[1]:
                raise ValueError(f"type {j}: {k.shape[1]} kernel actions but {len(action_sets[-1])} labels")
        n_types = len(kernels)
        self._kernels = kernels
        self._rewards = rewards
        self.couplings = _parse_couplings(couplings, n_types, "coupling")
        self.reward_couplings = _parse_couplings(reward_couplings, n_types, "reward_coupling")
        for j, (k, c) in enumerate(zip(kernels, self.couplings)):
            if c is None:
                continue
            shift = c[0] * np.abs(c[1]).sum() / 2.0
            if k[..., 0].min() < shift - ROW_TOL or k[..., -1].min() < shift - ROW_TOL:
                raise ValueError(f"type {j}: coupling can push transition rows off the simplex")
        bound = 0.0
        for r, c in zip(rewards, self.reward_couplings):
            extra = 0.0 if c is None else abs(c[0]) * np.abs(c[1]).sum() / 2.0
            bound = max(bound, float(np.abs(r).max()) + extra)
        super().__init__(grids, action_sets, gamma, bound, type_names=type_names)
        if name:
            self.name = name

    def _coupling_value(self, c, zs):
        slope, weights = c
        return slope * float(sum(w * (z.mean() - 0.5) for w, z in zip(weights, zs)))

    def kernel(self, j, zs):
        k = self._kernels[j]
        c = self.couplings[j]
        if c is None:
            return k
        delta = self._coupling_value(c, as_populations(self, zs))
        k = k.copy()
        k[..., -1] += delta
        k[..., 0] -= delta
        return k

    def rewards(self, j, zs):
        r = self._rewards[j]
        c = self.reward_couplings[j]
        if c is None:
            return r
        return r + self._coupling_value(c, as_populations(self, zs))

    def coupling_slope(self, j: int) -> float:
        """Lipschitz constant of type ``j``'s kernel entries in joint W1."""
        c = self.couplings[j]
        return 0.0 if c is None else abs(c[0]) * float(np.abs(c[1]).max())

    def describe(self):
        return {
            "name": self.name,
            "gamma": self.gamma,
            "kernels": [k.tolist() for k in self._kernels],
            "rewards": [r.tolist() for r in self._rewards],
        }


def _parse_couplings(couplings, n_types, what):
    if couplings is None:
        return (None,) * n_types
    if len(couplings) != n_types:
        raise ValueError(f"{what}: need one entry (or null) per type")
    out = []
    for c in couplings:
        if c is None:
            out.append(None)
            continue
        weights = np.asarray(c.get("weights", [1.0] * n_types), dtype=float)
        if weights.shape != (n_types,):
            raise ValueError(f"{what}: weights need one entry per type")
        out.append((float(c["slope"]), weights))
    return tuple(out)


# Hand-checkable presets. "oracle2" has z-independent dynamics and is the
# target of the unbiasedness checks; "contracting" has a weak cross-type
# coupling (slope 0.08) and a z-independent best response.
TEST_ENVS = {
    "oracle2": {
        "gamma": 0.9,
        "types": [
            {
                "kernel": [[[0.9, 0.1], [0.2, 0.8]], [[0.3, 0.7], [0.6, 0.4]]],
                "reward": [[1.0, 0.0], [-0.5, 2.0]],
            },
            {
                "kernel": [[[0.5, 0.5], [0.1, 0.9]], [[0.8, 0.2], [0.4, 0.6]]],
                "reward": [[0.0, 0.5], [1.0, -1.0]],
            },
        ],
    },
    "contracting": {
        "gamma": 0.5,
        "types": [
            {
                "kernel": [[[0.7, 0.3], [0.4, 0.6]], [[0.7, 0.3], [0.4, 0.6]]],
                "reward": [[0.0, 0.5], [-1.0, -0.5]],
                "coupling": {"slope": 0.08, "weights": [0.0, 1.0]},
            },
            {
                "kernel": [[[0.4, 0.6], [0.8, 0.2]], [[0.4, 0.6], [0.8, 0.2]]],
                "reward": [[0.0, 0.5], [-1.0, -0.5]],
                "coupling": {"slope": 0.08, "weights": [-1.0, 0.0]},
            },
        ],
    },
    "cycle": {
        "gamma": 0.9,
        "types": [
            {"kernel": [[[0.0, 1.0]], [[1.0, 0.0]]], "reward": [[0.0], [1.0]]},
            {"kernel": [[[0.0, 1.0]], [[1.0, 0.0]]], "reward": [[1.0], [0.0]]},
        ],
    },
}


def make_test_env(spec) -> TabularGame:
    """Build a small tabular game (at most 3 states and 2 actions per type).

    ``spec`` is either a preset name from :data:`TEST_ENVS` or a mapping with
    ``gamma`` and a ``types`` list; each type entry holds ``kernel`` (S, A, S),
    ``reward`` (S, A) and optionally ``actions``, ``coupling`` and
    ``reward_coupling`` (``{"slope": s, "weights": [...]}``).
    """
    name = "test"
    if isinstance(spec, str):
        if spec not in TEST_ENVS:
            raise ValueError(f"unknown test environment {spec!r}; presets: {sorted(TEST_ENVS)}")
        name, spec = spec, TEST_ENVS[spec]
    spec = copy.deepcopy(dict(spec))
    types = spec.get("types")
    if not types:
        raise ValueError("test environment needs a non-empty 'types' list")
    for j, t in enumerate(types):
        for key in ("kernel", "reward"):
            if key not in t:
                raise ValueError(f"type {j}: missing '{key}' table")
        shape = np.shape(t["kernel"])
        if len(shape) != 3 or shape[0] > 3 or shape[1] > 2:
            raise ValueError(f"type {j}: test environments allow at most 3 states and 2 actions")
    acts = [t.get("actions") for t in types]
    return TabularGame(
        [t["kernel"] for t in types],
        [t["reward"] for t in types],
        spec.get("gamma", 0.9),
        actions=None if all(a is None for a in acts) else [
            a if a is not None else range(np.shape(t["kernel"])[1]) for a, t in zip(acts, types)
        ],
        couplings=[t.get("coupling") for t in types] if any("coupling" in t for t in types) else None,
        reward_couplings=[t.get("reward_coupling") for t in types]
        if any("reward_coupling" in t for t in types) else None,
        type_names=spec.get("type_names"),
        name=spec.get("name", name),
    )


def make_identity_env(n: int = 2, n_types: int = 2, n_actions: int = 2, gamma: float = 0.9) -> TabularGame:
    """Agents never move and earn nothing: every population is stationary."""
    s = n + 1
    kernel = np.broadcast_to(np.eye(s)[:, None, :], (s, n_actions, s))
    game = TabularGame([kernel] * n_types, [np.zeros((s, n_actions))] * n_types, gamma,
                       name="identity")
    return game


def make_cyber_env(**params) -> CyberGame:
    return CyberGame(CyberParams(**params))


def _make_test_from_params(preset=None, **spec):
    return make_test_env(preset if preset is not None else spec)


ENVIRONMENTS = {
    "cyber": (make_cyber_env, "defender/attacker cyber-attack model; params: "
                              "n, g1, g2, lambda1, lambda2, gamma"),
    "identity": (make_identity_env, "stay-put dynamics with zero reward; params: "
                                    "n, n_types, n_actions, gamma"),
    "test": (_make_test_from_params, "small tabular game; params: preset "
                                     f"({', '.join(sorted(TEST_ENVS))}) or explicit gamma/types"),
}


def make_env(name: str, params: dict | None = None) -> GameModel:
    """Instantiate a registered environment."""
    if name not in ENVIRONMENTS:
        raise ValueError(f"unknown environment {name!r}; registered: {sorted(ENVIRONMENTS)}")
    factory, _ = ENVIRONMENTS[name]
    return factory(**(params or {}))


__all__ = [
    "CyberGame", "CyberParams", "ENVIRONMENTS", "GameModel", "TEST_ENVS", "TabularGame",
    "as_populations", "check_model", "cyber_reward", "cyber_transition", "make_cyber_env",
    "make_env", "make_identity_env", "make_test_env",
]
