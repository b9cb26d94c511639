"""Configuration search over (PP, TP, MBS, GAS): exhaustive oracle and Bayesian optimization."""

from __future__ import annotations

import itertools
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc
from sklearn.ensemble import RandomForestRegressor

from .errors import ConfigError, InvalidFactorization, OutOfMemory
from .hardware import HardwareConfig, effective_peak
from .memory import DEFAULT_HEADROOM, ParallelConfig
from .model import ModelConfig
from .perf import DEFAULT_EFFICIENCY, EfficiencyParams, step_time

STATUSES = ("success", "oom", "invalid", "timeout")
# Failed trials score this on the normalized (objective / effective peak) scale.
PENALTY = -1.0


@dataclass(frozen=True)
class SearchSpace:
    model: ModelConfig
    hardware: HardwareConfig
    pp_choices: tuple[int, ...] = (12, 16, 20, 24)
    tp_choices: tuple[int, ...] = (4, 8)
    mbs_range: tuple[int, int] = (1, 10)
    gas_choices: tuple[int, ...] = (25, 50, 100)
    dp: int = 1
    zero_stage: int = 1
    strict_layers: bool = True
    efficiency: EfficiencyParams = DEFAULT_EFFICIENCY
    headroom: float = DEFAULT_HEADROOM

    def __post_init__(self):
        for name in ("pp_choices", "tp_choices", "gas_choices"):
            vals = tuple(sorted(set(int(v) for v in getattr(self, name))))
            if not vals or vals[0] < 1:
                raise ConfigError(f"{name} must be a non-empty set of integers >= 1")
            object.__setattr__(self, name, vals)
        lo, hi = (int(v) for v in self.mbs_range)
        if lo < 1 or hi < lo:
            raise ConfigError(f"mbs_range must satisfy 1 <= lo <= hi, got {self.mbs_range}")
        object.__setattr__(self, "mbs_range", (lo, hi))

    @property
    def mbs_choices(self) -> tuple[int, ...]:
        return tuple(range(self.mbs_range[0], self.mbs_range[1] + 1))

    def configs(self) -> list[ParallelConfig]:
        """All candidates in lexicographic (pp, tp, mbs, gas) order."""
        return [
            ParallelConfig(tp=tp, pp=pp, dp=self.dp, mbs=mbs, gas=gas, zero_stage=self.zero_stage)
            for pp, tp, mbs, gas in itertools.product(
                self.pp_choices, self.tp_choices, self.mbs_choices, self.gas_choices
            )
        ]

    def __len__(self):
        return len(self.pp_choices) * len(self.tp_choices) * len(self.mbs_choices) * len(self.gas_choices)

    def encode(self, pc: ParallelConfig) -> list[float]:
        """Ordinal indices for PP/TP/GAS, raw integer for MBS."""
        return [
            self.pp_choices.index(pc.pp),
            self.tp_choices.index(pc.tp),
            pc.mbs,
            self.gas_choices.index(pc.gas),
        ]


@dataclass(frozen=True)
class Trial:
    config: ParallelConfig
    status: str
    objective: float  # flop/s per tile, or PENALTY
    eval_index: int = 0
    seed_tag: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "success"


@dataclass
class SearchTrajectory:
    budget: int
    seed: int
    trials: list[Trial] = field(default_factory=list)

    @property
    def best_so_far(self) -> list[float]:
        out, best = [], PENALTY
        for t in self.trials:
            best = max(best, t.objective)
            out.append(best)
        return out

    @property
    def best(self) -> Trial | None:
        ok = [t for t in self.trials if t.ok]
        if not ok:
            return None
        # First trial reaching the maximum.
        return max(ok, key=lambda t: (t.objective, -t.eval_index))


def evaluate(pc: ParallelConfig, space: SearchSpace, eval_index: int = 0, seed_tag: int = 0) -> Trial:
    """Score one configuration; failures become statuses, never exceptions."""
    try:
        st = step_time(
            space.model, pc, space.hardware, space.efficiency,
            strict_layers=space.strict_layers, headroom=space.headroom,
        )
    except OutOfMemory as exc:
        return Trial(pc, "oom", PENALTY, eval_index, seed_tag, str(exc))
    except InvalidFactorization as exc:
        return Trial(pc, "invalid", PENALTY, eval_index, seed_tag, str(exc))
    return Trial(pc, "success", st.achieved_flops_per_tile, eval_index, seed_tag)


class NoFeasibleConfiguration(ConfigError):
    def __init__(self, trials):
        super().__init__("no feasible configuration in the search space")
        self.trials = trials


def exhaustive_search(space: SearchSpace) -> tuple[Trial, list[Trial]]:
    trials = [evaluate(pc, space, i) for i, pc in enumerate(space.configs())]
    ok = [t for t in trials if t.ok]
    if not ok:
        raise NoFeasibleConfiguration(trials)
    return max(ok, key=lambda t: (t.objective, -t.eval_index)), trials


def _normalized(trial: Trial, space: SearchSpace) -> float:
    return trial.objective / effective_peak(space.hardware) if trial.ok else PENALTY


def _initial_design(space: SearchSpace, configs, n: int, rng: np.random.Generator) -> list[int]:
    """Latin-hypercube sample mapped onto the grid; collisions refilled at random."""
    dims = [space.pp_choices, space.tp_choices, space.mbs_choices, space.gas_choices]
    index = {tuple(space.encode(pc)): i for i, pc in enumerate(configs)}
    sample = qmc.LatinHypercube(d=4, seed=rng).random(n)
    chosen = []
    for row in sample:
        pick = [min(int(u * len(d)), len(d) - 1) for u, d in zip(row, dims)]
        key = (pick[0], pick[1], space.mbs_choices[pick[2]], pick[3])
        i = index[key]
        if i not in chosen:
            chosen.append(i)
    while len(chosen) < n:
        i = int(rng.integers(len(configs)))
        if i not in chosen:
            chosen.append(i)
    return chosen


def forest_predict(forest, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and std of a fitted forest by the law of total variance.

    Each tree contributes its leaf mean and the variance of the training
    targets in that leaf, so single-leaf disagreement is not the only source
    of uncertainty.
    """
    means, second = [], []
    for est in forest.estimators_:
        tree = est.tree_
        leaves = est.apply(X)
        mu = tree.value[leaves, 0, 0]
        var = tree.impurity[leaves]
        means.append(mu)
        second.append(var + mu * mu)
    mu = np.mean(means, axis=0)
    var = np.maximum(np.mean(second, axis=0) - mu * mu, 0.0)
    return mu, np.sqrt(var)


def expected_improvement(mu: np.ndarray, sigma: np.ndarray, best: float, xi: float = 0.0) -> np.ndarray:
    imp = mu - best - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, imp / sigma, 0.0)
    ei = imp * norm.cdf(z) + sigma * norm.pdf(z)
    return np.where(sigma > 0, ei, np.maximum(imp, 0.0))


def bo_search(
    space: SearchSpace,
    budget: int = 40,
    seed: int = 0,
    *,
    n_initial: int = 8,
    n_trees: int = 48,
    min_samples_leaf: int = 2,
    max_features: float = 0.5,
    xi: float = 0.0,
    batch_size: int = 1,
    workers: int | None = None,
) -> SearchTrajectory:
    """Budgeted BO with a random-forest surrogate and expected improvement.

    Failed trials enter the surrogate at PENALTY so infeasible regions are
    learned. With ``batch_size`` > 1 the top-k candidates by EI are evaluated
    concurrently and merged in proposal order, which keeps runs reproducible.
    """
    if budget < n_initial:
        raise ConfigError(f"budget {budget} is smaller than the initial design ({n_initial})")
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    configs = space.configs()
    budget = min(budget, len(configs))
    n_initial = min(n_initial, budget)
    X_all = np.array([space.encode(pc) for pc in configs], dtype=float)
    rng = np.random.default_rng(seed)
    traj = SearchTrajectory(budget, seed)
    evaluated: list[int] = []
    y: list[float] = []

    def run(batch):
        if batch_size > 1 and len(batch) > 1:
            with ThreadPoolExecutor(max_workers=workers or batch_size) as pool:
                results = list(pool.map(
                    lambda a: evaluate(configs[a[1]], space, a[0], seed), enumerate(batch, len(traj.trials))
                ))
        else:
            results = [evaluate(configs[i], space, len(traj.trials) + n, seed) for n, i in enumerate(batch)]
        for i, trial in zip(batch, results):
            evaluated.append(i)
            y.append(_normalized(trial, space))
            traj.trials.append(trial)

    run(_initial_design(space, configs, n_initial, rng))
    while len(traj.trials) < budget:
        remaining = np.array([i for i in range(len(configs)) if i not in set(evaluated)])
        k = min(batch_size, budget - len(traj.trials), len(remaining))
        model = RandomForestRegressor(
            n_estimators=n_trees, min_samples_leaf=min_samples_leaf, max_features=max_features, bootstrap=True,
            random_state=int(rng.integers(2**31 - 1)), n_jobs=1,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model.fit(X_all[evaluated], np.asarray(y))
        mu, sigma = forest_predict(model, X_all[remaining])
        ei = expected_improvement(mu, sigma, max(y), xi)
        if ei.max() <= 0.0:
            # Surrogate is flat: explore at random.
            order = rng.permutation(len(remaining))
        else:
            # Stable sort keeps lexicographic config order among ties.
            order = np.argsort(-ei, kind="stable")
        run([int(remaining[j]) for j in order[:k]])
    return traj
