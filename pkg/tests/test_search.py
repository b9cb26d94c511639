import numpy as np
import pytest
from sklearn.ensemble import RandomForestRegressor

from plan3d.errors import ConfigError
from plan3d.hardware import SMNG_P2
from plan3d.memory import ParallelConfig
from plan3d.search import (
    PENALTY, SearchSpace, bo_search, evaluate, exhaustive_search, expected_improvement,
    forest_predict, NoFeasibleConfiguration,
)


@pytest.fixture(scope="module")
def space():
    from plan3d.model import PRESETS
    return SearchSpace(PRESETS["gpt-175b"], SMNG_P2)


@pytest.fixture(scope="module")
def oracle(space):
    return exhaustive_search(space)


def test_space_size_and_order(space):
    cfgs = space.configs()
    assert len(space) == len(cfgs) == 240
    keys = [(c.pp, c.tp, c.mbs, c.gas) for c in cfgs]
    assert keys == sorted(keys)
    assert space.encode(cfgs[-1]) == [3, 1, 10, 2]


def test_exhaustive_optimum_golden(oracle):
    best, trials = oracle
    assert best.config == ParallelConfig(tp=8, pp=12, mbs=2, gas=100, zero_stage=1)
    assert best.objective == pytest.approx(177.775e12, rel=1e-5)
    statuses = [t.status for t in trials]
    assert statuses.count("success") == 30
    assert statuses.count("oom") == 150
    assert statuses.count("invalid") == 60  # pp=20 does not divide 96 layers


def test_exhaustive_is_deterministic(space, oracle):
    best, trials = exhaustive_search(space)
    assert best == oracle[0] and trials == oracle[1]


def test_failures_become_penalties(space):
    t = evaluate(ParallelConfig(tp=8, pp=20, mbs=1, gas=25, zero_stage=1), space)
    assert t.status == "invalid" and t.objective == PENALTY
    t = evaluate(ParallelConfig(tp=4, pp=12, mbs=10, gas=25, zero_stage=1), space)
    assert t.status == "oom" and t.objective == PENALTY and "exceeds" in t.message


def test_no_feasible_configuration(space):
    from dataclasses import replace
    tiny = replace(space, mbs_range=(10, 10), tp_choices=(4,), pp_choices=(12,))
    with pytest.raises(NoFeasibleConfiguration):
        exhaustive_search(tiny)


@pytest.mark.parametrize("seed", [0, 7])
def test_bo_reproducible_and_feasible(space, seed):
    a, b = bo_search(space, 40, seed), bo_search(space, 40, seed)
    assert a.trials == b.trials
    assert len(a.trials) == 40
    assert len({t.config for t in a.trials}) == 40
    assert a.best.ok
    curve = a.best_so_far
    assert curve == sorted(curve)


def test_bo_batch_mode_is_reproducible(space):
    a = bo_search(space, 24, 3, batch_size=4)
    b = bo_search(space, 24, 3, batch_size=4, workers=2)
    assert a.trials == b.trials
    assert [t.eval_index for t in a.trials] == list(range(24))


def test_bo_budget_capped_by_space(space):
    from dataclasses import replace
    small = replace(space, pp_choices=(12,), gas_choices=(100,))
    traj = bo_search(small, 40, 1)
    assert len(traj.trials) == len(small) == 20


def test_bo_rejects_bad_arguments(space):
    with pytest.raises(ConfigError):
        bo_search(space, 4, 0, n_initial=8)
    with pytest.raises(ConfigError):
        bo_search(space, 40, 0, batch_size=0)


def test_expected_improvement_oracle():
    mu = np.array([1.0, 0.0, 2.0])
    sigma = np.array([1.0, 0.0, 0.0])
    ei = expected_improvement(mu, sigma, best=1.0)
    # At mu == best with unit sigma, EI = phi(0).
    assert ei[0] == pytest.approx(1 / np.sqrt(2 * np.pi))
    assert ei[1] == 0.0 and ei[2] == pytest.approx(1.0)


def test_forest_variance_matches_brute_force():
    rng = np.random.default_rng(0)
    X = rng.integers(0, 5, size=(30, 3)).astype(float)
    y = X[:, 0] - 2 * X[:, 1] + rng.normal(size=30)
    f = RandomForestRegressor(n_estimators=10, min_samples_leaf=3, random_state=0).fit(X, y)
    Xq = rng.integers(0, 5, size=(7, 3)).astype(float)
    mu, sigma = forest_predict(f, Xq)
    preds = np.array([t.predict(Xq) for t in f.estimators_])
    assert np.allclose(mu, preds.mean(axis=0))
    # Total variance: spread of tree means plus mean within-leaf variance.
    within = np.array([t.tree_.impurity[t.apply(Xq)] for t in f.estimators_]).mean(axis=0)
    assert np.allclose(sigma ** 2, preds.var(axis=0) + within)


@pytest.mark.slow
def test_penalties_steer_away_from_infeasible(space, oracle):
    _, trials = oracle
    complement = sum(not t.ok for t in trials) / len(trials)
    fails = [
        sum(not t.ok for t in bo_search(space, 40, seed).trials[8:]) / 32
        for seed in range(20)
    ]
    assert sum(fails) / len(fails) < complement
