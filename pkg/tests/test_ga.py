import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridfs.ga import (GaConfig, boltzmann_probabilities, calibrate_beta, crossover, double_point, evolve,
                         init_population, mutate, pick_crossover_method, roulette_select, run_ga, single_point,
                         top_half_mass, uniform_crossover)
from hybridfs.neuro import CostConfig

from stubs import CountingCost, PairwiseCost, SeedEcho


def _bits(s):
    return np.array([c == "1" for c in s])


def _str(a):
    return "".join("1" if b else "0" for b in a)


# --- config ----------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    {"population_size": 5}, {"population_size": 2}, {"crossover_rate": 1.0}, {"mutation_rate": 0.0},
    {"crossover_method_probs": (0.5, 0.5, 0.5)}, {"target_top_half_mass": 0.5},
    {"population_size": 10, "nfe_budget": 5}, {"checkpoint_every": 2},
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        GaConfig(**kw)


def test_offspring_counts_round_half_up():
    cfg = GaConfig(population_size=10, crossover_rate=0.5, mutation_rate=0.25)
    assert cfg.n_crossover_pairs == 3  # 2.5 -> 3
    assert cfg.n_mutants == 3  # 2.5 -> 3
    assert GaConfig().n_crossover_pairs == 280 and GaConfig().n_mutants == 210


def test_default_flip_probability():
    assert GaConfig().flip_prob(590) == pytest.approx(0.01)
    assert GaConfig().flip_prob(10) == pytest.approx(0.1)


# --- Boltzmann selection ---------------------------------------------------

def test_probabilities_beta_zero_uniform():
    np.testing.assert_allclose(boltzmann_probabilities([1, 2, 5], 0.0, 5.0), [1 / 3] * 3)


def test_probabilities_hand_example():
    p = boltzmann_probabilities([1.0, 1.0, 2.0], math.log(4), 2.0)
    np.testing.assert_allclose(p, [0.4, 0.4, 0.2], atol=1e-12)


def test_probabilities_all_zero_costs_uniform():
    np.testing.assert_allclose(boltzmann_probabilities([0.0, 0.0], 3.0, 0.0), [0.5, 0.5])


def test_probabilities_reject_non_finite():
    with pytest.raises(ValueError):
        boltzmann_probabilities([1.0, np.inf], 1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=2, max_size=30), st.floats(0.0, 50.0), st.floats(0.01, 100.0))
def test_probabilities_properties(costs, beta, scale):
    c = np.array(costs)
    p = boltzmann_probabilities(c, beta, c.max())
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    assert (p >= 0).all()
    order = np.argsort(c, kind="stable")
    assert np.all(np.diff(p[order]) <= 1e-15)
    q = boltzmann_probabilities(c * scale, beta, (c * scale).max())
    np.testing.assert_allclose(p, q, atol=1e-12)


def test_calibrate_two_individual_raw_form():
    cal = calibrate_beta([0.0, 1.0], 0.7, normalized=False)
    assert cal.beta == pytest.approx(math.log(7 / 3), abs=1e-6)
    assert not cal.degenerate


def test_calibrate_equal_costs_degenerate():
    cal = calibrate_beta([0.3, 0.3, 0.3, 0.3], 0.7)
    assert cal.beta == 0.0 and cal.degenerate


def test_calibrate_requires_sorted():
    with pytest.raises(ValueError):
        calibrate_beta([2.0, 1.0], 0.7)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=4, max_size=40).filter(lambda v: len(v) % 2 == 0),
       st.floats(0.55, 0.95))
def test_calibrate_hits_target(costs, target):
    c = np.sort(np.array(costs))
    half = len(c) // 2
    cal = calibrate_beta(c, target)
    if c[half - 1] == c[half] and c[0] == c[-1]:
        assert cal.degenerate
        return
    if cal.degenerate:
        # ties straddling the half boundary cap the reachable mass
        assert top_half_mass(c, 1e6, c.max()) < target
        return
    assert abs(top_half_mass(c, cal.beta, c.max()) - target) < 1e-6


# --- roulette / method choice ----------------------------------------------

def test_roulette_degenerate():
    rng = np.random.default_rng(0)
    assert all(roulette_select([1.0, 0.0, 0.0], rng) == 0 for _ in range(100))


def test_roulette_frequencies():
    rng = np.random.default_rng(1)
    draws = np.array([roulette_select([0.5, 0.5], rng) for _ in range(100_000)])
    assert abs(np.mean(draws == 0) - 0.5) < 0.01


class _FixedRng:
    def __init__(self, u):
        self.u = u

    def random(self):
        return self.u


def test_roulette_boundary_takes_lower_index():
    assert roulette_select([0.25, 0.25, 0.5], _FixedRng(0.25)) == 0
    assert roulette_select([0.25, 0.25, 0.5], _FixedRng(0.5)) == 1


def test_crossover_method_probabilities():
    rng = np.random.default_rng(2)
    assert {pick_crossover_method((1, 0, 0), rng) for _ in range(200)} == {"single"}
    assert {pick_crossover_method((0, 0, 1), rng) for _ in range(200)} == {"uniform"}
    draws = [pick_crossover_method((0.3, 0.3, 0.4), rng) for _ in range(100_000)]
    for name, p in (("single", 0.3), ("double", 0.3), ("uniform", 0.4)):
        assert abs(draws.count(name) / len(draws) - p) < 0.01


# --- variation -------------------------------------------------------------

def test_single_point_hand():
    o1, o2 = single_point(_bits("0000"), _bits("1111"), 2)
    assert (_str(o1), _str(o2)) == ("0011", "1100")


def test_double_point_hand():
    o1, o2 = double_point(_bits("000000"), _bits("111111"), 2, 4)
    assert (_str(o1), _str(o2)) == ("001100", "110011")


def test_uniform_all_ones_swaps():
    p1, p2 = _bits("0101"), _bits("1100")
    o1, o2 = uniform_crossover(p1, p2, np.ones(4, bool))
    assert (_str(o1), _str(o2)) == ("1100", "0101")


@pytest.mark.parametrize("method", ["single", "double", "uniform"])
def test_identical_parents_fixed_point(method):
    p = _bits("1011001")
    o1, o2 = crossover(p, p, method, np.random.default_rng(0))
    assert _str(o1) == _str(o2) == "1011001"


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**31), st.sampled_from(["single", "double", "uniform"]))
def test_crossover_locus_conservation(m, seed, method):
    rng = np.random.default_rng(seed)
    p1, p2 = rng.random(m) < 0.5, rng.random(m) < 0.5
    o1, o2 = crossover(p1, p2, method, rng)
    assert o1.shape == o2.shape == (m,)
    np.testing.assert_array_equal(np.sort(np.c_[o1, o2], axis=1), np.sort(np.c_[p1, p2], axis=1))


def test_crossover_needs_two_genes():
    with pytest.raises(ValueError):
        crossover(_bits("1"), _bits("0"), "single", np.random.default_rng(0))


def test_mutate_zero_and_one():
    rng = np.random.default_rng(0)
    p = _bits("0110")
    assert _str(mutate(p, 0.0, rng)) == "0110"
    assert _str(mutate(p, 1.0, rng)) == "1001"
    # complement of all ones is all zeros, so the guard sets exactly one gene
    assert mutate(_bits("1111"), 1.0, rng).sum() == 1


def test_mutate_flip_count():
    rng = np.random.default_rng(3)
    p = np.zeros(1000, bool)
    p[::2] = True
    flips = [np.sum(mutate(p, 0.01, rng) != p) for _ in range(100)]
    assert abs(np.mean(flips) - 10) <= 3


# --- population / loop -----------------------------------------------------

def test_init_population_small():
    cost = PairwiseCost()
    pos, costs = init_population(4, 10, seed=5, cost_fn=cost)
    assert pos.shape == (4, 10)
    assert len({_str(r) for r in pos}) == 4
    assert pos.any(axis=1).all()
    assert np.all(np.diff(costs) >= 0)
    np.testing.assert_allclose(costs, [cost(r) for r in pos])
    pos2, _ = init_population(4, 10, seed=5, cost_fn=cost)
    np.testing.assert_array_equal(pos, pos2)


def test_init_population_redraws_all_zero():
    # m = 3: 1/8 of draws are all-zero; every stored chromosome must be non-empty
    pos, _ = init_population(6, 3, seed=0, cost_fn=lambda v: float(np.sum(v)))
    assert pos.any(axis=1).all()


def test_trajectory_elitism_and_nfe_accounting():
    cfg = GaConfig(population_size=12, max_iterations=15, crossover_rate=0.6, mutation_rate=0.3, seed=3)
    r = evolve(PairwiseCost(), 10, cfg)
    assert len(r.best_cost_trajectory) == 16
    assert all(b <= a for a, b in zip(r.best_cost_trajectory, r.best_cost_trajectory[1:]))
    per_gen = 2 * cfg.n_crossover_pairs + cfg.n_mutants
    assert r.nfe_used == 12 + 15 * per_gen
    assert r.nfe_trajectory == [12 + t * per_gen for t in range(16)]


def test_elitism_best_survives():
    seen = []
    cfg = GaConfig(population_size=8, max_iterations=10, seed=0)
    evolve(PairwiseCost(seed=9), 10, cfg, callback=lambda it, res: seen.append((res.best_cost, res.population)))
    for (c0, pop0), (c1, pop1) in zip(seen, seen[1:]):
        assert c1 <= c0
        assert any(np.array_equal(pop0[0], row) for row in pop1) or c1 < c0


def test_nfe_budget_caps_evaluations():
    cfg = GaConfig(population_size=10, max_iterations=100, nfe_budget=57, seed=1)
    r = evolve(PairwiseCost(), 10, cfg)
    assert r.nfe_used == 57


def test_determinism():
    cfg = GaConfig(population_size=10, max_iterations=8, seed=11)
    a = evolve(PairwiseCost(), 10, cfg)
    b = evolve(PairwiseCost(), 10, cfg)
    assert a.best_cost_trajectory == b.best_cost_trajectory
    np.testing.assert_array_equal(a.population, b.population)


def test_parallel_matches_serial():
    cfg = GaConfig(population_size=8, max_iterations=3, seed=2)
    a = evolve(SeedEcho(), 10, cfg)
    b = evolve(SeedEcho(), 10, GaConfig(population_size=8, max_iterations=3, seed=2, workers=2))
    assert a.best_cost_trajectory == b.best_cost_trajectory
    np.testing.assert_array_equal(a.population, b.population)


def test_cache_skips_repeat_evaluations():
    calls = []

    def cost(mask):
        calls.append(1)
        return float(np.sum(mask))
    r = evolve(cost, 4, GaConfig(population_size=8, max_iterations=10, seed=0, cache=True))
    assert r.nfe_used == len(calls) <= 15


def test_cost_failure_has_generation_context():
    def cost(mask):
        if mask.sum() > 6:
            raise ValueError("boom")
        return 1.0
    with pytest.raises(RuntimeError, match="generation"):
        evolve(cost, 10, GaConfig(population_size=8, max_iterations=30, seed=0,
                                  per_gene_flip_prob=0.5))


def test_tie_break_prefers_fewer_features():
    r = evolve(lambda mask: 1.0, 6, GaConfig(population_size=8, max_iterations=5, seed=0))
    assert r.population.sum(axis=1)[0] == r.population.sum(axis=1).min()


def test_checkpoint_resume_matches_uninterrupted(tmp_path):
    path = tmp_path / "ck.json"
    full = evolve(PairwiseCost(), 10, GaConfig(population_size=10, max_iterations=12, seed=4))
    evolve(PairwiseCost(), 10, GaConfig(population_size=10, max_iterations=6, seed=4,
                                        checkpoint_every=3, checkpoint_path=str(path)))
    state = json.loads(path.read_text())
    assert state["iteration"] == 6
    resumed = evolve(PairwiseCost(), 10, GaConfig(population_size=10, max_iterations=12, seed=4), resume=str(path))
    assert resumed.best_cost_trajectory == full.best_cost_trajectory
    np.testing.assert_array_equal(resumed.population, full.population)


def test_counting_cost_finds_target():
    target = np.zeros(20, bool)
    target[[1, 4, 9, 15]] = True
    r = evolve(CountingCost(target), 20, GaConfig(population_size=30, max_iterations=60, seed=0))
    assert r.best_cost == 0.0
    np.testing.assert_array_equal(r.best_mask, target)


@pytest.mark.parametrize("seed", range(10))
def test_brute_force_oracle(seed):
    cost = PairwiseCost()
    best, _ = cost.brute_force()
    r = evolve(cost, 10, GaConfig(population_size=20, max_iterations=50, seed=seed))
    assert r.best_cost <= 1.05 * best


def test_run_ga_on_dataset():
    from hybridfs.synthetic import planted_features
    ds = planted_features(150, 6, 2, seed=0)
    r = run_ga(ds, GaConfig(population_size=6, max_iterations=2, seed=0), CostConfig())
    assert r.best_mask.shape == (6,)
    assert r.best_mask.any()
