import math
from itertools import product

import numpy as np
import pytest

from timeuse.metrics import hypervolume, normalize_fronts
from timeuse.objectives import ObjectiveVector
from timeuse.opt_multi import (ConfigError, MoConfig, crowding_distance, dominates,
                               domination_matrix, engine_name, fast_non_dominated_sort,
                               nsga2_survivors, polynomial_mutation, run_multi, sbx_crossover,
                               simplex_lattice, spea2_environmental_selection, spea2_fitness,
                               spea2_truncate, tchebycheff, weight_vectors)

SPD_LO = np.array([360.0, 480, 210, 61])
SPD_HI = np.array([720.0, 900, 480, 210])


def test_dominates_examples():
    assert dominates((0, (1, 1)), (0, (2, 2)))
    assert not dominates((0, (1, 3)), (0, (3, 1)))
    assert not dominates((0, (3, 1)), (0, (1, 3)))
    assert dominates((0, (5, 5)), (7, (0, 0)))
    assert not dominates((7, (0, 0)), (0, (5, 5)))
    assert not dominates((0, (1, 1)), (0, (1, 1)))


def test_dominates_rejects_mismatched_subsets():
    a = ObjectiveVector(("bmi", "fitness"), (0.1, -60))
    b = ObjectiveVector(("bmi", "cognition"), (0.1, -2))
    with pytest.raises(ConfigError):
        dominates((0, a), (0, b))
    with pytest.raises(ConfigError):
        dominates((0, (1, 2)), (0, (1, 2, 3)))


def test_nds_examples():
    assert [f.tolist() for f in fast_non_dominated_sort([[1, 1]])] == [[0]]
    fronts = fast_non_dominated_sort([[1, 3], [2, 2], [3, 1], [3, 3]])
    assert [sorted(f.tolist()) for f in fronts] == [[0, 1, 2], [3]]
    same = fast_non_dominated_sort([[2, 2]] * 5)
    assert len(same) == 1 and len(same[0]) == 5


def test_nds_feasibility_first():
    fronts = fast_non_dominated_sort([[0, 0], [5, 5], [1, 1]], violation=[3, 0, 0])
    assert [f.tolist() for f in fronts] == [[2], [1], [0]]


def test_crowding_examples():
    assert np.all(np.isinf(crowding_distance([[1, 2], [2, 1]])))
    cd = crowding_distance([[1, 3], [2, 2], [3, 1]])
    assert math.isinf(cd[0]) and math.isinf(cd[2])
    assert cd[1] == pytest.approx(2.0)
    dup = crowding_distance([[1, 3], [2, 2], [2, 2], [3, 1]])
    assert dup[1] + dup[2] == pytest.approx(2.0)  # one of the twins sees a zero gap
    assert min(dup[1], dup[2]) == pytest.approx(1.0)


def test_sbx_fixed_point():
    p1, p2 = np.array([400.0, 600, 300, 140]), np.array([500.0, 500, 250, 190])
    c1, c2 = sbx_crossover(p1, p2, 20, np.random.default_rng(0), u=0.5, prob=1, var_prob=1,
                           close=False)
    np.testing.assert_allclose(c1, p1)
    np.testing.assert_allclose(c2, p2)


def test_sbx_mean_preserved():
    rng = np.random.default_rng(1)
    p1 = rng.uniform(0, 10, size=(200, 4))
    p2 = rng.uniform(0, 10, size=(200, 4))
    c1, c2 = sbx_crossover(p1, p2, 20, rng, close=False)
    np.testing.assert_allclose((c1 + c2) / 2, (p1 + p2) / 2, atol=1e-12)


def test_sbx_golden_children():
    c1, c2 = sbx_crossover(np.array([400.0, 600, 300, 140]), np.array([500.0, 500, 250, 190]),
                           20, np.random.default_rng(11), SPD_LO, SPD_HI)
    np.testing.assert_allclose(c1, [399.92553101980945, 599.8848560528444,
                                    300.21567707041294, 139.9739358569333], rtol=1e-12)
    np.testing.assert_allclose(c2, [500.0931208983298, 500.09656265672095,
                                    249.7749305035838, 190.03538594136532], rtol=1e-12)
    np.testing.assert_allclose(c1.sum(), 1440)


def test_polynomial_mutation():
    x = np.array([400.0, 600, 300, 140])
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(polynomial_mutation(x, 20, 0.0, rng, SPD_LO, SPD_HI), x)
    for seed in range(50):
        y = polynomial_mutation(x, 20, 1.0, np.random.default_rng(seed), SPD_LO, SPD_HI,
                                close=False)
        assert np.all(y >= SPD_LO) and np.all(y <= SPD_HI)
    golden = polynomial_mutation(x, 20, 0.5, np.random.default_rng(11), SPD_LO, SPD_HI)
    np.testing.assert_allclose(golden, [377.7419393507926, 633.766257672042,
                                        298.44062203050686, 130.0511809466585], rtol=1e-12)


def test_tchebycheff_examples():
    assert tchebycheff([1, 2], [0.5, 0.5], [1, 2]) == 0
    assert tchebycheff([3, 100], [1, 0], [0, 0]) == 3
    assert tchebycheff([2, 4], [0.5, 0.5], [0, 0]) == 2


def test_spea2_examples():
    fit = spea2_fitness([[1, 3], [2, 2], [3, 1]])
    np.testing.assert_array_equal(fit.raw, 0)
    chain = spea2_fitness([[1, 1], [2, 2], [3, 3]])
    np.testing.assert_array_equal(chain.strength, [2, 1, 0])
    np.testing.assert_array_equal(chain.raw, [0, 2, 3])
    assert spea2_fitness([[4, 4]]).fitness[0] < 1
    assert np.all(fit.fitness < 1)


def test_spea2_truncate_keeps_extremes():
    t = np.linspace(0, 1, 30)
    F = np.column_stack([t, (1 - t) ** 2])
    keep = spea2_truncate(F, 10)
    assert len(keep) == 10
    assert 0 in keep and 29 in keep


def test_spea2_selection_fills_with_dominated():
    F = np.array([[1, 1], [2, 2], [3, 3], [4, 4]], dtype=float)
    keep = spea2_environmental_selection(F, np.zeros(4), 2)
    assert sorted(keep.tolist()) == [0, 1]


def test_nsga2_survivors_keep_first_front():
    rng = np.random.default_rng(3)
    F = rng.random((60, 2))
    V = np.zeros(60)
    first = fast_non_dominated_sort(F, V)[0]
    keep = nsga2_survivors(F, V, max(len(first), 20))
    assert set(first.tolist()) <= set(keep.tolist())


def test_simplex_lattice_and_weights():
    L = simplex_lattice(3, 4)
    assert len(L) == math.comb(6, 2)
    np.testing.assert_allclose(L.sum(axis=1), 1)
    for k, expected in [(2, 100), (3, 105), (4, 100)]:
        wv = weight_vectors(k, 100, 20)
        assert wv.size == expected
        np.testing.assert_allclose(wv.weights.sum(axis=1), 1)
        assert np.all(wv.weights >= 0)
        assert wv.neighbors.shape == (expected, 20)
        # each vector is its own nearest neighbour
        assert np.all(wv.neighbors[:, 0] == np.arange(expected))


def test_neighbourhoods_are_nearest():
    wv = weight_vectors(2, 100, 20)
    d = np.linalg.norm(wv.weights[:, None] - wv.weights[None], axis=2)
    for i in range(wv.size):
        chosen = d[i, wv.neighbors[i]]
        others = np.delete(d[i], wv.neighbors[i])
        assert chosen.max() <= others.min() + 1e-12


def test_engine_names():
    assert engine_name("NSGA-II") == "nsga2"
    assert engine_name("MOEA/D") == "moead"
    assert engine_name("SPEA2") == "spea2"
    with pytest.raises(KeyError):
        engine_name("smsemoa")


@pytest.mark.parametrize("engine", ["moead", "nsga2", "spea2"])
def test_run_multi_front_contract(engine):
    front = run_multi(engine, "SPD", ["bmi", "fitness", "cognition"], budget=3000, seed=2)
    assert len(front) > 0
    D = domination_matrix(front.F)
    assert not D.any()
    np.testing.assert_allclose(front.X.sum(axis=1), 1440, atol=1e-9)
    assert np.all(front.X >= SPD_LO - 1e-9) and np.all(front.X <= SPD_HI + 1e-9)
    assert front.evaluations <= 3000
    raw = front.raw()
    np.testing.assert_allclose(raw[:, 1], -front.F[:, 1])
    np.testing.assert_allclose(raw[:, 0], front.F[:, 0])


@pytest.fixture(scope="module")
def cognition_fitness_fronts():
    return {e: run_multi(e, "SPD", ["cognition", "fitness"], seed=0)
            for e in ("moead", "nsga2", "spea2")}


@pytest.mark.parametrize("engine", ["moead", "nsga2", "spea2"])
def test_front_reaches_cognition_optimum(engine, cognition_fitness_fronts):
    raw = cognition_fitness_fronts[engine].raw()
    assert raw[:, 0].max() == pytest.approx(2.4426, abs=1e-2)


@pytest.mark.xfail(strict=True, reason=(
    "fitness optimum sits where sleep and MVPA are both at a bound; per-variable SBX/PM "
    "children rarely keep the 1440 sum, so closure pushes them off that edge"))
@pytest.mark.parametrize("engine", ["moead", "nsga2", "spea2"])
def test_front_reaches_fitness_optimum(engine, cognition_fitness_fronts):
    raw = cognition_fitness_fronts[engine].raw()
    assert raw[:, 1].max() == pytest.approx(62.2440, abs=1e-2)


def test_run_multi_deterministic():
    a = run_multi("nsga2", "SPD", ["bmi", "cognition"], budget=2000, seed=9)
    b = run_multi("nsga2", "SPD", ["bmi", "cognition"], budget=2000, seed=9)
    np.testing.assert_array_equal(a.F, b.F)
    np.testing.assert_array_equal(a.X, b.X)


def test_run_multi_errors():
    with pytest.raises(ConfigError):
        run_multi("nsga2", "SPD", ["bmi"])
    with pytest.raises(ConfigError):
        run_multi("nsga2", "SPD", ["bmi", "f1"])
    with pytest.raises(ConfigError):
        run_multi("nsga2", "SPD", ["bmi", "fitness"], budget=50)
    with pytest.raises(KeyError):
        run_multi("nsga3", "SPD", ["bmi", "fitness"])


def test_four_objective_moead_runs():
    cfg = MoConfig(population=100)
    front = run_multi("moead", "SPD", ["bmi", "cognition", "life_satisfaction", "fitness"],
                      budget=1000, seed=0, config=cfg)
    assert front.F.shape[1] == 4
    assert not domination_matrix(front.F).any()


def test_spea2_close_to_merged_front_on_pairs():
    fronts = {e: run_multi(e, "SPD", ["bmi", "cognition"], seed=1) for e in
              ("moead", "nsga2", "spea2")}
    normed, lo, hi = normalize_fronts([f.F for f in fronts.values()])
    merged = np.vstack(normed)
    ref = np.full(2, 1.1)
    hv_merged = hypervolume(merged, ref)
    hv_spea2 = hypervolume(normed[2], ref)
    assert hv_spea2 >= 0.95 * hv_merged


def test_domination_matrix_matches_pairwise():
    rng = np.random.default_rng(0)
    F = rng.integers(0, 4, size=(25, 3)).astype(float)
    V = rng.integers(0, 2, size=25).astype(float)
    D = domination_matrix(F, V)
    for i, j in product(range(25), repeat=2):
        assert D[i, j] == dominates((V[i], F[i]), (V[j], F[j]))
