import numpy as np
import pytest

from f3i.core import Config, DataMatrix, InvalidArgumentError, UndefinedMetricError
from f3i.evaluation import (
    TraceObjective,
    auc_score,
    bound_constants,
    c_miss,
    cumulative_regret,
    masked_mse,
    mse,
    regret_oracle,
    rmse,
    sigma_miss,
    thm44_bound,
    thm51_bound,
)
from f3i.imputer import f3i_run
from conftest import random_masked_matrix


class TestMse:
    def test_zero_when_equal(self, rng):
        a = rng.normal(size=(4, 3))
        assert mse(a, a.copy()) == 0.0

    def test_single_entry(self):
        assert mse(np.array([[3.0]]), np.array([[1.0]])) == 4.0
        assert rmse(np.array([[3.0]]), np.array([[1.0]])) == 2.0

    def test_double_loop_oracle(self, rng):
        a = rng.normal(size=(5, 4))
        b = rng.normal(size=(5, 4))
        want = sum(
            (a[i, j] - b[i, j]) ** 2 for i in range(5) for j in range(4)
        ) / 20
        assert mse(a, b) == pytest.approx(want, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            mse(np.zeros((2, 2)), np.zeros((2, 3)))


class TestMaskedMse:
    def test_exact_on_missing_is_zero(self, rng):
        a = rng.normal(size=(3, 3))
        b = a.copy()
        b[0, 0] += 5  # differs only at an observed cell
        mask = np.zeros((3, 3), dtype=bool)
        mask[1, 1] = True
        assert masked_mse(b, a, mask) == 0.0

    def test_single_cell(self):
        a = np.array([[1.0, 5.0]])
        b = np.array([[1.0, 2.0]])
        mask = np.array([[False, True]])
        assert masked_mse(a, b, mask) == 9.0

    def test_row_average_semantics(self):
        # row 0: two missing cells with sq errors 1 and 3 -> 2
        # row 1: one missing cell with sq error 4 -> 4; mean = 3
        a = np.array([[1.0, np.sqrt(3.0), 0.0], [2.0, 0.0, 0.0]])
        b = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        mask = np.array([[True, True, False], [True, False, False]])
        assert masked_mse(a, b, mask) == pytest.approx(3.0)

    def test_rows_without_missing_skipped(self, rng):
        a = rng.normal(size=(4, 2))
        b = a + 1.0
        mask = np.zeros((4, 2), dtype=bool)
        mask[2, 0] = True
        assert masked_mse(a, b, mask) == pytest.approx(1.0)

    def test_empty_mask_undefined(self, rng):
        a = rng.normal(size=(2, 2))
        with pytest.raises(UndefinedMetricError):
            masked_mse(a, a, np.zeros((2, 2), dtype=bool))


class TestBoundConstants:
    def test_sigma_example(self):
        c = sigma_miss(0.1, 3)
        assert c.sigma2 == pytest.approx(0.115470, abs=1e-6)
        assert c.sigma_gsm == pytest.approx(0.081650, abs=1e-6)
        assert c.sigma_miss == pytest.approx(0.115470, abs=1e-6)

    def test_large_k_limits(self):
        c = sigma_miss(1.0, 10_000_000)
        assert c.sigma2 == pytest.approx(1.0, abs=1e-6)
        assert c.sigma_gsm == pytest.approx(1 / np.sqrt(3), abs=1e-3)

    def test_sigma_miss_dominates_sigma(self):
        for k in range(2, 30):
            assert sigma_miss(0.7, k).sigma_miss > 0.7

    def test_invalid(self):
        with pytest.raises(InvalidArgumentError):
            sigma_miss(0.0, 5)
        with pytest.raises(InvalidArgumentError):
            sigma_miss(1.0, 1)

    @pytest.mark.parametrize(
        "sigma,expected",
        [
            (0.01, 2352.60),
            (0.10, 2816.02),
            (0.15, 3286.57),
            (0.20, 3839.30),
            (0.25, 4450.16),
            (0.50, 8109.04),
        ],
    )
    def test_published_table(self, sigma, expected):
        n, f, k = 50, 100, 5
        s = sigma_miss(sigma, k).sigma_miss
        assert n * c_miss(s, f, n**-3.0) == pytest.approx(expected, abs=0.01)

    def test_c_miss_delta_validated(self):
        with pytest.raises(InvalidArgumentError):
            c_miss(0.1, 100, 0.0)


class TestRegretOracle:
    def _trace(self, rng, **cfg_kw):
        X, truth = random_masked_matrix(rng, n=15, f=5)
        cfg = Config(n_neighbors=cfg_kw.pop("k", 2), max_iter=5, **cfg_kw)
        _, tr = f3i_run(X, cfg)
        return tr, truth

    def test_no_missing_uniform_maximizer(self, rng):
        vals = rng.normal(size=(10, 4))
        X = DataMatrix(vals, np.zeros((10, 4), dtype=bool))
        _, tr = f3i_run(X, Config(n_neighbors=3, max_iter=3))
        ev = TraceObjective(tr)
        a, v, conv = regret_oracle(ev, 3)
        # G = -eta ||alpha||^2: maximized at uniform
        np.testing.assert_allclose(a, np.full(3, 1 / 3), atol=1e-6)
        assert v == pytest.approx(-tr.eta / 3, abs=1e-10)

    def test_k2_grid_search_oracle(self, rng):
        for _ in range(20):
            tr, truth = self._trace(np.random.default_rng(int(rng.integers(1e6))))
            ev = TraceObjective(tr, density_ref=truth)
            _, v, _ = regret_oracle(ev, 2, floors=list(tr.alphas))
            grid = np.linspace(0, 1, 10_001)
            best = max(ev.value(np.array([a, 1 - a])) for a in grid[::10])
            # finer pass around the coarse winner
            assert v >= best - 1e-3
            best_fine = max(
                ev.value(np.array([a, 1 - a])) for a in grid
            )
            assert abs(v - best_fine) <= 1e-3 or v >= best_fine

    def test_value_dominates_floors(self, rng):
        tr, truth = self._trace(rng, k=3)
        ev = TraceObjective(tr, density_ref=truth)
        _, v, _ = regret_oracle(ev, 3, floors=list(tr.alphas))
        for a in tr.alphas:
            assert v >= ev.value(a) - 1e-12
        assert v >= ev.value(np.full(3, 1 / 3)) - 1e-12


class TestCumulativeRegret:
    def test_nonnegative(self, rng):
        for seed in range(5):
            r = np.random.default_rng(seed)
            X, truth = random_masked_matrix(r, n=15, f=5)
            _, tr = f3i_run(X, Config(n_neighbors=3, max_iter=4, seed=seed))
            ev = TraceObjective(tr, density_ref=truth)
            assert cumulative_regret(tr, ev) >= -1e-8

    def test_zero_when_play_is_optimal(self, rng):
        # complete data: objective is -eta||a||^2 each round; uniform play
        # (the learner's first move) is exactly optimal
        vals = rng.normal(size=(10, 4))
        X = DataMatrix(vals, np.zeros((10, 4), dtype=bool))
        _, tr = f3i_run(X, Config(n_neighbors=3, max_iter=3))
        assert cumulative_regret(tr, TraceObjective(tr)) <= 1e-8


class TestTheoremBounds:
    def test_thm44_zero_rounds(self):
        from f3i.imputer import ImputationTrace

        tr = ImputationTrace(mask=np.zeros((5, 3), dtype=bool), K=3, h=1.0)
        assert thm44_bound(tr, 0.1) == 0.0

    def test_thm44_structure(self, rng):
        X, _ = random_masked_matrix(rng, n=15, f=5)
        _, tr = f3i_run(X, Config(n_neighbors=3, max_iter=4))
        b = thm44_bound(tr, 0.1)
        consts = bound_constants(tr, 0.1)
        assert b == pytest.approx(
            consts.adahedge_term + consts.c_miss / tr.h * tr.final_t, rel=1e-12
        )
        assert consts.bound_value == pytest.approx(b, rel=1e-12)

    def test_thm51_beta_edges(self, rng):
        X, truth = random_masked_matrix(rng, n=15, f=5)
        _, tr = f3i_run(X, Config(n_neighbors=3, max_iter=4))
        # beta=0: equals thm44 (loss vectors are the negated gradients)
        assert thm51_bound(tr, 0.1, 0.0) == pytest.approx(
            thm44_bound(tr, 0.1), rel=1e-12
        )
        # beta=1: pure AdaHedge term, no linear term
        consts = bound_constants(tr, 0.1, beta=1.0)
        assert thm51_bound(tr, 0.1, 1.0) == pytest.approx(
            consts.adahedge_term, rel=1e-12
        )

    def test_bound_positive_on_real_runs(self, rng):
        X, _ = random_masked_matrix(rng, n=15, f=5)
        _, tr = f3i_run(X, Config(n_neighbors=3, max_iter=4))
        assert thm44_bound(tr, 0.1) > 0


class TestAuc:
    def test_perfect_separation(self):
        assert auc_score([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0

    def test_reversed(self):
        assert auc_score([0, 0, 1, 1], [0.9, 0.8, 0.2, 0.1]) == 0.0

    def test_random_half(self):
        assert auc_score([0, 1], [0.5, 0.5]) == 0.5

    def test_midrank_ties(self):
        # one tie across classes counts 1/2
        assert auc_score([0, 1, 1], [0.3, 0.3, 0.9]) == pytest.approx(0.75)

    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetricError):
            auc_score([1, 1], [0.1, 0.2])

    def test_matches_pair_counting(self, rng):
        for _ in range(20):
            y = rng.integers(0, 2, size=30)
            if len(set(y)) < 2:
                continue
            s = rng.normal(size=30)
            pairs = wins = 0
            for i in np.nonzero(y == 1)[0]:
                for j in np.nonzero(y == 0)[0]:
                    pairs += 1
                    wins += 1.0 if s[i] > s[j] else 0.5 if s[i] == s[j] else 0.0
            assert auc_score(y, s) == pytest.approx(wins / pairs, rel=1e-12)
