"""Sparse regression: solver oracles first, then library construction and
model selection."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esparse.dynamics import SignalSet, nominal_params, simulate_chirp, true_terms
from esparse.expr import binary, constant, parse_expression, unary, variable
from esparse.sparsereg import (
    AllModelsEmpty,
    ColumnCache,
    DidNotConverge,
    EmptyLibrary,
    RegressionConfig,
    SparseModel,
    ZeroSignalNorm,
    build_library,
    elastic_net,
    elastic_net_objective,
    model_from_record,
    model_to_record,
    percent_error,
    sweep_and_select,
)

TIGHT = RegressionConfig(tol=1e-12, max_iter=200000)


def random_instance(seed, n_max=100, m_max=10):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, n_max + 1))
    m = int(rng.integers(2, m_max + 1))
    A = rng.normal(size=(n, m))
    y = rng.normal(size=n)
    lam1 = float(rng.uniform(0.0, 2.0))
    lam2 = float(rng.uniform(0.0, 1.0))
    return A, y, lam1, lam2


def kkt_gap(A, y, xi, lam1, lam2):
    """Largest violation of the elastic-net stationarity conditions."""
    grad = 2.0 * (A.T @ (A @ xi - y)) + 2.0 * lam2 * xi
    gap = 0.0
    for j, g in enumerate(grad):
        if xi[j] != 0.0:
            gap = max(gap, abs(g + lam1 * math.copysign(1.0, xi[j])))
        else:
            gap = max(gap, max(abs(g) - lam1, 0.0))
    return gap


class TestElasticNetOracle:
    """Solver correctness against independent references.

    These run before anything that consumes the solver: the pipeline's
    conclusions are only as good as this optimizer.
    """

    def test_kkt_conditions_on_random_instances(self):
        for seed in range(20):
            A, y, lam1, lam2 = random_instance(seed)
            xi = elastic_net(A, y, lam1, lam2, TIGHT)
            scale = float(np.abs(A.T @ y).max()) + 1.0
            assert kkt_gap(A, y, xi, lam1, lam2) <= 1e-7 * scale

    def test_objective_matches_convex_oracle(self):
        cvxpy = pytest.importorskip("cvxpy")
        for seed in range(20):
            A, y, lam1, lam2 = random_instance(seed)
            xi = elastic_net(A, y, lam1, lam2, TIGHT)
            ours = elastic_net_objective(A, y, xi, lam1, lam2)
            x = cvxpy.Variable(A.shape[1])
            objective = cvxpy.Minimize(
                cvxpy.sum_squares(A @ x - y)
                + lam1 * cvxpy.norm1(x)
                + lam2 * cvxpy.sum_squares(x)
            )
            problem = cvxpy.Problem(objective)
            reference = problem.solve(solver="CLARABEL")
            assert abs(ours - reference) <= 1e-6 * max(abs(reference), 1.0)

    def test_ridge_closed_form(self):
        for seed in range(5):
            A, y, _, lam2 = random_instance(seed)
            lam2 = max(lam2, 0.1)
            xi = elastic_net(A, y, 0.0, lam2, TIGHT)
            m = A.shape[1]
            closed = np.linalg.solve(A.T @ A + lam2 * np.eye(m), A.T @ y)
            np.testing.assert_allclose(xi, closed, rtol=1e-7, atol=1e-10)

    def test_lasso_closed_form_orthonormal(self):
        rng = np.random.default_rng(42)
        Q, _ = np.linalg.qr(rng.normal(size=(60, 8)))
        y = rng.normal(size=60)
        lam1 = 0.3
        xi = elastic_net(Q, y, lam1, 0.0, TIGHT)
        c = Q.T @ y
        closed = np.sign(c) * np.maximum(np.abs(c) - lam1 / 2.0, 0.0)
        np.testing.assert_allclose(xi, closed, rtol=1e-7, atol=1e-12)

    def test_ols_limit(self):
        A, y, _, _ = random_instance(3)
        xi = elastic_net(A, y, 0.0, 0.0, TIGHT)
        ols, *_ = np.linalg.lstsq(A, y, rcond=None)
        np.testing.assert_allclose(xi, ols, rtol=1e-8, atol=1e-11)

    def test_full_shrinkage_threshold(self):
        A, y, _, _ = random_instance(7)
        lam1 = 2.0 * float(np.abs(A.T @ y).max())
        xi = elastic_net(A, y, lam1 * 1.0001, 0.0, TIGHT)
        assert np.all(xi == 0.0)

    def test_objective_never_increases_with_more_sweeps(self):
        A, y, lam1, lam2 = random_instance(11)
        values = []
        for k in range(1, 12):
            cfg = RegressionConfig(tol=1e-16, max_iter=k)
            try:
                xi = elastic_net(A, y, lam1, lam2, cfg)
            except DidNotConverge as stop:
                xi = stop.coef
            values.append(elastic_net_objective(A, y, xi, lam1, lam2))
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

    def test_nonconvergence_reports_iterate(self):
        A, y, lam1, lam2 = random_instance(5)
        with pytest.raises(DidNotConverge) as info:
            elastic_net(A, y, lam1, lam2, RegressionConfig(tol=1e-16, max_iter=1))
        assert info.value.coef.shape == (A.shape[1],)
        assert info.value.n_iter == 1

    def test_negative_penalty_rejected(self):
        A, y, _, _ = random_instance(1)
        with pytest.raises(ValueError):
            elastic_net(A, y, -1.0, 0.0)

    @given(st.integers(0, 10**6))
    @settings(max_examples=25, deadline=None)
    def test_kkt_property(self, seed):
        A, y, lam1, lam2 = random_instance(seed, n_max=40, m_max=6)
        xi = elastic_net(A, y, lam1, lam2, TIGHT)
        scale = float(np.abs(A.T @ y).max()) + 1.0
        assert kkt_gap(A, y, xi, lam1, lam2) <= 1e-7 * scale


class TestRegressionConfig:
    def test_grid_validation(self):
        with pytest.raises(ValueError):
            RegressionConfig(lambda1_grid=())
        with pytest.raises(ValueError):
            RegressionConfig(lambda1_grid=(-1.0,))

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            RegressionConfig(threshold=0.0)

    def test_solver_validation(self):
        with pytest.raises(ValueError):
            RegressionConfig(tol=0.0)
        with pytest.raises(ValueError):
            RegressionConfig(max_iter=0)
        with pytest.raises(ValueError):
            RegressionConfig(tie_floor=-1.0)


Q3 = parse_expression("((X0 * X0) * X0)")
Q_ABS_Q = parse_expression("(X0 * abs(X0))")


class TestBuildLibrary:
    def test_bias_column_always_first(self, short_signals):
        lib = build_library([variable(0)], short_signals)
        assert lib.trees[0].kind == "const"
        np.testing.assert_array_equal(lib.columns[0], 1.0)

    def test_string_duplicates_dropped_first_kept(self, short_signals):
        pop = [variable(0), variable(1), variable(0)]
        lib = build_library(pop, short_signals)
        assert [t.key for t in lib.trees[1:]] == ["X0", "X1"]
        assert (2, "X0", "duplicate") in lib.dropped

    def test_commutative_rendering_is_same_string(self, short_signals):
        a = binary("+", variable(0), variable(1))
        b = binary("+", variable(1), variable(0))
        lib = build_library([a, b], short_signals)
        assert len(lib.trees) == 2

    def test_constant_and_zero_columns_dropped(self, short_signals):
        pop = [constant(3.0), binary("-", variable(0), variable(0)), variable(1)]
        lib = build_library(pop, short_signals)
        assert [t.key for t in lib.trees[1:]] == ["X1"]
        reasons = {reason for _, _, reason in lib.dropped}
        assert "constant" in reasons and "zero" in reasons

    def test_nonfinite_column_dropped(self, short_signals):
        bad = binary("/", constant(1.0), variable(0))
        lib = build_library([bad, variable(1)], short_signals)
        assert [t.key for t in lib.trees[1:]] == ["X1"]
        assert ("non-finite" in {r for _, _, r in lib.dropped})

    def test_scale_multiple_merges_to_smaller_tree(self, short_signals):
        doubled = binary("+", variable(0), variable(0))
        lib = build_library([doubled, variable(0)], short_signals)
        assert [t.key for t in lib.trees[1:]] == ["X0"]
        assert (0, doubled.key, "collinear") in lib.dropped

    def test_sign_flip_merges(self, short_signals):
        negated = binary("-", constant(0.0), variable(0))
        lib = build_library([negated, variable(0)], short_signals)
        assert [t.key for t in lib.trees[1:]] == ["X0"]

    def test_smooth_rendering_preferred_over_nonsmooth(self, nominal_signals):
        # q^3 and q|q| correlate above the dedup cutoff on the chirp
        # response; the smooth cubic must name the class even though both
        # trees have five nodes.
        lib = build_library([Q_ABS_Q, Q3], nominal_signals)
        assert [t.key for t in lib.trees[1:]] == [Q3.key]

    def test_exact_linear_combination_dropped_as_dependent(self):
        # Balanced scales keep the pairwise correlations below the dedup
        # cutoff, so only the rank check can catch the dependence.
        sig = make_signals()
        combo = binary("+", variable(0), variable(1))
        lib = build_library([variable(0), variable(1), combo], sig)
        assert combo.key not in [t.key for t in lib.trees]
        assert (2, combo.key, "dependent") in lib.dropped

    def test_registry_substitutes_compact_rendering_across_calls(
        self, nominal_signals
    ):
        cache = ColumnCache(nominal_signals)
        build_library([Q3, variable(0)], nominal_signals, cache=cache)
        bloated = binary("*", binary("*", variable(0), variable(0)),
                         binary("+", variable(0), variable(0)))
        lib = build_library([bloated, variable(0)], nominal_signals, cache=cache)
        assert Q3.key in [t.key for t in lib.trees]
        assert (bloated.key, Q3.key) in lib.aliases

    def test_empty_library_raises(self, short_signals):
        with pytest.raises(EmptyLibrary):
            build_library([constant(1.0), constant(2.0)], short_signals)

    def test_empty_population_rejected(self, short_signals):
        with pytest.raises(ValueError):
            build_library([], short_signals)


def make_signals(n=400, split=100, seed=0, qddot=None):
    rng = np.random.default_rng(seed)
    t = np.arange(n) * 1e-2
    q = np.sin(1.3 * t) + 0.2 * rng.normal(size=n)
    qdot = np.cos(2.1 * t) + 0.2 * rng.normal(size=n)
    zddot = np.sin(3.7 * t + 0.5) + 0.2 * rng.normal(size=n)
    if qddot is None:
        qddot = 2.0 * q - 1.5 * qdot
    return SignalSet(t=t, q=q, qdot=qdot, qddot=qddot, zddot=zddot, split=split)


class TestSweepAndSelect:
    def test_planted_two_term_model_recovered(self):
        sig = make_signals()
        lib = build_library([variable(0), variable(1), variable(2)], sig)
        model = sweep_and_select(lib, sig)
        assert set(model.support) == {"X0", "X1"}
        assert model.coefficient("X0") == pytest.approx(2.0, rel=1e-6)
        assert model.coefficient("X1") == pytest.approx(-1.5, rel=1e-6)
        assert model.validation_error == pytest.approx(0.0, abs=1e-6)
        assert model.converged

    def test_noiseless_oscillator_support(self, nominal_signals):
        atoms = [variable(0), variable(1), variable(2), Q3]
        junk = [
            binary("*", variable(0), variable(1)),
            unary("abs", variable(1)),
            binary("+", variable(2), variable(0)),
        ]
        lib = build_library(atoms + junk, nominal_signals)
        model = sweep_and_select(lib, nominal_signals)
        truth = {t.key: c for t, c in true_terms(nominal_params())}
        assert set(model.support) == set(truth)
        for key, expected in truth.items():
            assert model.coefficient(key) == pytest.approx(expected, rel=1e-4)

    def test_all_supports_empty_raises(self):
        n, split = 400, 100
        t = np.arange(n) * 1e-2
        rng = np.random.default_rng(3)
        q = np.sin(1.3 * t)
        target = rng.normal(size=n)
        # Orthogonalize the target against the centered regressor on the
        # identification segment so no grid point clears the threshold.
        qc = q[split:] - q[split:].mean()
        target[split:] -= (target[split:] @ qc) / (qc @ qc) * qc
        target[split:] -= target[split:].mean()
        target *= 1e-3 / np.abs(target).max()
        sig = SignalSet(t=t, q=q, qdot=np.cos(2.1 * t), qddot=target,
                        zddot=np.sin(3.7 * t), split=split)
        lib = build_library([variable(0)], sig)
        with pytest.raises(AllModelsEmpty):
            sweep_and_select(lib, sig)

    def test_zero_validation_target_raises(self):
        n, split = 400, 100
        t = np.arange(n) * 1e-2
        qddot = np.zeros(n)
        qddot[split:] = np.sin(1.3 * np.arange(n - split))
        sig = SignalSet(t=t, q=np.sin(1.3 * t), qdot=np.cos(t), qddot=qddot,
                        zddot=np.sin(3.7 * t), split=split)
        lib = build_library([variable(0)], sig)
        with pytest.raises(ZeroSignalNorm):
            sweep_and_select(lib, sig)

    def test_unconverged_solver_flagged(self):
        sig = make_signals()
        lib = build_library([variable(0), variable(1)], sig)
        cfg = RegressionConfig(tol=1e-16, max_iter=1)
        model = sweep_and_select(lib, sig, cfg)
        assert model.converged is False

    def test_near_ties_resolve_to_sparser_support(self):
        # X2 can shave a sliver of validation error by chance alignment;
        # the selected support must stay at the two real terms.
        sig = make_signals(seed=9)
        lib = build_library([variable(0), variable(1), variable(2)], sig)
        model = sweep_and_select(lib, sig)
        assert len(model.support) == 2


class TestPercentError:
    def test_hand_computed_example(self):
        sig = make_signals()
        model = SparseModel(
            terms=((variable(0), 2.0), (variable(1), -1.5)),
            lambda1=0.0, lambda2=0.0, training_mse=0.0,
            validation_error=0.0, converged=True,
        )
        assert percent_error(model, sig) == pytest.approx(0.0, abs=1e-9)
        off = SparseModel(
            terms=((variable(0), 2.0),),
            lambda1=0.0, lambda2=0.0, training_mse=0.0,
            validation_error=0.0, converged=True,
        )
        sl = sig.val_slice
        expected = 100.0 * np.linalg.norm(
            2.0 * sig.q[sl] - sig.qddot[sl]
        ) / np.linalg.norm(sig.qddot[sl])
        assert percent_error(off, sig) == pytest.approx(expected, rel=1e-12)

    def test_zero_reference_raises(self):
        n, split = 200, 50
        t = np.arange(n) * 1e-2
        qddot = np.zeros(n)
        qddot[split:] = 1.0 + np.sin(np.arange(n - split))
        sig = SignalSet(t=t, q=np.sin(t), qdot=np.cos(t), qddot=qddot,
                        zddot=np.sin(2 * t), split=split)
        model = SparseModel(
            terms=((variable(0), 1.0),), lambda1=0.0, lambda2=0.0,
            training_mse=0.0, validation_error=0.0, converged=True,
        )
        with pytest.raises(ZeroSignalNorm):
            percent_error(model, sig)


class TestSparseModel:
    def test_requires_terms(self):
        with pytest.raises(ValueError):
            SparseModel(terms=(), lambda1=0.0, lambda2=0.0, training_mse=0.0,
                        validation_error=0.0, converged=True)

    def test_rejects_zero_coefficients(self):
        with pytest.raises(ValueError):
            SparseModel(terms=((variable(0), 0.0),), lambda1=0.0, lambda2=0.0,
                        training_mse=0.0, validation_error=0.0, converged=True)

    def test_support_excludes_intercept(self):
        model = SparseModel(
            terms=((variable(0), 1.0), (constant(1.0), 0.5)),
            lambda1=0.0, lambda2=0.0, training_mse=0.0,
            validation_error=0.0, converged=True,
        )
        assert model.support == ("X0",)

    def test_predict_linear_combination(self):
        model = SparseModel(
            terms=((variable(0), 2.0), (constant(1.0), 1.0)),
            lambda1=0.0, lambda2=0.0, training_mse=0.0,
            validation_error=0.0, converged=True,
        )
        X = np.array([[1.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
        np.testing.assert_allclose(model.predict(X), [3.0, 7.0])

    def test_equation_rendering(self):
        model = SparseModel(
            terms=((variable(0), -2.5),), lambda1=0.0, lambda2=0.0,
            training_mse=0.0, validation_error=0.0, converged=True,
        )
        assert model.equation() == "qddot = -2.5*X0"

    def test_record_round_trip(self):
        model = SparseModel(
            terms=((Q3, -2.18e6), (variable(1), -3.67), (constant(1.0), 0.25)),
            lambda1=0.01, lambda2=1e-4, training_mse=1.2e-9,
            validation_error=0.0034, converged=True,
        )
        back = model_from_record(model_to_record(model))
        assert back.support == model.support
        assert back.lambda1 == model.lambda1
        assert back.lambda2 == model.lambda2
        assert back.training_mse == model.training_mse
        assert back.validation_error == model.validation_error
        assert back.converged == model.converged
        for (ta, ca), (tb, cb) in zip(model.terms, back.terms):
            assert ta.key == tb.key
            assert ca == cb

    def test_record_format_header(self):
        model = SparseModel(
            terms=((variable(0), 1.0),), lambda1=0.0, lambda2=0.0,
            training_mse=0.0, validation_error=0.0, converged=True,
        )
        assert "esparse-model-v1" in model_to_record(model)


class TestColumnCache:
    def test_hit_and_miss_counters(self, short_signals):
        cache = ColumnCache(short_signals)
        cache.lookup(variable(0))
        cache.lookup(variable(0))
        assert cache.misses == 1
        assert cache.hits == 1

    def test_eviction_bound(self, short_signals):
        cache = ColumnCache(short_signals, max_arrays=8)
        for i in range(30):
            cache.lookup(binary("+", variable(0), constant(float(i))))
        stored = sum(
            1 for e in cache._entries.values() if e.column is not None
        )
        assert stored <= 8

    def test_columns_locked(self, short_signals):
        cache = ColumnCache(short_signals)
        entry = cache.lookup(variable(0))
        with pytest.raises(ValueError):
            entry.column[0] = 1.0
