from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import covariance, jacobi_eigh, q_statistic
from sempca import detect_pca
from sempca.errors import DegenerateDataWarning, DegenerateResidual, DimensionMismatch, NonFiniteInput, ThresholdUnset
from sempca.detect_pca import PcaModel, fit, predict, q_statistic_threshold, spe, threshold_candidates

LINE = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])


class TestFit:
    def test_points_on_a_line(self):
        m = fit(LINE, k=1)
        np.testing.assert_allclose(m.mean, [2.0, 0.0])
        np.testing.assert_allclose(np.abs(m.components[:, 0]), [1.0, 0.0])
        np.testing.assert_allclose(m.eigenvalues, [1.0, 0.0], atol=1e-15)

    def test_identical_vectors_are_degenerate(self):
        X = np.tile([1.0, 2.0, 3.0], (5, 1))
        with pytest.warns(DegenerateDataWarning):
            m = fit(X)
        assert m.k == 1 and not m.eigenvalues.any()
        assert np.all(m.spe(X) == 0)

    def test_random_matrix_against_jacobi(self):
        X = np.random.default_rng(1).standard_normal((6, 4))
        m = fit(X, k=4)
        w, _ = jacobi_eigh(covariance(X))
        np.testing.assert_allclose(m.eigenvalues, w, atol=1e-9)

    def test_variance_fraction_policy(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((200, 3)) * [10.0, 3.0, 0.1]
        m = fit(X, variance_fraction=0.95)
        lam = m.eigenvalues
        assert lam[:2].sum() / lam.sum() >= 0.95 > lam[:1].sum() / lam.sum()
        assert m.k == 2

    def test_gram_route_caps_k_at_rank(self):
        X = np.random.default_rng(3).standard_normal((4, 10))
        m = fit(X, k=8)
        assert m.k == 3  # four centered points span three dimensions
        np.testing.assert_allclose(m.components.T @ m.components, np.eye(3), atol=1e-10)

    def test_gram_route_matches_covariance_route(self):
        X = np.random.default_rng(4).standard_normal((5, 12))
        m = fit(X, k=2)
        C = covariance(X)
        w, V = jacobi_eigh(C)
        np.testing.assert_allclose(m.eigenvalues, w, atol=1e-9)
        np.testing.assert_allclose(m.components @ m.components.T, V[:, :2] @ V[:, :2].T, atol=1e-8)

    def test_orthonormal_and_sorted(self):
        m = fit(np.random.default_rng(5).standard_normal((30, 7)), k=4)
        np.testing.assert_allclose(m.components.T @ m.components, np.eye(4), atol=1e-8)
        assert np.all(np.diff(m.eigenvalues) <= 0) and np.all(m.eigenvalues >= 0)

    def test_rejects_bad_input(self):
        with pytest.raises(NonFiniteInput):
            fit(np.array([[1.0, np.nan], [0.0, 1.0]]))
        with pytest.raises(ValueError):
            fit(np.ones((1, 3)))
        with pytest.raises(ValueError):
            fit(LINE, k=3)


class TestSpe:
    def test_mean_has_zero_spe(self):
        m = fit(LINE, k=1)
        assert spe(m, m.mean) == 0.0

    def test_off_axis_residual(self):
        assert spe(fit(LINE, k=1), np.array([2.0, 5.0])) == pytest.approx(25.0)

    def test_in_subspace(self):
        m = fit(np.random.default_rng(6).standard_normal((20, 5)), k=2)
        assert spe(m, m.mean + 3.7 * m.components[:, 1]) == pytest.approx(0.0, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            spe(fit(LINE, k=1), np.zeros(3))

    def test_batch_and_single_agree(self):
        m = fit(np.random.default_rng(7).standard_normal((20, 5)), k=2)
        V = np.random.default_rng(8).standard_normal((4, 5))
        np.testing.assert_allclose(m.spe(V), [m.spe(v) for v in V])


class TestPredict:
    def test_threshold_is_strict(self):
        m = fit(LINE, k=1).with_threshold(25.0)
        flag, score = predict(m, np.array([2.0, 5.0]))
        assert score == pytest.approx(25.0) and flag is False
        flag, _ = predict(m.with_threshold(25.0 - 1e-9), np.array([2.0, 5.0]))
        assert flag is True

    def test_unset_threshold(self):
        with pytest.raises(ThresholdUnset):
            predict(fit(LINE, k=1), np.zeros(2))

    def test_degenerate_model_flags_off_subspace(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateDataWarning)
            m = fit(np.zeros((4, 3))).with_threshold(0.0)
        assert predict(m, np.array([0.0, 1.0, 0.0]))[0] is True

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            fit(LINE, k=1).with_threshold(-1.0)


class TestQStatistic:
    def model_with_residual(self, residual, k=1):
        lam = np.array([10.0] * k + list(residual))
        d = len(lam)
        return PcaModel(np.zeros(d), np.eye(d)[:, :k], lam)

    def test_zero_residual(self):
        with pytest.raises(DegenerateResidual):
            q_statistic_threshold(self.model_with_residual([0.0, 0.0]))

    def test_unit_spectrum_against_high_precision(self):
        m = self.model_with_residual([1.0, 1.0, 1.0])
        assert q_statistic_threshold(m, 0.05) == pytest.approx(q_statistic([1, 1, 1], 0.05), rel=1e-12)

    def test_frozen_value(self):
        # frozen from the arbitrary-precision oracle
        m = self.model_with_residual([1.0, 1.0, 1.0])
        assert q_statistic_threshold(m, 0.05) == pytest.approx(7.775002989348336, rel=1e-12)

    def test_decreasing_in_alpha(self):
        m = self.model_with_residual([3.0, 1.0, 0.5, 0.1])
        values = [q_statistic_threshold(m, a) for a in (0.001, 0.01, 0.05, 0.2)]
        assert all(a > b for a, b in zip(values, values[1:]))

    @given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=8), st.sampled_from([0.001, 0.01, 0.05, 0.1]))
    def test_matches_oracle(self, residual, alpha):
        m = self.model_with_residual(sorted(residual, reverse=True), k=1)
        try:
            ours = q_statistic_threshold(m, alpha)
        except DegenerateResidual:
            return
        assert ours == pytest.approx(q_statistic(sorted(residual, reverse=True), alpha), rel=1e-9)

    def test_survives_reload(self, tmp_path):
        m = fit(np.random.default_rng(9).standard_normal((40, 6)), k=2)
        m.save(tmp_path / "m.npz")
        assert q_statistic_threshold(PcaModel.load(tmp_path / "m.npz")) == q_statistic_threshold(m)


class TestThresholdCandidates:
    def test_all_zero_spe(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateDataWarning)
            m = fit(np.ones((5, 2)))
        assert threshold_candidates(m, np.ones((5, 2))) == [0.0]

    def test_linear_interpolation(self):
        # SPE of training rows (0, i) around a model fitted on the x axis is i^2;
        # use a model whose residual of row j is exactly j
        m = PcaModel(np.zeros(2), np.array([[1.0], [0.0]]), np.array([1.0, 0.0]))
        rows = np.array([[0.0, np.sqrt(v)] for v in range(1, 101)])
        cands = threshold_candidates(m, rows)
        assert any(abs(c - 99.01) < 1e-9 for c in cands)

    def test_sorted_unique(self):
        X = np.random.default_rng(10).standard_normal((50, 6))
        cands = threshold_candidates(fit(X, k=2), X)
        assert cands == sorted(set(cands)) and len(cands) == 7


class TestPersistence:
    def test_round_trip_is_bit_identical(self, tmp_path):
        X = np.random.default_rng(11).standard_normal((60, 8))
        m = fit(X, k=3).with_threshold(1.5)
        m.save(tmp_path / "m.npz")
        back = PcaModel.load(tmp_path / "m.npz")
        assert back.threshold == 1.5 and back.mode == m.mode
        np.testing.assert_array_equal(back.spe(X), m.spe(X))
        np.testing.assert_array_equal(back.eigenvalues, m.eigenvalues)

    def test_bytes_are_reproducible(self):
        X = np.random.default_rng(12).standard_normal((30, 4))
        assert fit(X, k=2).to_bytes() == fit(X, k=2).to_bytes()

    def test_rejects_other_files(self, tmp_path):
        from sempca.detect_cluster import fit_clusters

        fit_clusters(np.eye(3), 0.5).save(tmp_path / "c.npz")
        with pytest.raises(ValueError):
            PcaModel.load(tmp_path / "c.npz")


matrices = hnp.arrays(
    np.float64,
    st.tuples(st.integers(3, 25), st.integers(1, 8)),
    elements=st.floats(-50, 50, allow_nan=False, allow_infinity=False),
)


@given(matrices, st.data())
def test_projection_properties(X, data):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateDataWarning)
        m = fit(X, k=data.draw(st.integers(1, X.shape[1])))
    v = data.draw(hnp.arrays(np.float64, X.shape[1], elements=st.floats(-50, 50)))
    vc = v - m.mean
    r = m.residual(v)
    scale = 1.0 + float(vc @ vc)
    # idempotent residual projector
    r2 = r - m.components @ (m.components.T @ r)
    assert np.abs(r2 - r).max() <= 1e-9 * scale
    # Pythagoras
    proj = m.components.T @ vc
    assert abs(float(vc @ vc) - float(proj @ proj) - m.spe(v)) <= 1e-9 * scale


@given(st.floats(0.1, 10.0), st.integers(0, 2**31 - 1))
def test_scaling_inputs_scales_spe(c, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((20, 4))
    V = rng.standard_normal((6, 4))
    m1, m2 = fit(X, k=2), fit(c * X, k=2)
    np.testing.assert_allclose(m2.spe(c * V), c**2 * m1.spe(V), rtol=1e-8, atol=1e-10)
    theta = float(np.median(m1.spe(V)))
    flags1 = m1.with_threshold(theta).predict(V)[0]
    flags2 = m2.with_threshold(c**2 * theta).predict(c * V)[0]
    margin = np.abs(m1.spe(V) - theta) > 1e-9 * (1 + theta)
    np.testing.assert_array_equal(flags1[margin], flags2[margin])


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_raising_threshold_never_adds_anomalies(seed, a, b):
    rng = np.random.default_rng(seed)
    m = fit(rng.standard_normal((20, 4)), k=1)
    V = rng.standard_normal((10, 4))
    lo, hi = sorted((a, b))
    assert np.all(m.with_threshold(hi).predict(V)[0] <= m.with_threshold(lo).predict(V)[0])


def test_module_level_helpers_match_methods():
    m = fit(LINE, k=1).with_threshold(1.0)
    v = np.array([0.0, 2.0])
    assert detect_pca.spe(m, v) == m.spe(v)
    assert detect_pca.predict(m, v) == m.predict(v)
