import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import fake_fit
from oracles import hochberg_bruteforce, holm_bruteforce, hommel_bruteforce, random_instance
from proftest.em import fit_em
from proftest.errors import DimensionError, DomainError, InputError, RankError
from proftest.inference import (
    adjust_pvalues,
    confidence_ellipse,
    lab_contrast,
    wald_composite,
    wald_global,
    wald_individual,
    wald_report,
)
from proftest.model import Measurements
from proftest.special import chi2_quantile

ADJ_RAW = [0.0, 0.0, 0.373784, 0.036163, 0.004209, 0.0, 0.000153]
ADJ_EXPECTED = [0.0, 0.0, 0.373784, 0.072326, 0.012628, 0.0, 0.000614]


def random_spd(rng, k):
    A = rng.normal(size=(k, k))
    return A @ A.T + k * np.eye(k)


class TestWaldGlobal:
    def test_null_estimate(self):
        fit = fake_fit([0.0, 0.0], [1.0, 1.0], random_spd(np.random.default_rng(0), 4))
        q, df, p = wald_global(fit)
        assert (q, df, p) == (0.0, 4, 1.0)

    def test_identity_quadratic_form(self):
        q, df, _ = wald_global(fake_fit([1.0], [2.0], np.eye(2)))
        assert q == pytest.approx(2.0, abs=1e-15) and df == 2


class TestWaldComposite:
    def test_zero_contrast(self):
        fit = fake_fit([0.3, -0.2], [1.1, 0.9], random_spd(np.random.default_rng(1), 4))
        assert wald_composite(fit, np.zeros(2), np.eye(4)[:, :2]).statistic == 0.0

    def test_selector_equals_individual(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            fit = fake_fit(rng.normal(size=3), rng.uniform(0.8, 1.2, 3), random_spd(rng, 6))
            for lab in (2, 3, 4):
                h, H = lab_contrast(fit, lab)
                a = wald_composite(fit, h, H).statistic
                b = wald_individual(fit, lab).statistic
                assert a == pytest.approx(b, rel=1e-10)

    def test_matches_dense_product(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            J = random_spd(rng, 6)
            fit = fake_fit(rng.normal(size=3), rng.uniform(0.8, 1.2, 3), J)
            r = int(rng.integers(1, 7))
            H = rng.normal(size=(6, r))
            h = rng.normal(size=r)
            ref = h @ np.linalg.inv(H.T @ np.linalg.inv(J) @ H) @ h
            res = wald_composite(fit, h, H)
            assert res.statistic == pytest.approx(ref, rel=1e-9)
            assert res.df == r

    def test_rank_deficient(self):
        fit = fake_fit([0.1, 0.2], [1.0, 1.0], np.eye(4))
        H = np.ones((4, 2))
        with pytest.raises(RankError):
            wald_composite(fit, [0.1, 0.1], H)

    def test_shape_errors(self):
        fit = fake_fit([0.1, 0.2], [1.0, 1.0], np.eye(4))
        with pytest.raises(InputError):
            wald_composite(fit, [0.1], np.eye(3)[:, :1])
        with pytest.raises(InputError):
            wald_composite(fit, [0.1, 0.2], np.eye(4)[:, :1])


class TestWaldIndividual:
    def test_null(self):
        fit = fake_fit([0.0, 0.4], [1.0, 1.3], random_spd(np.random.default_rng(4), 4))
        assert wald_individual(fit, 2).statistic == 0.0

    def test_unit_covariance(self):
        q, df, _ = wald_individual(fake_fit([1.0], [1.0], np.eye(2)), 2)
        assert q == pytest.approx(1.0, abs=1e-15) and df == 2

    @pytest.mark.parametrize("lab", [0, 1, 4])
    def test_lab_range(self, lab):
        with pytest.raises(InputError):
            wald_individual(fake_fit([0.0, 0.0], [1.0, 1.0], np.eye(4)), lab)


class TestAdjust:
    @pytest.mark.parametrize("method", ["holm", "hochberg", "hommel"])
    def test_reference_vectors(self, method):
        adj = adjust_pvalues(ADJ_RAW, method)
        np.testing.assert_allclose(adj, ADJ_EXPECTED, atol=2e-6, rtol=0)

    @pytest.mark.parametrize("method", ["bonferroni", "holm", "hochberg", "hommel"])
    def test_single(self, method):
        assert adjust_pvalues([0.037], method)[0] == 0.037

    def test_hommel_closure_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            k = int(rng.integers(1, 7))
            p = rng.uniform(0, 1, k) ** 2
            if rng.uniform() < 0.3:
                p[rng.integers(0, k)] = p[0]  # ties
            np.testing.assert_allclose(adjust_pvalues(p, "hommel"), hommel_bruteforce(list(p)), rtol=1e-12, atol=1e-15)

    def test_errors(self):
        with pytest.raises(DomainError):
            adjust_pvalues([0.1, 1.2], "holm")
        with pytest.raises(DomainError):
            adjust_pvalues([0.1, 0.2], "sidak")


probs = st.lists(st.floats(0, 1), min_size=1, max_size=8)


@given(p=probs)
def test_adjustment_ordering(p):
    bonf, holm, hoch, homm = (adjust_pvalues(p, m) for m in ("bonferroni", "holm", "hochberg", "hommel"))
    raw = np.array(p)
    eps = 1e-12
    assert np.all(raw <= homm + eps)
    assert np.all(homm <= hoch + eps)
    assert np.all(hoch <= holm + eps)
    assert np.all(holm <= bonf + eps)
    assert np.all(bonf <= 1.0)
    order = np.argsort(raw, kind="stable")
    for adj in (holm, hoch, homm):
        assert np.all(np.diff(adj[order]) >= -eps)


@given(p=probs)
def test_step_procedures_match_bruteforce(p):
    np.testing.assert_allclose(adjust_pvalues(p, "holm"), holm_bruteforce(p), atol=1e-15)
    np.testing.assert_allclose(adjust_pvalues(p, "hochberg"), hochberg_bruteforce(p), atol=1e-15)


@given(p=st.lists(st.floats(0, 1), min_size=1, max_size=6))
def test_hommel_property(p):
    np.testing.assert_allclose(adjust_pvalues(p, "hommel"), hommel_bruteforce(p), rtol=1e-12, atol=1e-15)


class TestEllipse:
    def test_circle_for_identity(self):
        fit = fake_fit([0.2], [0.9], np.eye(2))
        ell = confidence_ellipse(fit, 2, familywise_level=0.95, comparisons=1)
        assert ell.radius2 == pytest.approx(chi2_quantile(0.95, 2), rel=1e-15)
        r = np.hypot(*(ell.boundary - [0.2, 0.9]).T)
        np.testing.assert_allclose(r, np.sqrt(ell.radius2), rtol=1e-12)
        np.testing.assert_array_equal(ell.boundary[0], ell.boundary[-1])

    def test_bonferroni_level(self):
        fit = fake_fit([0.0] * 7, [1.0] * 7, np.eye(14))
        ell = confidence_ellipse(fit, 3, familywise_level=0.99)
        assert ell.level == pytest.approx(1 - 0.01 / 7, rel=1e-15)

    def test_boundary_on_contour(self):
        rng = np.random.default_rng(6)
        fit = fake_fit(rng.normal(size=3), rng.uniform(0.9, 1.1, 3), random_spd(rng, 6))
        ell = confidence_ellipse(fit, 3)
        assert len(ell.boundary) >= 129
        np.testing.assert_allclose(ell.mahalanobis2(ell.boundary), ell.radius2, rtol=1e-10)

    def test_containment_agrees_with_individual_test(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            fit = fake_fit(rng.normal(0, 0.05, 3), rng.normal(1, 0.05, 3), random_spd(rng, 6) * 100)
            lab = int(rng.integers(2, 5))
            ell = confidence_ellipse(fit, lab)
            q = wald_individual(fit, lab).statistic
            assert ell.contains([0.0, 1.0]) == (q <= ell.radius2)

    def test_argument_checks(self):
        fit = fake_fit([0.0], [1.0], np.eye(2))
        with pytest.raises(DomainError):
            confidence_ellipse(fit, 2, familywise_level=1.0)
        with pytest.raises(DomainError):
            confidence_ellipse(fit, 2, n_points=10)


class TestReport:
    def test_null_report_retains_all(self):
        fit = fake_fit([0.0] * 3, [1.0] * 3, np.eye(6))
        rep = wald_report(fit, labels=["ref", "a", "b", "c"])
        assert rep.q_global == 0.0
        assert all(t.statistic == 0.0 for t in rep.labs)
        assert set(rep.verdicts.values()) == {"retain"}
        assert [t.label for t in rep.labs] == ["a", "b", "c"]

    def test_verdict_uses_chosen_method(self):
        fit = fake_fit([0.0, 0.5], [1.0, 1.0], np.diag([1.0, 40.0, 1.0, 1.0]))
        rep = wald_report(fit, method="bonferroni", alpha=0.05)
        lab3 = rep.labs[1]
        assert lab3.reject == (lab3.p_adjusted["bonferroni"] <= 0.05)

    def test_bad_method(self):
        with pytest.raises(DomainError):
            wald_report(fake_fit([0.0], [1.0], np.eye(2)), method="fdr")


@given(seed=st.integers(0, 2**32 - 1))
def test_relabelling_participants(seed):
    # permuting labs 2..p permutes the individual statistics and leaves the global one unchanged
    rng = np.random.default_rng(seed)
    design, _, data = random_instance(rng, p_max=4)
    if design.p < 3:
        return
    perm = [0] + list(1 + rng.permutation(design.p - 1))
    design2 = type(design)(design.sigma2_x, design.sigma2[perm], tuple(design.n[i] for i in perm))
    data2 = Measurements(tuple(data.y[i] for i in perm))
    a, b = fit_em(data, design), fit_em(data2, design2)
    if not (a.converged and b.converged):
        return
    assert wald_global(b).statistic == pytest.approx(wald_global(a).statistic, rel=1e-5, abs=1e-8)
    for new_pos, old in enumerate(perm[1:], start=2):
        qa = wald_individual(a, old + 1).statistic
        qb = wald_individual(b, new_pos).statistic
        assert qb == pytest.approx(qa, rel=1e-5, abs=1e-8)


def test_dimension_error_is_input_error():
    assert issubclass(DimensionError, InputError)
