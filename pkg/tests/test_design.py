import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from eidesign import (
    Basis,
    DCriterion,
    Design,
    DimensionError,
    EICriterion,
    GlmModel,
    InfoMatrix,
    MeasureSpec,
    PhiPCriterion,
    SingularInformationError,
    compute_A,
    criterion_value,
    fisher_information,
    spd_matrix_power,
)

from oracles import d_dense, ei_dense, info_dense, phi_p_dense

# logistic weights at x = -1 and x = 1 for beta = (0.2, 1.6), 30-digit mpmath
W_MINUS, W_PLUS = 0.15868489749561463406, 0.12172934028708538677
# tr(A I^{-1}) for the design {(-1, 1/2), (1, 1/2)}, A from the Simpson oracle
EI_EX2A_PM1 = 0.3908659289677603


def identity_model(basis=None, d=1):
    basis = basis or Basis.linear(d)
    return GlmModel(basis, "identity", np.zeros(basis.size), [[-1, 1]] * basis.dim)


class TestDesign:
    def test_valid(self):
        d = Design([[0.0], [1.0]], [0.25, 0.75])
        assert d.size == 2 and d.dim == 1

    def test_one_dimensional_points_are_columns(self):
        assert Design([0.0, 1.0], [0.5, 0.5]).points.shape == (2, 1)

    @pytest.mark.parametrize("w", [[0.5, 0.6], [1.2, -0.2]])
    def test_rejects_bad_weights(self, w):
        with pytest.raises(ValueError):
            Design([[0.0], [1.0]], w)

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError, match="distinct"):
            Design([[0.0, 1.0], [0.0, 1.0 + 1e-14]], [0.5, 0.5])

    def test_near_but_distinct_allowed(self):
        Design([[0.0], [2e-12]], [0.5, 0.5])

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            Design([[0.0], [1.0]], [1.0])

    def test_immutable(self):
        d = Design([[0.0], [1.0]], [0.5, 0.5])
        with pytest.raises(ValueError):
            d.weights[0] = 1.0

    def test_from_points_merges(self):
        d = Design.from_points([[0.0], [1.0], [1e-13]], [0.2, 0.5, 0.3])
        assert d.size == 2
        np.testing.assert_allclose(d.weights, [0.5, 0.5])

    def test_from_points_uniform_default(self):
        np.testing.assert_allclose(Design.from_points([[0.0], [1.0], [2.0], [3.0]]).weights, 0.25)

    def test_index_of(self):
        d = Design([[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5])
        assert d.index_of([1.0, 0.0]) == 1 and d.index_of([0.5, 0.5]) is None

    def test_csv_round_trip(self):
        rng = np.random.default_rng(4)
        lam = rng.dirichlet(np.ones(7))
        d = Design(rng.uniform(-1, 1, (7, 3)), lam)
        text = d.to_csv()
        assert text.splitlines()[0] == "x1,x2,x3,weight"
        back = Design.from_csv(text)
        np.testing.assert_array_equal(back.points, d.points)
        np.testing.assert_allclose(back.weights, d.weights, rtol=1e-11)


class TestFisherInformation:
    def test_symmetric_pair(self):
        I = fisher_information(Design([[-1.0], [1.0]], [0.5, 0.5]), identity_model()).I
        np.testing.assert_allclose(I, np.eye(2), atol=1e-15)

    def test_single_point_logit(self):
        m = GlmModel(Basis(((0,),), 1), "logit", [0.0], [[-1, 1]])
        np.testing.assert_allclose(fisher_information(Design([[0.4]], [1.0]), m).I, [[0.25]])

    def test_example_2a_pair(self):
        m = GlmModel(Basis.linear(1), "logit", [0.2, 1.6], [[-1, 1]])
        I = fisher_information(Design([[-1.0], [1.0]], [0.5, 0.5]), m).I
        s, dlt = (W_MINUS + W_PLUS) / 2, (W_PLUS - W_MINUS) / 2
        np.testing.assert_allclose(I, [[s, dlt], [dlt, s]], rtol=1e-14)


class TestCriteria:
    def test_ei_identity(self):
        assert EICriterion(np.eye(2)).value(InfoMatrix(np.eye(2))) == pytest.approx(2.0)

    def test_phi1_diag(self):
        c = PhiPCriterion(1.0, l=2)
        assert c.q == 2
        assert c.value(InfoMatrix(np.diag([1, 1 / 3]))) == pytest.approx(2.0, rel=1e-14)

    def test_ei_example_2a(self):
        m = GlmModel(Basis.linear(1), "logit", [0.2, 1.6], [[-1, 1]])
        crit = EICriterion(compute_A(m, MeasureSpec.uniform([[-1, 1]])))
        val = criterion_value(Design([[-1.0], [1.0]], [0.5, 0.5]), m, crit)
        assert val == pytest.approx(EI_EX2A_PM1, rel=1e-7)

    def test_d_value(self):
        I = np.array([[2.0, 0.3], [0.3, 1.0]])
        assert DCriterion().value(InfoMatrix(I)) == pytest.approx(-np.log(np.linalg.det(I)), rel=1e-14)

    def test_singular_raises_with_condition(self):
        m = identity_model()
        with pytest.raises(SingularInformationError) as err:
            criterion_value(Design([[0.5]], [1.0]), m, DCriterion())
        assert err.value.condition == np.inf or err.value.condition > 1e12

    @pytest.mark.parametrize("p", [0.5, 1.0, 1.7, 2.0, 3.0])
    def test_phi_p_matches_dense(self, p):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(6, 3))
        I = X.T @ X / 6
        Bh = rng.normal(size=(2, 3))
        B = Bh.T @ Bh
        c = PhiPCriterion(p, B=B)
        assert c.q == 2
        assert c.value(InfoMatrix(I)) == pytest.approx(phi_p_dense(I, B, p, 2), rel=1e-11)

    def test_integer_fast_path_agrees_with_eigen_path(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(8, 4))
        info = InfoMatrix(X.T @ X)
        for p in (1.0, 2.0, 3.0):
            fast = PhiPCriterion(p, l=4).state(info)
            H = info.inv_sqrt()
            Mp = spd_matrix_power(H @ np.eye(4) @ H, p)
            np.testing.assert_allclose(fast.K, H @ Mp @ H, rtol=1e-10)

    def test_q_must_match_rank(self):
        with pytest.raises(ValueError, match="rank"):
            PhiPCriterion(1.0, B=np.diag([1.0, 0.0]), q=2)

    def test_B_must_be_psd(self):
        with pytest.raises(ValueError):
            PhiPCriterion(1.0, B=np.diag([1.0, -1.0]))

    def test_p_positive(self):
        with pytest.raises(ValueError):
            PhiPCriterion(0.0, l=2)

    def test_A_must_be_symmetric(self):
        with pytest.raises(ValueError):
            EICriterion(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            EICriterion(np.eye(3)).value(InfoMatrix(np.eye(2)))


class TestMatrixPower:
    def test_sqrt_diag(self):
        np.testing.assert_allclose(spd_matrix_power(np.diag([4.0, 9.0]), 0.5), np.diag([2.0, 3.0]), rtol=1e-14)

    def test_power_one_and_zero(self):
        M = np.array([[2.0, 0.5], [0.5, 1.0]])
        np.testing.assert_allclose(spd_matrix_power(M, 1), M, rtol=1e-12)
        np.testing.assert_array_equal(spd_matrix_power(M, 0), np.eye(2))

    def test_split_power(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(5, 3))
        M = X.T @ X
        P = spd_matrix_power(M, 0.7) @ spd_matrix_power(M, 0.3)
        np.testing.assert_allclose(P, M, rtol=1e-10, atol=1e-10 * np.abs(M).max())

    def test_clamps_tiny_negative(self):
        M = np.diag([1.0, -1e-13])
        np.testing.assert_allclose(spd_matrix_power(M, 0.5), np.diag([1.0, 0.0]))

    def test_rejects_negative_eigenvalue(self):
        with pytest.raises(ValueError):
            spd_matrix_power(np.diag([1.0, -0.1]), 0.5)

    def test_rejects_negative_power_of_singular(self):
        with pytest.raises(ValueError):
            spd_matrix_power(np.diag([1.0, 0.0]), -0.5)


# --- properties over random designs ---------------------------------------

LINKS = st.sampled_from(["logit", "log", "identity"])


@st.composite
def instances(draw, min_extra=1):
    d = draw(st.integers(1, 3))
    link = draw(LINKS)
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    basis = Basis.linear(d)
    model = GlmModel(basis, link, rng.uniform(-2, 2, basis.size), [[-1, 1]] * d)
    n = basis.size + draw(st.integers(min_extra, 5))
    pts = rng.uniform(-1, 1, (n, d))
    return model, pts, rng


def criteria_for(model, rng):
    l = model.n_params
    A = compute_A(model, MeasureSpec.uniform([[-1, 1]] * model.dim))
    Bh = rng.normal(size=(l, l))
    return [EICriterion(A), PhiPCriterion(1.0, l=l), PhiPCriterion(2.0, B=Bh.T @ Bh),
            PhiPCriterion(0.6, l=l), DCriterion()]


@given(instances(), st.floats(0, 1))
def test_information_is_linear_in_weights(inst, a):
    model, pts, rng = inst
    l1, l2 = rng.dirichlet(np.ones(len(pts))), rng.dirichlet(np.ones(len(pts)))
    I1 = fisher_information(Design(pts, l1), model).I
    I2 = fisher_information(Design(pts, l2), model).I
    mix = (1 - a) * l1 + a * l2
    Im = fisher_information(Design(pts, mix / mix.sum()), model).I
    np.testing.assert_allclose(Im, (1 - a) * I1 + a * I2, rtol=1e-12, atol=1e-12 * np.abs(Im).max())


@given(instances())
def test_criteria_are_convex_in_weights(inst):
    model, pts, rng = inst
    l1, l2 = rng.dirichlet(np.ones(len(pts))), rng.dirichlet(np.ones(len(pts)))
    for crit in criteria_for(model, rng):
        try:
            f1 = criterion_value(Design(pts, l1), model, crit)
            f2 = criterion_value(Design(pts, l2), model, crit)
        except SingularInformationError:
            assume(False)
        for a in (0.25, 0.5, 0.75):
            mix = (1 - a) * l1 + a * l2
            fm = criterion_value(Design(pts, mix / mix.sum()), model, crit)
            assert fm <= (1 - a) * f1 + a * f2 + 1e-10 * max(1.0, abs(f1), abs(f2))


@given(instances(), st.floats(1e-3, 1.0))
def test_adding_information_never_increases_criterion(inst, eps):
    model, pts, rng = inst
    lam = rng.dirichlet(np.ones(len(pts)))
    info = fisher_information(Design(pts, lam), model)
    assume(not info.is_singular)
    x = rng.uniform(-1, 1, model.dim)
    g = model.design_matrix(x[None])[0]
    bumped = InfoMatrix(info.I + eps * model.weights(x[None])[0] * np.outer(g, g))
    for crit in criteria_for(model, rng):
        before, after = crit.value(info), crit.value(bumped)
        assert after <= before + 1e-12 * max(1.0, abs(before))


@given(instances())
def test_ei_is_phi1_with_B_equal_A(inst):
    model, pts, rng = inst
    A = compute_A(model, MeasureSpec.uniform([[-1, 1]] * model.dim)).A
    des = Design(pts, rng.dirichlet(np.ones(len(pts))))
    info = fisher_information(des, model)
    assume(not info.is_singular)
    ei = EICriterion(A).value(info)
    phi1 = PhiPCriterion(1.0, B=A).value(info)
    q = PhiPCriterion(1.0, B=A).q
    assert ei == pytest.approx(q * phi1, rel=1e-12)


@given(instances())
def test_criteria_match_dense_oracles(inst):
    model, pts, rng = inst
    lam = rng.dirichlet(np.ones(len(pts)))
    des = Design(pts, lam)
    info = fisher_information(des, model)
    assume(not info.is_singular and info.condition < 1e8)
    I = info_dense(model.design_matrix(pts), model.weights(pts), lam)
    l = model.n_params
    A = compute_A(model, MeasureSpec.uniform([[-1, 1]] * model.dim)).A
    assert EICriterion(A).value(info) == pytest.approx(ei_dense(I, A), rel=1e-8)
    assert DCriterion().value(info) == pytest.approx(d_dense(I), rel=1e-8, abs=1e-8)
    for p in (0.5, 1.0, 2.5):
        assert PhiPCriterion(p, l=l).value(info) == pytest.approx(phi_p_dense(I, np.eye(l), p, l), rel=1e-8)
