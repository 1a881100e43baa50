import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lsmselect.core import (
    ActiveSet,
    CovariateMatrix,
    Hyperparams,
    LatentState,
    Network,
    center_alpha,
    center_columns,
    default_lambda_grid,
    diagonalize_covariance,
    validate_pair,
)
from lsmselect.exceptions import (
    AsymmetricAdjacency,
    DegenerateCovariance,
    DimensionMismatch,
    NonBinaryEntry,
    SelfLoopPresent,
    ValidationError,
)
from lsmselect.simulate import SimConfig, generate

finite = st.floats(-50, 50, allow_nan=False)


def test_validate_pair_accepts_zero_instance():
    validate_pair(Network(np.zeros((3, 3))), CovariateMatrix(np.zeros((3, 2))))


def test_validate_pair_rejects_asymmetry():
    A = np.zeros((3, 3))
    A[0, 1] = 1
    with pytest.raises(AsymmetricAdjacency):
        validate_pair(Network(A), CovariateMatrix(np.zeros((3, 2))))


def test_validate_pair_rejects_row_mismatch():
    with pytest.raises(DimensionMismatch):
        validate_pair(Network(np.zeros((3, 3))), CovariateMatrix(np.zeros((4, 2))))


def test_validate_pair_rejects_loops_and_nonbinary():
    A = np.eye(3)
    with pytest.raises(SelfLoopPresent):
        validate_pair(Network(A), CovariateMatrix(np.zeros((3, 1))))
    B = np.zeros((3, 3))
    B[0, 1] = B[1, 0] = 2
    with pytest.raises(NonBinaryEntry) as info:
        validate_pair(Network(B), CovariateMatrix(np.zeros((3, 1))))
    assert info.value.location == (0, 1)
    with pytest.raises(NonBinaryEntry):
        validate_pair(Network(np.zeros((3, 3))), CovariateMatrix(np.full((3, 1), np.nan)))


def test_validate_pair_accepts_simulated_data():
    for seed in range(3):
        net, cov, _ = generate(SimConfig(n=30, q=4, seed=seed))
        validate_pair(net, cov)


def test_center_columns_examples():
    np.testing.assert_allclose(center_columns([[1.0], [3.0]]), [[-1.0], [1.0]])
    Z = center_columns(np.random.default_rng(0).standard_normal((10, 2)))
    np.testing.assert_allclose(center_columns(Z), Z, atol=1e-12)


def test_center_columns_matches_elementwise_oracle(rng):
    Z = rng.standard_normal((10, 2))
    oracle = np.array([[Z[i, c] - sum(Z[r, c] for r in range(10)) / 10 for c in range(2)]
                       for i in range(10)])
    out = center_columns(Z)
    np.testing.assert_allclose(out, oracle, atol=1e-12)
    np.testing.assert_allclose(out.sum(axis=0), 0, atol=1e-12)


def test_center_alpha_examples(rng):
    np.testing.assert_allclose(center_alpha(np.full(4, 2.5)), 0, atol=1e-15)
    np.testing.assert_allclose(center_alpha([1.0, 2.0, 3.0]), [-1.0, 0.0, 1.0])
    a = rng.standard_normal(9)
    c = center_alpha(a)
    assert abs(c.sum()) < 1e-12
    np.testing.assert_allclose(np.diff(c), np.diff(a), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(float, (7, 3), elements=finite), arrays(float, 7, elements=finite))
def test_centering_is_idempotent(Z, a):
    once = center_columns(Z)
    np.testing.assert_allclose(center_columns(once), once, atol=1e-12)
    np.testing.assert_allclose(center_alpha(center_alpha(a)), center_alpha(a), atol=1e-12)


def _eig2(S):
    # closed-form eigenvalues of a symmetric 2x2 matrix
    a, b, d = S[0, 0], S[0, 1], S[1, 1]
    mid, rad = (a + d) / 2, np.hypot((a - d) / 2, b)
    return np.array([mid + rad, mid - rad])


def test_diagonalize_covariance_against_2x2_oracle(rng):
    Z = center_columns(rng.standard_normal((50, 2)) @ np.array([[1.0, 0.6], [0.0, 0.7]]))
    beta = rng.standard_normal((2, 3))
    Z2, beta2, Q = diagonalize_covariance(Z, beta)
    S2 = Z2.T @ Z2 / 50
    assert abs(S2[0, 1]) < 1e-8
    np.testing.assert_allclose(np.diag(S2), _eig2(Z.T @ Z / 50), rtol=1e-10)
    np.testing.assert_allclose(Q.T @ Q, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(Z2 @ beta2, Z @ beta, atol=1e-10)
    np.testing.assert_allclose(Z2 @ Z2.T, Z @ Z.T, atol=1e-10)


def test_diagonalize_covariance_identity_when_already_diagonal():
    Z = np.array([[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    _, _, Q = diagonalize_covariance(Z, np.zeros((2, 0)))
    np.testing.assert_allclose(Q, np.eye(2), atol=1e-12)


def test_diagonalize_covariance_sign_convention(rng):
    Z = center_columns(rng.standard_normal((30, 3)))
    _, _, Q = diagonalize_covariance(Z, np.zeros((3, 1)))
    for c in range(3):
        assert Q[np.argmax(np.abs(Q[:, c])), c] > 0
    _, _, Q2 = diagonalize_covariance(-Z, np.zeros((3, 1)))
    np.testing.assert_allclose(Q2, Q, atol=1e-12)


def test_diagonalize_covariance_warns_when_rank_deficient():
    Z = np.array([[1.0, 2.0], [-1.0, -2.0], [2.0, 4.0], [-2.0, -4.0]])
    with pytest.warns(DegenerateCovariance):
        diagonalize_covariance(Z, np.zeros((2, 1)))


def test_value_types_are_read_only():
    net = Network(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        net.adjacency[0, 1] = 1
    cov = CovariateMatrix(np.zeros((2, 2)))
    assert cov.names == ("Y0", "Y1")
    with pytest.raises(ValidationError):
        CovariateMatrix(np.zeros((2, 2)), ("a", "a"))


def test_latent_state_validation():
    with pytest.raises(DimensionMismatch):
        LatentState(np.zeros((3, 2)), np.zeros(4), np.zeros((2, 1)), np.zeros(1))
    with pytest.raises(ValidationError):
        LatentState(np.full((3, 2), np.inf), np.zeros(3), np.zeros((2, 1)), np.zeros(1))
    s = LatentState(np.zeros((3, 2)), np.zeros(3), np.zeros((2, 0)), np.zeros(0))
    assert (s.n, s.k, s.q) == (3, 2, 0)


def test_active_set_from_norms():
    act = ActiveSet.from_norms([0.0, 1e-7, 2e-6, 1.0], 1e-6)
    assert act.indices == (2, 3)
    assert 3 in act and 0 not in act and len(act) == 2
    with pytest.raises(ValidationError):
        ActiveSet((2, 1))


def test_hyperparams_validation():
    h = Hyperparams()
    assert h.lambda_weight == 0.1 and h.optimizer_kind == "adam" and len(h.delta_grid) == 11
    for bad in ({"lambda_weight": -1}, {"eta0": 0}, {"optimizer_kind": "sgd"},
                {"selection_criterion": "bic"}, {"delta_grid": (0.0, 0.6)},
                {"lambda_grid": (0.0, 1.0)}, {"aic_loss": "other"}):
        with pytest.raises(ValidationError):
            Hyperparams(**bad)


def test_default_lambda_grid_contains_anchor():
    grid = default_lambda_grid(200, 2)
    anchor = np.sqrt(2 / 200)
    assert len(grid) == 20
    assert anchor in grid
    np.testing.assert_allclose([grid[0], grid[-1]], [0.01 * anchor, 10 * anchor])
    assert all(b > a for a, b in zip(grid, grid[1:]))
