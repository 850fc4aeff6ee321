import numpy as np
import pytest
from scipy.linalg import expm

from lieprop.lie import SO3, AngleAtPi, DiagExp, DomainError, MatrixLieGroup, SO3xR3, ad_matrix, so3
from lieprop.lie.groups import djl_inv_series, jl_inv_series

GROUPS = [SO3(), SO3xR3(), DiagExp(4)]


def random_vectors(rng, n, dim, max_norm):
    x = rng.standard_normal((n, dim))
    r = max_norm * rng.uniform(0, 1, n) ** (1 / dim)
    return x / np.linalg.norm(x, axis=1, keepdims=True) * r[:, None]


def truncated_exp(X, terms=30):
    out = np.eye(X.shape[0])
    term = np.eye(X.shape[0])
    for k in range(1, terms):
        term = term @ X / k
        out = out + term
    return out


# --- hat / vee -------------------------------------------------------------


def test_hat_zero_is_zero_matrix():
    assert np.array_equal(so3.hat(np.zeros(3)), np.zeros((3, 3)))


def test_hat_e1_is_first_basis_matrix():
    E1 = np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float)
    assert np.array_equal(so3.hat([1.0, 0.0, 0.0]), E1)
    assert np.array_equal(SO3().hat(np.array([1.0, 0, 0])), E1)


def test_hat_is_cross_product(rng):
    x, y = rng.standard_normal((2, 3))
    assert np.allclose(so3.hat(x) @ y, np.cross(x, y))
    assert np.allclose(so3.cross(x, y), np.cross(x, y))
    X = rng.standard_normal((5, 3))
    assert np.allclose(so3.cross(X, y), np.cross(X, y))


@pytest.mark.parametrize("group", GROUPS, ids=lambda g: type(g).__name__)
def test_vee_hat_roundtrip(group, rng):
    x = rng.standard_normal((100, group.dim))
    assert np.array_equal(group.vee(group.hat(x)), x)


def test_hat_dimension_mismatch():
    with pytest.raises(ValueError):
        so3.hat(np.zeros(4))


@pytest.mark.parametrize("group", GROUPS, ids=lambda g: type(g).__name__)
def test_basis_is_orthonormal(group):
    flat = group.basis.reshape(group.dim, -1)
    gram = flat @ flat.T
    # so(3) basis matrices have Frobenius norm sqrt(2); the declared metric is half the trace form
    scale = np.diag(gram)
    assert np.allclose(gram, np.diag(scale))


# --- exp / log -------------------------------------------------------------


def test_exp_zero_is_identity():
    assert np.array_equal(so3.exp(np.zeros(3)), np.eye(3))


def test_exp_matches_series():
    x = np.array([np.pi / 2, 0, 0])
    assert np.allclose(so3.exp(x), truncated_exp(so3.hat(x)), atol=1e-14)


def test_exp_batched_matches_single(rng):
    x = random_vectors(rng, 20, 3, 3.0)
    batch = so3.exp(x)
    for xi, Ri in zip(x, batch):
        assert np.allclose(so3.exp(xi), Ri, atol=1e-15)
    assert np.allclose(batch, expm(so3.hat(x)), atol=1e-12)


def test_exp_small_angle_branch():
    x = np.array([3e-5, -1e-5, 2e-5])
    assert np.allclose(so3.exp(x), expm(so3.hat(x)), atol=1e-16)


def test_product_exp_blockwise(rng):
    G = SO3xR3()
    x = rng.standard_normal(6)
    g = G.exp(x)
    assert np.allclose(g.rotation, so3.exp(x[:3]))
    assert np.array_equal(g.momentum, x[3:])


def test_log_identity():
    assert np.array_equal(so3.log(np.eye(3)), np.zeros(3))


def test_log_exp_roundtrip(rng):
    x = random_vectors(rng, 500, 3, 3.0)
    assert np.allclose(so3.log(so3.exp(x)), x, atol=1e-10)


def test_exp_log_roundtrip_near_pi(rng):
    axes = rng.standard_normal((50, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    x = axes * (np.pi - 1e-4)
    R = so3.exp(x)
    assert np.allclose(so3.exp(so3.log(R)), R, atol=1e-10)
    assert np.allclose(so3.log(R), x, atol=1e-8)


def test_log_at_pi_raises():
    R = so3.exp(np.array([3.14159265, 0, 0]))
    with pytest.raises(AngleAtPi):
        so3.log(R)


def test_product_log_roundtrip(rng):
    G = SO3xR3()
    x = np.concatenate([random_vectors(rng, 1, 3, 3.0)[0], rng.standard_normal(3)])
    assert np.allclose(G.log(G.exp(x)), x, atol=1e-10)


def test_product_composition_blockwise(rng):
    G = SO3xR3()
    a, b = G.exp(rng.standard_normal(6)), G.exp(rng.standard_normal(6))
    c = G.compose(a, b)
    assert np.allclose(c.rotation, a.rotation @ b.rotation)
    assert np.allclose(c.momentum, a.momentum + b.momentum)
    assert np.allclose(G.matrix(c), G.matrix(a) @ G.matrix(b))


def test_validate_rejects_non_rotation():
    with pytest.raises(ValueError):
        SO3().validate(np.diag([1.0, 1.0, -1.0]))
    SO3().validate(so3.exp(np.array([0.1, 0.2, 0.3])))


# --- ad / Ad ---------------------------------------------------------------


@pytest.mark.parametrize("group", GROUPS, ids=lambda g: type(g).__name__)
def test_ad_zero(group):
    assert np.array_equal(group.ad(np.zeros(group.dim)), np.zeros((group.dim, group.dim)))


@pytest.mark.parametrize("group", GROUPS, ids=lambda g: type(g).__name__)
def test_ad_matches_bracket_oracle(group, rng):
    x = rng.standard_normal(group.dim)
    assert np.allclose(group.ad(x), ad_matrix(x, group.basis), atol=1e-14)


def test_so3_ad_is_hat():
    x = np.array([1.0, 0, 0])
    assert np.allclose(ad_matrix(x, so3.BASIS), so3.hat(x))


def test_product_ad_momentum_block_zero(rng):
    ad = SO3xR3().ad(rng.standard_normal(6))
    assert np.array_equal(ad[3:, :], np.zeros((3, 6)))
    assert np.array_equal(ad[:, 3:], np.zeros((6, 3)))


@pytest.mark.parametrize("group", GROUPS, ids=lambda g: type(g).__name__)
def test_Ad_identity(group):
    assert np.allclose(group.Ad(group.identity()), np.eye(group.dim))


def test_so3_Ad_is_R(rng):
    R = so3.exp(rng.standard_normal(3))
    G = SO3()
    assert np.allclose(G.Ad(R), MatrixLieGroup.Ad(G, R), atol=1e-14)
    assert np.allclose(G.Ad(R), R)


def test_product_Ad_unimodular(rng):
    G = SO3xR3()
    for x in rng.standard_normal((100, 6)):
        g = G.exp(x)
        assert np.allclose(G.Ad(g), MatrixLieGroup.Ad(G, g), atol=1e-13)
        assert abs(abs(np.linalg.det(G.Ad(g))) - 1.0) < 1e-12


# --- Jacobians -------------------------------------------------------------


@pytest.mark.parametrize("group", GROUPS, ids=lambda g: type(g).__name__)
def test_jacobians_at_zero(group):
    z = np.zeros(group.dim)
    for f in (group.jl, group.jr, group.jl_inv, group.jr_inv):
        assert np.allclose(f(z), np.eye(group.dim))


def test_jl_inv_matches_series_at_half_pi():
    x = np.array([np.pi / 2, 0, 0])
    assert np.allclose(so3.jl_inv(x), jl_inv_series(so3.hat(x), 40), atol=1e-10)
    y = np.array([0, np.pi / 2, 0])
    assert np.allclose(so3.jr_inv(y), jl_inv_series(-so3.hat(y), 40), atol=1e-10)


def test_jr_inv_is_jl_inv_of_negative(rng):
    x = random_vectors(rng, 50, 3, 3.0)
    assert np.allclose(so3.jr_inv(x), so3.jl_inv(-x), atol=1e-14)


def test_inverse_jacobians_invert(rng):
    x = random_vectors(rng, 200, 3, 3.0)
    assert np.allclose(so3.jl_inv(x) @ so3.jl(x), np.eye(3), atol=1e-10)
    assert np.allclose(so3.jr_inv(x) @ so3.jr(x), np.eye(3), atol=1e-10)


def test_inverse_jacobian_coefficient_uses_squared_norm():
    # The X^2 coefficient must be 1/t^2 - (1 + cos t)/(2 t sin t); the variant
    # with 1/t in place of 1/t^2 fails to invert J_l.
    t = 1.3
    x = np.array([t, 0, 0])
    X = so3.hat(x)
    wrong = np.eye(3) - X / 2 + (1 / t - (1 + np.cos(t)) / (2 * t * np.sin(t))) * X @ X
    assert not np.allclose(wrong @ so3.jl(x), np.eye(3), atol=1e-3)
    assert np.allclose(so3.jl_inv(x) @ so3.jl(x), np.eye(3), atol=1e-14)


def test_small_angle_jacobians_continuous():
    x = np.array([0.99e-4, 0, 0])
    y = np.array([1.01e-4, 0, 0])
    assert np.allclose(so3.jl_inv(x), so3.jl_inv(y), atol=1e-5)
    assert np.allclose(so3.jl_inv(x), jl_inv_series(so3.hat(x), 10), atol=1e-15)


def test_jl_inv_domain_error():
    with pytest.raises(DomainError):
        so3.jl_inv(np.array([np.pi, 0, 0]))
    with pytest.raises(DomainError):
        SO3xR3().jr_inv(np.array([0, 0, 3.2, 1, 1, 1]))


def test_Ad_equals_jl_times_jr_inv(rng):
    G = SO3xR3()
    for x in rng.standard_normal((50, 6)):
        assert np.allclose(G.Ad(G.exp(x)), G.jl(x) @ G.jr_inv(x), atol=1e-9)
        assert np.allclose(G.jl_inv(x) @ G.Ad(G.exp(x)), G.jr_inv(x), atol=1e-9)


@pytest.mark.parametrize("group", [SO3(), SO3xR3()], ids=lambda g: type(g).__name__)
def test_closed_forms_match_generic_construction(group, rng):
    x = rng.standard_normal(group.dim)
    x[:3] *= 0.5
    assert np.allclose(group.jl_inv(x), MatrixLieGroup.jl_inv(group, x), atol=1e-12)
    assert np.allclose(group.jr_inv(x), MatrixLieGroup.jr_inv(group, x), atol=1e-12)
    assert np.allclose(group.jl(x), MatrixLieGroup.jl(group, x), atol=1e-12)


def test_product_jacobians_block_diagonal(rng):
    G = SO3xR3()
    x = rng.standard_normal(6)
    for f, g in ((G.jl, so3.jl), (G.jr, so3.jr), (G.jl_inv, so3.jl_inv), (G.jr_inv, so3.jr_inv)):
        J = f(x)
        assert np.allclose(J[:3, :3], g(x[:3]))
        assert np.array_equal(J[3:, 3:], np.eye(3))
        assert not J[:3, 3:].any() and not J[3:, :3].any()


def test_unimodular_jacobian_determinants(rng):
    x = random_vectors(rng, 200, 3, 3.0)
    assert np.allclose(np.abs(np.linalg.det(so3.jl(x))), np.abs(np.linalg.det(so3.jr(x))), atol=1e-9)


# --- Bernoulli series --------------------------------------------------------


def test_series_order_zero(rng):
    ad = so3.hat(rng.standard_normal(3))
    assert np.allclose(jl_inv_series(ad, 0), np.eye(3) - ad / 2)


def test_series_printed_coefficients(rng):
    ad = so3.hat(rng.standard_normal(3))
    ad2 = ad @ ad
    expected = np.eye(3) - ad / 2 + ad2 / 12 - ad2 @ ad2 / 720
    assert np.allclose(jl_inv_series(ad, 2), expected, atol=1e-15)


def test_series_rejects_negative_order():
    with pytest.raises(ValueError):
        jl_inv_series(np.zeros((3, 3)), -1)


def test_series_order20_matches_closed_form(rng):
    x = random_vectors(rng, 200, 3, 2.0)
    assert np.abs(jl_inv_series(so3.hat(x), 20) - so3.jl_inv(x)).max() < 1e-9


# --- derivative of the inverse Jacobian ----------------------------------------


def finite_difference(f, x, h=1e-6):
    return np.stack([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(len(x))])


@pytest.mark.parametrize("group", [SO3(), SO3xR3()], ids=lambda g: type(g).__name__)
def test_djl_inv_at_zero(group):
    d = group.djl_inv_dx(np.zeros(group.dim))
    ad = group.ad_basis()
    assert np.allclose(d, -0.5 * ad, atol=1e-15)
    assert np.allclose(MatrixLieGroup.djl_inv_dx(group, np.zeros(group.dim)), -0.5 * ad)


def test_djl_inv_matches_finite_difference(rng):
    for x in random_vectors(rng, 30, 3, np.pi - 0.1):
        assert np.abs(so3.djl_inv_dx(x) - finite_difference(so3.jl_inv, x)).max() < 1e-5


def test_series_derivative_matches_finite_difference(rng):
    G = SO3()
    for x in random_vectors(rng, 10, 3, 0.5):
        fd = finite_difference(G.jl_inv, x)
        series = djl_inv_series(G.ad(x), G.ad_basis(), 6)
        assert np.abs(series - fd).max() < 1e-5


def test_product_djl_inv_zero_momentum_block(rng):
    G = SO3xR3()
    x = rng.standard_normal(6)
    d = G.djl_inv_dx(x)
    assert not d[3:].any()
    assert not d[:, 3:, :].any() and not d[:, :, 3:].any()
    assert np.abs(d - finite_difference(G.jl_inv, x)).max() < 1e-5


def test_djl_inv_domain_error():
    with pytest.raises(DomainError):
        so3.djl_inv_dx(np.array([0, 0, 4.0]))


def test_diagexp_commutative():
    G = DiagExp(3)
    x = np.array([0.1, -0.2, 0.3])
    assert np.allclose(G.matrix(G.exp(x)), np.diag(np.exp(x)))
    assert not G.ad(x).any()
    assert np.array_equal(G.jl_inv(x), np.eye(3))
    with pytest.raises(ValueError):
        DiagExp(0)
