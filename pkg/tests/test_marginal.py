import mpmath
import numpy as np
import pytest

from pseudosel.marginal import bernoulli_contrib, gaussian_contrib


def fd_gradient(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (f(x + e) - f(x - e)) / (2 * e[i])
    return g


def test_gaussian_at_mode():
    c = gaussian_contrib(0.0, np.zeros(3), np.zeros(4), 1.0)
    assert c.loglik == pytest.approx(-0.5 * np.log(2 * np.pi))
    assert c.loglik == pytest.approx(-0.91894, abs=1e-5)
    np.testing.assert_array_equal(c.score, 0)


def test_gaussian_unit_residual():
    c = gaussian_contrib(1.0, np.array([1.0]), np.zeros(2), 1.0)
    np.testing.assert_array_equal(c.score, [1.0, 1.0])


def test_bernoulli_at_half():
    x = np.array([0.3, -2.0])
    c1 = bernoulli_contrib(1, x, np.zeros(3))
    assert c1.loglik == pytest.approx(np.log(0.5))
    assert c1.loglik == pytest.approx(-0.69315, abs=1e-5)
    np.testing.assert_allclose(c1.score, 0.5 * np.r_[1.0, x])
    c0 = bernoulli_contrib(0, x, np.zeros(3))
    np.testing.assert_allclose(c0.score, -0.5 * np.r_[1.0, x])


def test_bernoulli_extreme_eta_is_stable():
    c = bernoulli_contrib(1, np.array([]), np.array([40.0]), hessian=True)
    mpmath.mp.dps = 50
    exact = float(-mpmath.log(1 + mpmath.exp(-40)))
    assert c.loglik == pytest.approx(exact, rel=1e-10)
    assert np.all(np.isfinite(c.neg_hessian))
    assert c.neg_hessian[0, 0] == pytest.approx(0.0, abs=1e-11)
    c0 = bernoulli_contrib(0, np.array([]), np.array([40.0]))
    assert c0.loglik == pytest.approx(float(-40 - mpmath.log(1 + mpmath.exp(-40))), rel=1e-12)


@pytest.mark.parametrize("seed", range(25))
@pytest.mark.parametrize("family", ["gaussian", "bernoulli"])
def test_score_and_hessian_match_finite_differences(family, seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 5))
    x = rng.standard_normal(p)
    params = 0.7 * rng.standard_normal(p + 1)
    if family == "gaussian":
        y, s2 = float(rng.normal(0, 2)), float(rng.uniform(0.3, 3))
        f = lambda th: gaussian_contrib(y, x, th, s2, hessian=True)
    else:
        y = int(rng.integers(0, 2))
        f = lambda th: bernoulli_contrib(y, x, th, hessian=True)
    c = f(params)
    np.testing.assert_allclose(c.score, fd_gradient(lambda t: f(t).loglik, params),
                               rtol=1e-6, atol=1e-8)
    jac = np.array([fd_gradient(lambda t: f(t).score[i], params) for i in range(p + 1)])
    np.testing.assert_allclose(c.neg_hessian, -jac, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(c.neg_hessian, c.neg_hessian.T)
    assert np.linalg.eigvalsh(c.neg_hessian).min() >= -1e-10


@pytest.mark.parametrize("seed", range(10))
def test_bernoulli_label_flip_symmetry(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(3)
    params = rng.standard_normal(4)
    for y in (0, 1):
        a = bernoulli_contrib(y, x, params)
        b = bernoulli_contrib(1 - y, x, -params)
        assert a.loglik == pytest.approx(b.loglik, rel=1e-12)
        # eta -> -eta via the parameters flips the score sign
        np.testing.assert_allclose(a.score, -b.score, rtol=1e-12)


def test_hessian_is_lazy():
    assert gaussian_contrib(0.0, np.ones(2), np.zeros(3)).neg_hessian is None
    assert bernoulli_contrib(1, np.ones(2), np.zeros(3)).neg_hessian is None
