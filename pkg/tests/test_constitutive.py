import numpy as np
import pytest

from thermotumor import ModelParams, ParameterError
from thermotumor.constitutive import (
    beta,
    clamp_count,
    h_interp,
    h_prime,
    kappa,
    kappa_prime,
    potential_d2F,
    potential_dF,
    potential_F,
)


def test_well_minima_and_values():
    assert potential_F(1.0) == 0.0
    assert potential_F(-1.0) == 0.0
    assert potential_F(0.0) == 1.0
    assert potential_dF(0.0) == 0.0
    assert beta(2.0) == 32.0


def test_beta_splitting_identity_exact():
    r = np.random.default_rng(0).uniform(-3, 3, 100)
    assert np.all(potential_dF(r) == beta(r) - 4 * r)


def test_derivatives_consistent():
    r = np.linspace(-2, 2, 41)
    eps = 1e-6
    np.testing.assert_allclose((potential_F(r + eps) - potential_F(r - eps)) / (2 * eps), potential_dF(r), atol=1e-6)
    np.testing.assert_allclose((potential_dF(r + eps) - potential_dF(r - eps)) / (2 * eps), potential_d2F(r), atol=1e-6)


def test_beta_monotone_and_growth_bound():
    a = np.random.default_rng(1).uniform(-10, 10, (2, 2000))
    assert np.all((beta(a[0]) - beta(a[1])) * (a[0] - a[1]) >= 0)
    r = np.linspace(-10, 10, 10001)
    assert np.all(np.abs(beta(r)) <= 8 * (1 + potential_F(r)))
    assert np.all(potential_F(r) >= 0)


def test_beta_with_larger_lambda_stays_monotone():
    r = np.linspace(-3, 3, 601)
    assert np.all(np.diff(beta(r, lam=6.0)) > 0)
    np.testing.assert_allclose(beta(r, lam=6.0) - 6.0 * r, potential_dF(r), atol=1e-12)


def test_h_endpoints_and_constancy():
    assert h_interp(-1.0) == 0.0
    assert h_interp(1.0) == 1.0
    assert h_interp(-5.0) == 0.0
    assert h_interp(3.0) == 1.0
    assert h_interp(0.0) == 0.5
    assert h_prime(0.0) == 0.75


def test_h_monotone_and_bounded():
    r = np.linspace(-3, 3, 10_000)
    assert np.all(h_prime(r) >= 0)
    assert np.all(np.diff(h_interp(r)) >= 0)
    assert np.all((0 <= h_interp(r)) & (h_interp(r) <= 1))
    assert np.max(h_prime(r)) <= 0.75
    eps = 1e-7
    inner = r[np.abs(r) < 0.999]
    np.testing.assert_allclose((h_interp(inner + eps) - h_interp(inner - eps)) / (2 * eps), h_prime(inner), atol=1e-6)


def test_kappa_values():
    p = ModelParams()
    assert kappa(0.0, p) == pytest.approx(1.0, abs=1e-15)
    assert kappa(1.0, p) == 2.0
    assert kappa(2.0, ModelParams(q=3.0)) == pytest.approx(9.0)
    t = np.linspace(0, 5, 501)
    assert np.all(kappa(t, p) >= 1) and np.all(np.diff(kappa(t, p)) >= 0)
    assert kappa_prime(2.0, ModelParams(q=3.0)) == pytest.approx(12.0)


def test_clamp_count():
    p = ModelParams()
    assert clamp_count(np.array([1.0, 1e-12, 0.5, -1.0]), p) == 2


@pytest.mark.parametrize(
    "kwargs,match",
    [
        ({"sigma_B": 1.5}, r"sigma_B must lie in \(0,1\)"),
        ({"sigma_B": 0.0}, r"sigma_B must lie in \(0,1\)"),
        ({"q": 1.0}, r"q must lie in \[2, inf\)"),
        ({"P": 0.0}, "strictly positive"),
        ({"C": -1.0}, "strictly positive"),
        ({"lam": 3.0}, "lambda"),
        ({"S": -1.0}, "S"),
        ({"eps": 0.5}, "experimental"),
        ({"chi_phi": 0.1}, "experimental"),
        ({"A": float("nan")}, "finite"),
    ],
)
def test_invalid_params(kwargs, match):
    with pytest.raises(ParameterError, match=match):
        ModelParams(**kwargs)


def test_experimental_flag_and_fixed_point():
    p = ModelParams(eps=0.5, experimental=True)
    assert p.eps == 0.5
    assert ModelParams(B=1.0, C=1.0, sigma_B=0.9).fixed_point_sigma == pytest.approx(0.45)
    assert ModelParams().replace(A=0.9).A == 0.9
