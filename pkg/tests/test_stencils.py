import numpy as np
import pytest

from markovdiff import stencils


@pytest.mark.parametrize("deriv", [1, 2])
def test_exact_on_quartics(deriv):
    x = np.linspace(-1.0, 2.0, 31)
    h = x[1] - x[0]
    f = 1 + x - 2 * x**2 + 0.5 * x**3 + 0.25 * x**4
    exact = (1 - 4 * x + 1.5 * x**2 + x**3) if deriv == 1 else (-4 + 3 * x + 3 * x**2)
    np.testing.assert_allclose(stencils.derivative(f, h, deriv=deriv), exact, atol=1e-9)


def test_row_sums_vanish():
    for deriv in (1, 2):
        D = stencils.derivative_matrix(50, 0.1, deriv)
        assert np.max(np.abs(D.sum(axis=1))) < 1e-10


def test_fourth_order_convergence():
    errs = []
    for n in (101, 201):
        x = np.linspace(0, np.pi, n)
        errs.append(np.max(np.abs(stencils.derivative(np.sin(x), x[1] - x[0]) - np.cos(x))))
    assert 2 ** 3.5 < errs[0] / errs[1] < 2 ** 4.5


def test_multi_axis():
    x = np.linspace(-1, 1, 21)
    X, Y = np.meshgrid(x, x, indexing="ij")
    h = x[1] - x[0]
    gx, gy = stencils.gradient(X**2 * Y, (h, h))
    np.testing.assert_allclose(gx, 2 * X * Y, atol=1e-10)
    np.testing.assert_allclose(gy, X**2, atol=1e-10)
    np.testing.assert_allclose(stencils.laplacian(X**2 + Y**3, (h, h)), 2 + 6 * Y, atol=1e-8)


def test_too_few_points():
    with pytest.raises(ValueError):
        stencils.derivative_matrix(7, 0.1)
    with pytest.raises(ValueError):
        stencils.derivative_matrix(20, 0.1, 3)
