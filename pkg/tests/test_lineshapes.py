import numpy as np
import pytest
from scipy import integrate

from qdcnot.lineshapes import FWHM_PER_SIGMA, bin_integral, gaussian, laplace, laplace_gauss, laplace_gauss_cdf, lorentzian


@pytest.mark.parametrize("shape,args", [(gaussian, (30.0, 200.0)), (lorentzian, (0.0, 300.0)), (laplace, (10.0, 1 / 106))])
def test_unit_area(shape, args):
    if shape is lorentzian:
        area = integrate.quad(lambda x: shape(x, *args), -np.inf, np.inf)[0]
    else:
        area = integrate.quad(lambda x: shape(x, *args), -20000, 20000, points=[args[0]], limit=400)[0]
    assert area == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("sigma", [20.0, 170.0, 400.0])
def test_laplace_gauss_is_the_convolution(sigma):
    rate = 1 / 106
    for x in (-700.0, -50.0, 0.0, 120.0, 900.0):
        lo, hi = x - 12 * sigma, x + 12 * sigma
        pts = [p for p in (0.0, x) if lo < p < hi]
        num = integrate.quad(lambda y: laplace(y, 0.0, rate) * gaussian(x - y, 0.0, sigma), lo, hi, points=pts, limit=400)[0]
        assert laplace_gauss(x, 0.0, rate, sigma) == pytest.approx(num, rel=1e-7, abs=1e-14)


def test_cdf_matches_density_and_is_stable():
    rate, sigma = 1 / 106, 240.0
    for x in (-800.0, -100.0, 0.0, 50.0, 700.0):
        num = integrate.quad(lambda y: laplace_gauss(y, 0.0, rate, sigma), -8000, x, limit=400)[0]
        assert laplace_gauss_cdf(x, 0.0, rate, sigma) == pytest.approx(num, abs=1e-10)
    far = laplace_gauss_cdf(np.array([-1e6, 1e6]), 0.0, rate, 5.0)
    assert np.all(np.isfinite(far)) and far[0] == pytest.approx(0.0) and far[1] == pytest.approx(1.0)


def test_bin_integral_sums_to_one():
    edges = np.arange(-5000, 5001, 50.0)
    mass = bin_integral(lambda e: laplace_gauss_cdf(e, 0.0, 1 / 106, 200.0), edges)
    assert mass.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(mass >= 0)


def test_fwhm_constant():
    assert gaussian(FWHM_PER_SIGMA / 2, 0.0, 1.0) / gaussian(0.0, 0.0, 1.0) == pytest.approx(0.5)
