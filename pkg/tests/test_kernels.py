import math

import numpy as np
import pytest
from scipy import integrate

from vlasovkit.config import Box
from vlasovkit.kernels import KernelDecl

BOX = Box(1, 10.0)


@pytest.mark.parametrize("profile,param", [("gaussian", 1.0), ("tophat", 1.5), ("exponential", 2.0)])
def test_unit_mass_in_1d(profile, param):
    k = KernelDecl("k", profile, param)
    val, _ = integrate.quad(lambda r: float(k.radial(abs(r), 1)), -5, 5, points=[0.0, param, -param], limit=200)
    assert k.unit_torus_mass(BOX) == pytest.approx(val, rel=1e-9)
    assert val == pytest.approx(1.0, abs=1e-4)  # tail beyond L/2


def test_gaussian_mass_in_2d_matches_erf():
    k = KernelDecl("k", "gaussian", 2.0, amplitude=3.0)
    box = Box(2, 6.0)
    want = 3.0 * math.erf(3.0 / (2.0 * math.sqrt(2))) ** 2
    assert k.torus_mass(box) == pytest.approx(want, rel=1e-12)


def test_table_kernel_quadrature(tmp_path):
    p = tmp_path / "tri.txt"
    p.write_text("# triangle\n0 1\n1 0\n")
    k = KernelDecl.from_table_file("t", p)
    assert k.unit_torus_mass(BOX) == pytest.approx(1.0, rel=1e-10)
    assert k.max_value(1) == 1.0


def test_evaluate_uses_minimum_image():
    k = KernelDecl("k", "gaussian", 1.0)
    assert float(k.evaluate(np.array([9.5]), BOX)) == pytest.approx(float(k.radial(0.5, 1)))


def test_validation():
    with pytest.raises(ValueError):
        KernelDecl("k", "cauchy", 1.0)
    with pytest.raises(ValueError):
        KernelDecl("k", "gaussian", -1.0)
    with pytest.raises(ValueError):
        KernelDecl("k", "gaussian", 1.0, amplitude=math.inf)
    with pytest.raises(ValueError):
        KernelDecl("k", "tophat", 6.0).check_box(BOX)


@pytest.mark.parametrize("d", [1, 2])
def test_displacement_sampler_matches_kernel(d):
    box = Box(d, 10.0)
    k = KernelDecl("k", "gaussian", 1.0)
    rng = np.random.default_rng(4)
    draws = np.array([k.sample_displacement(rng, box) for _ in range(4000)])
    assert draws.shape == (4000, d)
    assert np.all(np.abs(draws) <= 5.0)
    assert np.var(draws[:, 0]) == pytest.approx(1.0, rel=0.1)


def test_exponential_sampler_mean_distance():
    k = KernelDecl("k", "exponential", 2.0)
    rng = np.random.default_rng(5)
    r = np.abs([k.sample_displacement(rng, BOX)[0] for _ in range(4000)])
    assert r.mean() == pytest.approx(0.5, rel=0.06)
