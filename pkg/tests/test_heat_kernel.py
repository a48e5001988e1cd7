import math

import numpy as np
import pytest

from heatiss.errors import GridTooCoarse
from heatiss.heat_kernel import (
    Grid,
    HeatProfile,
    build_heat_operator,
    dirichlet_closed_form,
    dirichlet_numeric,
    max_row_sum,
    resolvent_solve_closed_form,
    transfer_gamma_dlambda,
    transfer_gamma_dlambda_numeric,
)
from heatiss.system_model import ComponentParams, SystemParams, gamma_d0_matrix

UNIT = ComponentParams(1.0, 1.0, 1.0, 0.3)


def test_grid_too_coarse():
    with pytest.raises(GridTooCoarse):
        Grid(7)


def test_grid_geometry():
    g = Grid(8)
    assert g.size == 10 and g.h == pytest.approx(1 / 9)
    assert g.weights.sum() == pytest.approx(1.0)


def test_stencil_interior_diagonal():
    g = Grid(8)
    op = build_heat_operator(UNIT, g)
    np.testing.assert_allclose(op.diag[1:-1], -(2 / g.h**2 + 1))


def test_pure_diffusion_conserves_constants():
    # b must be positive; 1e-300 is zero at this resolution
    op = build_heat_operator(ComponentParams(1.0, 1e-300, 0.0, 1.0), Grid(16))
    np.testing.assert_allclose(op.dense() @ np.ones(18), 0.0, atol=1e-10)


def test_operator_is_metzler():
    A = build_heat_operator(UNIT, Grid(12)).dense()
    off = A - np.diag(np.diag(A))
    assert off.min() >= 0


def test_flux_injection_only_at_right_end():
    g = Grid(16)
    op = build_heat_operator(UNIT, g)
    f = np.linspace(0, 1, g.size) ** 2
    np.testing.assert_allclose(op.apply(f, 0.0), op.dense() @ f, rtol=1e-13)
    diff = op.apply(f, 1.0) - op.apply(f, 0.0)
    assert np.count_nonzero(diff) == 1 and diff[-1] == pytest.approx(2 / g.h)


@pytest.mark.parametrize("b,expect", [(1.0, 1.0), (2.0, 0.5)])
def test_resolvent_constant(b, expect):
    g = Grid(200)
    f = resolvent_solve_closed_form(ComponentParams(1.0, b, 0.0, 1.0), HeatProfile(g, np.ones(g.size)))
    np.testing.assert_allclose(f.values, expect, atol=1e-5)


def test_resolvent_cosine_mode():
    g = Grid(400)
    rhs = HeatProfile.from_function(g, lambda y: np.cos(np.pi * y))
    f = resolvent_solve_closed_form(UNIT, rhs)
    np.testing.assert_allclose(f.values, np.cos(np.pi * g.nodes) / (1 + np.pi**2), atol=1e-5)


def test_dirichlet_closed_form_values():
    g = Grid(100)
    prof = dirichlet_closed_form(UNIT, 0.0, 1.0, g)
    assert prof.values[0] == pytest.approx(1 / math.sinh(1), rel=1e-14)
    assert prof.values[-1] == pytest.approx(1.3130352854993312, rel=1e-14)
    np.testing.assert_array_equal(dirichlet_closed_form(UNIT, 0.0, 0.0, g).values, 0.0)


def test_dirichlet_numeric_matches():
    g = Grid(1000)
    err = np.abs(dirichlet_numeric(UNIT, 0.0, 1.0, g).values - dirichlet_closed_form(UNIT, 0.0, 1.0, g).values).max()
    assert err <= 1e-6
    np.testing.assert_array_equal(dirichlet_numeric(UNIT, 0.0, 0.0, g).values, 0.0)


def test_dirichlet_shifted_example():
    p = ComponentParams(2.0, 1.0, 1.0, 0.3)
    mu = math.sqrt(3.0)
    g = Grid(1000)
    assert dirichlet_closed_form(p, 5.0, 1.0, g).values[0] == pytest.approx(1 / (2 * mu * math.sinh(mu)), rel=1e-14)
    assert dirichlet_numeric(p, 5.0, 1.0, g).values[0] == pytest.approx(1 / (2 * mu * math.sinh(mu)), abs=1e-6)


def test_dirichlet_positive_and_lambda_bounded():
    g = Grid(200)
    for lam in (0.0, 1.0, 10.0, 100.0, 1e4):
        v = dirichlet_numeric(UNIT, lam, 1.0, g).values
        assert v.min() >= 0
        # lam * ||D_lam|| in L1 stays bounded (flux 1 spreads over a boundary layer)
        assert lam * HeatProfile(g, v).l1_norm() <= 1.0 + 1e-9


def test_dirichlet_second_order():
    errs = []
    for n in (50, 100, 200, 400):
        g = Grid(n)
        errs.append(np.abs(dirichlet_numeric(UNIT, 2.0, 1.0, g).values - dirichlet_closed_form(UNIT, 2.0, 1.0, g).values).max())
    orders = np.log(np.array(errs[:-1]) / errs[1:]) / np.log(np.array([101, 201, 401]) / [51, 101, 201])
    np.testing.assert_allclose(orders, 2.0, atol=0.1)


def test_transfer_matrix_example():
    H = transfer_gamma_dlambda(SystemParams.uniform(r=0.3), 3.0)
    assert H[0, 3] == pytest.approx(math.exp(-0.9), rel=1e-14)
    assert H[3, 0] == pytest.approx(1 / (2 * math.sinh(2)), rel=1e-14)


def test_transfer_small_lambda_limit():
    p = SystemParams.uniform(c=0.7, r=0.4)
    np.testing.assert_allclose(transfer_gamma_dlambda(p, 1e-12), gamma_d0_matrix(p), atol=1e-9)


def test_transfer_numeric_matches():
    p = SystemParams.from_arrays([1, 2, 0.5], [1, 0.5, 2], [1, 0.3, 0.8], [0.3, 1.0, 0.6])
    for lam in (0.5, 3.0, 20.0):
        np.testing.assert_allclose(transfer_gamma_dlambda_numeric(p, lam, 1000), transfer_gamma_dlambda(p, lam), atol=1e-6)


def test_max_row_sum():
    assert max_row_sum(np.array([[1.0, -2.0], [0.5, 0.5]])) == 3.0
