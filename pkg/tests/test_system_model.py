import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatiss.errors import NonPositiveCoefficient, NonPositiveLambda, WrongComponentCount
from heatiss.system_model import (
    ComponentParams,
    SystemParams,
    check_iss_condition,
    gamma_d0_matrix,
    iss_threshold,
    spectral_radius_gamma_d0,
    transfer_bound_tau,
    validate_params,
)

SINH1 = float(mpmath.sinh(1))  # 1.1752011936438014
pos = st.floats(0.05, 20.0)


def test_validate_accepts_positive():
    validate_params(SystemParams.uniform(r=0.3))


@pytest.mark.parametrize("field,index,kw", [("a", 2, {"a": [1, 0, 1]}), ("r", 1, {"r": [-0.1, 1, 1]})])
def test_validate_rejects(field, index, kw):
    base = {"a": 1.0, "b": 1.0, "c": 1.0, "r": 0.3}
    base.update(kw)
    with pytest.raises(NonPositiveCoefficient) as info:
        validate_params(SystemParams.from_arrays(**base))
    assert info.value.field == field and info.value.index == index


def test_wrong_component_count():
    p = SystemParams((ComponentParams(1, 1, 1, 1),) * 2)
    with pytest.raises(WrongComponentCount):
        validate_params(p)


def test_threshold_matches_extended_precision():
    cert = check_iss_condition(SystemParams.uniform(c=1.0))
    assert cert.iss_holds
    assert cert.thresholds == pytest.approx([SINH1] * 3, rel=1e-15)
    assert SINH1 == pytest.approx(1.1752011936438014, rel=0, abs=1e-16)


def test_zero_coupling_margins_equal_thresholds():
    cert = check_iss_condition(SystemParams.uniform(c=0.0))
    assert cert.iss_holds
    assert cert.per_component_margin == cert.thresholds


def test_equality_is_not_iss():
    p = SystemParams.uniform(c=math.sinh(1.0))
    assert not check_iss_condition(p).iss_holds
    assert spectral_radius_gamma_d0(p) == 1.0
    below = SystemParams.uniform(c=math.nextafter(math.sinh(1.0), 0))
    assert check_iss_condition(below).iss_holds


def test_gamma_matrix_unit():
    M = gamma_d0_matrix(SystemParams.uniform(c=1.0))
    assert M.shape == (6, 6)
    np.testing.assert_allclose(np.diag(M[3:, :3]), 0.8509181282393216, rtol=1e-14)
    np.testing.assert_array_equal(M[:3, 3:], np.eye(3))


def test_gamma_matrix_zero_coupling_nilpotent():
    M = gamma_d0_matrix(SystemParams.uniform(c=0.0))
    np.testing.assert_array_equal(M @ M, np.zeros((6, 6)))
    assert spectral_radius_gamma_d0(SystemParams.uniform(c=0.0)) == 0.0


def test_gamma_matrix_varied_diffusion():
    M = gamma_d0_matrix(SystemParams.from_arrays([1, 2, 3], 1, 1, 0.3))
    expect = [1 / (math.sqrt(j) * math.sinh(1 / math.sqrt(j))) for j in (1, 2, 3)]
    np.testing.assert_allclose(np.diag(M[3:, :3]), expect, rtol=1e-14)


def test_spectral_radius_unit():
    p = SystemParams.uniform(c=1.0)
    assert spectral_radius_gamma_d0(p) == pytest.approx(0.9224522, abs=1e-7)
    eig = np.abs(np.linalg.eigvals(gamma_d0_matrix(p))).max()
    assert spectral_radius_gamma_d0(p) == pytest.approx(eig, abs=1e-14)


def test_radius_one_at_threshold():
    a, b = np.array([0.5, 2.0, 3.0]), np.array([1.0, 0.4, 2.0])
    thr = [iss_threshold(ComponentParams(x, y, 0, 1)) for x, y in zip(a, b)]
    assert spectral_radius_gamma_d0(SystemParams.from_arrays(a, b, thr, 1.0)) == pytest.approx(1.0, abs=1e-15)


def test_tau_examples():
    p = SystemParams.uniform(c=1.0, r=0.3)
    expect = float(mpmath.exp(-0.9) + 1 / (2 * mpmath.sinh(2)))
    assert transfer_bound_tau(p, 3.0) == pytest.approx(expect, rel=1e-14)
    assert transfer_bound_tau(p, 3.0) == pytest.approx(0.54443, abs=1e-5)
    assert transfer_bound_tau(SystemParams.uniform(c=0.0, r=0.3), 1.0) == pytest.approx(math.exp(-0.3), rel=1e-15)
    assert transfer_bound_tau(SystemParams.uniform(r=1.0), 1e6) < 1e-6


def test_tau_rejects_nonpositive_lambda():
    with pytest.raises(NonPositiveLambda):
        transfer_bound_tau(SystemParams.uniform(), 0.0)


@settings(max_examples=200, deadline=None)
@given(a=pos, b=pos, c=st.floats(0.0, 50.0), r=pos)
def test_iss_iff_radius(a, b, c, r):
    p = SystemParams.from_arrays([a, 1.0, 2.0], [b, 1.0, 0.5], [c, 0.1, 0.2], r)
    assert check_iss_condition(p).iss_holds == (spectral_radius_gamma_d0(p) < 1)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(0.1, 10.0), b=st.floats(0.1, 10.0), s=st.floats(0.25, 4.0))
def test_threshold_scaling(a, b, s):
    # scaling a and b by s scales the threshold by s: sqrt(s a s b) sinh(sqrt(b/a))
    t1 = iss_threshold(ComponentParams(a, b, 0, 1))
    t2 = iss_threshold(ComponentParams(s * a, s * b, 0, 1))
    assert t2 == pytest.approx(s * t1, rel=1e-12)


def test_radius_matches_eigen_random(rng):
    worst = 0.0
    for _ in range(200):
        p = SystemParams.from_arrays(rng.uniform(0.2, 5, 3), rng.uniform(0.2, 5, 3), rng.uniform(0, 3, 3), 1.0)
        eig = np.abs(np.linalg.eigvals(gamma_d0_matrix(p))).max()
        worst = max(worst, abs(eig - spectral_radius_gamma_d0(p)))
    assert worst <= 1e-12
