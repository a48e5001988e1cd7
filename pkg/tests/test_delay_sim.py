import math

import numpy as np
import pytest

from heatiss.delay_sim import (
    CSV_HEADER,
    DisturbanceSignal,
    HistoryBuffer,
    buffer_capacity,
    check_continuous_dependence,
    init_state,
    simulate,
    step,
)
from heatiss.errors import HistoryLengthMismatch, StepTooLarge
from heatiss.heat_kernel import Grid
from heatiss.system_model import SystemParams, Topology

P = SystemParams.uniform(c=0.5, r=0.3)


def test_buffer_capacity():
    assert buffer_capacity(0.3, 0.01) == 31
    assert buffer_capacity(0.3, 0.07) == 6


def test_init_zero_state():
    st = init_state(P, [0.0] * 3, [0.0] * 3, 0.01, n=16)
    assert st.norm_xy() == 0.0 and st.initial_jump == 0.0


def test_init_constant_history():
    st = init_state(P, [1.0] * 3, [1.0] * 3, 0.01, n=16)
    for b in st.buffers:
        np.testing.assert_array_equal(b.ordered(), 1.0)
    assert st.buffers[0].l1_norm() == pytest.approx(0.3, rel=1e-14)


def test_init_ramp_history_exact():
    r = 0.3
    p = SystemParams.uniform(r=r)
    st = init_state(p, [0.0] * 3, [lambda th: th + r] * 3, 0.025, n=16)
    b = st.buffers[0]
    np.testing.assert_allclose(b.ordered(), b.thetas() + r, atol=1e-15)
    assert b.retarded() == pytest.approx(0.0, abs=1e-15)
    # sampled on a uniform grid over [-r, 0] and reinterpolated
    st2 = init_state(p, [0.0] * 3, [np.linspace(0, r, 7)] * 3, 0.025, n=16)
    np.testing.assert_allclose(st2.buffers[0].ordered(), b.ordered(), atol=1e-15)


def test_init_records_jump():
    st = init_state(P, [1.0] * 3, [0.25] * 3, 0.01, n=16)
    assert st.initial_jump == pytest.approx(0.75)


def test_init_errors():
    with pytest.raises(StepTooLarge):
        init_state(P, [0.0] * 3, [0.0] * 3, 0.1)
    with pytest.raises(HistoryLengthMismatch):
        init_state(P, [0.0] * 2, [0.0] * 3, 0.01)
    with pytest.raises(HistoryLengthMismatch):
        HistoryBuffer(0.3, 0.01, np.zeros(5))


def test_retarded_interpolates():
    b = HistoryBuffer(0.25, 0.1, np.array([0.0, 1.0, 2.0, 3.0]))
    assert b.retarded() == pytest.approx(2.5)
    b.push(-1.0)
    assert b.retarded() == pytest.approx(1.5)


def test_zero_state_stays_zero():
    st = init_state(P, [0.0] * 3, [0.0] * 3, 0.01, n=16)
    for _ in range(5):
        st = step(st, P, DisturbanceSignal.zero(), 0.01)
    assert st.norm_xy() == 0.0


def test_zero_data_trace():
    tr = simulate(P, [0.0] * 3, [0.0] * 3, DisturbanceSignal.zero(), 1.0, 0.01, n=16)
    assert not np.any(tr.norm_xy)


def test_decoupled_uniform_decay():
    p = SystemParams.from_arrays(1.0, [1.0, 2.0, 0.5], 0.0, 0.3)
    T = 1.0
    errs = []
    for dt in (1e-3, 5e-4):
        tr = simulate(p, [1.0] * 3, [1.0] * 3, DisturbanceSignal.zero(), T, dt, n=16, keep_profiles=True)
        exact = np.exp(-p.array("b") * T)
        errs.append(np.abs(tr.profiles[-1] - exact[:, None]).max())
        # implicit Euler gives (1 + b dt)^(-T/dt) exactly for uniform data
        np.testing.assert_allclose(tr.profiles[-1][:, 0], (1 + p.array("b") * dt) ** (-round(T / dt)), rtol=1e-10)
    # first-order convergence of the exact-solution error; extrapolated error below 1e-8
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.01)
    assert abs(2 * errs[1] - errs[0]) < 1e-8 + 1e-3 * errs[0]


def test_decoupled_log_slope():
    p = SystemParams.uniform(c=0.0, r=0.3)
    tr = simulate(p, [1.0] * 3, [0.0] * 3, DisturbanceSignal.zero(), 3.0, 0.001, n=16)
    sel = tr.times > 1.0
    slope = np.polyfit(tr.times[sel], np.log(tr.norm_x[sel]), 1)[0]
    assert slope == pytest.approx(-1.0, rel=0.02)


def test_positive_under_constant_input():
    tr = simulate(SystemParams.uniform(c=1.3, r=0.3), [0.0] * 3, [0.0] * 3,
                  DisturbanceSignal.constant(1.0), 2.0, 0.01, n=24, keep_profiles=True)
    assert min(float(x.min()) for x in tr.profiles) >= 0.0


def test_linearity(rng):
    f1 = [rng.normal(size=26) for _ in range(3)]
    f2 = [rng.normal(size=26) for _ in range(3)]
    u1, u2 = rng.normal(size=3), rng.normal(size=3)
    kw = dict(n=24, keep_profiles=True)
    a = simulate(P, f1, [0.0] * 3, DisturbanceSignal.constant(u1), 1.0, 0.01, **kw)
    b = simulate(P, f2, [0.0] * 3, DisturbanceSignal.constant(u2), 1.0, 0.01, **kw)
    s = simulate(P, [x + y for x, y in zip(f1, f2)], [0.0] * 3, DisturbanceSignal.constant(u1 + u2), 1.0, 0.01, **kw)
    for pa, pb, ps in zip(a.profiles, b.profiles, s.profiles):
        np.testing.assert_allclose(pa + pb, ps, atol=1e-10)


def test_step_composition_bit_identical(rng):
    f = [rng.uniform(size=18) for _ in range(3)]
    dist = DisturbanceSignal.piecewise([0.0, 0.35, 0.7], [[1, 0, 2], [0, 1, 1], [0.5, 0.5, 0.5]])
    full = simulate(P, f, [0.3] * 3, dist, 1.0, 0.01, n=16)
    half = simulate(P, f, [0.3] * 3, dist, 0.5, 0.01, n=16)
    rest = simulate(P, None, None, dist, 0.5, 0.01, state=half.final_state)
    for x, y in zip(full.final_state.profiles, rest.final_state.profiles):
        np.testing.assert_array_equal(x, y)
    np.testing.assert_array_equal(full.norm_xy[-1], rest.norm_xy[-1])


def test_time_order_one():
    grid = Grid(24)
    f = [np.cos(np.pi * grid.nodes) + 1.5] * 3
    finals = []
    for dt in (0.02, 0.01, 0.005):
        tr = simulate(P, f, [1.0] * 3, DisturbanceSignal.constant(0.2), 1.0, dt, n=24)
        finals.append(np.array(tr.final_state.profiles))
    order = math.log2(np.abs(finals[0] - finals[1]).max() / np.abs(finals[1] - finals[2]).max())
    assert order == pytest.approx(1.0, abs=0.3)


def test_csv_output(tmp_path):
    tr = simulate(P, [1.0] * 3, [1.0] * 3, DisturbanceSignal.constant([0.1, 0.2, 0.3]), 0.1, 0.01, 5, n=16)
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 1 + tr.times.size == 4
    assert [float(v) for v in lines[1].split(",")[-3:]] == [0.1, 0.2, 0.3]


def test_piecewise_disturbance():
    d = DisturbanceSignal.piecewise([0.0, 1.0], [[1, 1, 1], [2, 2, 2]])
    assert d(0.5)[0] == 1.0 and d(1.0)[0] == 2.0 and d(5.0)[0] == 2.0
    with pytest.raises(ValueError):
        DisturbanceSignal.piecewise([0.5, 1.0], [1.0, 2.0])


def test_chain_routing():
    p = SystemParams.uniform(c=1.0, r=0.3, topology=Topology.CHAIN)
    # only component 1 is excited; its boundary value reaches component 2 after r
    tr = simulate(p, [1.0, 0.0, 0.0], [0.0] * 3, DisturbanceSignal.zero(), 1.0, 0.01, n=16, keep_profiles=True)
    assert tr.profiles[-1][1].max() > 0
    assert tr.profiles[-1][2].max() > 0
    early = tr.profiles[10]  # t = 0.1 < r: nothing delayed has arrived yet
    assert early[1].max() == 0.0 and early[2].max() == 0.0


def test_continuous_dependence_small():
    rep = check_continuous_dependence(SystemParams.uniform(r=1.0), 30, tau=1.0, dt=0.02, n=16)
    assert math.isfinite(rep.c_tau) and rep.stable
    assert rep.c_tau >= math.exp(-1.0) * (1 - 1e-3)


def test_continuous_dependence_short_horizon():
    rep = check_continuous_dependence(SystemParams.uniform(r=1.0), 10, tau=0.04, dt=0.01, n=16)
    assert rep.c_tau >= 0.9
