import numpy as np
import pytest

from netnaf.errors import DimensionError, DivergenceError
from netnaf.plant import (ChuaCircuit, InputSchedule, SensorMap, chua_sensor,
                          integrate, integrate_trajectory, sense)


class LinearDecay:
    """dx/dt = -x, the closed-form oracle model."""

    state_dim = 1
    input_dim = 1

    def deriv(self, x, u):
        return -x


class Integrator:
    """dx/dt = u, for input-schedule checks."""

    state_dim = 1
    input_dim = 1

    def deriv(self, x, u):
        return np.array([u[0]])


# ---------------------------------------------------------------------------
# Chua derivative


def test_chua_origin_is_equilibrium():
    chua = ChuaCircuit()
    assert np.array_equal(chua.deriv(np.zeros(3), np.zeros(1)), np.zeros(3))


def test_chua_nonzero_equilibria():
    chua = ChuaCircuit()
    s = 1.0 / np.sqrt(2.0)
    for x in (np.array([s, 0.0, -s]), np.array([-s, 0.0, s])):
        assert np.linalg.norm(chua.deriv(x, np.zeros(1))) < 1e-12


def test_chua_direct_evaluation():
    chua = ChuaCircuit()
    dx = chua.deriv(np.array([1.0, 0.0, 0.0]), np.zeros(1))
    assert np.allclose(dx, [-10.0 / 7.0, 1.0, 0.0], rtol=1e-15)


def test_chua_input_enters_second_component():
    chua = ChuaCircuit()
    base = chua.deriv(np.array([0.5, -0.5, 1.0]), np.zeros(1))
    driven = chua.deriv(np.array([0.5, -0.5, 1.0]), np.array([2.0]))
    assert driven[1] - base[1] == 2.0
    assert driven[0] == base[0] and driven[2] == base[2]


def test_chua_rejects_bad_params():
    with pytest.raises(ValueError):
        ChuaCircuit(p1=-1.0)


# ---------------------------------------------------------------------------
# integration


def test_integrate_empty_interval():
    x = integrate(LinearDecay(), np.array([1.0]), InputSchedule(np.zeros(1)),
                  0.0, 0.0, 2.0 ** -8)
    assert np.array_equal(x, np.array([1.0]))


def test_integrate_matches_exponential():
    x = integrate(LinearDecay(), np.array([1.0]), InputSchedule(np.zeros(1)),
                  0.0, 1.0, 2.0 ** -8)
    assert abs(x[0] - np.exp(-1.0)) < 1e-8


def test_rk4_fourth_order_convergence():
    errs = []
    for h in (2.0 ** -5, 2.0 ** -6):
        x = integrate(LinearDecay(), np.array([1.0]), InputSchedule(np.zeros(1)),
                      0.0, 1.0, h)
        errs.append(abs(x[0] - np.exp(-1.0)))
    ratio = errs[0] / errs[1]
    assert 12.0 < ratio < 20.0  # about 2**4


def test_event_splitting_is_bitwise():
    chua = ChuaCircuit()
    x0 = np.array([-0.2, 0.1, -0.1])
    h = 2.0 ** -6
    s = 0.25
    u1 = np.array([0.7])
    sched = InputSchedule(np.zeros(1), [(s, u1)])
    combined = integrate(chua, x0, sched, 0.0, 0.5, h)
    mid = integrate(chua, x0, InputSchedule(np.zeros(1)), 0.0, s, h)
    split = integrate(chua, mid, InputSchedule(u1), s, 0.5, h)
    assert np.array_equal(combined, split)


def test_schedule_hold_semantics():
    # dx/dt = u: area under the piecewise-constant input
    sched = InputSchedule(np.array([1.0]), [(1.0, np.array([3.0]))])
    x = integrate(Integrator(), np.zeros(1), sched, 0.0, 2.0, 2.0 ** -6)
    assert abs(x[0] - (1.0 + 3.0)) < 1e-12


def test_switch_at_window_start_applies_immediately():
    sched = InputSchedule(np.array([1.0]), [(0.0, np.array([5.0]))])
    x = integrate(Integrator(), np.zeros(1), sched, 0.0, 1.0, 2.0 ** -6)
    assert abs(x[0] - 5.0) < 1e-12


def test_integrate_rejects_reversed_interval():
    with pytest.raises(ValueError):
        integrate(LinearDecay(), np.ones(1), InputSchedule(np.zeros(1)),
                  1.0, 0.0, 0.1)


def test_divergence_reports_time():
    class Exploder:
        state_dim = 1
        input_dim = 1

        def deriv(self, x, u):
            return x * x  # finite-time blow-up from x0 > 0

    with pytest.raises(DivergenceError) as err:
        integrate(Exploder(), np.array([10.0]), InputSchedule(np.zeros(1)),
                  0.0, 1.0, 2.0 ** -8)
    assert 0.0 < err.value.time <= 1.0


def test_schedule_requires_increasing_switch_times():
    with pytest.raises(ValueError):
        InputSchedule(np.zeros(1), [(0.5, np.ones(1)), (0.5, np.ones(1))])


def test_trajectory_consistent_with_integrate():
    chua = ChuaCircuit()
    x0 = np.array([2.0, -1.0, 1.0])
    sched = InputSchedule(np.zeros(1))
    end = integrate(chua, x0, sched, 0.0, 3.0, 2.0 ** -6)
    ts, xs = integrate_trajectory(chua, x0, sched, 0.0, 3.0, 2.0 ** -6)
    assert ts[0] == 0.0 and ts[-1] == 3.0
    assert np.array_equal(xs[-1], end)


# ---------------------------------------------------------------------------
# qualitative long-run behavior


def test_uncontrolled_chua_stays_bounded_and_unsettled():
    chua = ChuaCircuit()
    sched = InputSchedule(np.zeros(1))
    ts, xs = integrate_trajectory(chua, np.array([-0.2, 0.1, -0.1]), sched,
                                  0.0, 100.0, 2.0 ** -8)
    assert np.abs(xs).max() < 10.0
    tail = xs[ts >= 80.0]
    dmin = min(np.linalg.norm(tail - eq, axis=1).min()
               for eq in chua.equilibria())
    assert dmin > 0.05


def test_uncontrolled_chua_second_start_near_periodic():
    chua = ChuaCircuit()
    sched = InputSchedule(np.zeros(1))
    ts, xs = integrate_trajectory(chua, np.array([2.0, -1.0, 1.0]), sched,
                                  0.0, 100.0, 2.0 ** -8)
    assert np.abs(xs).max() < 10.0
    tail = xs[ts >= 80.0, 0]
    interior = (tail[1:-1] > tail[:-2]) & (tail[1:-1] > tail[2:])
    maxima = tail[1:-1][interior]
    assert maxima.size >= 3
    spread = maxima.max() - maxima.min()
    assert spread < 0.1 * (tail.max() - tail.min())


# ---------------------------------------------------------------------------
# sensor


def test_sense_partial_observation():
    sensor = chua_sensor(2.0 ** -4)
    y = sense(np.array([1.5, -2.0, 7.0]), sensor)
    assert np.array_equal(y, np.array([1.5, -2.0]))


def test_sense_zero():
    sensor = chua_sensor(2.0 ** -4)
    assert np.array_equal(sense(np.zeros(3), sensor), np.zeros(2))


def test_sense_identity_map():
    sensor = SensorMap(np.eye(3), 1.0)
    x = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(sense(x, sensor), x)


def test_sense_dimension_mismatch():
    sensor = chua_sensor(2.0 ** -4)
    with pytest.raises(DimensionError):
        sense(np.zeros(4), sensor)
