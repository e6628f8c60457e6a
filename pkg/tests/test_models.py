import math

import numpy as np
import pytest

import delaydense as dd
from delaydense.errors import InvalidParam, MissingParam


def test_make_system_mackey_glass():
    sys = dd.make_system("mackey-glass", {"alpha": 2, "beta": 4, "n": 10})
    assert sys.model_id == dd.ModelId.MackeyGlass
    assert sys.delay == 1.0


def test_make_system_piecewise_constant_paper_params():
    sys = dd.make_system("pwc", {"alpha": 3.25, "c": 20.5, "x1": 1, "x2": 2})
    assert sys.params["c"] == 20.5


def test_make_system_rejects_reversed_interval():
    with pytest.raises(InvalidParam):
        dd.make_system("pwc", {"alpha": 3.25, "c": 20.5, "x1": 2, "x2": 1})


def test_make_system_missing_param():
    with pytest.raises(MissingParam):
        dd.make_system("mackey-glass", {"alpha": 2, "beta": 4})


def test_make_system_invalid_mackey_glass():
    with pytest.raises(InvalidParam):
        dd.make_system("mackey-glass", {"alpha": -1, "beta": 4, "n": 10})
    with pytest.raises(InvalidParam):
        dd.make_system("mackey-glass", {"alpha": 2, "beta": 4, "n": 0.5})


def test_rhs_mackey_glass_halfway():
    sys = dd.make_system("mg", {"alpha": 2, "beta": 4, "n": 10})
    # 1/(1+1^10) = 1/2
    assert dd.rhs(sys, 0.0, 1.0) == pytest.approx(2.0)


def test_rhs_piecewise_constant_inside_window():
    sys = dd.make_system("pwc", {"alpha": 6, "c": 24, "x1": 1, "x2": 2})
    assert dd.rhs(sys, 0.0, 1.5) == 24.0
    assert dd.rhs(sys, 0.0, 2.5) == 0.0
    # closed interval membership
    assert dd.rhs(sys, 0.0, 1.0) == 24.0
    assert dd.rhs(sys, 0.0, 2.0) == 24.0


def test_rhs_tent_fixed_point():
    # 1 - 1.9 x = x  =>  x = 1/2.9; f vanishes there
    sys = dd.make_system("tent", {"epsilon": 0.3})
    xstar = 1.0 / 2.9
    assert dd.rhs(sys, xstar, xstar) == pytest.approx(0.0, abs=1e-15)


def test_rhs_custom_callable():
    sys = dd.make_system("custom", custom_rhs=lambda x, xl: -x)
    assert dd.rhs(sys, 3.0, 99.0) == -3.0


def test_initial_history_constant():
    h = dd.initial_history(dd.constant(0.5), 4)
    assert np.array_equal(h.values, [0.5] * 5)
    assert h.t_anchor == 1.0


def test_initial_history_linear():
    h = dd.initial_history(dd.linear(0.0, 1.0), 2)
    assert np.allclose(h.values, [0.0, 0.5, 1.0])


def test_initial_history_sinusoidal():
    h = dd.initial_history(dd.sinusoidal(1.0, 0.0), 4)
    assert np.allclose(h.values, [1.0, 0.0, -1.0, 0.0, 1.0], atol=1e-15)


def test_initial_history_ode_generated():
    # x' = x from x0=1 sampled by Euler: x(1) ~ (1+h)^N -> e
    h = dd.initial_history(dd.ode_generated(lambda x: x, 1.0), 1000)
    assert h.values[-1] == pytest.approx(math.e, rel=2e-3)


def test_history_vector_immutable():
    h = dd.initial_history(dd.constant(1.0), 4)
    with pytest.raises(ValueError):
        h.values[0] = 2.0


def test_history_rejects_nonfinite():
    with pytest.raises(InvalidParam):
        dd.HistoryVector(values=np.array([1.0, np.nan, 2.0]))
