import numpy as np
import pytest

from switchopt.adjoint import solve_adjoint
from switchopt.forward import solve_forward
from switchopt.model import (
    AffineReset,
    CostSpec,
    HybridSystemSpec,
    ModeSpec,
    QuadraticCost,
    SwitchingSchedule,
    ZeroCost,
)


def _system(A_list, resets, cost, T=1.0, z0=(1.0,)):
    return HybridSystemSpec(tuple(ModeSpec(A) for A in A_list), resets, cost, T, list(z0))


def test_zero_data_gives_zero_adjoint():
    s = _system([[[0.3]], [[-1.0]]], {(0, 1): AffineReset([[2.0]]), (1, 0): AffineReset([[1.0]])},
                CostSpec())
    traj = solve_forward(s, (0, 1), SwitchingSchedule((0.4,), 1.0))
    adj = solve_adjoint(s, traj)
    for piece in adj.pieces:
        assert np.all(piece.values == 0.0)


def test_scalar_closed_form():
    s = _system([[[-1.0]]], {}, CostSpec(QuadraticCost(1.0)))
    traj = solve_forward(s, (0,), SwitchingSchedule((), 1.0))
    adj = solve_adjoint(s, traj)
    # dp/dt = p + z, p(1) = 0, z = e^{-t}: p(t) = -e^{t}(e^{-2t} - e^{-2}) / 2
    assert adj.initial[0] == pytest.approx(-(1 - np.exp(-2)) / 2, abs=1e-9)
    assert adj.initial[0] == pytest.approx(-0.432332, abs=1e-6)
    seg = adj.pieces[0]
    for t, v in zip(seg.knots[::100], seg.values[::100]):
        assert v[0] == pytest.approx(-np.exp(t) * (np.exp(-2 * t) - np.exp(-2)) / 2, abs=1e-9)


def test_affine_jump_transposes_reset():
    M = np.array([[1.0, 0.5], [-0.3, 2.0]])
    A0 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    A1 = np.array([[-0.5, 0.0], [0.2, -0.1]])
    s = _system([A0, A1], {(0, 1): AffineReset(M, [0.1, 0.0]), (1, 0): AffineReset(np.eye(2))},
                CostSpec(QuadraticCost(1.0), terminal=QuadraticCost(1.0)), z0=(1.0, 0.5))
    traj = solve_forward(s, (0, 1), SwitchingSchedule((0.5,), 1.0))
    adj = solve_adjoint(s, traj)
    np.testing.assert_allclose(adj.p_minus(1), M.T @ adj.p_plus(1), rtol=1e-14, atol=1e-15)


def test_switching_cost_enters_jump():
    w = np.array([0.7])
    s = _system([[[0.3]], [[-1.0]]], {(0, 1): AffineReset([[2.0]]), (1, 0): AffineReset([[1.0]])},
                CostSpec(QuadraticCost(1.0), {(0, 1): QuadraticCost(0.0, linear=w)}))
    traj = solve_forward(s, (0, 1), SwitchingSchedule((0.4,), 1.0))
    adj = solve_adjoint(s, traj)
    assert adj.p_minus(1)[0] == pytest.approx(2.0 * adj.p_plus(1)[0] - 0.7, abs=1e-14)


def test_terminal_condition():
    s = _system([[[-1.0]]], {}, CostSpec(terminal=QuadraticCost(3.0, target=[0.5])))
    traj = solve_forward(s, (0,), SwitchingSchedule((), 1.0))
    adj = solve_adjoint(s, traj)
    assert adj.terminal[0] == pytest.approx(-3.0 * (traj.final_state[0] - 0.5), abs=1e-15)


def test_linearity_in_cost_data():
    A0 = np.array([[0.0, 1.0], [-1.0, -0.1]])
    A1 = np.array([[-0.5, 0.0], [0.2, -0.1]])
    resets = {(0, 1): AffineReset([[1.0, 0.2], [0.0, 1.0]]), (1, 0): AffineReset(np.eye(2))}
    schedule = SwitchingSchedule((0.3, 0.7), 1.0)
    costs = [
        CostSpec(QuadraticCost(0.0, linear=[1.0, -0.5]), {(0, 1): QuadraticCost(0.0, linear=[0.3, 0.1])}),
        CostSpec(ZeroCost(), {(1, 0): QuadraticCost(0.0, linear=[0.0, 2.0])},
                 QuadraticCost(0.0, linear=[-1.0, 0.4])),
    ]
    a, b = 1.7, -0.6
    combo = CostSpec(
        QuadraticCost(0.0, linear=a * np.array([1.0, -0.5])),
        {(0, 1): QuadraticCost(0.0, linear=a * np.array([0.3, 0.1])),
         (1, 0): QuadraticCost(0.0, linear=b * np.array([0.0, 2.0]))},
        QuadraticCost(0.0, linear=b * np.array([-1.0, 0.4])),
    )
    out = []
    for cost in costs + [combo]:
        s = _system([A0, A1], resets, cost, z0=(1.0, 0.5))
        traj = solve_forward(s, (0, 1, 0), schedule)
        out.append(solve_adjoint(s, traj))
    for n in range(3):
        expected = a * out[0].p_plus(n) + b * out[1].p_plus(n)
        np.testing.assert_allclose(out[2].p_plus(n), expected, rtol=1e-10, atol=1e-10)


def test_time_reversal_symmetric_generator():
    A = np.array([[-1.0, 0.4], [0.4, -0.3]])
    c = np.array([1.0, -2.0])
    s = _system([A], {}, CostSpec(terminal=QuadraticCost(0.0, linear=c)), z0=c)
    traj = solve_forward(s, (0,), SwitchingSchedule((), 1.0))
    adj = solve_adjoint(s, traj)
    # p(t) = -exp(A (T - t)) c, and z(T) = exp(A T) c
    np.testing.assert_allclose(adj.initial, -traj.final_state, rtol=1e-10)


def test_coincident_jumps_compose_in_reverse():
    resets = {(0, 1): AffineReset([[2.0]]), (1, 2): AffineReset([[3.0]]),
              (0, 2): AffineReset([[6.0]]), (1, 0): AffineReset([[1.0]]),
              (2, 0): AffineReset([[1.0]]), (2, 1): AffineReset([[1.0]])}
    s = _system([[[0.2]], [[-1.0]], [[-0.4]]], resets, CostSpec(QuadraticCost(1.0)))
    adj = solve_adjoint(s, solve_forward(s, (0, 1, 2), SwitchingSchedule((0.5, 0.5), 1.0)))
    direct = solve_adjoint(s, solve_forward(s, (0, 2), SwitchingSchedule((0.5,), 1.0)))
    assert adj.p_minus(1)[0] == pytest.approx(6.0 * adj.p_plus(2)[0], rel=1e-14)
    assert adj.initial[0] == pytest.approx(direct.initial[0], rel=1e-13)
