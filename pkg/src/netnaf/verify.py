"""Fast self-check suites behind the `verify` subcommand.

Each suite re-derives an expected answer from something independent
(finite differences, closed forms, brute enumeration) and checks the
production path against it. One suite deliberately feeds a corrupted
advantage through the checker to prove the checker can fail.
"""

from __future__ import annotations

import time

import numpy as np

from . import naf, nn
from .agent import ExtendedState, Transition, batch_loss_and_grad, extended_state_dim
from .delays import SC, CP, DelayModel, DelayedChannel, sample_delay
from .plant import ChuaCircuit, InputSchedule, integrate
from .reward import (RewardWeights, input_history_reward, output_change_reward,
                     output_history_reward, total_reward)


def _rel_err(a, b):
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return np.abs(a - b).max() / scale


def _fd_grad(func, theta, step=1e-5):
    grad = np.empty_like(theta)
    for i in range(theta.size):
        probe = theta.copy()
        probe[i] = theta[i] + step
        up = func(probe)
        probe[i] = theta[i] - step
        down = func(probe)
        grad[i] = (up - down) / (2.0 * step)
    return grad


def _random_net(rng, dim, m, widths=(16, 16)):
    return nn.init_network([dim, *widths], m, 4.0,
                           int(rng.integers(0, 2 ** 31)))


def suite_naf_algebra(pairs=240, actions_per_state=200):
    """Q(mu) == V, A <= 0, P positive definite, over random nets and states."""
    rng = np.random.default_rng(11)
    worst_gap = 0.0
    for i in range(pairs):
        m = int(rng.integers(1, 4))
        dim = int(rng.integers(3, 9))
        net = _random_net(rng, dim, m)
        w = rng.normal(0.0, 2.0, size=dim)
        tr = nn.forward(net, w)
        ev = naf.evaluate(tr.v, tr.mu, tr.l_entries, tr.mu, m)
        worst_gap = max(worst_gap, abs(ev.Q - tr.v))
        if abs(ev.Q - tr.v) > 1e-12:
            return False, f"Q(mu) - V = {ev.Q - tr.v:.3e} on pair {i}"
        np.linalg.cholesky(ev.P)  # raises if not positive definite
        u = tr.mu + rng.normal(0.0, 2.0, size=(actions_per_state, m))
        a, _ = naf.advantage(u, np.broadcast_to(tr.mu, (actions_per_state, m)),
                             np.broadcast_to(ev.L, (actions_per_state, m, m)))
        if (a > 0.0).any():
            return False, f"positive advantage on pair {i}"
    return True, f"{pairs} pairs, worst |Q(mu)-V| = {worst_gap:.2e}"


def suite_gradients():
    """Backward pass and TD-loss gradient against central finite differences."""
    rng = np.random.default_rng(23)
    dim, m = 6, 1
    net = _random_net(rng, dim, m, widths=(8, 8))
    x = rng.normal(size=dim)
    head_grads = (rng.normal(), rng.normal(size=m),
                  rng.normal(size=naf.tri_size(m)))
    trace = nn.forward(net, x)
    analytic, _ = nn.backward(net, trace, head_grads)
    theta0 = nn.flatten_params(net)

    def scalar(theta):
        nn.set_params(net, theta)
        t = nn.forward(net, x)
        return (head_grads[0] * t.v + head_grads[1] @ t.mu
                + head_grads[2] @ t.l_entries)

    err_b = _rel_err(analytic, _fd_grad(scalar, theta0))
    nn.set_params(net, theta0)
    if err_b > 1e-4:
        return False, f"backward rel err {err_b:.2e}"

    dim_w = extended_state_dim(2, m, 2, 1)
    main = _random_net(rng, dim_w, m, widths=(8, 8))
    target = _random_net(rng, dim_w, m, widths=(8, 8))
    def mk(vec):
        return ExtendedState(np.asarray(vec, dtype=float), 2, m, 2, 1)

    batch = [Transition(mk(rng.normal(size=dim_w)), rng.normal(size=m),
                        mk(rng.normal(size=dim_w)), float(rng.normal()))
             for _ in range(4)]
    _, analytic = batch_loss_and_grad(main, target, batch, 0.99)
    theta0 = nn.flatten_params(main)

    def loss_of(theta):
        nn.set_params(main, theta)
        loss, _ = batch_loss_and_grad(main, target, batch, 0.99)
        return loss

    err_j = _rel_err(analytic, _fd_grad(loss_of, theta0))
    nn.set_params(main, theta0)
    if err_j > 1e-4:
        return False, f"TD loss rel err {err_j:.2e}"
    return True, f"backward {err_b:.2e}, TD loss {err_j:.2e}"


def suite_channels(sequences=400, sends=250):
    """In-order delivery and the end-to-end bound under random delays."""
    delta = 2.0 ** -4
    model = DelayModel(delta, (delta, 3 * delta), (delta, 3 * delta), 4, 4)
    bound = model.total_delay_steps * delta
    rng = np.random.default_rng(37)
    for s in range(sequences):
        sc, cp = DelayedChannel(), DelayedChannel()
        order = []
        for k in range(sends):
            t = k * delta
            c = sc.send(t, k, sample_delay(model, SC, rng))
            a = cp.send(c, k, sample_delay(model, CP, rng))
            if a - t > bound + 1e-12:
                return False, f"end-to-end delay {a - t:.4f} beyond {bound:.4f}"
            order.extend(p for _, p in sc.poll(c))
        order_cp = [p for _, p in cp.poll(np.inf)]
        if order != list(range(sends)) or order_cp != list(range(sends)):
            return False, f"delivery order broke on sequence {s}"
    return True, f"{sequences * sends} sends in order, bound {bound:.4f}s held"


def suite_rk4_order():
    """Order-4 convergence on dx/dt = -x and exact Chua rest points."""

    class Linear:
        state_dim = 1
        input_dim = 1

        def deriv(self, x, u):
            return -x

    model = Linear()
    schedule = InputSchedule(np.zeros(1))
    errs = []
    steps = [2.0 ** -e for e in range(4, 9)]
    for h in steps:
        x1 = integrate(model, np.ones(1), schedule, 0.0, 1.0, h)
        errs.append(abs(x1[0] - np.exp(-1.0)))
    slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
    if not 3.8 <= slope <= 4.2:
        return False, f"convergence slope {slope:.3f}"
    chua = ChuaCircuit()
    for eq in chua.equilibria():
        if np.linalg.norm(chua.deriv(eq, np.zeros(1))) >= 1e-12:
            return False, f"residual at rest point {eq}"
    return True, f"slope {slope:.3f}, rest-point residuals < 1e-12"


def suite_reward_values():
    """Hand-computed reward cases and nonpositivity on random histories."""
    w = RewardWeights()
    cases = [
        output_change_reward([1.0, 1.0], [0.0, 0.0], [1.0], w) == -2.6,
        output_history_reward([[1.0, 0.0], [0.0, 0.0], [0.0, -1.0]], w) == -1.6,
        input_history_reward([[2.0], [0.0], [0.0]], w) == -0.6,
        total_reward(-2.6, -1.6, -0.6) == -4.8,
    ]
    if not all(cases):
        return False, f"hand cases {cases}"
    rng = np.random.default_rng(5)
    for _ in range(2000):
        ys = rng.normal(size=(5, 2))
        us = rng.normal(size=(13, 1))
        parts = (output_change_reward(ys[0], ys[1], us[0], w),
                 output_history_reward(ys, w), input_history_reward(us, w))
        if any(part > 0.0 for part in parts):
            return False, f"positive reward component {parts}"
    return True, "hand cases exact, 2000 random histories nonpositive"


def suite_mutation_guard():
    """A sign-flipped advantage must be flagged by the nonpositivity check."""
    rng = np.random.default_rng(41)

    def flipped_advantage(u, mu, L):
        a, p = naf.advantage(u, mu, L)
        return -a, p  # wrong sign on purpose

    caught = False
    for _ in range(50):
        m = int(rng.integers(1, 4))
        L = naf.assemble_scale_matrix(rng.normal(size=naf.tri_size(m)), m)
        u = rng.normal(size=m)
        mu = rng.normal(size=m)
        a, _ = flipped_advantage(u, mu, L)
        if a > 0.0:
            caught = True
            break
    if not caught:
        return False, "checker failed to flag a sign-flipped advantage"
    return True, "corrupted advantage detected by the A <= 0 check"


ALL_SUITES = [
    ("naf_algebra", suite_naf_algebra),
    ("gradients", suite_gradients),
    ("channels", suite_channels),
    ("rk4_order", suite_rk4_order),
    ("reward_values", suite_reward_values),
    ("mutation_guard", suite_mutation_guard),
]


def run_suites(names=None):
    """Run the requested suites; returns a list of result dicts."""
    results = []
    for name, fn in ALL_SUITES:
        if names and name not in names:
            continue
        started = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append({
            "suite": name,
            "ok": bool(ok),
            "seconds": round(time.perf_counter() - started, 3),
            "detail": detail,
        })
    return results
