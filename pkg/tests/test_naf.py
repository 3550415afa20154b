import numpy as np
import pytest

from netnaf import naf
from netnaf.errors import DimensionError

from _oracles import fd_gradient, naf_q_oracle, rel_err


# ---------------------------------------------------------------------------
# scale matrix assembly


def test_assemble_m1_zero_entry():
    L = naf.assemble_scale_matrix(np.array([0.0]), 1)
    assert np.array_equal(L, np.array([[1.0]]))


def test_assemble_m2_zeros_give_identity():
    L = naf.assemble_scale_matrix(np.zeros(3), 2)
    assert np.array_equal(L, np.eye(2))


def test_assemble_m2_layout():
    entries = np.array([np.log(2.0), 3.0, np.log(5.0)])
    L = naf.assemble_scale_matrix(entries, 2)
    assert np.allclose(L, np.array([[2.0, 0.0], [3.0, 5.0]]), rtol=1e-15)
    assert L[0, 1] == 0.0


def test_assemble_length_mismatch():
    with pytest.raises(DimensionError):
        naf.assemble_scale_matrix(np.zeros(4), 2)


def test_assemble_clamps_extreme_diagonals():
    L = naf.assemble_scale_matrix(np.array([1e4]), 1)
    assert L[0, 0] == np.exp(naf.EXP_CLAMP)
    L = naf.assemble_scale_matrix(np.array([-1e4]), 1)
    assert L[0, 0] == np.exp(-naf.EXP_CLAMP)


# ---------------------------------------------------------------------------
# advantage


def test_advantage_zero_at_mu():
    L = naf.assemble_scale_matrix(np.array([0.3, -1.0, 0.1]), 2)
    u = np.array([0.5, -0.2])
    a, _ = naf.advantage(u, u, L)
    assert a == 0.0


def test_advantage_m1_hand_case():
    a, p = naf.advantage(np.array([2.0]), np.array([0.0]), np.array([[1.0]]))
    assert p == np.array([[1.0]])
    assert a == -2.0


def test_advantage_m2_hand_case():
    L = np.array([[2.0, 0.0], [3.0, 5.0]])
    a, p = naf.advantage(np.array([1.0, 0.0]), np.zeros(2), L)
    assert p[0, 0] == 4.0
    assert a == -2.0


def test_advantage_dimension_mismatch():
    with pytest.raises(DimensionError):
        naf.advantage(np.zeros(3), np.zeros(2), np.eye(2))


# ---------------------------------------------------------------------------
# q value and argmax structure


def test_q_value_cases():
    assert naf.q_value(3.0, 0.0) == 3.0
    assert naf.q_value(0.0, -2.0) == -2.0


def test_q_maximum_found_by_monte_carlo():
    rng = np.random.default_rng(17)
    for m in (1, 2):
        v = float(rng.normal())
        mu = rng.normal(size=m)
        entries = rng.normal(0.0, 0.7, size=naf.tri_size(m))
        L = naf.assemble_scale_matrix(entries, m)
        us = mu + rng.uniform(-1.0, 1.0, size=(10_000, m))
        a, p = naf.advantage(us, np.broadcast_to(mu, us.shape),
                             np.broadcast_to(L, (us.shape[0], m, m)))
        q = naf.q_value(v, a)
        # best sampled Q never beats V and comes within the quadratic bound
        # for the closest sample
        assert q.max() <= v
        d_min = np.linalg.norm(us - mu, axis=1).min()
        lam_max = np.linalg.eigvalsh(p[0]).max()
        assert v - q.max() <= 0.5 * lam_max * d_min ** 2 + 1e-12


def test_argmax_consistency_exact():
    rng = np.random.default_rng(29)
    for _ in range(100):
        m = int(rng.integers(1, 4))
        v = float(rng.normal())
        mu = rng.normal(size=m)
        L = naf.assemble_scale_matrix(rng.normal(size=naf.tri_size(m)), m)
        ev = naf.evaluate(v, mu, naf_entries_of(L, m), mu, m)
        assert ev.Q == v
        u = mu + rng.normal(size=m)
        if not np.array_equal(u, mu):
            a, _ = naf.advantage(u, mu, L)
            assert naf.q_value(v, a) < v


def naf_entries_of(L, m):
    """Inverse of assemble_scale_matrix for test setup."""
    entries = []
    for i in range(m):
        for j in range(i + 1):
            entries.append(np.log(L[i, j]) if i == j else L[i, j])
    return np.array(entries)


# ---------------------------------------------------------------------------
# structural properties


def test_p_symmetric_positive_definite_over_randoms():
    rng = np.random.default_rng(31)
    for _ in range(300):
        m = int(rng.integers(1, 4))
        entries = rng.normal(0.0, 2.0, size=naf.tri_size(m))
        L = naf.assemble_scale_matrix(entries, m)
        assert np.all(np.diag(L) > 0.0)
        assert np.array_equal(np.triu(L, 1), np.zeros((m, m)))
        _, p = naf.advantage(np.zeros(m), np.zeros(m), L)
        assert np.array_equal(p, p.T)
        assert np.linalg.eigvalsh(p).min() > 0.0


def test_advantage_nonpositive_and_strictly_concave():
    rng = np.random.default_rng(37)
    for _ in range(200):
        m = int(rng.integers(1, 4))
        L = naf.assemble_scale_matrix(rng.normal(size=naf.tri_size(m)), m)
        mu = rng.normal(size=m)
        u = rng.normal(0.0, 3.0, size=m)
        a, p = naf.advantage(u, mu, L)
        assert a <= 0.0
        d = u - mu
        if np.linalg.norm(d) > 0:
            assert d @ p @ d > 0.0


# ---------------------------------------------------------------------------
# gradients


def test_head_gradients_at_mu():
    mu = np.array([0.4, -0.1])
    entries = np.array([0.2, 1.0, -0.3])
    dv, dmu, dl = naf.head_gradients(mu, entries, mu.copy(), 2.5, 2)
    assert dv == 2.5
    assert np.array_equal(dmu, np.zeros(2))
    assert np.array_equal(dl, np.zeros(3))


def test_head_gradients_m1_hand_case():
    # A = -0.5 exp(2l) d^2, at l=0, d=2: dA/dmu = P d = 2
    dv, dmu, dl = naf.head_gradients(np.array([0.0]), np.array([0.0]),
                                     np.array([2.0]), 1.0, 1)
    assert dv == 1.0
    assert np.allclose(dmu, [2.0], rtol=1e-15)
    assert np.allclose(dl, [-4.0], rtol=1e-15)


def test_head_gradients_match_finite_differences():
    rng = np.random.default_rng(43)
    for m in (1, 2, 3):
        for _ in range(34):
            q = naf.tri_size(m)
            mu = rng.normal(size=m)
            entries = rng.normal(0.0, 0.8, size=q)
            u = mu + rng.normal(size=m)
            dq = float(rng.normal())
            v = float(rng.normal())
            dv, dmu, dl = naf.head_gradients(mu, entries, u, dq, m)

            packed = np.concatenate([[v], mu, entries])

            def q_of(vec):
                return dq * naf_q_oracle(vec[0], vec[1:1 + m], vec[1 + m:], u, m)

            fd = fd_gradient(q_of, packed)
            analytic = np.concatenate([[dv], dmu, dl])
            assert rel_err(analytic, fd) < 1e-4


def test_head_gradients_batched_matches_loop():
    rng = np.random.default_rng(47)
    m, b = 2, 6
    mu = rng.normal(size=(b, m))
    entries = rng.normal(size=(b, naf.tri_size(m)))
    u = rng.normal(size=(b, m))
    dq = rng.normal(size=b)
    dv, dmu, dl = naf.head_gradients(mu, entries, u, dq, m)
    for i in range(b):
        dv1, dmu1, dl1 = naf.head_gradients(mu[i], entries[i], u[i],
                                            float(dq[i]), m)
        assert np.isclose(dv[i], dv1, rtol=1e-14)
        assert np.allclose(dmu[i], dmu1, rtol=1e-12)
        assert np.allclose(dl[i], dl1, rtol=1e-12)
