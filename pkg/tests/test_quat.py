import numpy as np
import pytest

from dqtrack import quat as qt

from conftest import random_unit_quat, rotation_matrix_oracle


def explicit_product(a, b):
    # 16-term expansion, the textbook component formula.
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def test_identity_element():
    b = qt.quat(0.3, -1.2, 0.7, 2.0)
    assert np.array_equal(qt.qmul(qt.QONE, b), b)
    assert np.array_equal(qt.qmul(b, qt.QONE), b)


def test_basis_relation_ij_k():
    i = qt.quat(0, 1, 0, 0)
    j = qt.quat(0, 0, 1, 0)
    k = qt.quat(0, 0, 0, 1)
    assert np.allclose(qt.qmul(i, j), k)
    assert np.allclose(qt.qmul(j, i), -k)


def test_product_against_explicit_expansion(rng):
    for _ in range(200):
        a, b = rng.normal(size=4), rng.normal(size=4)
        assert np.allclose(qt.qmul(a, b), explicit_product(a, b), atol=1e-13)


def test_matrix_forms_match_product(rng):
    a = rng.normal(size=(1000, 4))
    b = rng.normal(size=(1000, 4))
    ab = qt.qmul(a, b)
    left = np.einsum("nij,nj->ni", qt.left_matrix(a), b)
    right = np.einsum("nij,nj->ni", qt.right_matrix(b), a)
    assert np.abs(ab - left).max() <= 1e-12
    assert np.abs(ab - right).max() <= 1e-12


def test_left_matrix_of_identity():
    assert np.array_equal(qt.left_matrix(qt.QONE), np.eye(4))


def test_cross_matrix_and_conj_matrix(rng):
    for _ in range(50):
        a, b = rng.normal(size=4), rng.normal(size=4)
        assert np.allclose(qt.cross_matrix(a) @ b, qt.qcross(a, b), atol=1e-13)
        assert np.allclose(qt.conj_matrix() @ a, qt.qconj(a))


def test_conjugate_definition():
    assert np.array_equal(qt.qconj(qt.quat(1, 2, 3, 4)), [1, -2, -3, -4])
    assert np.array_equal(qt.qconj(qt.QONE), qt.QONE)


def test_conjugate_antihomomorphism(rng):
    for _ in range(100):
        a, b = rng.normal(size=4), rng.normal(size=4)
        assert np.allclose(qt.qconj(qt.qmul(a, b)),
                           qt.qmul(qt.qconj(b), qt.qconj(a)), atol=1e-13)


def test_dot_and_cross_definitions(rng):
    assert np.array_equal(qt.qdot(qt.QONE, qt.QONE), qt.QONE)
    e1 = qt.quat(0, 1, 0, 0)
    e2 = qt.quat(0, 0, 1, 0)
    assert np.array_equal(qt.qcross(e1, e2), [0, 0, 0, 1])
    for _ in range(50):
        a = rng.normal(size=4)
        assert np.isclose(qt.qnorm(a) ** 2, a[0] ** 2 + a[1:] @ a[1:])
        b = rng.normal(size=4)
        assert np.isclose(qt.qdot(a, b)[0], a @ b)
        # cross of two vector quaternions keeps a zero scalar slot
        va, vb = qt.vector_quat(a[1:]), qt.vector_quat(b[1:])
        assert qt.qcross(va, vb)[0] == 0.0


def test_skew_matches_cross_product(rng):
    for _ in range(50):
        v, w = rng.normal(size=3), rng.normal(size=3)
        assert np.allclose(qt.skew(v) @ w, np.cross(v, w), atol=1e-14)


def test_from_axis_angle():
    assert np.allclose(qt.from_axis_angle([0, 0, 1], 0.0), qt.QONE)
    assert np.allclose(qt.from_axis_angle([0.0, 0.0, 1.0], np.pi), [0, 0, 0, 1],
                       atol=1e-15)
    with pytest.raises(ValueError):
        qt.from_axis_angle([0, 0, 2.0], 0.3)


def test_quarter_turn_sends_x_to_y():
    q = qt.from_axis_angle([0.0, 0.0, 1.0], np.pi / 2)
    assert np.allclose(qt.rotate_vector(q, [1.0, 0, 0]), [0, 1, 0], atol=1e-12)


def test_rotate_vector_identity_and_isometry(rng):
    v = rng.normal(size=3)
    assert np.allclose(qt.rotate_vector(qt.QONE, v), v)
    for _ in range(100):
        q = random_unit_quat(rng)
        a, b = rng.normal(size=3), rng.normal(size=3)
        ra, rb = qt.rotate_vector(q, a), qt.rotate_vector(q, b)
        assert np.isclose(np.linalg.norm(ra), np.linalg.norm(a))
        assert np.isclose(ra @ rb, a @ b)


def test_rotate_vector_matches_rotation_matrix(rng):
    for _ in range(100):
        q = random_unit_quat(rng)
        v = rng.normal(size=3)
        assert np.allclose(qt.rotate_vector(q, v), rotation_matrix_oracle(q) @ v,
                           atol=1e-12)
        # sandwich form q v q* carries a vanishing scalar slot
        s = qt.qmul(qt.qmul(q, qt.vector_quat(v)), qt.qconj(q))
        assert abs(s[0]) < 1e-12
        assert np.allclose(s[1:], qt.rotate_vector(q, v), atol=1e-12)


def test_unit_closure_under_product(rng):
    for _ in range(100):
        q = qt.qmul(random_unit_quat(rng), random_unit_quat(rng))
        assert abs(qt.qnorm(q) - 1.0) < 1e-9


def test_as_unit_tolerances(rng):
    q = random_unit_quat(rng)
    assert np.allclose(qt.as_unit(q * (1.0 + 5e-7)), q, atol=1e-9)
    with pytest.raises(ValueError):
        qt.as_unit(q * 1.1)
    with pytest.raises(ValueError):
        qt.quat(1.0, np.nan, 0.0, 0.0)


def test_rotation_matrix_round_trip(rng):
    for _ in range(100):
        q = random_unit_quat(rng)
        if q[0] < 0:
            q = -q
        back = qt.from_rotation_matrix(qt.to_rotation_matrix(q))
        if back[0] < 0:
            back = -back
        assert np.allclose(back, q, atol=1e-12)


def test_rotation_vector_exp(rng):
    assert np.allclose(qt.from_rotation_vector([0.0, 0.0, 0.0]), qt.QONE)
    for _ in range(50):
        axis = qt.normalized(rng.normal(size=3))
        ang = rng.uniform(-3, 3)
        assert np.allclose(qt.from_rotation_vector(ang * axis),
                           qt.from_axis_angle(axis, ang), atol=1e-13)
