import numpy as np
import pytest

from dqtrack import dualquat as dq
from dqtrack import observability as obs
from dqtrack import quat as qt
from dqtrack.errors import InsufficientMarkersError, PositiveDepthError

from conftest import central_difference, random_front_state, random_unit_quat

PAPER_TRIPLE = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, -1.0, 0.0]])
COLLINEAR_TRIPLE = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
FIVE_MARKERS = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, -1.0, 0.0],
                         [-1.0, 1.0, 0.0], [-1.0, -1.0, 0.0]])


class TestConjugationJacobian:
    def test_zero_input(self):
        k = obs.conjugation_jacobian(qt.QZERO)
        assert np.array_equal(k, np.zeros((4, 4)))
        assert np.linalg.matrix_rank(k) == 0

    def test_structure(self, rng):
        b = rng.normal(size=4)
        k = obs.conjugation_jacobian(b)
        assert np.array_equal(k[0], np.zeros(4))
        assert np.allclose(k[1:, 0], b[1:])
        assert np.allclose(k[1:, 1:], -(b[0] * np.eye(3) + qt.skew(b[1:])))

    def test_matches_matrix_combination(self, rng):
        # 2 K(b) = R(-conj(b)) + L(b) C
        for _ in range(100):
            b = rng.normal(size=4)
            combo = qt.right_matrix(-qt.qconj(b)) + qt.left_matrix(b) @ qt.conj_matrix()
            assert np.allclose(2.0 * obs.conjugation_jacobian(b), combo, atol=1e-13)

    def test_matches_sandwich_derivative(self, rng):
        # finite difference of q -> q a q* at b = q a equals twice the kernel
        q = random_unit_quat(rng)
        a = qt.vector_quat(rng.normal(size=3))
        fd = central_difference(lambda x: qt.qmul(qt.qmul(x, a), qt.qconj(x)), q)
        assert np.abs(fd - 2.0 * obs.conjugation_jacobian(qt.qmul(q, a))).max() < 1e-6

    def test_rank_three_for_nonzero_products(self, rng):
        qs = np.array([random_unit_quat(rng) for _ in range(500)])
        vs = rng.normal(size=(500, 3))
        b = qt.qmul(qs, qt.vector_quat(vs))
        sv = np.linalg.svd(obs.conjugation_jacobian(b), compute_uv=False)
        assert np.all(sv[:, 3] < 1e-10 * sv[:, 0])
        assert np.all(sv[:, 2] > 1e-10 * sv[:, 0])

    def test_linearity(self, rng):
        for _ in range(50):
            q = random_unit_quat(rng)
            a, b = rng.normal(size=4), rng.normal(size=4)
            lhs = (obs.conjugation_jacobian(qt.qmul(q, a))
                   - obs.conjugation_jacobian(qt.qmul(q, b)))
            rhs = obs.conjugation_jacobian(qt.qmul(q, a - b))
            assert np.allclose(lhs, rhs, atol=1e-12)


class TestUnitConstraintJacobian:
    def test_identity_first_row(self):
        j = obs.unit_constraint_jacobian(qt.QONE)
        assert np.array_equal(j[0], [2.0, 0.0, 0.0, 0.0])
        assert np.array_equal(j[1:], np.zeros((3, 4)))
        assert np.linalg.matrix_rank(j) == 1

    def test_nullspace_is_orthogonal_complement(self, rng):
        for _ in range(20):
            q = random_unit_quat(rng)
            _, sv, vt = np.linalg.svd(obs.unit_constraint_jacobian(q))
            null = vt[1:]
            assert np.all(np.abs(null @ q) < 1e-12)
            assert sv[1] < 1e-14

    def test_matches_finite_difference(self, rng):
        for _ in range(20):
            a = rng.normal(size=4)
            fd = central_difference(lambda x: qt.qmul(qt.qconj(x), x), a)
            assert np.abs(fd - obs.unit_constraint_jacobian(a)).max() < 1e-6


class TestNormalizeJacobian:
    def test_kills_radial_direction(self, rng):
        for _ in range(50):
            r = qt.vector_quat(rng.normal(size=3) * 4)
            assert np.abs(obs.normalize_jacobian(r) @ r).max() < 1e-12

    def test_axial_case(self):
        j = obs.normalize_jacobian(qt.vector_quat([0.0, 0.0, 2.5]))
        assert np.allclose(j[1:, 1:], np.diag([1 / 2.5, 1 / 2.5, 0.0]))

    def test_matches_finite_difference(self, rng):
        for _ in range(20):
            r = qt.vector_quat(rng.normal(size=3) * 3 + [0, 0, 6])
            fd = central_difference(lambda x: x / np.linalg.norm(x), r)
            assert np.abs(fd - obs.normalize_jacobian(r)).max() < 1e-6

    def test_positive_depth_guard(self):
        with pytest.raises(PositiveDepthError):
            obs.normalize_jacobian(qt.QZERO)


class TestPositionBlocks:
    def test_rank_paper_triple(self, rng):
        for _ in range(20):
            st = random_front_state(rng)
            d = obs.position_block_matrix(st, PAPER_TRIPLE)
            assert d.shape == (12, 8)
            assert np.linalg.matrix_rank(d) == 8

    def test_rank_collinear_triple(self, rng):
        for _ in range(20):
            st = random_front_state(rng)
            d = obs.position_block_matrix(st, COLLINEAR_TRIPLE)
            assert np.linalg.matrix_rank(d) <= 7

    def test_matches_finite_difference(self, rng):
        st = random_front_state(rng)

        def meas(x):
            probe = obs._raw_state(x[:4], x[4:], st.ang_vel, st.vel_dual)
            return obs.position_measurement(probe, PAPER_TRIPLE)

        fd = central_difference(meas, np.concatenate([st.q, st.pose_dual]))
        analytic = 2.0 * obs.position_block_matrix(st, PAPER_TRIPLE)
        rel = np.abs(fd - analytic).max() / np.abs(analytic).max()
        assert rel < 1e-5

    def test_marker_count_guard(self, rng):
        st = random_front_state(rng)
        with pytest.raises(InsufficientMarkersError):
            obs.position_block_matrix(st, PAPER_TRIPLE[:2])


class TestPositionCodistribution:
    def test_observable_and_deficient(self, rng):
        for _ in range(30):
            st = random_front_state(rng)
            rep = obs.position_codistribution(st, PAPER_TRIPLE)
            assert (rep.rows, rep.cols) == (24, 16)
            assert rep.rank == 16 and rep.verdict == "observable"
            bad = obs.position_codistribution(st, COLLINEAR_TRIPLE)
            assert bad.rank < 16 and bad.verdict == "deficient"
            assert bad.deficiency

    def test_verdict_depends_on_geometry_not_pose(self, rng):
        verdicts = {obs.position_codistribution(
            random_front_state(rng), PAPER_TRIPLE).verdict for _ in range(100)}
        assert verdicts == {"observable"}

    def test_block_rank_composition(self, rng):
        st = random_front_state(rng)
        for markers in (PAPER_TRIPLE, COLLINEAR_TRIPLE):
            d = obs.position_block_matrix(st, markers)
            lower = d @ dq.right_matrix(st.pose())
            assert np.linalg.matrix_rank(lower) == np.linalg.matrix_rank(d)
            rep = obs.position_codistribution(st, markers)
            assert rep.rank == 2 * np.linalg.matrix_rank(d)

    def test_star_fill_keeps_verdict(self, rng):
        st = random_front_state(rng)
        plain = obs.position_codistribution(st, PAPER_TRIPLE)
        filled = obs.position_codistribution(st, PAPER_TRIPLE, fill_star=True)
        assert plain.verdict == filled.verdict == "observable"


class TestUnitVectorBlocks:
    def test_projector_nullspace_basis(self, rng):
        # nullspace of the block diagonal: orthogonal complement of q in the
        # first block, the marker rays in the rest
        for _ in range(10):
            st = random_front_state(rng)
            pi = obs.projector_block_diag(st, PAPER_TRIPLE)
            _, sv, vt = np.linalg.svd(pi)
            null = vt[np.sum(sv > 1e-10 * sv[0]):]
            assert null.shape[0] == 6
            rays = [obs.marker_position(st, p) for p in PAPER_TRIPLE]
            expected = []
            for i, ray in enumerate(rays):
                v = np.zeros(16)
                v[4 * (i + 1):4 * (i + 2)] = ray / np.linalg.norm(ray)
                expected.append(v)
            for v in expected:
                # each expected vector lies in the span of the null basis
                resid = v - null.T @ (null @ v)
                assert np.linalg.norm(resid) < 1e-9
            # the remaining three dimensions are constraint-block vectors
            # orthogonal to q
            for row in null:
                head = row[:4]
                assert abs(head @ st.q) < 1e-9

    def test_no_nullspace_vector_is_reachable(self, rng):
        # least squares of the extended blocks against each nullspace basis
        # vector must leave a large residual for non-collinear markers
        st = random_front_state(rng)
        gamma = obs.constrained_block_matrix(st, PAPER_TRIPLE)
        basis = []
        head = np.linalg.svd(obs.unit_constraint_jacobian(st.q))[2][1:]
        for row in head:
            v = np.zeros(16)
            v[:4] = row
            basis.append(v)
        for i, p in enumerate(PAPER_TRIPLE):
            ray = obs.marker_position(st, p)
            v = np.zeros(16)
            v[4 * (i + 1):4 * (i + 2)] = ray
            basis.append(v)
        for v in basis:
            sol, *_ = np.linalg.lstsq(gamma, v, rcond=None)
            resid = np.linalg.norm(gamma @ sol - v)
            assert resid > 1e-8 * np.linalg.norm(v)

    def test_omega_rank(self, rng):
        for _ in range(20):
            st = random_front_state(rng)
            om = obs.unitvector_block_matrix(st, PAPER_TRIPLE)
            assert om.shape == (16, 8)
            assert np.linalg.matrix_rank(om) == 8
            bad = obs.unitvector_block_matrix(st, COLLINEAR_TRIPLE)
            assert np.linalg.matrix_rank(bad) < 8

    def test_positive_depth_guard(self, rng):
        st = random_front_state(rng)
        behind = obs._raw_state(st.q, np.zeros(4), st.ang_vel, st.vel_dual)
        with pytest.raises(PositiveDepthError):
            obs.projector_block_diag(behind, np.zeros((3, 3)))


class TestUnitVectorCodistribution:
    def test_observable_and_deficient(self, rng):
        for _ in range(30):
            st = random_front_state(rng)
            rep = obs.unit_vector_codistribution(st, PAPER_TRIPLE)
            assert (rep.rows, rep.cols) == (32, 16)
            assert rep.rank == 16 and rep.verdict == "observable"
            bad = obs.unit_vector_codistribution(st, COLLINEAR_TRIPLE)
            assert bad.rank < 16 and bad.verdict == "deficient"

    def test_near_collinear_sweep_monotone(self, rng):
        st = random_front_state(rng)
        gaps = np.logspace(0, -6, 13)
        sigmas = []
        for g in gaps:
            markers = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, g, 0.0]])
            om = obs.unitvector_block_matrix(st, markers)
            sigmas.append(np.linalg.svd(om, compute_uv=False)[-1])
        assert all(a > b for a, b in zip(sigmas, sigmas[1:]))

    def test_matches_finite_difference(self, rng):
        st = random_front_state(rng)

        def meas(x):
            probe = obs._raw_state(x[:4], x[4:], st.ang_vel, st.vel_dual)
            return obs.unitvector_measurement(probe, PAPER_TRIPLE)

        fd = central_difference(meas, np.concatenate([st.q, st.pose_dual]))
        analytic = 2.0 * obs.unitvector_block_matrix(st, PAPER_TRIPLE)
        assert np.abs(fd - analytic).max() < 1e-5

    def test_first_order_factorization(self, rng):
        # finite difference of the first-order stacked derivative with
        # respect to the rate components equals blocks times the dual right
        # multiplication operator
        st = random_front_state(rng)
        blocks = obs.position_block_matrix(st, PAPER_TRIPLE)

        def lie1(x):
            probe = obs._raw_state(st.q, st.pose_dual, x[:4], x[4:])
            q_dot, mu_dot = probe.rates()
            return (2.0 * blocks) @ np.concatenate([q_dot, mu_dot])

        fd = central_difference(lie1, np.concatenate([st.ang_vel, st.vel_dual]))
        assert np.abs(fd - blocks @ dq.right_matrix(st.pose())).max() < 2e-5


class TestCollinearity:
    def test_simple_cases(self):
        collinear, margin = obs.collinearity_check(
            np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0]]))
        assert not collinear and np.isclose(margin, 1.0)
        collinear, margin = obs.collinearity_check(COLLINEAR_TRIPLE)
        assert collinear and margin == 0.0

    def test_five_marker_layout(self):
        collinear, margin = obs.collinearity_check(FIVE_MARKERS)
        assert not collinear and margin > 1.0
        with pytest.raises(InsufficientMarkersError):
            obs.collinearity_check(FIVE_MARKERS[:2])

    def test_dichotomy_against_verdict(self, rng):
        # well away from the threshold band, the codistribution verdict and
        # the collinearity margin agree
        st = random_front_state(rng)
        for _ in range(30):
            markers = rng.uniform(-1.5, 1.5, (3, 3))
            collinear, margin = obs.collinearity_check(markers)
            if margin < 1e-8 * 10:
                continue
            rep = obs.position_codistribution(st, markers)
            assert rep.verdict == ("deficient" if collinear else "observable")


class TestAudit:
    def test_report_fields(self, rng):
        st = random_front_state(rng)
        audit = obs.observability_audit(st, FIVE_MARKERS, mode="unit_vectors")
        assert audit["verdict"] == "observable"
        assert audit["n_markers"] == 5
        assert not audit["collinear"]
        assert len(audit["best_triple"]["indices"]) == 3
        assert audit["best_triple"]["report"]["rank"] == 16
        assert audit["stacked"]["report"]["rank"] == 16
        st2 = random_front_state(rng)
        pos = obs.observability_audit(st2, FIVE_MARKERS, mode="positions")
        assert pos["verdict"] == "observable"

    def test_collinear_audit(self, rng):
        st = random_front_state(rng)
        audit = obs.observability_audit(st, COLLINEAR_TRIPLE)
        assert audit["verdict"] == "deficient"
        assert audit["collinear"]

    def test_report_dict_shape(self, rng):
        st = random_front_state(rng)
        rep = obs.unit_vector_codistribution(st, PAPER_TRIPLE)
        d = rep.to_dict()
        assert d["rows"] == 32 and d["cols"] == 16
        assert len(d["singular_values"]) == 16
        assert all(a >= b for a, b in zip(d["singular_values"],
                                          d["singular_values"][1:]))
        assert d["rank"] <= min(d["rows"], d["cols"])
