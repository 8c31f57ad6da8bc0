import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posediff import geometry as G
from posediff.errors import DegenerateInput, EmptyInput, InvalidRotation


def random_rotations(n, seed=0):
    rng = np.random.default_rng(seed)
    return [G.random_rotation(rng) for _ in range(n)]


def quat_angle_deg(q1, q2):
    """Relative rotation angle from quaternion composition, independent of matrix traces."""
    conj = np.array([q1[0], -q1[1], -q1[2], -q1[3]])
    rel = G.quaternion_multiply(conj, q2)
    return np.degrees(2 * np.arctan2(np.linalg.norm(rel[1:]), abs(rel[0])))


class TestSixD:
    def test_identity(self):
        np.testing.assert_array_equal(G.sixd_to_rotation([1, 0, 0, 0, 1, 0]), np.eye(3))

    def test_gram_schmidt_by_hand(self):
        R = G.sixd_to_rotation([2, 0, 0, 1, 1, 0])
        np.testing.assert_allclose(R, np.eye(3), atol=1e-15)

    def test_rotation_to_sixd_reads_columns(self):
        np.testing.assert_array_equal(G.rotation_to_sixd(np.eye(3)), [1, 0, 0, 0, 1, 0])
        np.testing.assert_allclose(G.rotation_to_sixd(G.rot_z(90)), [0, 1, 0, -1, 0, 0], atol=1e-15)

    def test_round_trip_1000(self):
        Rs = np.array(random_rotations(1000))
        back = G.sixd_to_rotation(G.rotation_to_sixd(Rs))
        assert np.max(np.abs(back - Rs)) < 1e-9

    def test_output_is_rotation(self):
        rng = np.random.default_rng(3)
        R = G.sixd_to_rotation(rng.standard_normal((500, 6)))
        eye = np.swapaxes(R, -1, -2) @ R
        assert np.max(np.abs(eye - np.eye(3))) < 1e-6
        assert np.max(np.abs(np.linalg.det(R) - 1)) < 1e-6

    @pytest.mark.parametrize("r6", [[0, 0, 0, 0, 1, 0], [1, 0, 0, 2, 0, 0], [1e-9, 0, 0, 0, 1, 0]])
    def test_degenerate_inputs_raise(self, r6):
        with pytest.raises(DegenerateInput):
            G.sixd_to_rotation(r6)

    def test_invalid_rotation_rejected(self):
        with pytest.raises(InvalidRotation):
            G.rotation_to_sixd(np.diag([1.0, 1.0, 1.01]))
        with pytest.raises(InvalidRotation):
            G.rotation_to_sixd(np.diag([1.0, 1.0, -1.0]))

    def test_canonicalize_is_idempotent(self):
        p = np.concatenate([np.random.default_rng(0).standard_normal(6), [0.1, 0.2, 0.3]])
        c = G.canonicalize_pose(p)
        assert G.is_canonical(c)
        assert not G.is_canonical(p)
        np.testing.assert_array_equal(c[6:], p[6:])


class TestQuaternions:
    def test_conversion_round_trip(self):
        for R in random_rotations(200, seed=5):
            q = G.rotation_to_quaternion(R)
            assert q[0] >= 0
            np.testing.assert_allclose(G.quaternion_to_rotation(q), R, atol=1e-12)

    def test_jacobi_matches_lapack(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            A = rng.standard_normal((4, 4))
            A = A + A.T
            w, V = G.jacobi_eigh(A)
            np.testing.assert_allclose(w, np.sort(np.linalg.eigvalsh(A))[::-1], atol=1e-10)
            np.testing.assert_allclose(A @ V, V * w, atol=1e-10)

    def test_single(self):
        q = G.rotation_to_quaternion(random_rotations(1, seed=2)[0])
        avg = G.average_quaternions([q])
        assert min(np.abs(avg - q).max(), np.abs(avg + q).max()) < 1e-12

    def test_antipodal_pair(self):
        q = G.rotation_to_quaternion(random_rotations(1, seed=4)[0])
        avg = G.average_quaternions([q, -q])
        assert min(np.abs(avg - q).max(), np.abs(avg + q).max()) < 1e-12

    def test_copies_return_input_exactly(self):
        q = G.rotation_to_quaternion(random_rotations(1, seed=7)[0])
        avg = G.average_quaternions([q] * 9)
        assert min(np.abs(avg - q).max(), np.abs(avg + q).max()) < 1e-12

    def test_z_pair_against_grid_brute_force(self):
        q0 = G.rotation_to_quaternion(G.rot_z(0))
        q90 = G.rotation_to_quaternion(G.rot_z(90))
        grid = np.arange(0, 360, 0.1)
        objective = [G.quaternion_objective(G.rotation_to_quaternion(G.rot_z(a)), [q0, q90]) for a in grid]
        best = grid[int(np.argmax(objective))]
        avg = G.average_quaternions([q0, q90])
        got = G.quaternion_to_rotation(avg)
        assert abs(best - 45.0) < 0.1
        assert np.radians(G.geodesic_angle(got, G.rot_z(best))) < 1e-3
        assert G.geodesic_angle(got, G.rot_z(45)) < 1e-6

    def test_empty_raises(self):
        with pytest.raises(EmptyInput):
            G.average_quaternions(np.zeros((0, 4)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 12))
    def test_sign_flip_invariance(self, seed, n):
        rng = np.random.default_rng(seed)
        qs = np.array([G.random_quaternion(rng) for _ in range(n)])
        signs = rng.choice([-1.0, 1.0], size=(n, 1))
        a, b = G.average_quaternions(qs), G.average_quaternions(qs * signs)
        # eigenvector only defined up to sign; compare objective and rotation
        assert abs(abs(a @ b) - 1) < 1e-9 or abs(G.quaternion_objective(a, qs) - G.quaternion_objective(b, qs)) < 1e-12

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 12))
    def test_objective_dominates_inputs(self, seed, n):
        rng = np.random.default_rng(seed)
        qs = np.array([G.random_quaternion(rng) for _ in range(n)])
        avg = G.average_quaternions(qs)
        best_input = max(G.quaternion_objective(q, qs) for q in qs)
        assert G.quaternion_objective(avg, qs) >= best_input - 1e-12


class TestErrors:
    def test_geodesic_basic(self):
        R = random_rotations(1)[0]
        assert G.geodesic_angle(R, R) == pytest.approx(0.0, abs=1e-6)
        assert G.geodesic_angle(np.eye(3), G.rot_z(90)) == pytest.approx(90.0, abs=1e-9)

    def test_geodesic_matches_quaternion_oracle(self):
        a, b = G.rot_x(10), G.rot_y(10)
        oracle = quat_angle_deg(G.rotation_to_quaternion(a), G.rotation_to_quaternion(b))
        assert G.geodesic_angle(a, b) == pytest.approx(oracle, abs=1e-9)

    def test_geodesic_random_against_oracle(self):
        Rs = random_rotations(100, seed=11)
        for A, B in zip(Rs[::2], Rs[1::2]):
            oracle = quat_angle_deg(G.rotation_to_quaternion(A), G.rotation_to_quaternion(B))
            assert G.geodesic_angle(A, B) == pytest.approx(oracle, abs=1e-6)

    def test_geodesic_symmetric_and_triangle(self):
        Rs = random_rotations(90, seed=9)
        for A, B, C in zip(Rs[::3], Rs[1::3], Rs[2::3]):
            ab, bc, ac = G.geodesic_angle(A, B), G.geodesic_angle(B, C), G.geodesic_angle(A, C)
            assert ab == pytest.approx(G.geodesic_angle(B, A), abs=1e-9)
            assert ac <= ab + bc + 1e-6

    def test_symmetric_axis_rotation_ignored(self):
        R = random_rotations(1, seed=3)[0]
        sym = G.SymmetrySpec.about_z()
        assert G.symmetry_aware_rotation_error(R @ G.rot_z(73), R, sym) == 0.0
        assert G.symmetry_aware_rotation_error(R @ G.rot_z(73), R, G.SymmetrySpec.none()) == pytest.approx(73.0, abs=1e-9)

    def test_symmetric_axis_tilt(self):
        sym = G.SymmetrySpec.about_z()
        a = np.array([0.0, 0.0, 1.0])
        oracle = np.degrees(np.arccos(np.dot(a, G.rot_x(5) @ a)))
        assert G.symmetry_aware_rotation_error(G.rot_x(5), np.eye(3), sym) == pytest.approx(oracle, abs=1e-9)
        assert oracle == pytest.approx(5.0, abs=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-720, 720), st.integers(0, 1000))
    def test_symmetry_invariance_property(self, theta, seed):
        R = G.random_rotation(np.random.default_rng(seed))
        err = G.symmetry_aware_rotation_error(R @ G.rot_z(theta), R, G.SymmetrySpec.about_z())
        assert err == 0.0

    def test_translation_error(self):
        assert G.translation_error([0.1, 0.2, 0.3], [0.1, 0.2, 0.3]) == 0.0
        assert G.translation_error([0.03, 0, 0], [0, 0, 0]) == pytest.approx(3.0)
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal(3), rng.standard_normal(3)
        assert G.translation_error(a, b) == pytest.approx(100 * np.sqrt(np.sum((a - b) ** 2)))

    def test_twist_angle(self):
        R = random_rotations(1, seed=8)[0]
        for ang in (0.0, 45.0, 190.0, 350.0):
            assert G.twist_angle(R.T @ (R @ G.rot_z(ang)), (0, 0, 1)) == pytest.approx(ang % 360, abs=1e-6)

    def test_euler_zyx(self):
        assert G.euler_zyx(np.eye(3)) == (0.0, 0.0, 0.0)
        R = G.rot_z(30) @ G.rot_y(20) @ G.rot_x(10)
        np.testing.assert_allclose(G.euler_zyx(R), (30, 20, 10), atol=1e-9)

    def test_symmetry_spec_validation(self):
        with pytest.raises(ValueError):
            G.SymmetrySpec("continuous-axis", (0, 0, 2))
        s = G.SymmetrySpec.about_z()
        assert G.SymmetrySpec.from_dict(s.to_dict()) == s
