import unittest

import numpy as np

from piper.common.errors import ContractViolation, ModelValidationError
from piper.common.rng import generator
from piper.dynamics import rigid_body
from piper.dynamics.model import ExternalForce, model_from_dict, parse_model, uniform_rod_inertia
from piper.harness.checks import dyncheck, random_chain, two_link_closed_form


def pendulum(mass=1.0, length=0.5):
    return model_from_dict({
        'links': [{'length': length, 'mass': mass, 'com_offset': length / 2.0}],
        'gravity': [0.0, -9.81],
        'torque_limit': [5.0],
    })


class TestRigidBody(unittest.TestCase):
    """Tests for the mass matrix, inverse and forward dynamics."""

    def setUp(self):
        self.rng = generator(7)

    def test_mass_matrix_symmetric_positive_definite(self):
        """Test that M(q) is symmetric with positive eigenvalues on random chains."""
        for n in (1, 2, 3, 5):
            model = random_chain(n, self.rng)
            for _ in range(20):
                M = rigid_body.mass_matrix(model, self.rng.uniform(-np.pi, np.pi, n))
                self.assertLessEqual(np.max(np.abs(M - M.T)), 1e-10)
                self.assertGreater(np.min(np.linalg.eigvalsh(M)), 0.0)

    def test_mass_matrix_columns_match_unit_acceleration(self):
        """Test each CRBA column against RNEA with a unit acceleration and no velocity."""
        model = random_chain(3, self.rng)
        q = self.rng.uniform(-np.pi, np.pi, 3)
        M = rigid_body.mass_matrix(model, q)
        G = rigid_body.gravity_vector(model, q)
        for j in range(3):
            unit = np.eye(3)[j]
            column = rigid_body.rnea(model, q, np.zeros(3), unit) - G
            np.testing.assert_allclose(column, M[:, j], atol=1e-8)

    def test_two_link_closed_form(self):
        """Test RNEA against the textbook 2-link equations of motion."""
        model = random_chain(2, self.rng)
        for _ in range(50):
            q = self.rng.uniform(-np.pi, np.pi, 2)
            qd = self.rng.normal(0.0, 2.0, 2)
            qdd = self.rng.normal(0.0, 5.0, 2)
            np.testing.assert_allclose(rigid_body.rnea(model, q, qd, qdd),
                                       two_link_closed_form(model, q, qd, qdd), atol=1e-6)

    def test_pendulum_gravity_torque(self):
        """Test G(q) of a horizontal uniform rod: m·g·l/2."""
        G = rigid_body.gravity_vector(pendulum(), np.array([0.0]))
        self.assertAlmostEqual(G[0], 1.0 * 9.81 * 0.25, places=10)
        hanging = rigid_body.gravity_vector(pendulum(), np.array([-np.pi / 2]))
        self.assertAlmostEqual(hanging[0], 0.0, places=10)

    def test_forward_inverse_round_trip(self):
        """Test that forward dynamics inverts RNEA."""
        model = random_chain(3, self.rng)
        q = self.rng.uniform(-np.pi, np.pi, 3)
        qd = self.rng.normal(size=3)
        tau = self.rng.normal(size=3)
        qdd = rigid_body.forward_dynamics(model, q, qd, tau)
        np.testing.assert_allclose(rigid_body.rnea(model, q, qd, qdd), tau, atol=1e-9)

    def test_bias_equals_coriolis_plus_gravity(self):
        """Test b = C(q, qd)·qd + G(q) with C from Christoffel symbols."""
        model = random_chain(3, self.rng)
        q = self.rng.uniform(-np.pi, np.pi, 3)
        qd = self.rng.normal(size=3)
        C = rigid_body.coriolis_matrix(model, q, qd)
        expected = C @ qd + rigid_body.gravity_vector(model, q)
        np.testing.assert_allclose(rigid_body.bias_force(model, q, qd), expected, atol=1e-6)

    def test_mass_matrix_dot_minus_two_coriolis_is_skew(self):
        """Test that Ṁ - 2C is skew-symmetric."""
        model = random_chain(5, self.rng)
        q = self.rng.uniform(-np.pi, np.pi, 5)
        qd = self.rng.normal(size=5)
        N = rigid_body.mass_matrix_dot(model, q, qd) - 2.0 * rigid_body.coriolis_matrix(model, q, qd)
        np.testing.assert_allclose(N, -N.T, atol=1e-6)

    def test_cartesian_force_matches_generalized_torque(self):
        """Test that a force at the end effector enters RNEA as Jᵀ·F."""
        model = random_chain(2, self.rng)
        q = self.rng.uniform(-np.pi, np.pi, 2)
        qd = self.rng.normal(size=2)
        qdd = self.rng.normal(size=2)
        force = ExternalForce(link=1, point=rigid_body.forward_kinematics(model, q), force=np.array([1.5, -0.7]))
        tau_ext = rigid_body.ee_jacobian(model, q).T @ force.force
        np.testing.assert_allclose(rigid_body.external_torque(model, q, force), tau_ext, atol=1e-12)
        np.testing.assert_allclose(rigid_body.rnea(model, q, qd, qdd, force),
                                   rigid_body.rnea(model, q, qd, qdd, tau_ext), atol=1e-10)

    def test_wrong_shape_raises(self):
        """Test that mismatched vector lengths are rejected."""
        model = random_chain(2, self.rng)
        with self.assertRaises(ContractViolation):
            rigid_body.mass_matrix(model, np.zeros(3))
        with self.assertRaises(ContractViolation):
            rigid_body.rnea(model, np.zeros(2), np.zeros(2), np.zeros(1))

    def test_mass_matrix_rate_needs_positive_dt(self):
        """Test that the forward-difference Ṁ rejects a non-positive timestep."""
        with self.assertRaises(ContractViolation):
            rigid_body.mass_matrix_rate(np.eye(2), np.eye(2), 0.0)

    def test_mass_matrix_rate_scaling(self):
        """Test the forward difference on an exact linear change."""
        D = np.array([[0.5, -0.25], [-0.25, 1.0]])
        M = np.eye(2)
        np.testing.assert_allclose(rigid_body.mass_matrix_rate(M, M + 0.01 * D, 0.01), D, atol=1e-12)
        np.testing.assert_array_equal(rigid_body.mass_matrix_rate(M, M, 0.002), np.zeros((2, 2)))

    def test_total_energy(self):
        """Test E = ½·qdᵀ·M·qd + V with V = m·g·y_com for a single rod."""
        model = pendulum()
        q = np.array([0.3])
        qd = np.array([2.0])
        kinetic = 0.5 * float(qd @ rigid_body.mass_matrix(model, q) @ qd)
        self.assertAlmostEqual(rigid_body.kinetic_energy(model, q, qd), kinetic, places=12)
        self.assertAlmostEqual(rigid_body.total_energy(model, q, qd) - kinetic,
                               1.0 * 9.81 * 0.25 * np.sin(0.3), places=10)

    def test_jacobian_matches_finite_differences(self):
        """Test the analytic end-effector Jacobian."""
        model = random_chain(3, self.rng)
        q = self.rng.uniform(-np.pi, np.pi, 3)
        J = rigid_body.ee_jacobian(model, q)
        h = 1e-6
        for i in range(3):
            step = np.eye(3)[i] * h
            column = (rigid_body.forward_kinematics(model, q + step)
                      - rigid_body.forward_kinematics(model, q - step)) / (2 * h)
            np.testing.assert_allclose(J[:, i], column, atol=1e-7)


class TestModelParsing(unittest.TestCase):
    """Tests for the JSON model description."""

    def test_defaults(self):
        """Test the uniform-rod defaults for com_offset and inertia."""
        model = parse_model('{"links": [{"length": 0.6, "mass": 2.0}], "torque_limit": [3.0]}')
        self.assertAlmostEqual(model.com_offsets[0], 0.3)
        self.assertAlmostEqual(model.inertias[0], uniform_rod_inertia(2.0, 0.6))
        np.testing.assert_array_equal(model.gravity, [0.0, -9.81])

    def test_missing_mass_names_field(self):
        """Test that a missing field is reported with its path."""
        with self.assertRaises(ModelValidationError) as ctx:
            model_from_dict({'links': [{'length': 0.5}], 'torque_limit': [1.0]})
        self.assertEqual(ctx.exception.field, 'links[0].mass')

    def test_negative_length_rejected(self):
        """Test that non-positive lengths are rejected."""
        with self.assertRaises(ModelValidationError) as ctx:
            model_from_dict({'links': [{'length': -0.5, 'mass': 1.0}], 'torque_limit': [1.0]})
        self.assertEqual(ctx.exception.field, 'links[0].length')

    def test_invalid_json_reports_line(self):
        """Test that JSON syntax errors carry the line number."""
        with self.assertRaises(ModelValidationError) as ctx:
            parse_model('{\n  "links": [\n    {"length": 0.5,,}\n  ]\n}')
        self.assertEqual(ctx.exception.line, 3)

    def test_torque_limits_per_link(self):
        """Test that torque limits must match the link count."""
        with self.assertRaises(ModelValidationError):
            model_from_dict({'links': [{'length': 0.5, 'mass': 1.0}], 'torque_limit': [1.0, 2.0]})

    def test_model_is_immutable(self):
        """Test that model arrays cannot be written."""
        model = pendulum()
        with self.assertRaises(ValueError):
            model.masses[0] = 3.0


class TestDyncheck(unittest.TestCase):
    """Tests for the dynamics invariant suite."""

    def test_suite_passes(self):
        """Test that every invariant holds on a reduced sample."""
        report = dyncheck(n_states=100, seed=3)
        self.assertTrue(report.passed, msg="\n".join(report.lines()))
        self.assertEqual(report.suite, 'dyncheck')


if __name__ == '__main__':
    unittest.main()
