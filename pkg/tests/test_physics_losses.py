import unittest
from types import SimpleNamespace

import numpy as np

from piper.autodiff import tape as ops
from piper.autodiff.tape import Tape, Tensor
from piper.common.errors import ContractViolation
from piper.harness.checks import gradcheck
from piper.physics_losses import (STANDARD_GRAVITY, ConstraintWeights, EnergyInputs, ResidualInputs,
                                  combined_mass, energy_residual, friction_work_accumulate, grasp_loss,
                                  physics_penalty, physics_residual, push_loss, reach_loss, slide_loss,
                                  sliding_friction_residual)


class TestResiduals(unittest.TestCase):
    """Tests for the dynamics and energy residuals."""

    def test_residual_vanishes_on_consistent_prediction(self):
        """Test that r = 0 when M·q̈̂ + b equals the action."""
        M = np.array([[2.0, 0.5], [0.5, 1.0]])
        qdd = np.array([1.0, -2.0])
        b = np.array([0.3, 0.1])
        r = physics_residual(ResidualInputs(M, b, qdd, M @ qdd + b))
        np.testing.assert_allclose(r, np.zeros(2), atol=1e-15)

    def test_residual_batches(self):
        """Test that leading batch dimensions broadcast."""
        M = np.stack([np.eye(2), 2.0 * np.eye(2)])
        r = physics_residual(ResidualInputs(M, np.zeros((2, 2)), np.ones((2, 2)), np.zeros((2, 2))))
        np.testing.assert_array_equal(r, [[1.0, 1.0], [2.0, 2.0]])
        np.testing.assert_array_equal(physics_penalty(r), [2.0, 8.0])

    def test_residual_rejects_incongruent_inputs(self):
        """Test that mismatched vector sizes raise."""
        with self.assertRaises(ContractViolation):
            physics_residual(ResidualInputs(np.eye(2), np.zeros(3), np.zeros(2), np.zeros(2)))

    def test_penalty_is_squared_norm(self):
        """Test ‖r‖² on a single residual."""
        self.assertEqual(physics_penalty(np.array([3.0, 4.0])), 25.0)

    def test_energy_residual(self):
        """Test the power-balance violation on a hand-computed case."""
        inputs = EnergyInputs(qd=np.array([1.0, 0.0]), M=np.eye(2), M_rate=np.zeros((2, 2)), G=np.zeros(2),
                              qdd_hat=np.array([2.0, 0.0]), tau=np.array([1.0, 0.0]))
        self.assertAlmostEqual(energy_residual(inputs), 1.0)
        balanced = inputs._replace(tau=np.array([2.0, 5.0]))
        self.assertAlmostEqual(energy_residual(balanced), 0.0)

    def test_tensor_inputs_stay_on_tape(self):
        """Test that a Tensor argument makes the functional record on its tape."""
        tape = Tape()
        qdd = tape.variable(np.array([1.0, 1.0]))
        r = physics_residual(ResidualInputs(np.eye(2), np.zeros(2), qdd, np.zeros(2)))
        self.assertIsInstance(r, Tensor)
        grad = tape.gradient(physics_penalty(r), [qdd])[0]
        np.testing.assert_array_equal(grad, [2.0, 2.0])


class TestTaskLosses(unittest.TestCase):
    """Tests for the reach, push, slide and grasp constraints."""

    def test_reach_loss(self):
        """Test the weighted sum of dynamics residual and goal distance."""
        weights = ConstraintWeights()
        value = reach_loss(np.array([1.0, 0.0]), np.array([1.0, 1.0]), np.array([1.0, 0.0]), weights)
        self.assertAlmostEqual(value, 2.0)
        scaled = reach_loss(np.array([1.0, 0.0]), np.array([1.0, 1.0]), np.array([1.0, 0.0]),
                            weights._replace(reach_goal=3.0))
        self.assertAlmostEqual(scaled, 4.0)

    def test_push_loss_balanced_window(self):
        """Test that friction work plus ΔE_kin matching the input work adds nothing."""
        self.assertAlmostEqual(push_loss(0.5, 0.3, -0.1, 0.1, 0.2), 0.5)
        self.assertAlmostEqual(push_loss(0.5, 0.3, 0.1, 0.1, 0.2), 0.52)

    def test_friction_work_accumulate(self):
        """Test the running friction-work total."""
        running = 0.0
        for increment in (0.1, 0.25, 0.0):
            running = friction_work_accumulate(running, SimpleNamespace(friction_work_increment=increment))
        self.assertAlmostEqual(running, 0.35)

    def test_slide_loss(self):
        """Test the impulse-momentum term λm·‖m·Δv - J‖²."""
        self.assertAlmostEqual(slide_loss(0.0, 0.5, np.array([2.0, 0.0]), np.array([1.0, 0.0]), 0.1), 0.0)
        self.assertAlmostEqual(slide_loss(1.0, 0.5, np.array([2.0, 0.0]), np.array([0.0, 0.0]), 0.1), 1.1)

    def test_sliding_friction_residual(self):
        """Test that Coulomb deceleration gives a zero residual."""
        mu, mass = 0.5, 0.5
        velocity = np.array([0.6, 0.8])
        acceleration = -mu * STANDARD_GRAVITY * velocity
        r = sliding_friction_residual(mass, acceleration, mu, STANDARD_GRAVITY, velocity)
        np.testing.assert_allclose(r, np.zeros(2), atol=1e-12)

    def test_sliding_friction_residual_batched(self):
        """Test that each row is normalized by its own speed."""
        mu, mass = 0.5, 1.0
        velocity = np.array([[2.0, 0.0], [0.0, 2.0], [0.3, -0.4]])
        direction = velocity / np.linalg.norm(velocity, axis=-1, keepdims=True)
        acceleration = -mu * STANDARD_GRAVITY * direction
        r = sliding_friction_residual(mass, acceleration, mu, STANDARD_GRAVITY, velocity)
        self.assertEqual(r.shape, (3, 2))
        np.testing.assert_allclose(r, np.zeros((3, 2)), atol=1e-12)

        r = sliding_friction_residual(mass, np.zeros((3, 2)), mu, STANDARD_GRAVITY, velocity)
        np.testing.assert_allclose(r, mu * STANDARD_GRAVITY * direction, atol=1e-12)

    def test_sliding_friction_velocity_gradient(self):
        """Test ∂r/∂v against central differences, through the slip direction."""
        mu, mass = 0.5, 0.2
        velocity = np.array([[0.6, 0.8], [-1.5, 0.5]])

        def loss(v):
            tape = Tape()
            var = tape.variable(v)
            out = ops.total(physics_penalty(sliding_friction_residual(mass, np.ones((2, 2)), mu,
                                                                      STANDARD_GRAVITY, var)))
            return float(out.value), tape.gradient(out, [var])[0]

        _, grad = loss(velocity)
        h = 1e-6
        numeric = np.zeros_like(velocity)
        for index in np.ndindex(velocity.shape):
            step = np.zeros_like(velocity)
            step[index] = h
            numeric[index] = (loss(velocity + step)[0] - loss(velocity - step)[0]) / (2 * h)
        self.assertGreater(np.max(np.abs(numeric)), 1e-3)
        np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-8)

    def test_sliding_friction_needs_motion(self):
        """Test that a resting object has no defined slip direction."""
        with self.assertRaises(ContractViolation):
            sliding_friction_residual(0.5, np.zeros(2), 0.5, STANDARD_GRAVITY, np.array([1e-4, 0.0]))
        with self.assertRaises(ContractViolation):
            sliding_friction_residual(0.5, np.zeros((2, 2)), 0.5, STANDARD_GRAVITY,
                                      np.array([[1.0, 0.0], [0.0, 1e-4]]))

    def test_grasp_loss(self):
        """Test the force-closure hinge: zero when friction holds the object."""
        self.assertEqual(grasp_loss(0.5, 0.0, 0.8, 10.0, 1.0), 0.0)
        shortfall = 0.5 * STANDARD_GRAVITY - 0.8 * 5.0
        self.assertAlmostEqual(grasp_loss(0.5, 0.0, 0.8, 5.0, 2.0), 2.0 * shortfall ** 2)

    def test_grasp_gradient_on_tape(self):
        """Test the grip-force gradient of an unmet grasp."""
        tape = Tape()
        force = tape.variable(np.array(5.0))
        loss = grasp_loss(0.5, 0.0, 0.8, force, 1.0)
        shortfall = 0.5 * STANDARD_GRAVITY - 4.0
        self.assertAlmostEqual(float(tape.gradient(loss, [force])[0]), -2.0 * 0.8 * shortfall)

    def test_combined_mass(self):
        """Test M + m·JᵀJ for a held point mass."""
        J = np.array([[1.0, 0.5], [0.0, 1.0]])
        np.testing.assert_allclose(combined_mass(np.eye(2), J, 2.0), np.eye(2) + 2.0 * J.T @ J)
        with self.assertRaises(ContractViolation):
            combined_mass(np.eye(2), np.ones((3, 2)), 1.0)

    def test_weights_report_negative_values(self):
        """Test that negative coefficients are listed as problems."""
        problems = ConstraintWeights(friction=-1.0).problems()
        self.assertEqual(len(problems), 1)
        self.assertIn('weights.friction', problems[0])
        self.assertEqual(ConstraintWeights().lambda_phys('ppo'), 0.01)
        self.assertEqual(ConstraintWeights().lambda_phys('sac'), 0.005)

    def test_weights_are_not_lifted(self):
        """Test that a weights tuple passes through the tape untouched."""
        tape = Tape()
        ee = tape.variable(np.array([0.0, 0.0]))
        loss = reach_loss(np.zeros(2), ee, np.array([1.0, 0.0]), ConstraintWeights(reach_goal=0.5))
        np.testing.assert_allclose(tape.gradient(loss, [ee])[0], [-1.0, 0.0])
        self.assertAlmostEqual(float(ops.total(loss).value), 0.5)


class TestGradcheck(unittest.TestCase):
    """Tests for the gradient check suite."""

    def test_suite_passes(self):
        """Test that every loss gradient matches finite differences."""
        report = gradcheck(seed=0, directions=20)
        self.assertTrue(report.passed, msg="\n".join(report.lines()))
        self.assertGreaterEqual(len(report.results), 8)
        self.assertIn('sliding friction residual', [r.name for r in report.results])


if __name__ == '__main__':
    unittest.main()
