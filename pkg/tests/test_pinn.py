import unittest

import numpy as np

from piper.autodiff.optim import AdamState
from piper.common.errors import ContractViolation, TrainingAbortedError
from piper.common.rng import generator
from piper.oracle import OracleSample
from piper.pinn import (CONTACT_SAMPLE_WEIGHT, REFERENCE_HIDDEN, PinnBatch, PinnModel, pinn_loss, pinn_update,
                        predict_accel)
from piper.rl.buffers import ReplayBuffer, TransitionRecord

OBS_SIZE = 4
N_LINKS = 2


def make_record(rng, outlier=False, qdd_obs=None):
    obs = rng.uniform(-1.0, 1.0, OBS_SIZE)
    action = rng.uniform(-1.0, 1.0, N_LINKS)
    b = 0.1 * obs[:N_LINKS]
    # unit mass matrix: the consistent acceleration is a - b
    qdd = action - b if qdd_obs is None else qdd_obs
    oracle = OracleSample(M=np.eye(N_LINKS), b=b, tau_ext=np.zeros(N_LINKS), qdd_obs=qdd, tau_eff=action,
                          G=np.zeros(N_LINKS), M_rate=np.zeros((N_LINKS, N_LINKS)), contact_outlier=outlier)
    return TransitionRecord(obs=obs, action=action, raw=action, log_prob=0.0, reward=0.0, next_obs=obs,
                            terminal=False, episode_end=False, qd=rng.uniform(-1.0, 1.0, N_LINKS), oracle=oracle)


class TestPinnModel(unittest.TestCase):
    """Tests for the acceleration proxy."""

    def setUp(self):
        self.rng = generator(5)

    def test_reference_size(self):
        """Test the parameter count of the reference 2-link reach proxy."""
        pinn = PinnModel.create(8, 2, REFERENCE_HIDDEN, self.rng)
        self.assertEqual(pinn.network.param_count, 165602)
        self.assertFalse(pinn.fitted)

    def test_predict_batches(self):
        """Test that batched prediction agrees with row-wise prediction."""
        pinn = PinnModel.create(OBS_SIZE, N_LINKS, (8,), self.rng)
        obs = self.rng.standard_normal((3, OBS_SIZE))
        action = self.rng.standard_normal((3, N_LINKS))
        batched = predict_accel(pinn, obs, action)
        self.assertEqual(batched.shape, (3, N_LINKS))
        np.testing.assert_allclose(batched[1], predict_accel(pinn, obs[1], action[1]))

    def test_wrong_input_sizes(self):
        """Test that obs and action sizes are checked."""
        pinn = PinnModel.create(OBS_SIZE, N_LINKS, (8,), self.rng)
        with self.assertRaises(ContractViolation):
            predict_accel(pinn, np.zeros(OBS_SIZE + 1), np.zeros(N_LINKS))
        with self.assertRaises(ContractViolation):
            predict_accel(pinn, np.zeros(OBS_SIZE), np.zeros(N_LINKS + 1))

    def test_dict_round_trip(self):
        """Test that a fitted proxy restores to the same predictions."""
        pinn = PinnModel.create(OBS_SIZE, N_LINKS, (8,), self.rng)
        buffer = ReplayBuffer(100)
        for _ in range(20):
            buffer.add(make_record(self.rng))
        pinn_update(pinn, buffer, AdamState.for_network(pinn.network, 1e-3), 0.1, 20, self.rng)
        restored = PinnModel.from_dict(pinn.to_dict())
        self.assertTrue(restored.fitted)
        obs, action = np.ones(OBS_SIZE), np.ones(N_LINKS)
        np.testing.assert_array_equal(predict_accel(restored, obs, action), predict_accel(pinn, obs, action))


class TestPinnLoss(unittest.TestCase):
    """Tests for the proxy loss and its update step."""

    def setUp(self):
        self.rng = generator(6)
        self.pinn = PinnModel.create(OBS_SIZE, N_LINKS, (16, 16), self.rng)
        self.batch = PinnBatch.from_records([make_record(self.rng) for _ in range(32)])

    def test_terms(self):
        """Test that the loss is mse + β·residual with terms recomputed by hand."""
        result = pinn_loss(self.pinn, self.batch, beta=0.5)
        qdd_hat = predict_accel(self.pinn, self.batch.obs, self.batch.action)
        mse = np.mean(np.sum((qdd_hat - self.batch.qdd_obs) ** 2, axis=-1))
        residual = qdd_hat + self.batch.b - self.batch.action
        self.assertAlmostEqual(result.mse, mse, places=10)
        self.assertAlmostEqual(result.residual, np.mean(np.sum(residual ** 2, axis=-1)), places=10)
        self.assertAlmostEqual(result.value, result.mse + 0.5 * result.residual, places=10)

    def test_energy_term_only_with_positive_weight(self):
        """Test that β_E = 0 reports the energy residual without adding it."""
        plain = pinn_loss(self.pinn, self.batch, beta=0.1)
        energy = pinn_loss(self.pinn, self.batch, beta=0.1, beta_energy=2.0)
        self.assertAlmostEqual(plain.energy, energy.energy)
        self.assertAlmostEqual(energy.value, plain.value + 2.0 * plain.energy, places=10)

    def test_negative_weight_rejected(self):
        """Test that β < 0 raises."""
        with self.assertRaises(ContractViolation):
            pinn_loss(self.pinn, self.batch, beta=-0.1)

    def test_contact_outliers_down_weighted(self):
        """Test the sample weight of contact-outlier labels."""
        batch = PinnBatch.from_records([make_record(self.rng), make_record(self.rng, outlier=True)])
        np.testing.assert_array_equal(batch.weights, [1.0, CONTACT_SAMPLE_WEIGHT])
        self.assertEqual(len(batch), 2)

    def test_empty_records_rejected(self):
        """Test that a batch needs at least one record."""
        with self.assertRaises(ContractViolation):
            PinnBatch.from_records([])

    def test_update_skips_empty_buffer(self):
        """Test that an empty buffer is a logged no-op."""
        adam = AdamState.for_network(self.pinn.network, 1e-3)
        before = self.pinn.network.fingerprint()
        with self.assertLogs(level='WARNING'):
            self.assertIsNone(pinn_update(self.pinn, ReplayBuffer(10), adam, 0.1, 8, self.rng))
        self.assertEqual(self.pinn.network.fingerprint(), before)
        self.assertFalse(self.pinn.fitted)

    def test_normalizer_frozen_after_first_batch(self):
        """Test that the normalizer is fitted once and then left alone."""
        buffer = ReplayBuffer(100)
        for _ in range(50):
            buffer.add(make_record(self.rng))
        adam = AdamState.for_network(self.pinn.network, 1e-3)
        pinn_update(self.pinn, buffer, adam, 0.1, 16, self.rng)
        self.assertTrue(self.pinn.fitted)
        frozen = self.pinn.normalizer
        pinn_update(self.pinn, buffer, adam, 0.1, 16, self.rng)
        self.assertIs(self.pinn.normalizer, frozen)

    def test_training_reduces_loss(self):
        """Test that repeated updates fit consistent dynamics labels."""
        buffer = ReplayBuffer(200)
        records = [make_record(self.rng) for _ in range(200)]
        for record in records:
            buffer.add(record)
        adam = AdamState.for_network(self.pinn.network, 3e-3)
        pinn_update(self.pinn, buffer, adam, 0.1, 64, self.rng)
        full = PinnBatch.from_records(records)
        start = pinn_loss(self.pinn, full, beta=0.1).value
        for _ in range(300):
            pinn_update(self.pinn, buffer, adam, 0.1, 64, self.rng)
        self.assertLess(pinn_loss(self.pinn, full, beta=0.1).value, 0.5 * start)

    def test_non_finite_loss_aborts(self):
        """Test that a NaN label aborts training with diagnostics."""
        buffer = ReplayBuffer(10)
        buffer.add(make_record(self.rng, qdd_obs=np.array([np.nan, 0.0])))
        adam = AdamState.for_network(self.pinn.network, 1e-3)
        with self.assertRaises(TrainingAbortedError) as ctx:
            pinn_update(self.pinn, buffer, adam, 0.1, 4, self.rng)
        self.assertEqual(ctx.exception.diagnostics['component'], 'pinn')


if __name__ == '__main__':
    unittest.main()
