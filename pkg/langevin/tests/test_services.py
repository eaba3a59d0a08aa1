import json
import math
import tempfile
from pathlib import Path

import pytest
from django.test import SimpleTestCase

from langevin.choices import Status
from langevin.exceptions import RunConflictError
from langevin.objective import QuadraticWell
from langevin.serializers import ExperimentConfigSerializer
from langevin.services import generalization_floor, run_experiment, write_outputs


def build(**data):
    serializer = ExperimentConfigSerializer(data=data)
    serializer.is_valid(raise_exception=True)
    return serializer.save()


class ConfigTests(SimpleTestCase):
    def test_defaults_fill_every_block(self):
        cfg = build(experiment='schedule_check')
        self.assertEqual(cfg.params.gamma, 5.0)
        self.assertEqual(cfg.schedule.eta, 0.01)
        self.assertEqual(cfg.canonical['model']['batch_size'], 10)
        self.assertEqual(len(cfg.config_hash), 64)

    def test_hash_is_stable_and_tracks_tolerances(self):
        a = build(experiment='schedule_check')
        b = build(experiment='schedule_check', model={'gamma': 5.0})
        c = build(experiment='schedule_check', tolerances={'stationary_rel': 0.2})
        self.assertEqual(a.config_hash, b.config_hash)
        self.assertNotEqual(a.config_hash, c.config_hash)

    def test_low_friction_is_rejected_for_contraction_experiments(self):
        serializer = ExperimentConfigSerializer(data={'experiment': 'rate_w1', 'model': {'gamma': 1.0}})
        self.assertFalse(serializer.is_valid())
        self.assertIn('model', serializer.errors)

    def test_histogram_tv_needs_small_dimension(self):
        serializer = ExperimentConfigSerializer(data={'experiment': 'rate_tv', 'objective': {'dim': 3}})
        self.assertFalse(serializer.is_valid())
        self.assertIn('objective', serializer.errors)

    def test_exact_system_needs_quadratic_well(self):
        serializer = ExperimentConfigSerializer(data={
            'experiment': 'simulate', 'system': 'exact_ou',
            'objective': {'kind': 'cosine_perturbed_quadratic'},
        })
        self.assertFalse(serializer.is_valid())
        self.assertIn('system', serializer.errors)

    def test_horizon_off_the_grid_is_rejected(self):
        serializer = ExperimentConfigSerializer(data={'experiment': 'simulate', 'horizon_time': 0.015})
        self.assertFalse(serializer.is_valid())
        self.assertIn('horizon_time', serializer.errors)

    def test_ladder_needs_three_distinct_steps(self):
        serializer = ExperimentConfigSerializer(data={'experiment': 'one_step_check', 'eta_ladder': [0.1, 0.1, 0.05]})
        self.assertFalse(serializer.is_valid())
        self.assertIn('eta_ladder', serializer.errors)

    def test_unknown_constant_is_rejected(self):
        serializer = ExperimentConfigSerializer(data={'experiment': 'drift_check', 'objective': {'constants': {'Z': 1}}})
        self.assertFalse(serializer.is_valid())

    def test_cosine_amplitude_error_becomes_validation_error(self):
        serializer = ExperimentConfigSerializer(data={
            'experiment': 'drift_check', 'objective': {'kind': 'cosine_perturbed_quadratic', 'amplitude': 2.0},
        })
        self.assertFalse(serializer.is_valid())


class GeneralizationFloorTests(SimpleTestCase):
    def test_floor_example(self):
        constants = QuadraticWell(2).constants
        self.assertAlmostEqual(generalization_floor(constants, 0.5, 2), 0.0625 * math.log(2 * math.e), places=12)


class ExperimentRunTests(SimpleTestCase):
    def test_schedule_check_passes_for_small_constant_step(self):
        cfg = build(experiment='schedule_check', schedule={'eta': 0.01, 'theta': 1.0, 'omega': 0.5})
        result = run_experiment(cfg)
        self.assertEqual(result.verdict.status, Status.PASS)
        self.assertEqual(len(result.rows), 9)

    def test_schedule_check_fails_for_large_step(self):
        cfg = build(experiment='schedule_check', schedule={'eta': 1.0, 'theta': 1.0, 'omega': 0.5}, k_max=100)
        self.assertEqual(run_experiment(cfg).verdict.status, Status.FAIL)

    def test_drift_check_passes_with_declared_constants(self):
        cfg = build(experiment='drift_check', objective={'dim': 2}, sample_count=2000)
        result = run_experiment(cfg)
        self.assertEqual(result.verdict.status, Status.PASS, result.verdict.as_dict())

    def test_drift_check_reports_understated_constant(self):
        cfg = build(experiment='drift_check', objective={'kind': 'cosine_perturbed_quadratic', 'dim': 2,
                                                         'constants': {'L': 0.5}}, sample_count=500)
        verdict = run_experiment(cfg).verdict
        self.assertEqual(verdict.status, Status.FAIL)
        self.assertIn('assumptions.smoothness', verdict.checks)

    def test_contraction_matches_eigenvalue(self):
        cfg = build(experiment='contraction', horizon_time=20.0, fine_delta=1e-3)
        result = run_experiment(cfg)
        self.assertEqual(result.verdict.status, Status.PASS, result.verdict.as_dict())
        self.assertAlmostEqual(result.verdict.checks['theta_hat'], 0.2087, delta=0.01)

    def test_contraction_of_identical_points_is_degenerate(self):
        cfg = build(experiment='contraction', init={'m': [1.0], 'x': [1.0]}, init2={'m': [1.0], 'x': [1.0]})
        self.assertEqual(run_experiment(cfg).verdict.status, Status.DEGENERATE)

    def test_cosine_contraction_is_positive(self):
        cfg = build(experiment='contraction', objective={'kind': 'cosine_perturbed_quadratic'}, horizon_time=20.0)
        checks = run_experiment(cfg).verdict.checks
        self.assertTrue(checks['theta_positive'])
        self.assertTrue(checks['r2_ok'])

    def test_simulate_writes_snapshots(self):
        cfg = build(experiment='simulate', ensemble_size=20, horizon_time=0.5, record_times=[0.0, 0.5])
        result = run_experiment(cfg)
        frame = result.to_frame()
        self.assertEqual(result.verdict.status, Status.PASS)
        self.assertEqual(len(frame), 40)
        times = sorted(frame['time'].unique())
        self.assertEqual(len(times), 2)
        self.assertAlmostEqual(times[-1], 0.5, places=12)
        self.assertEqual(set(frame.columns), {'time', 'trajectory_id', 'm_1', 'x_1'})

    def test_rate_w1_rows_cover_both_ladders(self):
        cfg = build(experiment='rate_w1', ensemble_size=200, horizon_time=1.0,
                    eta_ladder=[0.1, 0.05, 0.025], batch_ladder=[1, 10])
        result = run_experiment(cfg)
        self.assertEqual(len(result.rows), 5)
        self.assertIn(result.verdict.status, Status.values)
        self.assertEqual({row['ladder'] for row in result.rows}, {'eta', 'batch'})

    @pytest.mark.slow
    def test_rate_w1_distance_shrinks_at_least_like_root_eta(self):
        cfg = build(experiment='rate_w1', ensemble_size=20000, horizon_time=20.0,
                    eta_ladder=[0.1, 0.05, 0.025, 0.0125])
        result = run_experiment(cfg)
        checks = result.verdict.checks
        self.assertNotEqual(result.verdict.status, Status.DEGENERATE, result.verdict.as_dict())
        self.assertTrue(checks['signal_above_floor'], result.verdict.as_dict())
        self.assertGreaterEqual(checks['fit']['slope'], cfg.tolerances.w1_slope[0])
        values = [row['value'] for row in result.rows]
        floors = [row['noise_floor'] for row in result.rows]
        for earlier, later, floor in zip(values, values[1:], floors):
            self.assertLessEqual(later, earlier + floor)

    def test_rate_tv_notes_its_limitation(self):
        cfg = build(experiment='rate_tv', ensemble_size=500, horizon_time=1.0,
                    eta_ladder=[0.1, 0.05], batch_ladder=[1, 10])
        verdict = run_experiment(cfg).verdict
        self.assertTrue(verdict.limitations)

    @pytest.mark.slow
    def test_rate_tv_decreases_along_both_ladders(self):
        cfg = build(experiment='rate_tv', ensemble_size=100000, horizon_time=2.5, schedule={'eta': 0.0125},
                    eta_ladder=[0.1, 0.025], batch_ladder=[1, 100])
        result = run_experiment(cfg)
        checks = result.verdict.checks
        self.assertTrue(checks['eta_decreasing'], result.verdict.as_dict())
        self.assertTrue(checks['batch_decreasing'], result.verdict.as_dict())
        self.assertEqual(result.verdict.status, Status.PASS)
        self.assertEqual([row['eta_n'] for row in result.rows if row['ladder'] == 'eta'], [0.1, 0.025])

    def test_generalization_stays_below_floor(self):
        cfg = build(experiment='generalization', objective={'dim': 2}, model={'beta': 0.25},
                    ensemble_size=2000, horizon_time=20.0, beta_ladder=[0.5, 0.25])
        result = run_experiment(cfg)
        self.assertTrue(result.verdict.checks['below_floor'], result.verdict.as_dict())
        self.assertEqual(len(result.rows), 3)

    @pytest.mark.slow
    def test_stationary_variances(self):
        cfg = build(experiment='stationary_check', ensemble_size=10000, horizon_time=40.0)
        result = run_experiment(cfg)
        self.assertEqual(result.verdict.status, Status.PASS, result.verdict.as_dict())

    @pytest.mark.slow
    def test_one_step_error_order(self):
        cfg = build(experiment='one_step_check', ensemble_size=100000, model={'gamma': 1.0},
                    init={'m': [1.0], 'x': [1.0]}, eta_ladder=[0.2, 0.1, 0.05, 0.025])
        result = run_experiment(cfg)
        self.assertEqual(result.verdict.status, Status.PASS, result.verdict.as_dict())
        slope = result.verdict.checks['fit']['slope']
        self.assertTrue(cfg.tolerances.one_step_slope[0] <= slope <= cfg.tolerances.one_step_slope[1], slope)
        self.assertTrue(all(row['value'] > row['noise_floor'] for row in result.rows))

    def test_one_step_deterministic_maps_differ_at_second_order(self):
        cfg = build(experiment='one_step_check', ensemble_size=10, model={'gamma': 0.0, 'beta': 0.0},
                    noise={'scale': 0.0}, eta_ladder=[0.2, 0.1, 0.05, 0.025])
        result = run_experiment(cfg)
        values = [row['value'] for row in result.rows]
        for larger, smaller in zip(values, values[1:]):
            self.assertAlmostEqual(larger / smaller, 4.0, delta=0.2)
        self.assertAlmostEqual(result.verdict.checks['fit']['slope'], 2.0, delta=0.05)
        self.assertEqual(result.verdict.status, Status.FAIL)

    def test_one_step_identical_systems_are_degenerate(self):
        cfg = build(experiment='one_step_check', ensemble_size=50, model={'gamma': 0.0, 'beta': 0.0},
                    noise={'scale': 0.0}, init={'m': [0.0], 'x': [0.0]})
        result = run_experiment(cfg)
        self.assertEqual(result.verdict.status, Status.DEGENERATE)
        self.assertTrue(all(row['value'] <= row['noise_floor'] for row in result.rows))

    @pytest.mark.slow
    def test_moment_envelope_holds_on_fresh_seeds(self):
        cfg = build(experiment='moment_envelope', ensemble_size=5000, horizon_time=5.0,
                    schedule={'eta': 0.05}, envelope_seeds=2)
        result = run_experiment(cfg)
        self.assertEqual(result.verdict.status, Status.PASS, result.verdict.as_dict())
        seeds = {row['seed'] for row in result.rows}
        self.assertEqual(len(seeds), 2)
        self.assertTrue(all(row['mean_V'] <= 1.1 * row['gronwall'] for row in result.rows
                            if row['system'] == 'exact_ou'))

    def test_moment_envelope_with_exploding_steps_is_invalid(self):
        cfg = build(experiment='moment_envelope', ensemble_size=100, horizon_time=40.0,
                    schedule={'eta': 1.0}, envelope_seeds=1)
        result = run_experiment(cfg)
        self.assertEqual(result.verdict.status, Status.INVALID)
        self.assertGreater(result.blowups, 0)


class WriteOutputsTests(SimpleTestCase):
    def test_outputs_and_conflict(self):
        cfg = build(experiment='schedule_check')
        result = run_experiment(cfg)
        with tempfile.TemporaryDirectory() as tmp:
            manifest = write_outputs(result, cfg, tmp)
            self.assertEqual(manifest['config_hash'], cfg.config_hash)
            verdict = json.loads((Path(tmp) / 'verdict.json').read_text(encoding='utf-8'))
            self.assertEqual(verdict['status'], 'pass')
            self.assertTrue((Path(tmp) / 'results.csv').exists())
            write_outputs(result, cfg, tmp)
            other = build(experiment='schedule_check', k_max=50)
            with self.assertRaises(RunConflictError):
                write_outputs(run_experiment(other), other, tmp)
