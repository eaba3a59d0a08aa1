import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.handlers.wsgi import WSGIHandler
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase
from rest_framework import status
from rest_framework.test import APIClient

from langevin.models import ExperimentRun


class ExperimentRunModelTest(TestCase):
    def test_string_representation(self):
        run = ExperimentRun.objects.create(
            experiment='contraction', config_hash='ab' * 32, output_dir='/tmp/x', status='pass'
        )
        self.assertEqual(str(run), "contraction [pass] abababababab")


class WSGIEntryTest(TestCase):
    def test_gunicorn_entry_point_is_a_wsgi_handler(self):
        from core.wsgi import application

        self.assertIsInstance(application, WSGIHandler)


class ExperimentRunAPITest(TestCase):
    def setUp(self):
        self.client = APIClient()
        self.passed = ExperimentRun.objects.create(
            experiment='schedule_check', config_hash='a' * 64, output_dir='/tmp/a', status='pass',
            verdict={'status': 'pass', 'checks': {'assumption3': True}},
        )
        ExperimentRun.objects.create(
            experiment='rate_w1', config_hash='b' * 64, output_dir='/tmp/b', status='fail',
        )
        self.url = '/api/runs/'

    def test_list_runs_public(self):
        """Cualquiera puede consultar el registro"""
        response = self.client.get(self.url)
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(len(response.data), 2)

    def test_filter_by_status(self):
        response = self.client.get(self.url, {'status': 'pass'})
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual([row['experiment'] for row in response.data], ['schedule_check'])

    def test_unknown_status_is_rejected(self):
        response = self.client.get(self.url, {'status': 'maybe'})
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertIn('error', response.data)

    def test_verdict_action(self):
        response = self.client.get(f'{self.url}{self.passed.pk}/verdict/')
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['checks'], {'assumption3': True})

    def test_registry_is_read_only(self):
        response = self.client.post(self.url, {'experiment': 'simulate'}, format='json')
        self.assertEqual(response.status_code, status.HTTP_405_METHOD_NOT_ALLOWED)


class ConfigValidationAPITest(TestCase):
    def setUp(self):
        self.client = APIClient()
        self.url = '/api/runs/validate-config/'

    def test_valid_config_returns_hash_and_defaults(self):
        response = self.client.post(self.url, {'experiment': 'contraction'}, format='json')
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(len(response.data['config_hash']), 64)
        self.assertEqual(response.data['config']['model']['gamma'], 5.0)

    def test_same_config_same_hash(self):
        first = self.client.post(self.url, {'experiment': 'contraction'}, format='json')
        second = self.client.post(self.url, {'experiment': 'contraction', 'seeds': [0]}, format='json')
        self.assertEqual(first.data['config_hash'], second.data['config_hash'])

    def test_low_friction_is_rejected(self):
        response = self.client.post(self.url, {'experiment': 'rate_w1', 'model': {'gamma': 1.0}}, format='json')
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertIn('model', response.data)

    def test_missing_experiment_is_rejected(self):
        response = self.client.post(self.url, {}, format='json')
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)


class ExperimentCommandTest(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def write_config(self, data, name='cfg.json'):
        path = self.root / name
        path.write_text(json.dumps(data), encoding='utf-8')
        return str(path)

    def test_passing_run_is_recorded(self):
        config = self.write_config({'schedule': {'eta': 0.01, 'theta': 1.0, 'omega': 0.5}})
        out = self.root / 'out'
        stdout = StringIO()
        call_command('experiment', 'schedule_check', config=config, out=str(out), stdout=stdout)
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, 'pass')
        self.assertEqual(run.experiment, 'schedule_check')
        for name in ('results.csv', 'verdict.json', 'manifest.json'):
            self.assertTrue((out / name).exists(), name)
        manifest = json.loads((out / 'manifest.json').read_text(encoding='utf-8'))
        self.assertEqual(manifest['config_hash'], run.config_hash)
        self.assertIn('schedule_check: pass', stdout.getvalue())

    def test_seed_option_overrides_seeds(self):
        config = self.write_config({})
        call_command('experiment', 'schedule_check', config=config, out=str(self.root / 'out'), seed=7,
                     stdout=StringIO())
        self.assertEqual(ExperimentRun.objects.get().seed, 7)

    def test_failing_verdict_raises(self):
        config = self.write_config({'schedule': {'eta': 1.0, 'theta': 1.0, 'omega': 0.5}, 'k_max': 100})
        with self.assertRaises(CommandError):
            call_command('experiment', 'schedule_check', config=config, out=str(self.root / 'out'), stdout=StringIO())
        self.assertEqual(ExperimentRun.objects.get().status, 'fail')

    def test_invalid_config_raises(self):
        config = self.write_config({'model': {'gamma': 1.0}})
        with self.assertRaises(CommandError):
            call_command('experiment', 'rate_w1', config=config, out=str(self.root / 'out'), stdout=StringIO())
        self.assertFalse(ExperimentRun.objects.exists())

    def test_conflicting_rerun_raises(self):
        out = str(self.root / 'out')
        call_command('experiment', 'schedule_check', config=self.write_config({}), out=out, stdout=StringIO())
        other = self.write_config({'k_max': 500}, name='other.json')
        with self.assertRaises(CommandError):
            call_command('experiment', 'schedule_check', config=other, out=out, stdout=StringIO())
        self.assertEqual(ExperimentRun.objects.count(), 1)

    def test_unreadable_config_raises(self):
        with self.assertRaises(CommandError):
            call_command('experiment', 'simulate', config=str(self.root / 'missing.json'),
                         out=str(self.root / 'out'), stdout=StringIO())
