# lab/tests/test_commands.py
import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase, override_settings

from lab.models import RunRecord
from lab.tests.helpers import config_path


class LabCommandTest(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = Path(self.tmp.name) / 'runs'

    def variant(self, name, *replacements):
        """Copy of a shipped config with (old, new) text replacements applied."""
        text = config_path(name).read_text(encoding='utf-8')
        for old, new in replacements:
            self.assertIn(old, text)
            text = text.replace(old, new)
        path = Path(self.tmp.name) / f'{name}-variant.yaml'
        path.write_text(text, encoding='utf-8')
        return path

    def run_command(self, name, *args):
        stdout, stderr = StringIO(), StringIO()
        with override_settings(LAB_OUTPUT_DIR=str(self.out)):
            call_command(name, *args, stdout=stdout, stderr=stderr)
        return stdout.getvalue()

    def test_validate_records_run(self):
        output = self.run_command('validate', '--config', str(config_path('reference')))

        self.assertIn('✅', output)
        record = RunRecord.objects.get()
        self.assertEqual(record.kind, 'validate')
        self.assertEqual(record.status, 'passed')
        manifest = json.loads(Path(record.manifest_path).read_text(encoding='utf-8'))
        self.assertEqual(manifest['config_hash'], record.config_hash)
        self.assertTrue(Path(record.manifest_path).is_relative_to(self.out))

    def test_seed_override_changes_hash(self):
        self.run_command('validate', '--config', str(config_path('reference')))
        self.run_command('validate', '--config', str(config_path('reference')), '--seed', '7')
        hashes = set(RunRecord.objects.values_list('config_hash', flat=True))
        self.assertEqual(len(hashes), 2)

    def test_schema_error_exits_2(self):
        path = self.variant('reference', ('dx: 0.05', 'dx: -0.05'))
        with self.assertRaises(CommandError) as ctx:
            self.run_command('validate', '--config', str(path))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('numerics.dx', str(ctx.exception))
        self.assertEqual(RunRecord.objects.count(), 0)

    def test_missing_file_exits_2(self):
        with self.assertRaises(CommandError) as ctx:
            self.run_command('validate', '--config', str(Path(self.tmp.name) / 'absent.yaml'))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_numerical_guard_exits_3_and_records_error(self):
        path = self.variant('reference', ('dt_pde: 0.001', 'dt_pde: 0.05'))
        with self.assertRaises(CommandError) as ctx:
            self.run_command('solve_pde', '--config', str(path))
        self.assertEqual(ctx.exception.returncode, 3)

        record = RunRecord.objects.get()
        self.assertEqual(record.status, 'error')
        self.assertEqual(record.kind, 'solve_pde')
        self.assertEqual(record.metrics['error_type'], 'CflViolation')
        self.assertEqual(record.tolerances['truncation_tail'], 1e-6)

    def test_single_capacity_sweep_exits_cleanly(self):
        path = self.variant('reference', ('k_values: [100, 400, 1600]', 'k_values: [100]'))
        with self.assertRaises(CommandError) as ctx:
            self.run_command('converge', '--config', str(path))
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn('experiment.k_values', str(ctx.exception))
        self.assertEqual(RunRecord.objects.count(), 0)

    def test_failed_check_passes_without_strict(self):
        path = self.variant('reference', ('delta1: 0.5', 'delta1: 0.0'))
        self.run_command('validate', '--config', str(path))
        record = RunRecord.objects.get()
        self.assertEqual(record.status, 'failed')
        self.assertIn('lower_bound', record.failed_checks())

    def test_strict_failed_check_exits_4(self):
        path = self.variant('reference', ('delta1: 0.5', 'delta1: 0.0'))
        with self.assertRaises(CommandError) as ctx:
            self.run_command('validate', '--config', str(path), '--strict')
        self.assertEqual(ctx.exception.returncode, 4)
        self.assertIn('lower_bound', str(ctx.exception))
        # the record is written before the strict verdict
        self.assertEqual(RunRecord.objects.get().status, 'failed')

    def test_solve_pde_writes_series(self):
        path = self.variant('reaction_free', ('horizon: 1.0', 'horizon: 0.1'),
                            ('snapshot_times: [0.5, 1.0]', 'snapshot_times: []'))
        self.run_command('solve_pde', '--config', str(path), '--out', str(self.out / 'explicit'))

        record = RunRecord.objects.get()
        self.assertTrue(record.checks['mass_conserved'])
        self.assertTrue(Path(record.outputs['pde']).exists())
        self.assertTrue(record.manifest_path.startswith(str(self.out / 'explicit')))

    @mock.patch.dict('os.environ', {'LAB_DEFAULT_THREADS': 'zero'})
    def test_bad_thread_setting_exits_2(self):
        with self.assertRaises(CommandError) as ctx:
            self.run_command('validate', '--config', str(config_path('reference')))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('LAB_DEFAULT_THREADS', str(ctx.exception))
