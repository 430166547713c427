# lab/tests/test_persistence.py
import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase, TestCase

from lab import __version__
from lab.models import RunRecord
from lab.services.persistence import (
    CSV_SCHEMA_VERSION,
    ExperimentReport,
    jsonable,
    persist_record,
    run_directory,
    series_frame,
)
from lab.tests.helpers import shipped_config


def sample_report(checks=None):
    config = shipped_config('reference')
    report = ExperimentReport(kind='solve_pde', config=config, config_path='configs/reference.yaml', seeds=[0, 1])
    report.series['pde'] = {
        'moment2': np.array([1.0, 1.1]),
        'resource': np.array([1.0, 0.9]),
        'time': np.array([0.0, 0.5]),
        'mass': np.array([1.0, 1.02]),
        'moment1': np.array([1.0, 1.01]),
    }
    report.metrics['final_mass'] = np.float64(1.02)
    report.checks.update(checks if checks is not None else {'density_nonnegative': np.bool_(True)})
    report.tolerances = {'mass_conservation': 1e-12}
    return report


class SeriesFrameTest(SimpleTestCase):
    def test_leading_columns_first(self):
        frame = series_frame({'extra': [3], 'resource': [2], 'time': [0], 'mass': [1]})
        self.assertEqual(list(frame.columns), ['time', 'mass', 'resource', 'extra'])

    def test_other_columns_keep_their_order(self):
        frame = series_frame({'x': [0.1], 'u': [2.0], 'weighted': [1.0]})
        self.assertEqual(list(frame.columns), ['x', 'u', 'weighted'])


class JsonableTest(SimpleTestCase):
    def test_numpy_values_become_plain(self):
        value = jsonable({
            1: np.array([1, 2]),
            'flag': np.bool_(False),
            'count': np.int64(3),
            'ratio': np.float32(0.5),
            'pair': (np.float64(1.5), Path('runs/a')),
        })
        self.assertEqual(value, {'1': [1, 2], 'flag': False, 'count': 3, 'ratio': 0.5, 'pair': [1.5, 'runs/a']})
        json.dumps(value)


class ReportStatusTest(SimpleTestCase):
    def test_status_follows_checks(self):
        self.assertEqual(sample_report().status, 'passed')
        failing = sample_report({'b_check': False, 'a_check': False, 'ok': True})
        self.assertEqual(failing.status, 'failed')
        self.assertEqual(failing.failed_checks(), ['a_check', 'b_check'])

    def test_run_directory_uses_kind_and_hash(self):
        report = sample_report()
        directory = run_directory(report, '/tmp/lab-runs')
        self.assertEqual(directory.parent, Path('/tmp/lab-runs'))
        self.assertEqual(directory.name, f"solve_pde-{report.config.config_hash()[:12]}")


class PersistRecordTest(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_writes_csv_and_manifest(self):
        report = sample_report()
        manifest_path = persist_record(report, self.tmp.name)

        self.assertTrue(manifest_path.exists())
        manifest = json.loads(manifest_path.read_text(encoding='utf-8'))
        self.assertEqual(manifest['kind'], 'solve_pde')
        self.assertEqual(manifest['tool_version'], __version__)
        self.assertEqual(manifest['csv_schema_version'], CSV_SCHEMA_VERSION)
        self.assertEqual(manifest['config_hash'], report.config.config_hash())
        self.assertEqual(manifest['seeds'], [0, 1])
        self.assertEqual(manifest['status'], 'passed')
        self.assertIs(manifest['checks']['density_nonnegative'], True)
        self.assertEqual(manifest['metrics']['final_mass'], 1.02)
        self.assertIn('model', manifest['config'])
        self.assertTrue(manifest['boundary_note'])

        frame = pd.read_csv(manifest['outputs']['pde'])
        self.assertEqual(list(frame.columns), ['time', 'mass', 'moment1', 'resource', 'moment2'])
        np.testing.assert_array_equal(frame['mass'].to_numpy(), [1.0, 1.02])

    def test_creates_run_record(self):
        report = sample_report({'density_nonnegative': True, 'pde_resource_in_range': False})
        manifest_path = persist_record(report, self.tmp.name)

        record = RunRecord.objects.get()
        self.assertEqual(record.kind, 'solve_pde')
        self.assertEqual(record.status, 'failed')
        self.assertEqual(record.config_hash, report.config.config_hash())
        self.assertEqual(record.manifest_path, str(manifest_path))
        self.assertEqual(record.failed_checks(), ['pde_resource_in_range'])
        self.assertEqual(record.tolerances, {'mass_conservation': 1e-12})
        self.assertIn('pde', record.outputs)

    def test_same_config_reuses_directory(self):
        first = persist_record(sample_report(), self.tmp.name)
        second = persist_record(sample_report(), self.tmp.name)
        self.assertEqual(first, second)
        self.assertEqual(RunRecord.objects.count(), 2)
